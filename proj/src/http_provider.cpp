#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include "bioner/error.hpp"
#include "bioner/llm.hpp"
#include "bioner/selection.hpp"

namespace bioner {

namespace {

// Splits "https://host:port/v1" into ("https://host:port", "/v1").
std::pair<std::string, std::string> split_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string path = url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {url.substr(0, path_start), path};
}

std::optional<std::chrono::milliseconds> parse_retry_after(const httplib::Response& res) {
  if (!res.has_header("Retry-After")) return std::nullopt;
  const std::string v = res.get_header_value("Retry-After");
  char* end = nullptr;
  const double seconds = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || seconds < 0) return std::nullopt;
  return std::chrono::milliseconds(static_cast<std::int64_t>(seconds * 1000.0));
}

}  // namespace

HttpProvider::HttpProvider(HttpProviderConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleeper_(std::move(sleeper)), rng_state_(std::random_device{}()) {
  if (config_.retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be >= 1");
  std::tie(scheme_host_port_, path_prefix_) = split_base_url(config_.base_url);
  if (!config_.api_key_env.empty()) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (key == nullptr || *key == '\0')
      throw ConfigError("environment variable " + config_.api_key_env + " is not set");
    api_key_ = key;
  }
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

nlohmann::json HttpProvider::request_body(const CompletionRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  const auto& b = request.bundle;
  if (!b.system_text.empty()) messages.push_back({{"role", "system"}, {"content", b.system_text}});
  for (const auto& t : b.turns) messages.push_back({{"role", std::string(to_string(t.role))}, {"content", t.text}});
  return {{"model", request.model_name},
          {"messages", std::move(messages)},
          {"temperature", request.temperature},
          {"max_tokens", request.max_output_tokens}};
}

std::chrono::milliseconds HttpProvider::backoff(int attempt, std::optional<std::chrono::milliseconds> retry_after) {
  if (retry_after) return *retry_after;
  const auto& p = config_.retry;
  double nominal = static_cast<double>(p.initial_backoff.count()) * std::pow(p.multiplier, attempt - 1);
  nominal = std::min(nominal, static_cast<double>(p.max_backoff.count()));
  double unit;
  {
    std::lock_guard lock(rng_mutex_);
    SplitMix64 rng(rng_state_);
    rng_state_ = rng.next();
    unit = static_cast<double>(rng_state_ >> 11) * 0x1.0p-53;
  }
  const double factor = 1.0 + p.jitter * (2.0 * unit - 1.0);
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::max(0.0, nominal * factor)));
}

LlmExchange HttpProvider::complete(const CompletionRequest& request) {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  const std::string body = request_body(request).dump();
  const std::string path = path_prefix_ + "/chat/completions";

  std::string last_error;
  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    ++attempts_;
    auto res = client.Post(path, headers, body, "application/json");
    std::optional<std::chrono::milliseconds> retry_after;
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 200) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("response is not JSON: ") + e.what());
      }
      try {
        LlmExchange ex;
        ex.request = request;
        ex.provider = name();
        const auto& content = j.at("choices").at(0).at("message").at("content");
        ex.response_text = content.is_null() ? std::string() : content.get<std::string>();
        if (j.contains("usage") && j["usage"].is_object()) {
          ex.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
          ex.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
        }
        return ex;
      } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("unexpected response shape: ") + e.what());
      }
    } else if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      retry_after = parse_retry_after(*res);
    } else {
      throw ProviderError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    }
    if (attempt < config_.retry.max_attempts) sleeper_(backoff(attempt, retry_after));
  }
  throw ProviderError("giving up after " + std::to_string(config_.retry.max_attempts) + " attempt(s): " + last_error);
}

}  // namespace bioner
