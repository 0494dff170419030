#include "bioner/llm.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <ctime>
#include <exception>
#include <thread>

#include "bioner/error.hpp"
#include "bioner/text.hpp"

namespace bioner {

// ---------------------------------------------------------------------------
// Tokens and digests

TokenizerConfig::Mode tokenizer_mode_from_string(std::string_view s) {
  if (s == "provider_reported") return TokenizerConfig::Mode::provider_reported;
  if (s == "chars_per_token") return TokenizerConfig::Mode::chars_per_token;
  throw ConfigError("unknown tokenizer mode: " + std::string(s));
}

std::int64_t count_tokens(std::string_view text, const TokenizerConfig& config) {
  if (!(config.chars_per_token > 0.0)) throw ConfigError("chars_per_token must be positive");
  const double chars = static_cast<double>(text::utf8_length(text));
  const double q = chars / config.chars_per_token;
  const double r = std::round(q);
  // Absorb representation error so 0.9/0.3 counts as 3, not 4.
  if (std::abs(q - r) <= 1e-9 * std::max(1.0, q)) return static_cast<std::int64_t>(r);
  return static_cast<std::int64_t>(std::ceil(q));
}

std::int64_t exchange_prompt_tokens(const LlmExchange& exchange, const TokenizerConfig& config) {
  if (config.mode == TokenizerConfig::Mode::provider_reported) return exchange.prompt_tokens;
  return count_tokens(bundle_text(exchange.request.bundle), config);
}

std::int64_t exchange_completion_tokens(const LlmExchange& exchange, const TokenizerConfig& config) {
  if (config.mode == TokenizerConfig::Mode::provider_reported) return exchange.completion_tokens;
  return count_tokens(exchange.response_text, config);
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 0xF];
  }
  return out;
}

std::string prompt_digest(const PromptBundle& bundle) { return sha256_hex(serialize_bundle(bundle)); }

std::string utc_timestamp(std::chrono::system_clock::time_point tp) {
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(tp.time_since_epoch()).count() % 1000;
  std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

// ---------------------------------------------------------------------------
// Mock script

namespace {

MockMode mock_mode_from_string(std::string_view s) {
  if (s == "script") return MockMode::script;
  if (s == "echo_gold" || s == "echo-gold") return MockMode::echo_gold;
  if (s == "corrupt") return MockMode::corrupt;
  throw FormatError("unknown mock mode: " + std::string(s), 0);
}

std::string_view to_string(MockMode m) {
  switch (m) {
    case MockMode::script: return "script";
    case MockMode::echo_gold: return "echo_gold";
    case MockMode::corrupt: return "corrupt";
  }
  return "script";
}

Mutation mutation_from_json(const nlohmann::json& j, std::size_t line) {
  const std::string op = j.value("op", "");
  Mutation m;
  if (op == "drop_every") {
    m.kind = Mutation::Kind::drop_every;
    m.n = j.value("n", std::size_t{2});
    if (m.n == 0) throw FormatError("drop_every needs n >= 1", line);
  } else if (op == "rename_type") {
    m.kind = Mutation::Kind::rename_type;
    m.from = j.value("from", "");
    m.to = j.value("to", "");
  } else if (op == "truncate") {
    m.kind = Mutation::Kind::truncate;
    m.chars = j.value("chars", std::size_t{0});
  } else if (op == "empty") {
    m.kind = Mutation::Kind::empty;
  } else {
    throw FormatError("unknown mutation op '" + op + "'", line);
  }
  return m;
}

nlohmann::ordered_json mutation_to_json(const Mutation& m) {
  nlohmann::ordered_json j;
  switch (m.kind) {
    case Mutation::Kind::drop_every:
      j["op"] = "drop_every";
      j["n"] = m.n;
      break;
    case Mutation::Kind::rename_type:
      j["op"] = "rename_type";
      j["from"] = m.from;
      j["to"] = m.to;
      break;
    case Mutation::Kind::truncate:
      j["op"] = "truncate";
      j["chars"] = m.chars;
      break;
    case Mutation::Kind::empty: j["op"] = "empty"; break;
  }
  return j;
}

}  // namespace

MockScript parse_mock_script(std::string_view content) {
  MockScript script;
  bool have_header = false;
  std::size_t line_no = 0;
  for (const auto& raw : text::split(content, "\n")) {
    ++line_no;
    if (text::trim(raw).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (j.contains("mode")) {
      if (have_header) throw FormatError("second header record", line_no);
      have_header = true;
      script.mode = mock_mode_from_string(j["mode"].get<std::string>());
      if (j.contains("mutations")) {
        for (const auto& m : j["mutations"]) script.mutations.push_back(mutation_from_json(m, line_no));
      }
      continue;
    }
    if (!j.contains("digest") || !j["digest"].is_string() || !j.contains("response_text") ||
        !j["response_text"].is_string())
      throw FormatError("expected {digest, response_text}", line_no);
    script.responses[j["digest"].get<std::string>()] = j["response_text"].get<std::string>();
  }
  return script;
}

MockScript load_mock_script(const std::filesystem::path& path) { return parse_mock_script(text::read_file(path)); }

std::string serialize_mock_script(const MockScript& script) {
  nlohmann::ordered_json header;
  header["mode"] = to_string(script.mode);
  auto muts = nlohmann::ordered_json::array();
  for (const auto& m : script.mutations) muts.push_back(mutation_to_json(m));
  header["mutations"] = std::move(muts);
  std::string out = header.dump() + "\n";
  for (const auto& [digest, response] : script.responses) {
    nlohmann::ordered_json j;
    j["digest"] = digest;
    j["response_text"] = response;
    out += j.dump() + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// MockProvider

MockProvider::MockProvider(MockScript script, const Corpus* gold) : script_(std::move(script)) {
  if (gold != nullptr) {
    schema_ = gold->schema;
    for (const auto& s : gold->sentences) gold_.emplace(s.id, s);
  }
}

std::vector<EntityMention> MockProvider::mutated_mentions(const TokenizedSentence& sentence) const {
  auto mentions = mentions_from_bio(sentence);
  if (script_.mode != MockMode::corrupt) return mentions;
  for (const auto& m : script_.mutations) {
    if (m.kind == Mutation::Kind::drop_every) {
      std::vector<EntityMention> kept;
      for (std::size_t i = 0; i < mentions.size(); ++i) {
        if ((i + 1) % m.n != 0) kept.push_back(mentions[i]);
      }
      mentions = std::move(kept);
    } else if (m.kind == Mutation::Kind::rename_type) {
      for (auto& x : mentions) {
        if (x.entity_type == m.from) x.entity_type = m.to;
      }
    }
  }
  return mentions;
}

std::string MockProvider::respond(const PromptBundle& bundle, const std::string& digest) const {
  if (auto it = script_.responses.find(digest); it != script_.responses.end()) return it->second;
  if (script_.mode == MockMode::script) throw ProviderError("mock: no scripted response for digest " + digest);

  const std::string qid = bundle.meta(meta_keys::kQueryId);
  auto it = gold_.find(qid);
  if (it == gold_.end()) throw ProviderError("mock: no gold sentence for query id '" + qid + "'");
  const TokenizedSentence& sentence = it->second;
  const auto mentions = mutated_mentions(sentence);

  std::string out;
  if (bundle.meta(meta_keys::kStage) == kStageCandidates) {
    for (const auto& m : mentions) out += m.surface + "\n";
  } else {
    const FormatKind format = format_from_string(bundle.meta(meta_keys::kFormat));
    out = encode_output(format, sentence, mentions, schema_);
  }
  if (script_.mode == MockMode::corrupt) {
    for (const auto& m : script_.mutations) {
      if (m.kind == Mutation::Kind::truncate && out.size() > m.chars) out.resize(m.chars);
      if (m.kind == Mutation::Kind::empty) out.clear();
    }
  }
  return out;
}

LlmExchange MockProvider::complete(const CompletionRequest& request) {
  ++calls_;
  LlmExchange ex;
  ex.request = request;
  ex.digest = prompt_digest(request.bundle);
  ex.provider = name();
  ex.response_text = respond(request.bundle, ex.digest);
  const TokenizerConfig cpt{TokenizerConfig::Mode::chars_per_token, 4.0};
  ex.prompt_tokens = count_tokens(bundle_text(request.bundle), cpt);
  ex.completion_tokens = count_tokens(ex.response_text, cpt);
  return ex;
}

// ---------------------------------------------------------------------------
// Run log

nlohmann::ordered_json exchange_to_json(const LlmExchange& ex) {
  nlohmann::ordered_json j;
  j["digest"] = ex.digest;
  j["provider"] = ex.provider;
  j["model"] = ex.request.model_name;
  j["status"] = ex.ok ? "ok" : "error";
  if (!ex.ok) j["error"] = ex.error;
  j["started_at"] = ex.started_at;
  j["finished_at"] = ex.finished_at;
  j["latency_ms"] = ex.latency.count();
  j["prompt_tokens"] = ex.prompt_tokens;
  j["completion_tokens"] = ex.completion_tokens;
  j["temperature"] = ex.request.temperature;
  j["max_output_tokens"] = ex.request.max_output_tokens;
  j["response_text"] = ex.response_text;
  j["bundle"] = bundle_to_json(ex.request.bundle);
  return j;
}

LlmExchange exchange_from_json(const nlohmann::json& j) {
  LlmExchange ex;
  ex.digest = j.at("digest").get<std::string>();
  ex.provider = j.value("provider", "");
  ex.request.model_name = j.value("model", "");
  ex.ok = j.value("status", "ok") == "ok";
  ex.error = j.value("error", "");
  ex.started_at = j.value("started_at", "");
  ex.finished_at = j.value("finished_at", "");
  ex.latency = std::chrono::milliseconds(j.value("latency_ms", std::int64_t{0}));
  ex.prompt_tokens = j.value("prompt_tokens", std::int64_t{0});
  ex.completion_tokens = j.value("completion_tokens", std::int64_t{0});
  ex.request.temperature = j.value("temperature", 0.0);
  ex.request.max_output_tokens = j.value("max_output_tokens", 1024);
  ex.response_text = j.value("response_text", "");
  if (j.contains("bundle")) ex.request.bundle = bundle_from_json(j["bundle"]);
  return ex;
}

RunLog::RunLog(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::app | std::ios::binary);
  if (!out_) throw Error("cannot open run log " + path.string());
}

void RunLog::append(const LlmExchange& exchange) {
  const std::string line = exchange_to_json(exchange).dump() + "\n";
  std::lock_guard lock(mutex_);
  out_ << line;
  out_.flush();
  ++written_;
}

std::size_t RunLog::records_written() const {
  std::lock_guard lock(mutex_);
  return written_;
}

std::vector<LlmExchange> RunLog::read(const std::filesystem::path& path) {
  std::vector<LlmExchange> out;
  if (!std::filesystem::exists(path)) return out;
  std::size_t line_no = 0;
  for (const auto& raw : text::split(text::read_file(path), "\n")) {
    ++line_no;
    if (text::trim(raw).empty()) continue;
    try {
      out.push_back(exchange_from_json(nlohmann::json::parse(raw)));
    } catch (const nlohmann::json::exception& e) {
      // A crash can leave a truncated final line; anything else is corruption.
      if (line_no == 1 || raw.back() == '}') throw FormatError(std::string("run log: ") + e.what(), line_no);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// LlmClient

LlmClient::LlmClient(std::shared_ptr<Provider> provider, ClientOptions options, RunLog* log)
    : provider_(std::move(provider)),
      options_(options),
      log_(log),
      tokens_(std::max(1.0, options.burst)),
      last_refill_(std::chrono::steady_clock::now()) {
  if (!provider_) throw ArgumentError("LlmClient needs a provider");
  if (options_.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
}

void LlmClient::preload(const std::vector<LlmExchange>& exchanges) {
  std::lock_guard lock(cache_mutex_);
  for (const auto& ex : exchanges) {
    if (ex.ok) cache_.insert_or_assign(ex.request.model_name + "\n" + ex.digest, ex);
  }
}

void LlmClient::acquire_slot() {
  std::unique_lock lock(slot_mutex_);
  slot_cv_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
  ++in_flight_;
}

void LlmClient::release_slot() {
  {
    std::lock_guard lock(slot_mutex_);
    --in_flight_;
  }
  slot_cv_.notify_one();
}

void LlmClient::wait_for_token() {
  if (options_.requests_per_second <= 0.0) return;
  const double capacity = std::max(1.0, options_.burst);
  for (;;) {
    std::chrono::duration<double> wait{};
    {
      std::lock_guard lock(bucket_mutex_);
      const auto now = std::chrono::steady_clock::now();
      const std::chrono::duration<double> elapsed = now - last_refill_;
      tokens_ = std::min(capacity, tokens_ + elapsed.count() * options_.requests_per_second);
      last_refill_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::duration<double>((1.0 - tokens_) / options_.requests_per_second);
    }
    std::this_thread::sleep_for(wait);
  }
}

LlmExchange LlmClient::complete(const CompletionRequest& request) {
  const std::string digest = prompt_digest(request.bundle);
  const std::string key = request.model_name + "\n" + digest;
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) {
      ++cache_hits_;
      LlmExchange hit = it->second;
      hit.request = request;
      return hit;
    }
  }

  acquire_slot();
  wait_for_token();
  ++provider_calls_;
  const auto wall_start = std::chrono::system_clock::now();
  const auto start = std::chrono::steady_clock::now();
  LlmExchange ex;
  std::exception_ptr failure;
  try {
    ex = provider_->complete(request);
  } catch (...) {
    failure = std::current_exception();
    ex = LlmExchange{};
    ex.request = request;
    ex.provider = provider_->name();
    ex.ok = false;
    try {
      std::rethrow_exception(failure);
    } catch (const std::exception& e) {
      ex.error = e.what();
    } catch (...) {
      ex.error = "unknown error";
    }
  }
  release_slot();
  ex.digest = digest;
  ex.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
  ex.started_at = utc_timestamp(wall_start);
  ex.finished_at = utc_timestamp(std::chrono::system_clock::now());
  if (log_ != nullptr) log_->append(ex);
  if (failure) std::rethrow_exception(failure);
  {
    std::lock_guard lock(cache_mutex_);
    cache_.insert_or_assign(key, ex);
  }
  return ex;
}

// ---------------------------------------------------------------------------

void parallel_for_index(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace bioner
