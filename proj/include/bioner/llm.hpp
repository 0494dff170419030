#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "bioner/corpus.hpp"
#include "bioner/prompting.hpp"

namespace bioner {

struct CompletionRequest {
  std::string model_name;
  PromptBundle bundle;
  double temperature = 0.0;
  int max_output_tokens = 1024;
};

// One request/response pair. A failed call is still an exchange: `ok` is
// false, `error` carries the diagnostic and the response is empty.
struct LlmExchange {
  CompletionRequest request;
  std::string digest;
  std::string response_text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::chrono::milliseconds latency{0};
  std::string provider;
  std::string started_at;
  std::string finished_at;
  bool ok = true;
  std::string error;
};

struct TokenizerConfig {
  enum class Mode { provider_reported, chars_per_token };
  Mode mode = Mode::provider_reported;
  double chars_per_token = 4.0;
};

TokenizerConfig::Mode tokenizer_mode_from_string(std::string_view s);

// ceil(code points / chars_per_token).
std::int64_t count_tokens(std::string_view text, const TokenizerConfig& config);
// Provider-reported counts in provider_reported mode, otherwise re-estimated
// from the exchange text.
std::int64_t exchange_prompt_tokens(const LlmExchange& exchange, const TokenizerConfig& config);
std::int64_t exchange_completion_tokens(const LlmExchange& exchange, const TokenizerConfig& config);

// Lowercase hex SHA-256 of the canonical bundle serialization.
std::string prompt_digest(const PromptBundle& bundle);
std::string sha256_hex(std::string_view data);

// A chat-completion backend. Implementations must be safe to call from
// several threads at once.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string name() const = 0;
  // Fills response_text and token counts; throws ProviderError or
  // ProtocolError on failure.
  virtual LlmExchange complete(const CompletionRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Mock provider

enum class MockMode { script, echo_gold, corrupt };

struct Mutation {
  enum class Kind { drop_every, rename_type, truncate, empty };
  Kind kind = Kind::drop_every;
  std::size_t n = 2;      // drop_every: drop mentions whose 1-based index is a multiple of n
  std::string from, to;   // rename_type
  std::size_t chars = 0;  // truncate: keep this many bytes of the response
};

struct MockScript {
  MockMode mode = MockMode::script;
  std::map<std::string, std::string> responses;  // digest -> response text
  std::vector<Mutation> mutations;
};

// JSON Lines: a header {"mode": "script"|"echo_gold"|"corrupt",
// "mutations": [...]} and any number of {"digest": str, "response_text": str}.
MockScript parse_mock_script(std::string_view content);
MockScript load_mock_script(const std::filesystem::path& path);
std::string serialize_mock_script(const MockScript& script);

// Deterministic stand-in for a live model. Scripted digests win; otherwise
// echo_gold answers with the gold encoding of the query (looked up by the
// bundle's query id) and corrupt applies the script's mutations to it first.
// Candidate-extraction prompts are answered with the gold surfaces, one per
// line.
class MockProvider final : public Provider {
 public:
  MockProvider(MockScript script, const Corpus* gold = nullptr);

  std::string name() const override { return "mock"; }
  LlmExchange complete(const CompletionRequest& request) override;
  std::size_t calls() const noexcept { return calls_.load(); }

  // Mentions the mock would emit for a gold sentence under its mutations.
  std::vector<EntityMention> mutated_mentions(const TokenizedSentence& sentence) const;

 private:
  std::string respond(const PromptBundle& bundle, const std::string& digest) const;

  MockScript script_;
  EntitySchema schema_;
  std::unordered_map<std::string, TokenizedSentence> gold_;
  std::atomic<std::size_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Live provider

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{30000};
  double jitter = 0.25;  // +/- fraction of the nominal delay
};

struct HttpProviderConfig {
  std::string base_url;     // e.g. "https://api.openai.com/v1"
  std::string api_key_env;  // environment variable holding the bearer token
  std::chrono::seconds timeout{60};
  RetryPolicy retry;
};

// Speaks POST <base_url>/chat/completions. 429 and 5xx responses and
// transport failures are retried with exponential backoff and jitter,
// honoring Retry-After; other 4xx responses fail immediately.
class HttpProvider final : public Provider {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpProvider(HttpProviderConfig config, Sleeper sleeper = {});

  std::string name() const override { return "http"; }
  LlmExchange complete(const CompletionRequest& request) override;
  std::size_t attempts() const noexcept { return attempts_.load(); }

  static nlohmann::json request_body(const CompletionRequest& request);

 private:
  std::chrono::milliseconds backoff(int attempt, std::optional<std::chrono::milliseconds> retry_after);

  HttpProviderConfig config_;
  Sleeper sleeper_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::string api_key_;
  std::atomic<std::size_t> attempts_{0};
  std::mutex rng_mutex_;
  std::uint64_t rng_state_;
};

// ---------------------------------------------------------------------------
// Run log, cache, bounded client

nlohmann::ordered_json exchange_to_json(const LlmExchange& exchange);
LlmExchange exchange_from_json(const nlohmann::json& j);

// Append-only JSON Lines sink; writes are serialized.
class RunLog {
 public:
  explicit RunLog(const std::filesystem::path& path);
  void append(const LlmExchange& exchange);
  std::size_t records_written() const;

  static std::vector<LlmExchange> read(const std::filesystem::path& path);

 private:
  mutable std::mutex mutex_;
  std::ofstream out_;
  std::size_t written_ = 0;
};

struct ClientOptions {
  int max_in_flight = 4;
  double requests_per_second = 0.0;  // 0 disables the rate limiter
  double burst = 1.0;
};

// Front door for all model calls: answers from the exchange cache when the
// (model, digest) pair was already logged, otherwise calls the provider under
// the in-flight bound and rate limiter and logs exactly one record per call.
class LlmClient {
 public:
  LlmClient(std::shared_ptr<Provider> provider, ClientOptions options = {}, RunLog* log = nullptr);

  LlmExchange complete(const CompletionRequest& request);

  // Seeds the cache with the successful records of a previous run log.
  void preload(const std::vector<LlmExchange>& exchanges);

  std::size_t provider_calls() const noexcept { return provider_calls_.load(); }
  std::size_t cache_hits() const noexcept { return cache_hits_.load(); }
  const Provider& provider() const { return *provider_; }

 private:
  void acquire_slot();
  void release_slot();
  void wait_for_token();

  std::shared_ptr<Provider> provider_;
  ClientOptions options_;
  RunLog* log_;

  std::mutex cache_mutex_;
  std::unordered_map<std::string, LlmExchange> cache_;

  std::mutex slot_mutex_;
  std::condition_variable slot_cv_;
  int in_flight_ = 0;

  std::mutex bucket_mutex_;
  double tokens_;
  std::chrono::steady_clock::time_point last_refill_;

  std::atomic<std::size_t> provider_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// (lowest index) is rethrown after all workers finish.
void parallel_for_index(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

std::string utc_timestamp(std::chrono::system_clock::time_point tp);

}  // namespace bioner
