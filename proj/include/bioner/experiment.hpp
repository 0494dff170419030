#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bioner/corpus.hpp"
#include "bioner/cost.hpp"
#include "bioner/dirag.hpp"
#include "bioner/error.hpp"
#include "bioner/eval.hpp"
#include "bioner/formats.hpp"
#include "bioner/llm.hpp"
#include "bioner/selection.hpp"

namespace bioner {

enum class RunMode { zero_shot, icl, dirag };
std::string_view to_string(RunMode m);
RunMode run_mode_from_string(std::string_view s);

struct ProviderSettings {
  std::string kind = "mock";  // mock | http
  std::filesystem::path script;
  std::string mock_mode;  // used when no script is given: echo_gold | corrupt
  std::string base_url;
  std::string api_key_env;
  std::string model = "mock";
  double temperature = 0.0;
  int max_output_tokens = 1024;
  int max_in_flight = 4;
  double requests_per_second = 0.0;
  double burst = 1.0;
  int max_attempts = 5;
  int timeout_seconds = 60;
};

struct RunConfig {
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  std::string schema_name = "i2b2";
  std::filesystem::path schema_path;  // overrides schema_name when set
  std::string dataset_name;           // report label; defaults to the schema's
  std::string system_name;            // report label; derived from mode/format when empty

  FormatKind format = FormatKind::tanl;
  RunMode mode = RunMode::icl;
  SelectionStrategy strategy = SelectionStrategy::knn;
  int k = static_cast<int>(kDefaultShots);
  std::vector<std::uint64_t> seeds{0};
  DemoOrder order = DemoOrder::similarity_ascending;

  ProviderSettings provider;
  std::filesystem::path embeddings;
  std::filesystem::path dictionary;
  bool per_word_fallback = true;
  std::string instruction;
  std::string candidate_instruction;

  TokenizerConfig tokenizer;
  std::filesystem::path prices;
  int training_epochs = 0;  // > 0 adds a fine-tuning component to cost.json

  double confidence = 0.95;
  CiMethod ci_method = CiMethod::student_t;
  std::size_t limit = 0;  // evaluate only the first `limit` test sentences; 0 = all

  std::filesystem::path output_dir = "out";
};

// Relative paths resolve against `base_dir`. Unknown keys are rejected.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
// Checks cross-field invariants (knn needs embeddings, dirag a dictionary, ...).
void validate(const RunConfig& config);

// Wraps the first module error of a run with the sentence it happened on.
class RunError : public Error {
 public:
  RunError(std::string sentence_id, const std::string& what)
      : Error("sentence " + sentence_id + ": " + what), sentence_id_(std::move(sentence_id)) {}
  const std::string& sentence_id() const noexcept { return sentence_id_; }

 private:
  std::string sentence_id_;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<PredictionRecord> predictions;
  ScoreReport mention;
  ScoreReport token;
};

struct RunSummary {
  std::vector<SeedResult> seeds;
  std::optional<AggregateReport> mention_aggregate;
  std::optional<AggregateReport> token_aggregate;
  std::optional<CostReport> cost;
  std::size_t provider_calls = 0;
  std::size_t cache_hits = 0;
  std::vector<std::string> warnings;
};

// Loaded inputs of one configuration; builds prompts and runs the pipeline.
class Experiment {
 public:
  explicit Experiment(RunConfig config);

  const RunConfig& config() const noexcept { return config_; }
  const Corpus& train() const noexcept { return train_; }
  const Corpus& test() const noexcept { return test_; }
  const EntitySchema& schema() const noexcept { return test_.schema; }
  const Dictionary& dictionary() const noexcept { return dictionary_; }

  // Test sentences in evaluation order (after `limit`).
  std::span<const TokenizedSentence> queries() const;

  // The NER prompt for zero_shot/icl, or the candidate prompt for dirag.
  PromptBundle first_prompt(const TokenizedSentence& query, std::uint64_t seed) const;
  std::vector<std::string> demo_ids(const TokenizedSentence& query, std::uint64_t seed) const;

  // Projected token totals without calling any provider.
  TokenTotals projected_tokens() const;

  std::shared_ptr<Provider> make_provider() const;

  // Writes the artifacts under config().output_dir. `provider` replaces the
  // configured one (tests use it to count calls).
  RunSummary run(std::shared_ptr<Provider> provider = nullptr, std::ostream* progress = nullptr);

 private:
  std::string system_label() const;

  RunConfig config_;
  Corpus train_;
  Corpus test_;
  EmbeddingSet embeddings_;
  EmbeddingSet pool_;
  Dictionary dictionary_;
  std::vector<std::string> train_ids_;
};

RunSummary run_experiment(const RunConfig& config, std::shared_ptr<Provider> provider = nullptr,
                          std::ostream* progress = nullptr);

// Per-query seed for random selection: demos differ between queries but are
// fixed for a given (seed, query id).
std::uint64_t query_seed(std::uint64_t seed, std::string_view query_id);

}  // namespace bioner
