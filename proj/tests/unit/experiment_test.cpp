#include <gtest/gtest.h>

#include <set>

#include "bioner/error.hpp"
#include "bioner/experiment.hpp"
#include "bioner/prompting.hpp"
#include "fixtures.hpp"

namespace bioner {
namespace {

namespace fs = std::filesystem;
using testing::read;
using testing::sample_path;
using testing::TempDir;

RunConfig base_config(const fs::path& out, RunMode mode = RunMode::icl) {
  RunConfig c;
  c.train_path = sample_path("train.conll");
  c.test_path = sample_path("test.conll");
  c.dataset_name = "sample";
  c.mode = mode;
  c.embeddings = sample_path("embeddings.jsonl");
  c.provider.mock_mode = "echo_gold";
  c.prices = testing::prices_example_path();
  c.output_dir = out;
  if (mode == RunMode::dirag) c.dictionary = sample_path("dictionary.jsonl");
  return c;
}

// Counts calls so tests can assert on provider traffic.
class CountingProvider : public Provider {
 public:
  explicit CountingProvider(std::shared_ptr<Provider> inner) : inner_(std::move(inner)) {}
  std::string name() const override { return inner_->name(); }
  LlmExchange complete(const CompletionRequest& r) override {
    ++calls;
    return inner_->complete(r);
  }
  std::atomic<int> calls{0};

 private:
  std::shared_ptr<Provider> inner_;
};

// ---------------------------------------------------------------------------
// Config

TEST(Config, SampleFileResolvesRelativePaths) {
  const RunConfig c = load_run_config(sample_path("icl_knn.json"));
  EXPECT_EQ(c.mode, RunMode::icl);
  EXPECT_EQ(c.strategy, SelectionStrategy::knn);
  EXPECT_EQ(c.k, 16);
  EXPECT_EQ(c.format, FormatKind::tanl);
  EXPECT_TRUE(fs::exists(c.train_path));
  EXPECT_TRUE(fs::exists(c.embeddings));
  EXPECT_TRUE(fs::exists(c.provider.script));
  EXPECT_TRUE(fs::exists(c.prices));
  EXPECT_NO_THROW(validate(c));

  const RunConfig r = load_run_config(sample_path("icl_random_3seeds.json"));
  EXPECT_EQ(r.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(r.format, FormatKind::dice);
  EXPECT_EQ(r.strategy, SelectionStrategy::random);
  EXPECT_EQ(load_run_config(sample_path("dirag.json")).mode, RunMode::dirag);
}

TEST(Config, UnknownKeysAndBadValues) {
  EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"colour": 1})")), ConfigError);
  EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"selection": {"kk": 3}})")), ConfigError);
  EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"mode": "few_shot"})")), ConfigError);
  EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"selection": {"k": "many"}})")), ConfigError);
  EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"([1, 2])")), ConfigError);
  EXPECT_EQ(parse_run_config(nlohmann::json::parse(R"({"mode": "zero-shot"})")).mode, RunMode::zero_shot);
}

TEST(Config, CrossFieldValidation) {
  TempDir dir;
  const auto rejects = [](RunConfig c) { EXPECT_THROW(validate(c), ConfigError); };
  RunConfig c = base_config(dir.path());
  EXPECT_NO_THROW(validate(c));

  RunConfig x = c;
  x.embeddings.clear();
  rejects(x);
  x.strategy = SelectionStrategy::random;
  EXPECT_NO_THROW(validate(x));

  x = c;
  x.train_path.clear();
  rejects(x);
  x.mode = RunMode::zero_shot;
  EXPECT_NO_THROW(validate(x));

  x = c;
  x.mode = RunMode::dirag;
  rejects(x);

  x = c;
  x.seeds.clear();
  rejects(x);
  x.seeds = {1, 1};
  rejects(x);

  x = c;
  x.provider.mock_mode.clear();
  rejects(x);
  x.provider.kind = "http";
  rejects(x);
  x.provider.kind = "carrier-pigeon";
  rejects(x);

  x = c;
  x.confidence = 1.0;
  rejects(x);
  x = c;
  x.k = 0;
  rejects(x);
  x = c;
  x.test_path.clear();
  rejects(x);
}

TEST(Config, MissingFilesFailAtLoad) {
  TempDir dir;
  RunConfig c = base_config(dir.path());
  c.test_path = dir / "nope.conll";
  EXPECT_THROW(Experiment{c}, Error);
}

// ---------------------------------------------------------------------------
// Prompts

TEST(ExperimentPrompts, KnnPromptHasSixteenDemoPairs) {
  TempDir dir;
  const Experiment e(base_config(dir.path()));
  const auto& q = e.test().sentences.front();
  const PromptBundle b = e.first_prompt(q, 0);
  EXPECT_EQ(b.turns.size(), 33u);
  const auto ids = e.demo_ids(q, 0);
  ASSERT_EQ(ids.size(), 16u);
  EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), 16u);
  for (const auto& id : ids) {
    EXPECT_NE(id, q.id);
    EXPECT_NE(e.train().find(id), nullptr);
  }
  EXPECT_EQ(b.meta(meta_keys::kStrategy), "knn");
  EXPECT_EQ(serialize_bundle(b), serialize_bundle(e.first_prompt(q, 0)));
}

TEST(ExperimentPrompts, RandomDemosDependOnSeedAndQuery) {
  TempDir dir;
  RunConfig c = base_config(dir.path());
  c.strategy = SelectionStrategy::random;
  const Experiment e(c);
  const auto& q0 = e.test().sentences[0];
  const auto& q1 = e.test().sentences[1];
  EXPECT_EQ(e.demo_ids(q0, 1), e.demo_ids(q0, 1));
  EXPECT_NE(e.demo_ids(q0, 1), e.demo_ids(q0, 2));
  EXPECT_NE(e.demo_ids(q0, 1), e.demo_ids(q1, 1));
  EXPECT_NE(query_seed(1, "a"), query_seed(1, "b"));
  EXPECT_EQ(query_seed(7, "test-3"), query_seed(7, "test-3"));
}

TEST(ExperimentPrompts, ModesProduceTheirFirstPrompt) {
  TempDir dir;
  const Experiment zs(base_config(dir.path(), RunMode::zero_shot));
  const auto& q = zs.test().sentences.front();
  EXPECT_EQ(zs.first_prompt(q, 0).turns.size(), 1u);
  const Experiment dr(base_config(dir.path(), RunMode::dirag));
  EXPECT_EQ(dr.first_prompt(q, 0).meta(meta_keys::kStage), kStageCandidates);
}

// ---------------------------------------------------------------------------
// End to end

void expect_perfect(const RunSummary& s) {
  ASSERT_EQ(s.seeds.size(), 1u);
  EXPECT_EQ(s.seeds[0].mention.f1, 1.0);
  EXPECT_EQ(s.seeds[0].token.f1, 1.0);
  EXPECT_EQ(s.seeds[0].predictions.size(), 50u);
}

TEST(EndToEnd, EchoGoldIsPerfectInEveryMode) {
  for (FormatKind f : {FormatKind::tanl, FormatKind::dice}) {
    for (RunMode m : {RunMode::icl, RunMode::zero_shot, RunMode::dirag}) {
      TempDir dir;
      RunConfig c = base_config(dir.path(), m);
      c.format = f;
      SCOPED_TRACE(std::string(to_string(f)) + " " + std::string(to_string(m)));
      const RunSummary s = run_experiment(c);
      expect_perfect(s);
      EXPECT_EQ(s.provider_calls, m == RunMode::dirag ? 100u : 50u);
      EXPECT_TRUE(fs::exists(dir / "predictions.jsonl"));
      EXPECT_TRUE(fs::exists(dir / "scores.json"));
      EXPECT_TRUE(fs::exists(dir / "cost.json"));
      EXPECT_TRUE(fs::exists(dir / "exchanges.jsonl"));
      const auto scores = nlohmann::json::parse(read(dir / "scores.json"));
      EXPECT_EQ(scores["mention"]["f1"], 1.0);
      EXPECT_EQ(scores["dataset"], "sample");
    }
  }
}

TEST(EndToEnd, DropEverySecondHalvesRecall) {
  TempDir dir;
  RunConfig c = base_config(dir.path());
  c.provider.mock_mode.clear();
  c.provider.script = sample_path("mock_drop_every_2.jsonl");
  const RunSummary s = run_experiment(c);
  ASSERT_EQ(s.seeds.size(), 1u);
  EXPECT_DOUBLE_EQ(s.seeds[0].mention.recall, 0.5);
  EXPECT_DOUBLE_EQ(s.seeds[0].mention.precision, 1.0);
}

TEST(EndToEnd, ThreeSeedsAggregate) {
  TempDir dir;
  RunConfig c = base_config(dir.path());
  c.strategy = SelectionStrategy::random;
  c.seeds = {1, 2, 3};
  const RunSummary s = run_experiment(c);
  ASSERT_EQ(s.seeds.size(), 3u);
  ASSERT_TRUE(s.mention_aggregate.has_value());
  EXPECT_EQ(s.mention_aggregate->n_runs, 3u);
  EXPECT_EQ(s.mention_aggregate->mean, 1.0);
  EXPECT_EQ(s.mention_aggregate->half_width, 0.0);
  for (int seed : {1, 2, 3}) {
    EXPECT_TRUE(fs::exists(dir / ("seed-" + std::to_string(seed)) / "predictions.jsonl"));
    EXPECT_TRUE(fs::exists(dir / ("seed-" + std::to_string(seed)) / "scores.json"));
  }
  const auto agg = nlohmann::json::parse(read(dir / "aggregate.json"));
  EXPECT_EQ(agg["mention_f1"]["n_runs"], 3);
  // Different seeds pick different demos, so every seed makes its own calls.
  EXPECT_EQ(s.provider_calls, 150u);
}

TEST(EndToEnd, RerunIsByteIdenticalAndCallsNothing) {
  TempDir dir;
  const RunConfig c = base_config(dir.path());
  const RunSummary first = run_experiment(c);
  EXPECT_EQ(first.provider_calls, 50u);
  const std::string pred = read(dir / "predictions.jsonl");
  const std::string scores = read(dir / "scores.json");
  const std::string cost = read(dir / "cost.json");
  const std::string log = read(dir / "exchanges.jsonl");

  MockScript script;
  script.mode = MockMode::echo_gold;
  const Experiment e(c);
  auto counting = std::make_shared<CountingProvider>(std::make_shared<MockProvider>(script, &e.test()));
  const RunSummary second = run_experiment(c, counting);
  EXPECT_EQ(counting->calls.load(), 0);
  EXPECT_EQ(second.provider_calls, 0u);
  EXPECT_EQ(second.cache_hits, 50u);
  EXPECT_EQ(read(dir / "predictions.jsonl"), pred);
  EXPECT_EQ(read(dir / "scores.json"), scores);
  EXPECT_EQ(read(dir / "cost.json"), cost);
  EXPECT_EQ(read(dir / "exchanges.jsonl"), log);
}

TEST(EndToEnd, IndependentRunsAreByteIdentical) {
  TempDir a, b;
  RunConfig ca = base_config(a.path());
  ca.provider.mock_mode.clear();
  ca.provider.script = sample_path("mock_drop_every_2.jsonl");
  RunConfig cb = ca;
  cb.output_dir = b.path();
  run_experiment(ca);
  run_experiment(cb);
  for (const char* f : {"predictions.jsonl", "scores.json", "cost.json"}) EXPECT_EQ(read(a / f), read(b / f)) << f;
}

TEST(EndToEnd, ResumeAfterPartialRun) {
  TempDir dir;
  RunConfig c = base_config(dir.path());
  c.limit = 10;
  EXPECT_EQ(run_experiment(c).provider_calls, 10u);
  c.limit = 0;
  const RunSummary s = run_experiment(c);
  EXPECT_EQ(s.provider_calls, 40u);
  EXPECT_EQ(s.cache_hits, 10u);
  expect_perfect(s);
}

TEST(EndToEnd, EmptyDictionaryMatchesZeroShot) {
  TempDir zs, dr;
  RunConfig z = base_config(zs.path(), RunMode::zero_shot);
  RunConfig d = base_config(dr.path(), RunMode::dirag);
  d.dictionary = sample_path("empty_dictionary.jsonl");
  for (const char* script : {"mock_echo_gold.jsonl", "mock_drop_every_2.jsonl"}) {
    z.provider.mock_mode.clear();
    d.provider.mock_mode.clear();
    z.provider.script = sample_path(script);
    d.provider.script = sample_path(script);
    fs::remove_all(zs.path());
    fs::remove_all(dr.path());
    run_experiment(z);
    run_experiment(d);
    EXPECT_EQ(read(zs / "predictions.jsonl"), read(dr / "predictions.jsonl")) << script;
  }
}

TEST(EndToEnd, FailureNamesTheSentence) {
  TempDir dir;
  RunConfig c = base_config(dir.path());
  const Experiment e(c);
  auto failing = std::make_shared<MockProvider>(MockScript{});  // script mode with no responses
  try {
    run_experiment(c, failing);
    FAIL();
  } catch (const RunError& err) {
    EXPECT_EQ(err.sentence_id(), "test-0");
    EXPECT_NE(std::string(err.what()).find("test-0"), std::string::npos);
  }
  // Every failed call is still logged.
  const auto log = RunLog::read(dir / "exchanges.jsonl");
  EXPECT_FALSE(log.empty());
  for (const auto& ex : log) EXPECT_FALSE(ex.ok);
}

// ---------------------------------------------------------------------------
// Cost

TEST(ExperimentCost, ProjectionMatchesMeasuredEchoGold) {
  for (RunMode m : {RunMode::icl, RunMode::zero_shot, RunMode::dirag}) {
    TempDir dir;
    RunConfig c = base_config(dir.path(), m);
    const Experiment e(c);
    const TokenTotals projected = e.projected_tokens();
    const RunSummary s = run_experiment(c);
    ASSERT_TRUE(s.cost.has_value());
    EXPECT_EQ(s.cost->token_totals.prompt_tokens, projected.prompt_tokens) << to_string(m);
    EXPECT_EQ(s.cost->token_totals.completion_tokens, projected.completion_tokens) << to_string(m);
    EXPECT_GT(projected.prompt_tokens, 0);
  }
}

TEST(ExperimentCost, CostFileMatchesPriceFormula) {
  TempDir dir;
  const RunConfig c = base_config(dir.path());
  const RunSummary s = run_experiment(c);
  const auto doc = nlohmann::json::parse(read(dir / "cost.json"));
  const std::int64_t p = doc["token_totals"]["prompt_tokens"];
  const std::int64_t k = doc["token_totals"]["completion_tokens"];
  // mock: 0.50 prompt, 1.50 completion per 1M tokens.
  const std::int64_t nanos = (p * 500'000 + 500) / 1000 + (k * 1'500'000 + 500) / 1000;
  EXPECT_EQ(s.cost->inference_cost.nanos(), nanos);
  EXPECT_EQ(doc["inference_cost"], Money::from_nanos(nanos).str(6));
  EXPECT_EQ(doc["per_item"].size(), 50u);
}

TEST(ExperimentCost, TrainingComponent) {
  TempDir dir;
  RunConfig c = base_config(dir.path());
  c.provider.model = "gpt-3.5-turbo-finetune";
  c.training_epochs = 3;
  const Experiment e(c);
  std::int64_t tokens = 0;
  const TokenizerConfig cpt{TokenizerConfig::Mode::chars_per_token, 4.0};
  for (const auto& s : e.train().sentences) {
    tokens += count_tokens(encode_input(c.format, s, e.schema()), cpt);
    tokens += count_tokens(encode_output(c.format, s, mentions_from_bio(s), e.schema()), cpt);
  }
  const RunSummary s = run_experiment(c);
  ASSERT_TRUE(s.cost.has_value());
  EXPECT_EQ(s.cost->token_totals.training_tokens, 3 * tokens);
  EXPECT_EQ(s.cost->training_cost.nanos(), (3 * tokens * 8'000'000 + 500) / 1000);
  EXPECT_EQ(cost_cell(*s.cost).find("+$") != std::string::npos, true);
}

TEST(ExperimentCost, WithoutPricesWritesTokenTotals) {
  TempDir dir;
  RunConfig c = base_config(dir.path());
  c.prices.clear();
  c.limit = 5;
  const RunSummary s = run_experiment(c);
  EXPECT_FALSE(s.cost.has_value());
  const auto doc = nlohmann::json::parse(read(dir / "cost.json"));
  EXPECT_EQ(doc["note"], "no price sheet configured");
  EXPECT_GT(doc["token_totals"]["prompt_tokens"].get<std::int64_t>(), 0);
}

TEST(ExperimentCost, UnknownModelIsConfigError) {
  TempDir dir;
  RunConfig c = base_config(dir.path());
  c.provider.model = "unpriced-model";
  c.limit = 2;
  EXPECT_THROW(run_experiment(c), ConfigError);
}

}  // namespace
}  // namespace bioner
