#include "bioner/experiment.hpp"

#include <algorithm>
#include <ostream>
#include <set>
#include <unordered_set>

#include "bioner/prompting.hpp"
#include "bioner/text.hpp"

namespace bioner {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(RunMode m) {
  switch (m) {
    case RunMode::zero_shot: return "zero_shot";
    case RunMode::icl: return "icl";
    case RunMode::dirag: return "dirag";
  }
  return "icl";
}

RunMode run_mode_from_string(std::string_view s) {
  const std::string v = text::to_lower(text::trim(s));
  if (v == "zero_shot" || v == "zero-shot") return RunMode::zero_shot;
  if (v == "icl") return RunMode::icl;
  if (v == "dirag") return RunMode::dirag;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected zero_shot, icl or dirag)");
}

// ---------------------------------------------------------------------------
// Config

namespace {

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("unknown key '" + key + "' in " + std::string(where));
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

template <typename T>
T get(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key) || obj[key].is_null()) return fallback;
  try {
    return obj[key].get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  reject_unknown(j,
                 {"dataset", "format", "mode", "selection", "provider", "embeddings", "dirag", "instruction",
                  "tokenizer", "cost", "aggregate", "limit", "system", "output_dir"},
                 "config");
  RunConfig c;
  try {
    if (j.contains("dataset")) {
      const json& d = j["dataset"];
      reject_unknown(d, {"train", "test", "schema", "schema_file", "name"}, "dataset");
      c.train_path = resolve(base_dir, get<std::string>(d, "train", ""));
      c.test_path = resolve(base_dir, get<std::string>(d, "test", ""));
      c.schema_name = get<std::string>(d, "schema", c.schema_name);
      c.schema_path = resolve(base_dir, get<std::string>(d, "schema_file", ""));
      c.dataset_name = get<std::string>(d, "name", "");
    }
    if (j.contains("format")) c.format = format_from_string(get<std::string>(j, "format", "tanl"));
    if (j.contains("mode")) c.mode = run_mode_from_string(get<std::string>(j, "mode", "icl"));
    if (j.contains("selection")) {
      const json& s = j["selection"];
      reject_unknown(s, {"strategy", "k", "seeds", "seed", "order"}, "selection");
      if (s.contains("strategy")) c.strategy = strategy_from_string(get<std::string>(s, "strategy", "knn"));
      c.k = get<int>(s, "k", c.k);
      if (s.contains("seeds")) c.seeds = get<std::vector<std::uint64_t>>(s, "seeds", {});
      if (s.contains("seed")) c.seeds = {get<std::uint64_t>(s, "seed", 0)};
      if (s.contains("order")) c.order = demo_order_from_string(get<std::string>(s, "order", ""));
    }
    if (j.contains("provider")) {
      const json& p = j["provider"];
      reject_unknown(p,
                     {"kind", "script", "mock_mode", "base_url", "api_key_env", "model", "temperature",
                      "max_output_tokens", "max_in_flight", "requests_per_second", "burst", "max_attempts",
                      "timeout_seconds"},
                     "provider");
      auto& ps = c.provider;
      ps.kind = get<std::string>(p, "kind", ps.kind);
      ps.script = resolve(base_dir, get<std::string>(p, "script", ""));
      ps.mock_mode = get<std::string>(p, "mock_mode", "");
      ps.base_url = get<std::string>(p, "base_url", "");
      ps.api_key_env = get<std::string>(p, "api_key_env", "");
      ps.model = get<std::string>(p, "model", ps.model);
      ps.temperature = get<double>(p, "temperature", ps.temperature);
      ps.max_output_tokens = get<int>(p, "max_output_tokens", ps.max_output_tokens);
      ps.max_in_flight = get<int>(p, "max_in_flight", ps.max_in_flight);
      ps.requests_per_second = get<double>(p, "requests_per_second", ps.requests_per_second);
      ps.burst = get<double>(p, "burst", ps.burst);
      ps.max_attempts = get<int>(p, "max_attempts", ps.max_attempts);
      ps.timeout_seconds = get<int>(p, "timeout_seconds", ps.timeout_seconds);
    }
    c.embeddings = resolve(base_dir, get<std::string>(j, "embeddings", ""));
    if (j.contains("dirag")) {
      const json& d = j["dirag"];
      reject_unknown(d, {"dictionary", "per_word_fallback", "candidate_instruction"}, "dirag");
      c.dictionary = resolve(base_dir, get<std::string>(d, "dictionary", ""));
      c.per_word_fallback = get<bool>(d, "per_word_fallback", true);
      c.candidate_instruction = get<std::string>(d, "candidate_instruction", "");
    }
    c.instruction = get<std::string>(j, "instruction", "");
    if (j.contains("tokenizer")) {
      const json& t = j["tokenizer"];
      reject_unknown(t, {"mode", "chars_per_token"}, "tokenizer");
      if (t.contains("mode")) c.tokenizer.mode = tokenizer_mode_from_string(get<std::string>(t, "mode", ""));
      c.tokenizer.chars_per_token = get<double>(t, "chars_per_token", c.tokenizer.chars_per_token);
    }
    if (j.contains("cost")) {
      const json& k = j["cost"];
      reject_unknown(k, {"prices", "training_epochs"}, "cost");
      c.prices = resolve(base_dir, get<std::string>(k, "prices", ""));
      c.training_epochs = get<int>(k, "training_epochs", 0);
    }
    if (j.contains("aggregate")) {
      const json& a = j["aggregate"];
      reject_unknown(a, {"confidence", "method"}, "aggregate");
      c.confidence = get<double>(a, "confidence", c.confidence);
      if (a.contains("method")) c.ci_method = ci_method_from_string(get<std::string>(a, "method", ""));
    }
    c.limit = get<std::size_t>(j, "limit", 0);
    c.system_name = get<std::string>(j, "system", "");
    c.output_dir = resolve(base_dir, get<std::string>(j, "output_dir", "out"));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(text::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

void validate(const RunConfig& c) {
  if (c.test_path.empty()) throw ConfigError("dataset.test is required");
  if (c.mode == RunMode::icl) {
    if (c.train_path.empty()) throw ConfigError("icl mode needs dataset.train as the demonstration pool");
    if (c.k <= 0) throw ConfigError("selection.k must be positive");
    if (c.strategy == SelectionStrategy::knn && c.embeddings.empty())
      throw ConfigError("knn selection needs an embeddings file");
  }
  if (c.mode == RunMode::dirag && c.dictionary.empty()) throw ConfigError("dirag mode needs dirag.dictionary");
  if (c.seeds.empty()) throw ConfigError("selection.seeds must not be empty");
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size())
    throw ConfigError("selection.seeds contains duplicates");
  if (c.provider.kind == "mock") {
    if (c.provider.script.empty() && c.provider.mock_mode.empty())
      throw ConfigError("mock provider needs provider.script or provider.mock_mode");
  } else if (c.provider.kind == "http") {
    if (c.provider.base_url.empty()) throw ConfigError("http provider needs provider.base_url");
  } else {
    throw ConfigError("unknown provider kind '" + c.provider.kind + "' (expected mock or http)");
  }
  if (c.provider.max_in_flight <= 0) throw ConfigError("provider.max_in_flight must be positive");
  if (!(c.confidence > 0.0 && c.confidence < 1.0)) throw ConfigError("aggregate.confidence must lie in (0, 1)");
  if (c.training_epochs < 0) throw ConfigError("cost.training_epochs must be >= 0");
  if (c.training_epochs > 0 && c.train_path.empty()) throw ConfigError("training cost needs dataset.train");
  if (c.tokenizer.chars_per_token <= 0.0) throw ConfigError("tokenizer.chars_per_token must be positive");
}

std::uint64_t query_seed(std::uint64_t seed, std::string_view query_id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : query_id) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return SplitMix64(seed ^ h).next();
}

// ---------------------------------------------------------------------------
// Experiment

namespace {

EntitySchema load_schema(const RunConfig& c) {
  if (!c.schema_path.empty()) return EntitySchema::from_json_file(c.schema_path);
  return EntitySchema::builtin(c.schema_name);
}

const TokenizerConfig kCharsPerToken4{TokenizerConfig::Mode::chars_per_token, 4.0};

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

}  // namespace

Experiment::Experiment(RunConfig config) : config_(std::move(config)) {
  validate(config_);
  const EntitySchema schema = load_schema(config_);
  test_ = load_bio_corpus(config_.test_path, schema, Split::test);
  if (!config_.train_path.empty()) {
    train_ = load_bio_corpus(config_.train_path, schema, Split::train);
    for (const auto& s : train_.sentences) train_ids_.push_back(s.id);
  } else {
    train_.schema = schema;
  }
  if (config_.mode == RunMode::icl && config_.strategy == SelectionStrategy::knn) {
    embeddings_ = load_embeddings(config_.embeddings);
    std::unordered_set<std::string> ids(train_ids_.begin(), train_ids_.end());
    pool_ = embeddings_.filter([&](const EmbeddingRecord& r) { return ids.count(r.sentence_id) > 0; });
  }
  if (!config_.dictionary.empty()) dictionary_ = load_dictionary(config_.dictionary);
}

std::span<const TokenizedSentence> Experiment::queries() const {
  std::span<const TokenizedSentence> all(test_.sentences);
  if (config_.limit > 0 && config_.limit < all.size()) return all.first(config_.limit);
  return all;
}

std::vector<std::string> Experiment::demo_ids(const TokenizedSentence& query, std::uint64_t seed) const {
  if (config_.mode != RunMode::icl) return {};
  if (config_.strategy == SelectionStrategy::random) {
    // Random draws carry no scores, so only the retrieval order applies.
    const auto r = select_random(train_ids_, config_.k, query_seed(seed, query.id));
    return r.demo_ids;
  }
  const EmbeddingRecord* q = embeddings_.find(query.id);
  if (!q) throw ConfigError("no embedding for query sentence " + query.id);
  const auto r = select_knn(pool_, q->vector, config_.k, {query.id});
  return order_demos(r, config_.order);
}

PromptBundle Experiment::first_prompt(const TokenizedSentence& query, std::uint64_t seed) const {
  const EntitySchema& sc = schema();
  const std::string instruction =
      config_.instruction.empty() ? default_instruction(config_.format, sc) : config_.instruction;
  switch (config_.mode) {
    case RunMode::zero_shot:
      return build_zero_shot_prompt(query, config_.format, sc, instruction);
    case RunMode::dirag:
      return build_candidate_prompt(query, sc, config_.candidate_instruction);
    case RunMode::icl: {
      std::vector<TokenizedSentence> demos;
      for (const auto& id : demo_ids(query, seed)) {
        const TokenizedSentence* d = train_.find(id);
        if (!d) throw ConfigError("demo id " + id + " is not in the training corpus");
        demos.push_back(*d);
      }
      return build_icl_prompt(query, demos, config_.format, sc, instruction, to_string(config_.strategy));
    }
  }
  throw ConfigError("unreachable mode");
}

std::string Experiment::system_label() const {
  if (!config_.system_name.empty()) return config_.system_name;
  std::string s = std::string(to_string(config_.mode)) + "/" + std::string(to_string(config_.format));
  if (config_.mode == RunMode::icl) s += "/" + std::string(to_string(config_.strategy)) + "-" + std::to_string(config_.k);
  return s;
}

std::shared_ptr<Provider> Experiment::make_provider() const {
  const auto& p = config_.provider;
  if (p.kind == "http") {
    HttpProviderConfig hc;
    hc.base_url = p.base_url;
    hc.api_key_env = p.api_key_env;
    hc.timeout = std::chrono::seconds(p.timeout_seconds);
    hc.retry.max_attempts = p.max_attempts;
    return std::make_shared<HttpProvider>(hc);
  }
  MockScript script;
  if (!p.script.empty()) {
    script = load_mock_script(p.script);
  } else {
    script = parse_mock_script(json{{"mode", p.mock_mode}}.dump());
  }
  return std::make_shared<MockProvider>(std::move(script), &test_);
}

namespace {

struct Outcome {
  std::vector<EntityMention> mentions;
  std::vector<LlmExchange> exchanges;
  std::vector<std::string> warnings;
};

// Client wrapper that remembers every exchange of one sentence.
struct Recorder {
  LlmClient& client;
  std::vector<LlmExchange>& sink;
  LlmExchange complete(const CompletionRequest& r) {
    sink.push_back(client.complete(r));
    return sink.back();
  }
};

}  // namespace

RunSummary Experiment::run(std::shared_ptr<Provider> provider, std::ostream* progress) {
  if (!provider) provider = make_provider();
  const fs::path out = config_.output_dir;
  fs::create_directories(out);
  const fs::path log_path = out / "exchanges.jsonl";
  std::vector<LlmExchange> previous;
  if (fs::exists(log_path)) previous = RunLog::read(log_path);
  RunLog log(log_path);
  ClientOptions opts;
  opts.max_in_flight = config_.provider.max_in_flight;
  opts.requests_per_second = config_.provider.requests_per_second;
  opts.burst = config_.provider.burst;
  LlmClient client(provider, opts, &log);
  client.preload(previous);

  const CompletionSettings settings{config_.provider.model, config_.provider.temperature,
                                    config_.provider.max_output_tokens};
  const std::string instruction =
      config_.instruction.empty() ? default_instruction(config_.format, schema()) : config_.instruction;
  DiragOptions dopts;
  dopts.per_word_fallback = config_.per_word_fallback;
  dopts.candidate_instruction = config_.candidate_instruction;
  dopts.ner_instruction = instruction;
  dopts.settings = settings;

  const auto qs = queries();
  MentionsById gold;
  std::map<std::string, std::size_t> lengths;
  for (const auto& q : qs) {
    gold[q.id] = mentions_from_bio(q);
    lengths[q.id] = q.tokens.size();
  }

  RunSummary summary;
  std::vector<LlmExchange> all_exchanges;
  const bool multi = config_.seeds.size() > 1;
  for (const std::uint64_t seed : config_.seeds) {
    std::vector<Outcome> outcomes(qs.size());
    parallel_for_index(qs.size(), config_.provider.max_in_flight, [&](std::size_t i) {
      const TokenizedSentence& q = qs[i];
      Outcome& o = outcomes[i];
      try {
        if (config_.mode == RunMode::dirag) {
          DiragTrace trace = run_dirag(q, client, dictionary_, config_.format, schema(), dopts);
          o.mentions = std::move(trace.final_report.mentions);
          o.exchanges = std::move(trace.exchanges);
          for (auto& a : trace.final_report.anomalies) o.warnings.push_back(q.id + ": " + a);
        } else {
          Recorder rec{client, o.exchanges};
          const PromptBundle bundle = first_prompt(q, seed);
          const auto ex = rec.complete({settings.model_name, bundle, settings.temperature, settings.max_output_tokens});
          DecodeReport rep = decode(config_.format, ex.response_text, q, schema());
          o.mentions = std::move(rep.mentions);
          for (auto& a : rep.anomalies) o.warnings.push_back(q.id + ": " + a);
        }
      } catch (const Error& e) {
        throw RunError(q.id, e.what());
      }
    });

    SeedResult sr;
    sr.seed = seed;
    MentionsById pred;
    for (std::size_t i = 0; i < qs.size(); ++i) {
      sr.predictions.push_back({qs[i].id, outcomes[i].mentions});
      pred[qs[i].id] = outcomes[i].mentions;
      for (auto& ex : outcomes[i].exchanges) all_exchanges.push_back(std::move(ex));
      for (auto& w : outcomes[i].warnings) summary.warnings.push_back(std::move(w));
    }
    sr.mention = mention_f1(pred, gold);
    sr.token = token_f1_from_mentions(pred, gold, lengths);

    const fs::path dir = multi ? out / ("seed-" + std::to_string(seed)) : out;
    nlohmann::ordered_json scores;
    scores["system"] = system_label();
    scores["dataset"] = config_.dataset_name.empty() ? schema().dataset_name() : config_.dataset_name;
    scores["seed"] = seed;
    scores["mention"] = score_to_json(sr.mention);
    scores["token"] = score_to_json(sr.token);
    text::write_file(dir / "predictions.jsonl", serialize_predictions(sr.predictions));
    text::write_file(dir / "scores.json", dump(scores));
    if (progress) {
      *progress << "seed " << seed << ": mention F1 " << sr.mention.f1 << ", token F1 " << sr.token.f1 << "\n";
    }
    summary.seeds.push_back(std::move(sr));
  }

  if (multi) {
    std::vector<double> m, t;
    for (const auto& s : summary.seeds) {
      m.push_back(s.mention.f1);
      t.push_back(s.token.f1);
    }
    summary.mention_aggregate = aggregate_runs(m, config_.confidence, config_.ci_method, "mention_f1");
    summary.token_aggregate = aggregate_runs(t, config_.confidence, config_.ci_method, "token_f1");
    nlohmann::ordered_json agg;
    agg["mention_f1"] = aggregate_to_json(*summary.mention_aggregate);
    agg["token_f1"] = aggregate_to_json(*summary.token_aggregate);
    text::write_file(out / "aggregate.json", dump(agg));
  }

  // A prompt sent more than once is billed once.
  std::vector<LlmExchange> billed;
  std::set<std::string> seen;
  for (auto& ex : all_exchanges) {
    if (seen.insert(ex.request.model_name + "\n" + ex.digest).second) billed.push_back(std::move(ex));
  }
  nlohmann::ordered_json cost_doc;
  if (!config_.prices.empty()) {
    const PriceTable table = load_price_table(config_.prices);
    CostReport cr = estimate_inference_cost(billed, table, config_.tokenizer);
    if (cr.model_name.empty()) cr.model_name = config_.provider.model;
    if (config_.training_epochs > 0) {
      std::int64_t tokens = 0;
      for (const auto& s : train_.sentences) {
        const auto ms = mentions_from_bio(s);
        tokens += count_tokens(encode_input(config_.format, s, schema()), kCharsPerToken4);
        tokens += count_tokens(encode_output(config_.format, s, ms, schema()), kCharsPerToken4);
      }
      add_training(cr, tokens, config_.training_epochs, price_for(table, config_.provider.model));
    }
    cost_doc = cost_to_json(cr);
    summary.cost = std::move(cr);
  } else {
    TokenTotals totals;
    for (const auto& ex : billed) {
      totals.prompt_tokens += exchange_prompt_tokens(ex, config_.tokenizer);
      totals.completion_tokens += exchange_completion_tokens(ex, config_.tokenizer);
    }
    cost_doc["model"] = config_.provider.model;
    cost_doc["note"] = "no price sheet configured";
    cost_doc["token_totals"] = {{"prompt_tokens", totals.prompt_tokens},
                                {"completion_tokens", totals.completion_tokens},
                                {"training_tokens", 0}};
  }
  text::write_file(out / "cost.json", dump(cost_doc));

  summary.provider_calls = client.provider_calls();
  summary.cache_hits = client.cache_hits();
  return summary;
}

TokenTotals Experiment::projected_tokens() const {
  TokenTotals totals;
  TokenizerConfig tk = config_.tokenizer;
  tk.mode = TokenizerConfig::Mode::chars_per_token;
  std::set<std::string> seen;
  auto add = [&](const PromptBundle& b, const std::string& completion) {
    if (!seen.insert(prompt_digest(b)).second) return;
    totals.prompt_tokens += count_tokens(bundle_text(b), tk);
    totals.completion_tokens += count_tokens(completion, tk);
  };
  const std::string instruction =
      config_.instruction.empty() ? default_instruction(config_.format, schema()) : config_.instruction;
  for (const std::uint64_t seed : config_.seeds) {
    for (const auto& q : queries()) {
      // The projected answer is the gold output, or the bare sentence when unlabeled.
      const auto ms = q.has_gold() ? mentions_from_bio(q) : std::vector<EntityMention>{};
      const std::string answer = encode_output(config_.format, q, ms, schema());
      if (config_.mode != RunMode::dirag) {
        add(first_prompt(q, seed), answer);
        continue;
      }
      std::string cands;
      DiragTrace trace;
      std::set<std::string> dedup;
      for (const auto& m : ms) {
        cands += m.surface + "\n";
        if (dedup.insert(text::to_lower(m.surface)).second) trace.candidates.push_back(m.surface);
      }
      add(first_prompt(q, seed), cands);
      DiragOptions o;
      o.per_word_fallback = config_.per_word_fallback;
      resolve_candidates(dictionary_, trace, o);
      std::vector<DictionaryHit> lines;
      std::set<std::string> terms;
      for (const auto& h : trace.hits) {
        if (terms.insert(text::to_lower(h.term)).second) lines.push_back(h);
      }
      add(build_zero_shot_prompt_from_text(q.id, augment_input(q, lines), config_.format, schema(), instruction),
          answer);
    }
  }
  return totals;
}

RunSummary run_experiment(const RunConfig& config, std::shared_ptr<Provider> provider, std::ostream* progress) {
  Experiment e(config);
  return e.run(std::move(provider), progress);
}

}  // namespace bioner
