// Command-line front end: run / score / estimate-cost / ingest-embeddings / inspect-prompt.

#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bioner/corpus.hpp"
#include "bioner/cost.hpp"
#include "bioner/eval.hpp"
#include "bioner/experiment.hpp"
#include "bioner/prompting.hpp"
#include "bioner/selection.hpp"
#include "bioner/text.hpp"

namespace {

using namespace bioner;

struct RunArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::string format;
  std::string output_dir;
};

RunConfig load_with_overrides(const RunArgs& a) {
  RunConfig c = load_run_config(a.config);
  if (a.seed) c.seeds = {*a.seed};
  if (!a.mode.empty()) c.mode = run_mode_from_string(a.mode);
  if (!a.format.empty()) c.format = format_from_string(a.format);
  if (!a.output_dir.empty()) c.output_dir = a.output_dir;
  return c;
}

int cmd_run(const RunArgs& a) {
  const RunConfig c = load_with_overrides(a);
  const RunSummary s = run_experiment(c, nullptr, &std::cerr);
  for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
  std::cerr << "provider calls: " << s.provider_calls << ", cache hits: " << s.cache_hits << "\n";
  if (s.mention_aggregate) {
    const auto& m = *s.mention_aggregate;
    const auto& t = *s.token_aggregate;
    std::cout << "mention F1 " << m.mean << " +/- " << m.half_width << ", token F1 " << t.mean << " +/- "
              << t.half_width << " (" << m.n_runs << " runs)\n";
  } else {
    std::cout << "mention F1 " << s.seeds.front().mention.f1 << ", token F1 " << s.seeds.front().token.f1 << "\n";
  }
  if (s.cost) std::cout << "cost " << cost_cell(*s.cost) << "\n";
  std::cout << "artifacts in " << c.output_dir.string() << "\n";
  return 0;
}

int cmd_score(const std::string& pred_path, const std::string& gold_path, const std::string& schema_name,
              const std::string& schema_file, const std::string& fmt) {
  const EntitySchema schema =
      schema_file.empty() ? EntitySchema::builtin(schema_name) : EntitySchema::from_json_file(schema_file);
  const Corpus gold_corpus = load_bio_corpus(gold_path, schema, Split::test);
  MentionsById gold;
  std::map<std::string, std::size_t> lengths;
  for (const auto& s : gold_corpus.sentences) {
    gold[s.id] = mentions_from_bio(s);
    lengths[s.id] = s.tokens.size();
  }
  MentionsById pred;
  if (pred_path.ends_with(".jsonl")) {
    pred = to_map(parse_predictions(text::read_file(pred_path)));
  } else {
    const Corpus p = load_bio_corpus(pred_path, schema, Split::test);
    for (const auto& s : p.sentences) pred[s.id] = mentions_from_bio(s);
  }
  ResultRow row{"predictions", schema.dataset_name(), mention_f1(pred, gold),
                token_f1_from_mentions(pred, gold, lengths), std::nullopt, std::nullopt};
  if (fmt == "json") {
    nlohmann::ordered_json j;
    j["mention"] = score_to_json(row.mention);
    j["token"] = score_to_json(row.token);
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  const auto& m = row.mention;
  const auto& t = row.token;
  std::cout << "mention P/R/F1 " << m.precision << "/" << m.recall << "/" << m.f1 << "\n";
  std::cout << "token   P/R/F1 " << t.precision << "/" << t.recall << "/" << t.f1 << "\n";
  std::cout << render_report(std::span<const ResultRow>(&row, 1), report_format_from_string(fmt));
  return 0;
}

int cmd_estimate(const RunArgs& a) {
  const RunConfig c = load_with_overrides(a);
  const Experiment e(c);
  const TokenTotals totals = e.projected_tokens();
  std::cout << "projected prompt tokens " << totals.prompt_tokens << ", completion tokens "
            << totals.completion_tokens << "\n";
  if (c.prices.empty()) {
    std::cout << "no price sheet configured\n";
    return 0;
  }
  const PriceTable table = load_price_table(c.prices);
  const PriceSheet& sheet = price_for(table, c.provider.model);
  CostReport r = estimate_inference_cost(totals, sheet);
  if (c.training_epochs > 0) {
    std::int64_t tokens = 0;
    const TokenizerConfig tk{TokenizerConfig::Mode::chars_per_token, 4.0};
    for (const auto& s : e.train().sentences) {
      tokens += count_tokens(encode_input(c.format, s, e.schema()), tk);
      tokens += count_tokens(encode_output(c.format, s, mentions_from_bio(s), e.schema()), tk);
    }
    add_training(r, tokens, c.training_epochs, sheet);
  }
  std::cout << cost_to_json(r).dump(2) << "\n";
  std::cout << "cost " << cost_cell(r) << "\n";
  return 0;
}

int cmd_ingest(const std::string& path) {
  const EmbeddingSet set = load_embeddings(path);
  std::cout << set.size() << " vectors, dimension " << set.dimension() << ", encoder "
            << (set.empty() ? std::string("-") : set.encoder_name()) << "\n";
  return 0;
}

int cmd_inspect(const RunArgs& a, const std::string& id) {
  const RunConfig c = load_with_overrides(a);
  const Experiment e(c);
  const TokenizedSentence* q = e.test().find(id);
  if (!q) throw ArgumentError("no test sentence with id '" + id + "'");
  std::cout << serialize_bundle(e.first_prompt(*q, c.seeds.front())) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Biomedical NER with LLM prompting: TANL/DICE formats, kNN demos, dictionary augmentation"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto add_overrides = [&](CLI::App* sub) {
    sub->add_option("--config", run_args.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", run_args.seed, "Run a single seed");
    sub->add_option("--mode", run_args.mode, "zero_shot | icl | dirag");
    sub->add_option("--format", run_args.format, "tanl | dice");
    sub->add_option("--output-dir", run_args.output_dir, "Artifact directory");
  };

  auto* run = app.add_subcommand("run", "Run an experiment and write its artifacts");
  add_overrides(run);

  std::string pred, gold, schema_name = "i2b2", schema_file, report_fmt = "table";
  auto* score = app.add_subcommand("score", "Score predictions against a CoNLL gold file");
  score->add_option("--pred", pred, "predictions.jsonl or CoNLL file")->required()->check(CLI::ExistingFile);
  score->add_option("--gold", gold, "CoNLL gold file")->required()->check(CLI::ExistingFile);
  score->add_option("--schema", schema_name, "Built-in schema: i2b2 | ncbi_disease | bc2gm");
  score->add_option("--schema-file", schema_file, "Schema JSON file");
  score->add_option("--report", report_fmt, "table | markdown | json");

  auto* estimate = app.add_subcommand("estimate-cost", "Project token usage and cost without calling a model");
  add_overrides(estimate);

  std::string emb_path;
  auto* ingest = app.add_subcommand("ingest-embeddings", "Validate an embeddings file");
  ingest->add_option("--path", emb_path, "JSON Lines embeddings")->required()->check(CLI::ExistingFile);

  std::string sid;
  auto* inspect = app.add_subcommand("inspect-prompt", "Print the prompt bundle for one test sentence");
  add_overrides(inspect);
  inspect->add_option("--id", sid, "Sentence id, e.g. test-0")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_args);
    if (*score) return cmd_score(pred, gold, schema_name, schema_file, report_fmt);
    if (*estimate) return cmd_estimate(run_args);
    if (*ingest) return cmd_ingest(emb_path);
    if (*inspect) return cmd_inspect(run_args, sid);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const bioner::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
