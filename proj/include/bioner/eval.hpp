#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bioner/corpus.hpp"

namespace bioner {

enum class ScoreLevel { mention, token };
std::string_view to_string(ScoreLevel level);

struct Counts {
  std::int64_t true_positive = 0;
  std::int64_t false_positive = 0;
  std::int64_t false_negative = 0;

  bool operator==(const Counts&) const = default;
};

struct TypeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
  Counts counts;

  bool operator==(const TypeScore&) const = default;
};

struct ScoreReport {
  ScoreLevel level = ScoreLevel::mention;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::map<std::string, TypeScore> per_type;
  Counts counts;

  bool operator==(const ScoreReport&) const = default;
};

// Zero-denominator convention: each ratio is 0 when its denominator is 0.
TypeScore score_from_counts(const Counts& counts);

using MentionsById = std::map<std::string, std::vector<EntityMention>>;
using LabelsById = std::map<std::string, std::vector<std::string>>;

// Exact (start, end, type) matching, micro-averaged. Throws AlignmentError
// when the sentence id sets differ.
ScoreReport mention_f1(const MentionsById& pred, const MentionsById& gold);

// Every non-O position is an instance; B/I prefixes are ignored. Throws
// AlignmentError on id set or length mismatches.
ScoreReport token_f1(const LabelsById& pred, const LabelsById& gold);

// Token-level score for mention predictions over sentences of known length.
ScoreReport token_f1_from_mentions(const MentionsById& pred, const MentionsById& gold,
                                   const std::map<std::string, std::size_t>& lengths);

enum class CiMethod { student_t, normal };
std::string_view to_string(CiMethod m);
CiMethod ci_method_from_string(std::string_view s);

struct AggregateReport {
  std::string metric_name;
  double mean = 0.0;
  double half_width = 0.0;
  std::size_t n_runs = 0;
  std::vector<double> values;
  CiMethod method = CiMethod::student_t;
  double confidence = 0.95;
  std::vector<std::string> warnings;
};

// mean +/- t_{(1+c)/2, n-1} * s / sqrt(n) (student_t) or z_{(1+c)/2} * s /
// sqrt(n) (normal), s being the sample standard deviation.
AggregateReport aggregate_runs(std::span<const double> values, double confidence = 0.95,
                               CiMethod method = CiMethod::student_t, std::string metric_name = "value");

// One row of a results table: a system evaluated on a dataset.
struct ResultRow {
  std::string system;
  std::string dataset;
  ScoreReport mention;
  ScoreReport token;
  std::optional<AggregateReport> mention_ci;
  std::optional<AggregateReport> token_ci;
};

enum class ReportFormat { table, json, markdown };
ReportFormat report_format_from_string(std::string_view s);

inline constexpr std::string_view kEmptyReport = "(no results)\n";

// Systems as rows, datasets as columns, one "M/T" cell (percent) each.
std::string render_report(std::span<const ResultRow> rows, ReportFormat format);
std::vector<ResultRow> rows_from_json(const nlohmann::json& j);

nlohmann::ordered_json score_to_json(const ScoreReport& report);
ScoreReport score_from_json(const nlohmann::json& j);
nlohmann::ordered_json aggregate_to_json(const AggregateReport& report);
AggregateReport aggregate_from_json(const nlohmann::json& j);

// Predictions file: JSON Lines of {sentence_id, mentions: [{start, end, type, surface}]}.
struct PredictionRecord {
  std::string sentence_id;
  std::vector<EntityMention> mentions;
};
std::string serialize_predictions(std::span<const PredictionRecord> records);
std::vector<PredictionRecord> parse_predictions(std::string_view content);
MentionsById to_map(std::span<const PredictionRecord> records);

}  // namespace bioner
