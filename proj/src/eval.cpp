#include "bioner/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <tuple>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "bioner/error.hpp"
#include "bioner/text.hpp"

namespace bioner {

std::string_view to_string(ScoreLevel level) { return level == ScoreLevel::mention ? "mention" : "token"; }

TypeScore score_from_counts(const Counts& c) {
  TypeScore s;
  s.counts = c;
  s.support = c.true_positive + c.false_negative;
  const auto predicted = c.true_positive + c.false_positive;
  s.precision = predicted > 0 ? static_cast<double>(c.true_positive) / static_cast<double>(predicted) : 0.0;
  s.recall = s.support > 0 ? static_cast<double>(c.true_positive) / static_cast<double>(s.support) : 0.0;
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

namespace {

template <typename A, typename B>
void require_same_ids(const std::map<std::string, A>& pred, const std::map<std::string, B>& gold) {
  for (const auto& [id, _] : pred) {
    if (gold.find(id) == gold.end()) throw AlignmentError("prediction for unknown sentence " + id);
  }
  for (const auto& [id, _] : gold) {
    if (pred.find(id) == pred.end()) throw AlignmentError("no prediction for sentence " + id);
  }
}

ScoreReport finish(ScoreLevel level, const std::map<std::string, Counts>& per_type) {
  ScoreReport r;
  r.level = level;
  for (const auto& [type, c] : per_type) {
    r.per_type[type] = score_from_counts(c);
    r.counts.true_positive += c.true_positive;
    r.counts.false_positive += c.false_positive;
    r.counts.false_negative += c.false_negative;
  }
  const auto total = score_from_counts(r.counts);
  r.precision = total.precision;
  r.recall = total.recall;
  r.f1 = total.f1;
  return r;
}

std::string label_type(const std::string& label, const std::string& id) {
  if (label == "O") return {};
  if (label.size() < 3 || label[1] != '-' || (label[0] != 'B' && label[0] != 'I'))
    throw ArgumentError("invalid BIO label '" + label + "' in sentence " + id);
  return label.substr(2);
}

}  // namespace

ScoreReport mention_f1(const MentionsById& pred, const MentionsById& gold) {
  require_same_ids(pred, gold);
  using Key = std::tuple<std::size_t, std::size_t, std::string>;
  std::map<std::string, Counts> per_type;
  for (const auto& [id, gold_mentions] : gold) {
    std::set<Key> g;
    for (const auto& m : gold_mentions) g.emplace(m.start, m.end, m.entity_type);
    std::set<Key> p;
    for (const auto& m : pred.at(id)) p.emplace(m.start, m.end, m.entity_type);
    for (const auto& k : p) {
      auto& c = per_type[std::get<2>(k)];
      if (g.count(k) != 0) {
        ++c.true_positive;
      } else {
        ++c.false_positive;
      }
    }
    for (const auto& k : g) {
      if (p.count(k) == 0) ++per_type[std::get<2>(k)].false_negative;
    }
  }
  return finish(ScoreLevel::mention, per_type);
}

ScoreReport token_f1(const LabelsById& pred, const LabelsById& gold) {
  require_same_ids(pred, gold);
  std::map<std::string, Counts> per_type;
  for (const auto& [id, gold_labels] : gold) {
    const auto& pred_labels = pred.at(id);
    if (pred_labels.size() != gold_labels.size())
      throw AlignmentError("sentence " + id + ": " + std::to_string(pred_labels.size()) + " predicted labels vs " +
                           std::to_string(gold_labels.size()) + " gold labels");
    for (std::size_t i = 0; i < gold_labels.size(); ++i) {
      const std::string g = label_type(gold_labels[i], id);
      const std::string p = label_type(pred_labels[i], id);
      if (!g.empty() && g == p) {
        ++per_type[g].true_positive;
        continue;
      }
      if (!p.empty()) ++per_type[p].false_positive;
      if (!g.empty()) ++per_type[g].false_negative;
    }
  }
  return finish(ScoreLevel::token, per_type);
}

ScoreReport token_f1_from_mentions(const MentionsById& pred, const MentionsById& gold,
                                   const std::map<std::string, std::size_t>& lengths) {
  require_same_ids(pred, gold);
  LabelsById p;
  LabelsById g;
  for (const auto& [id, gm] : gold) {
    auto it = lengths.find(id);
    if (it == lengths.end()) throw AlignmentError("no token count for sentence " + id);
    const std::vector<std::string> tokens(it->second);
    g[id] = bio_from_mentions(tokens, gm);
    p[id] = bio_from_mentions(tokens, pred.at(id));
  }
  return token_f1(p, g);
}

// ---------------------------------------------------------------------------
// Aggregation

std::string_view to_string(CiMethod m) { return m == CiMethod::student_t ? "student_t" : "normal"; }

CiMethod ci_method_from_string(std::string_view s) {
  if (s == "student_t") return CiMethod::student_t;
  if (s == "normal") return CiMethod::normal;
  throw ArgumentError("unknown CI method: " + std::string(s));
}

AggregateReport aggregate_runs(std::span<const double> values, double confidence, CiMethod method,
                               std::string metric_name) {
  if (values.empty()) throw ArgumentError("aggregate_runs needs at least one value");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ArgumentError("confidence must lie in (0, 1)");
  AggregateReport r;
  r.metric_name = std::move(metric_name);
  r.values.assign(values.begin(), values.end());
  r.n_runs = values.size();
  r.method = method;
  r.confidence = confidence;

  // Summing in sorted order makes the mean independent of input order.
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  r.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
  if (sorted.size() == 1) {
    r.warnings.push_back("single run: interval half-width set to 0");
    return r;
  }
  double ss = 0.0;
  for (double v : sorted) ss += (v - r.mean) * (v - r.mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const double p = 0.5 + confidence / 2.0;
  double q;
  if (method == CiMethod::student_t) {
    q = boost::math::quantile(boost::math::students_t_distribution<double>(n - 1.0), p);
  } else {
    q = boost::math::quantile(boost::math::normal_distribution<double>(), p);
  }
  r.half_width = q * sd / std::sqrt(n);
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::ordered_json score_to_json(const ScoreReport& r) {
  nlohmann::ordered_json j;
  j["level"] = to_string(r.level);
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["counts"] = {{"true_positive", r.counts.true_positive},
                 {"false_positive", r.counts.false_positive},
                 {"false_negative", r.counts.false_negative}};
  nlohmann::ordered_json types = nlohmann::ordered_json::object();
  for (const auto& [name, s] : r.per_type) {
    types[name] = {{"precision", s.precision},
                   {"recall", s.recall},
                   {"f1", s.f1},
                   {"support", s.support},
                   {"true_positive", s.counts.true_positive},
                   {"false_positive", s.counts.false_positive},
                   {"false_negative", s.counts.false_negative}};
  }
  j["per_type"] = std::move(types);
  return j;
}

ScoreReport score_from_json(const nlohmann::json& j) {
  ScoreReport r;
  r.level = j.at("level").get<std::string>() == "token" ? ScoreLevel::token : ScoreLevel::mention;
  r.precision = j.at("precision").get<double>();
  r.recall = j.at("recall").get<double>();
  r.f1 = j.at("f1").get<double>();
  const auto& c = j.at("counts");
  r.counts = {c.at("true_positive").get<std::int64_t>(), c.at("false_positive").get<std::int64_t>(),
              c.at("false_negative").get<std::int64_t>()};
  for (const auto& [name, s] : j.at("per_type").items()) {
    TypeScore t;
    t.precision = s.at("precision").get<double>();
    t.recall = s.at("recall").get<double>();
    t.f1 = s.at("f1").get<double>();
    t.support = s.at("support").get<std::int64_t>();
    t.counts = {s.at("true_positive").get<std::int64_t>(), s.at("false_positive").get<std::int64_t>(),
                s.at("false_negative").get<std::int64_t>()};
    r.per_type[name] = t;
  }
  return r;
}

nlohmann::ordered_json aggregate_to_json(const AggregateReport& r) {
  nlohmann::ordered_json j;
  j["metric"] = r.metric_name;
  j["mean"] = r.mean;
  j["half_width"] = r.half_width;
  j["n_runs"] = r.n_runs;
  j["method"] = to_string(r.method);
  j["confidence"] = r.confidence;
  j["values"] = r.values;
  if (!r.warnings.empty()) j["warnings"] = r.warnings;
  return j;
}

AggregateReport aggregate_from_json(const nlohmann::json& j) {
  AggregateReport r;
  r.metric_name = j.at("metric").get<std::string>();
  r.mean = j.at("mean").get<double>();
  r.half_width = j.at("half_width").get<double>();
  r.n_runs = j.at("n_runs").get<std::size_t>();
  r.method = ci_method_from_string(j.at("method").get<std::string>());
  r.confidence = j.at("confidence").get<double>();
  r.values = j.at("values").get<std::vector<double>>();
  if (j.contains("warnings")) r.warnings = j["warnings"].get<std::vector<std::string>>();
  return r;
}

// ---------------------------------------------------------------------------
// Rendering

ReportFormat report_format_from_string(std::string_view s) {
  if (s == "table") return ReportFormat::table;
  if (s == "json") return ReportFormat::json;
  if (s == "markdown") return ReportFormat::markdown;
  throw ArgumentError("unknown report format: " + std::string(s));
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

std::string cell(const ResultRow& row) {
  if (row.mention_ci && row.token_ci) {
    return pct(row.mention_ci->mean) + " ± " + pct(row.mention_ci->half_width) + " / " + pct(row.token_ci->mean) +
           " ± " + pct(row.token_ci->half_width);
  }
  return pct(row.mention.f1) + "/" + pct(row.token.f1);
}

struct Grid {
  std::vector<std::string> systems;
  std::vector<std::string> datasets;
  std::map<std::pair<std::string, std::string>, std::string> cells;
};

Grid build_grid(std::span<const ResultRow> rows) {
  Grid g;
  for (const auto& r : rows) {
    if (std::find(g.systems.begin(), g.systems.end(), r.system) == g.systems.end()) g.systems.push_back(r.system);
    if (std::find(g.datasets.begin(), g.datasets.end(), r.dataset) == g.datasets.end())
      g.datasets.push_back(r.dataset);
    g.cells[{r.system, r.dataset}] = cell(r);
  }
  return g;
}

std::string pad(const std::string& s, std::size_t width) {
  const std::size_t len = text::utf8_length(s);
  return len >= width ? s : s + std::string(width - len, ' ');
}

}  // namespace

std::string render_report(std::span<const ResultRow> rows, ReportFormat format) {
  if (rows.empty()) return std::string(kEmptyReport);

  if (format == ReportFormat::json) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
      nlohmann::ordered_json j;
      j["system"] = r.system;
      j["dataset"] = r.dataset;
      j["mention"] = score_to_json(r.mention);
      j["token"] = score_to_json(r.token);
      if (r.mention_ci) j["mention_ci"] = aggregate_to_json(*r.mention_ci);
      if (r.token_ci) j["token_ci"] = aggregate_to_json(*r.token_ci);
      arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
  }

  const Grid g = build_grid(rows);
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header{"system"};
  std::vector<std::string> sub{""};
  for (const auto& d : g.datasets) {
    header.push_back(d);
    sub.push_back("M/T");
  }
  table.push_back(header);
  table.push_back(sub);
  for (const auto& s : g.systems) {
    std::vector<std::string> line{s};
    for (const auto& d : g.datasets) {
      auto it = g.cells.find({s, d});
      line.push_back(it == g.cells.end() ? "-" : it->second);
    }
    table.push_back(std::move(line));
  }

  std::string out;
  if (format == ReportFormat::markdown) {
    auto emit = [&](const std::vector<std::string>& cells) {
      out += "|";
      for (const auto& c : cells) out += " " + c + " |";
      out += "\n";
    };
    emit(table[0]);
    out += "|";
    for (std::size_t i = 0; i < table[0].size(); ++i) out += " --- |";
    out += "\n";
    for (std::size_t r = 1; r < table.size(); ++r) emit(table[r]);
    return out;
  }

  std::vector<std::size_t> widths(table[0].size(), 0);
  for (const auto& line : table) {
    for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], text::utf8_length(line[c]));
  }
  for (std::size_t r = 0; r < table.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < table[r].size(); ++c) {
      if (c > 0) line += "  ";
      line += pad(table[r][c], widths[c]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
    if (r == 1) {
      std::size_t total = 0;
      for (auto w : widths) total += w;
      out += std::string(total + 2 * (widths.size() - 1), '-') + "\n";
    }
  }
  return out;
}

std::vector<ResultRow> rows_from_json(const nlohmann::json& j) {
  std::vector<ResultRow> rows;
  for (const auto& r : j) {
    ResultRow row;
    row.system = r.at("system").get<std::string>();
    row.dataset = r.at("dataset").get<std::string>();
    row.mention = score_from_json(r.at("mention"));
    row.token = score_from_json(r.at("token"));
    if (r.contains("mention_ci")) row.mention_ci = aggregate_from_json(r["mention_ci"]);
    if (r.contains("token_ci")) row.token_ci = aggregate_from_json(r["token_ci"]);
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Predictions file

std::string serialize_predictions(std::span<const PredictionRecord> records) {
  std::string out;
  for (const auto& rec : records) {
    nlohmann::ordered_json j;
    j["sentence_id"] = rec.sentence_id;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& m : rec.mentions) {
      nlohmann::ordered_json mj;
      mj["start"] = m.start;
      mj["end"] = m.end;
      mj["type"] = m.entity_type;
      mj["surface"] = m.surface;
      arr.push_back(std::move(mj));
    }
    j["mentions"] = std::move(arr);
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<PredictionRecord> parse_predictions(std::string_view content) {
  std::vector<PredictionRecord> out;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  for (const auto& raw : text::split(content, "\n")) {
    ++line_no;
    if (text::trim(raw).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(raw);
      PredictionRecord rec;
      rec.sentence_id = j.at("sentence_id").get<std::string>();
      for (const auto& m : j.at("mentions")) {
        EntityMention em;
        em.start = m.at("start").get<std::size_t>();
        em.end = m.at("end").get<std::size_t>();
        em.entity_type = m.at("type").get<std::string>();
        em.surface = m.value("surface", "");
        if (em.start >= em.end) throw FormatError("empty or inverted span", line_no);
        rec.mentions.push_back(std::move(em));
      }
      if (!seen.insert(rec.sentence_id).second) throw FormatError("duplicate sentence_id " + rec.sentence_id, line_no);
      out.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("predictions: ") + e.what(), line_no);
    }
  }
  return out;
}

MentionsById to_map(std::span<const PredictionRecord> records) {
  MentionsById m;
  for (const auto& r : records) m[r.sentence_id] = r.mentions;
  return m;
}

}  // namespace bioner
