#include "bioner/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "bioner/error.hpp"
#include "bioner/text.hpp"

namespace bioner {

EmbeddingSet::EmbeddingSet(std::vector<EmbeddingRecord> records) : records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    const std::size_t line = i + 1;
    if (r.vector.empty()) throw FormatError("empty vector for id " + r.sentence_id, line);
    if (i == 0) {
      dimension_ = r.vector.size();
    } else {
      if (r.vector.size() != dimension_)
        throw FormatError("dimension " + std::to_string(r.vector.size()) + " != " + std::to_string(dimension_) +
                              " for id " + r.sentence_id,
                          line);
      if (r.encoder_name != records_.front().encoder_name)
        throw FormatError("encoder '" + r.encoder_name + "' differs from '" + records_.front().encoder_name + "'",
                          line);
    }
    if (std::all_of(r.vector.begin(), r.vector.end(), [](double v) { return v == 0.0; }))
      throw FormatError("all-zero vector for id " + r.sentence_id, line);
    if (!std::all_of(r.vector.begin(), r.vector.end(), [](double v) { return std::isfinite(v); }))
      throw FormatError("non-finite component for id " + r.sentence_id, line);
    if (!index_.emplace(r.sentence_id, i).second) throw FormatError("duplicate id " + r.sentence_id, line);
  }
}

const EmbeddingRecord* EmbeddingSet::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &records_[it->second];
}

const std::string& EmbeddingSet::encoder_name() const {
  static const std::string none;
  return records_.empty() ? none : records_.front().encoder_name;
}

EmbeddingSet parse_embeddings(std::string_view content) {
  std::vector<EmbeddingRecord> records;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  std::size_t first_line = 0;
  std::unordered_set<std::string> seen;
  for (const auto& raw : text::split(content, "\n")) {
    ++line_no;
    if (text::trim(raw).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("vector") ||
        !j["vector"].is_array())
      throw FormatError("expected object with string id and array vector", line_no);
    EmbeddingRecord r;
    r.sentence_id = j["id"].get<std::string>();
    r.encoder_name = j.contains("encoder") && j["encoder"].is_string() ? j["encoder"].get<std::string>() : "";
    for (const auto& v : j["vector"]) {
      if (!v.is_number()) throw FormatError("non-numeric vector component for id " + r.sentence_id, line_no);
      r.vector.push_back(v.get<double>());
    }
    // Report file line numbers rather than record ordinals.
    if (records.empty()) {
      dim = r.vector.size();
      first_line = line_no;
    } else if (r.vector.size() != dim) {
      throw FormatError("dimension " + std::to_string(r.vector.size()) + " != " + std::to_string(dim) +
                            " (set by line " + std::to_string(first_line) + ")",
                        line_no);
    }
    if (!seen.insert(r.sentence_id).second) throw FormatError("duplicate id " + r.sentence_id, line_no);
    if (std::all_of(r.vector.begin(), r.vector.end(), [](double v) { return v == 0.0; }))
      throw FormatError("all-zero vector for id " + r.sentence_id, line_no);
    records.push_back(std::move(r));
  }
  return EmbeddingSet(std::move(records));
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) { return parse_embeddings(text::read_file(path)); }

std::string serialize_embeddings(const EmbeddingSet& set) {
  std::string out;
  for (const auto& r : set.records()) {
    nlohmann::ordered_json j;
    j["id"] = r.sentence_id;
    j["vector"] = r.vector;
    j["encoder"] = r.encoder_name;
    out += j.dump();
    out += '\n';
  }
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ArgumentError("dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw DomainError("cosine similarity of a zero vector");
  double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

std::string_view to_string(SelectionStrategy s) { return s == SelectionStrategy::knn ? "knn" : "random"; }

SelectionStrategy strategy_from_string(std::string_view s) {
  if (s == "knn") return SelectionStrategy::knn;
  if (s == "random") return SelectionStrategy::random;
  throw ArgumentError("unknown selection strategy: " + std::string(s));
}

std::string_view to_string(DemoOrder o) {
  switch (o) {
    case DemoOrder::similarity_ascending: return "similarity_ascending";
    case DemoOrder::similarity_descending: return "similarity_descending";
    case DemoOrder::as_retrieved: return "as_retrieved";
  }
  return "as_retrieved";
}

DemoOrder demo_order_from_string(std::string_view s) {
  if (s == "similarity_ascending") return DemoOrder::similarity_ascending;
  if (s == "similarity_descending") return DemoOrder::similarity_descending;
  if (s == "as_retrieved") return DemoOrder::as_retrieved;
  throw ArgumentError("unknown demo order: " + std::string(s));
}

SelectionResult select_knn(const EmbeddingSet& pool, std::span<const double> query, int k,
                           const std::set<std::string>& exclude) {
  if (k <= 0) throw ArgumentError("k must be positive, got " + std::to_string(k));
  if (!pool.empty() && query.size() != pool.dimension())
    throw ArgumentError("query dimension " + std::to_string(query.size()) + " != pool dimension " +
                        std::to_string(pool.dimension()));

  struct Scored {
    double score;
    const std::string* id;
  };
  std::vector<Scored> scored;
  scored.reserve(pool.size());
  for (const auto& r : pool.records()) {
    if (exclude.count(r.sentence_id) != 0) continue;
    scored.push_back({cosine_similarity(query, r.vector), &r.sentence_id});
  }

  SelectionResult result;
  result.strategy = SelectionStrategy::knn;
  result.scores.emplace();
  if (scored.empty()) {
    result.warnings.push_back("empty candidate pool");
    return result;
  }
  const auto better = [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return *a.id < *b.id;
  };
  const std::size_t take = std::min(scored.size(), static_cast<std::size_t>(k));
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), better);
  for (std::size_t i = 0; i < take; ++i) {
    result.demo_ids.push_back(*scored[i].id);
    result.scores->push_back(scored[i].score);
  }
  if (take < static_cast<std::size_t>(k))
    result.warnings.push_back("pool has " + std::to_string(take) + " candidates, fewer than k=" + std::to_string(k));
  return result;
}

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t SplitMix64::below(std::uint64_t bound) {
  // Reject the top partial bucket so every residue is equally likely.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  for (;;) {
    std::uint64_t v = next();
    if (v < limit) return v % bound;
  }
}

SelectionResult select_random(std::span<const std::string> pool_ids, int k, std::uint64_t seed) {
  if (k <= 0) throw ArgumentError("k must be positive, got " + std::to_string(k));
  SelectionResult result;
  result.strategy = SelectionStrategy::random;
  std::size_t take = static_cast<std::size_t>(k);
  if (take > pool_ids.size()) {
    result.warnings.push_back("k=" + std::to_string(k) + " clamped to pool size " + std::to_string(pool_ids.size()));
    take = pool_ids.size();
  }
  // Partial Fisher-Yates over positions.
  std::vector<std::size_t> pos(pool_ids.size());
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < take; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(pos.size() - i));
    std::swap(pos[i], pos[j]);
    result.demo_ids.push_back(pool_ids[pos[i]]);
  }
  return result;
}

std::vector<std::string> order_demos(const SelectionResult& result, DemoOrder policy) {
  if (policy == DemoOrder::as_retrieved) return result.demo_ids;
  if (result.strategy != SelectionStrategy::knn || !result.scores)
    throw ArgumentError("similarity ordering needs knn scores");
  const auto& scores = *result.scores;
  std::vector<std::size_t> idx(result.demo_ids.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return policy == DemoOrder::similarity_ascending ? scores[a] < scores[b] : scores[a] > scores[b];
  });
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(result.demo_ids[i]);
  return out;
}

}  // namespace bioner
