#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace bioner {

struct EmbeddingRecord {
  std::string sentence_id;
  std::vector<double> vector;
  std::string encoder_name;
};

// Immutable set of sentence embeddings sharing one dimension and encoder.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  // Validates the invariants; throws FormatError on violations.
  explicit EmbeddingSet(std::vector<EmbeddingRecord> records);

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const std::vector<EmbeddingRecord>& records() const noexcept { return records_; }
  const EmbeddingRecord* find(std::string_view id) const;
  const std::string& encoder_name() const;

  // Records whose id satisfies `keep`, preserving order.
  template <typename Pred>
  EmbeddingSet filter(Pred keep) const {
    std::vector<EmbeddingRecord> kept;
    for (const auto& r : records_) {
      if (keep(r)) kept.push_back(r);
    }
    EmbeddingSet out(std::move(kept));
    if (out.empty()) out.dimension_ = dimension_;
    return out;
  }

 private:
  std::vector<EmbeddingRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t dimension_ = 0;
};

// JSON Lines, one {"id": str, "vector": [num...], "encoder": str} per line.
EmbeddingSet parse_embeddings(std::string_view content);
EmbeddingSet load_embeddings(const std::filesystem::path& path);
std::string serialize_embeddings(const EmbeddingSet& set);

// dot(a, b) / (|a| |b|). Throws ArgumentError on dimension mismatch and
// DomainError when either vector is all-zero.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

enum class SelectionStrategy { random, knn };
enum class DemoOrder { similarity_ascending, similarity_descending, as_retrieved };

std::string_view to_string(SelectionStrategy s);
SelectionStrategy strategy_from_string(std::string_view s);
std::string_view to_string(DemoOrder o);
DemoOrder demo_order_from_string(std::string_view s);

struct SelectionResult {
  std::vector<std::string> demo_ids;
  SelectionStrategy strategy = SelectionStrategy::random;
  std::optional<std::vector<double>> scores;
  std::vector<std::string> warnings;
};

inline constexpr std::size_t kDefaultShots = 16;

// Exhaustive cosine kNN; ties go to the lexicographically smaller id.
SelectionResult select_knn(const EmbeddingSet& pool, std::span<const double> query, int k,
                           const std::set<std::string>& exclude = {});

// k ids drawn uniformly without replacement from a SplitMix64 stream.
SelectionResult select_random(std::span<const std::string> pool_ids, int k, std::uint64_t seed);

std::vector<std::string> order_demos(const SelectionResult& result, DemoOrder policy);

// SplitMix64 (Steele, Lea, Flood 2014). Fully specified so a seed yields the
// same stream on every platform.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  // Uniform integer in [0, bound) by rejection; bound > 0.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::uint64_t state_;
};

}  // namespace bioner
