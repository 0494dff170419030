#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "bioner/corpus.hpp"
#include "bioner/eval.hpp"
#include "bioner/selection.hpp"

namespace bioner::testing {

std::filesystem::path sample_path(std::string_view name);
std::filesystem::path prices_example_path();

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(std::string_view tag = "bioner");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(std::string_view name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read(const std::filesystem::path& p);

using Rng = std::mt19937_64;

EntitySchema random_schema(Rng& rng);

std::vector<std::string> random_tokens(Rng& rng, std::size_t n);

// Non-overlapping spans with types drawn from the schema, sorted by start.
std::vector<EntityMention> random_mentions(Rng& rng, const std::vector<std::string>& tokens,
                                           const EntitySchema& schema, double density = 0.3);

struct Case {
  EntitySchema schema;
  TokenizedSentence sentence;
  std::vector<EntityMention> mentions;
};

// Random (schema, sentence, mentions). With `unique_surfaces`, every mention's
// token sequence occurs exactly once in the sentence (case-insensitively).
Case random_case(Rng& rng, bool unique_surfaces);

// Noise for decoder fuzzing: random bytes, bracket soup, or a mangled
// encoding of a real case.
std::string fuzz_string(Rng& rng, const Case& c);

// Random pool with some exact duplicate vectors so that ties occur.
EmbeddingSet random_pool(Rng& rng, std::size_t n, std::size_t dim);
std::vector<double> random_vector(Rng& rng, std::size_t dim);

// Independent brute-force oracles.
Counts oracle_mention_counts(const MentionsById& pred, const MentionsById& gold, const std::string* type = nullptr);
Counts oracle_token_counts(const MentionsById& pred, const MentionsById& gold,
                           const std::map<std::string, std::size_t>& lengths, const std::string* type = nullptr);
std::vector<std::string> oracle_knn(const EmbeddingSet& pool, const std::vector<double>& query, std::size_t k,
                                    const std::string& exclude = {});
// Transition scan over a label sequence.
std::vector<EntityMention> oracle_bio_mentions(const std::vector<std::string>& tokens,
                                               const std::vector<std::string>& labels);

}  // namespace bioner::testing
