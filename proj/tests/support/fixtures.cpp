#include "fixtures.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "bioner/formats.hpp"
#include "bioner/text.hpp"

namespace bioner::testing {

namespace fs = std::filesystem;

fs::path sample_path(std::string_view name) { return fs::path(BIONER_DATA_DIR) / "sample" / name; }
fs::path prices_example_path() { return fs::path(BIONER_DATA_DIR) / "prices_example.json"; }

TempDir::TempDir(std::string_view tag) {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = fs::temp_directory_path() /
          (std::string(tag) + "-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read(const fs::path& p) { return text::read_file(p); }

namespace {

const std::vector<std::string> kVocab = {
    "the",  "patient", "was",   "given", "chest", "pain", "fever",   "x-ray", "CT",   "scan", "of",
    "and",  "with",    "no",    "signs", "He",    "She",  "denies",  "took",  "mg",   "2",    "10.5",
    "(",    ")",       ",",     ".",     ":",     "-",    "a",       "A",     "PAIN", "Fever", "type",
    "is",   "entity",  "<",     ">",     "/",     "%",    "IL-2",    "p53",   "b",    "c",    "d"};

std::string random_word(Rng& rng, std::size_t min_len, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<int> ch('a', 'z');
  std::string w(len(rng), 'a');
  for (auto& c : w) c = static_cast<char>(ch(rng));
  return w;
}

bool same_ci(const std::vector<std::string>& tokens, std::size_t at, const std::vector<std::string>& needle) {
  for (std::size_t i = 0; i < needle.size(); ++i) {
    if (text::to_lower(tokens[at + i]) != text::to_lower(needle[i])) return false;
  }
  return true;
}

}  // namespace

EntitySchema random_schema(Rng& rng) {
  std::uniform_int_distribution<int> n_types(1, 4);
  const int n = n_types(rng);
  std::set<std::string> names;
  std::vector<EntityType> types;
  while (static_cast<int>(types.size()) < n) {
    std::string name = random_word(rng, 2, 9);
    if (!names.insert(name).second) continue;
    std::string desc = random_word(rng, 3, 8) + " " + random_word(rng, 2, 6) + " " + random_word(rng, 2, 10);
    types.push_back({name, desc});
  }
  return EntitySchema("random", std::move(types));
}

std::vector<std::string> random_tokens(Rng& rng, std::size_t n) {
  std::uniform_int_distribution<std::size_t> pick(0, kVocab.size() - 1);
  std::bernoulli_distribution fresh(0.3);
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(fresh(rng) ? random_word(rng, 1, 7) : kVocab[pick(rng)]);
  return out;
}

std::vector<EntityMention> random_mentions(Rng& rng, const std::vector<std::string>& tokens,
                                           const EntitySchema& schema, double density) {
  std::bernoulli_distribution start_here(density);
  std::uniform_int_distribution<std::size_t> len(1, 3);
  std::uniform_int_distribution<std::size_t> type(0, schema.types().size() - 1);
  std::vector<EntityMention> out;
  std::size_t i = 0;
  while (i < tokens.size()) {
    if (!start_here(rng)) {
      ++i;
      continue;
    }
    const std::size_t end = std::min(tokens.size(), i + len(rng));
    EntityMention m;
    m.start = i;
    m.end = end;
    m.entity_type = schema.types()[type(rng)].name;
    for (std::size_t t = i; t < end; ++t) m.surface += (t > i ? " " : "") + tokens[t];
    out.push_back(std::move(m));
    i = end;
  }
  return out;
}

Case random_case(Rng& rng, bool unique_surfaces) {
  std::uniform_int_distribution<std::size_t> n_tokens(1, 25);
  for (;;) {
    Case c;
    c.schema = random_schema(rng);
    c.sentence.id = "s";
    c.sentence.tokens = random_tokens(rng, n_tokens(rng));
    c.mentions = random_mentions(rng, c.sentence.tokens, c.schema);
    if (!unique_surfaces) return c;
    bool ok = true;
    for (const auto& m : c.mentions) {
      const std::vector<std::string> needle(c.sentence.tokens.begin() + static_cast<std::ptrdiff_t>(m.start),
                                            c.sentence.tokens.begin() + static_cast<std::ptrdiff_t>(m.end));
      std::size_t hits = 0;
      for (std::size_t at = 0; at + needle.size() <= c.sentence.tokens.size(); ++at) {
        if (same_ci(c.sentence.tokens, at, needle)) ++hits;
      }
      if (hits != 1) ok = false;
    }
    if (ok) return c;
  }
}

std::string fuzz_string(Rng& rng, const Case& c) {
  std::uniform_int_distribution<int> kind(0, 3);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_int_distribution<std::size_t> len(0, 200);
  switch (kind(rng)) {
    case 0: {
      std::string s(len(rng), '\0');
      for (auto& ch : s) ch = static_cast<char>(byte(rng));
      return s;
    }
    case 1: {
      static const std::vector<std::string> parts = {"[", "]", "|", " ", ";", "<entity>", "entity type is ",
                                                     ". ", "entity is ", "\n", "[ ", " | ", " ]"};
      std::string s;
      const std::size_t n = len(rng) / 4;
      std::uniform_int_distribution<std::size_t> pick(0, parts.size() - 1);
      std::uniform_int_distribution<std::size_t> tok(0, c.sentence.tokens.size() - 1);
      std::uniform_int_distribution<std::size_t> ty(0, c.schema.types().size() - 1);
      std::bernoulli_distribution word(0.4);
      for (std::size_t i = 0; i < n; ++i) {
        if (word(rng)) {
          s += rng() % 2 ? c.sentence.tokens[tok(rng)] : c.schema.types()[ty(rng)].name;
        } else {
          s += parts[pick(rng)];
        }
      }
      return s;
    }
    default: {
      const FormatKind f = kind(rng) == 2 ? FormatKind::tanl : FormatKind::dice;
      std::string s = encode_output(f, c.sentence, c.mentions, c.schema);
      // Truncate, then flip or delete a few bytes.
      if (!s.empty()) s.resize(std::uniform_int_distribution<std::size_t>(0, s.size())(rng));
      std::uniform_int_distribution<int> edits(0, 4);
      for (int e = edits(rng); e > 0 && !s.empty(); --e) {
        const std::size_t at = std::uniform_int_distribution<std::size_t>(0, s.size() - 1)(rng);
        if (rng() % 2) {
          s.erase(at, 1);
        } else {
          s[at] = "[]|;<> x"[rng() % 8];
        }
      }
      return s;
    }
  }
}

std::vector<double> random_vector(Rng& rng, std::size_t dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(dim);
  do {
    for (auto& x : v) x = g(rng);
  } while (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }));
  return v;
}

EmbeddingSet random_pool(Rng& rng, std::size_t n, std::size_t dim) {
  std::vector<EmbeddingRecord> records;
  std::bernoulli_distribution dup(0.15);
  for (std::size_t i = 0; i < n; ++i) {
    EmbeddingRecord r;
    // Scrambled ids: lexicographic order differs from insertion order.
    r.sentence_id = "p" + std::to_string((i * 7919) % 1000003);
    r.encoder_name = "rand";
    if (!records.empty() && dup(rng)) {
      r.vector = records[std::uniform_int_distribution<std::size_t>(0, records.size() - 1)(rng)].vector;
    } else {
      r.vector = random_vector(rng, dim);
    }
    records.push_back(std::move(r));
  }
  return EmbeddingSet(std::move(records));
}

// ---------------------------------------------------------------------------
// Oracles

namespace {

std::set<std::tuple<std::size_t, std::size_t, std::string>> as_set(const std::vector<EntityMention>& ms,
                                                                   const std::string* type) {
  std::set<std::tuple<std::size_t, std::size_t, std::string>> out;
  for (const auto& m : ms) {
    if (!type || m.entity_type == *type) out.emplace(m.start, m.end, m.entity_type);
  }
  return out;
}

const std::vector<EntityMention>& get_or_empty(const MentionsById& m, const std::string& id) {
  static const std::vector<EntityMention> empty;
  auto it = m.find(id);
  return it == m.end() ? empty : it->second;
}

}  // namespace

Counts oracle_mention_counts(const MentionsById& pred, const MentionsById& gold, const std::string* type) {
  Counts c;
  std::set<std::string> ids;
  for (const auto& [id, _] : pred) ids.insert(id);
  for (const auto& [id, _] : gold) ids.insert(id);
  for (const auto& id : ids) {
    const auto p = as_set(get_or_empty(pred, id), type);
    const auto g = as_set(get_or_empty(gold, id), type);
    for (const auto& x : p) {
      if (g.count(x)) {
        ++c.true_positive;
      } else {
        ++c.false_positive;
      }
    }
    for (const auto& x : g) {
      if (!p.count(x)) ++c.false_negative;
    }
  }
  return c;
}

Counts oracle_token_counts(const MentionsById& pred, const MentionsById& gold,
                           const std::map<std::string, std::size_t>& lengths, const std::string* type) {
  Counts c;
  for (const auto& [id, n] : lengths) {
    std::vector<std::string> p(n), g(n);
    for (const auto& m : get_or_empty(pred, id)) {
      for (std::size_t i = m.start; i < m.end; ++i) p[i] = m.entity_type;
    }
    for (const auto& m : get_or_empty(gold, id)) {
      for (std::size_t i = m.start; i < m.end; ++i) g[i] = m.entity_type;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const bool pm = !p[i].empty() && (!type || p[i] == *type);
      const bool gm = !g[i].empty() && (!type || g[i] == *type);
      if (pm && gm && p[i] == g[i]) {
        ++c.true_positive;
        continue;
      }
      if (pm) ++c.false_positive;
      if (gm) ++c.false_negative;
    }
  }
  return c;
}

std::vector<std::string> oracle_knn(const EmbeddingSet& pool, const std::vector<double>& query, std::size_t k,
                                    const std::string& exclude) {
  std::vector<std::pair<long double, std::string>> all;
  for (const auto& r : pool.records()) {
    if (r.sentence_id == exclude) continue;
    long double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < query.size(); ++i) {
      dot += static_cast<long double>(query[i]) * r.vector[i];
      na += static_cast<long double>(query[i]) * query[i];
      nb += static_cast<long double>(r.vector[i]) * r.vector[i];
    }
    all.emplace_back(dot / std::sqrt(na * nb), r.sentence_id);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
  return out;
}

std::vector<EntityMention> oracle_bio_mentions(const std::vector<std::string>& tokens,
                                               const std::vector<std::string>& labels) {
  std::vector<EntityMention> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].rfind("B-", 0) != 0) continue;
    const std::string type = labels[i].substr(2);
    std::size_t j = i + 1;
    while (j < labels.size() && labels[j] == "I-" + type) ++j;
    EntityMention m{i, j, type, ""};
    for (std::size_t t = i; t < j; ++t) m.surface += (t > i ? " " : "") + tokens[t];
    out.push_back(m);
  }
  return out;
}

}  // namespace bioner::testing
