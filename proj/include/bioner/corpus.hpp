#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bioner {

struct EntityType {
  std::string name;
  std::string description;

  bool operator==(const EntityType&) const = default;
};

// Entity-type inventory of one dataset. Type order is significant: DICE
// clauses and instruction listings follow it.
class EntitySchema {
 public:
  EntitySchema() = default;
  // Throws SchemaError unless names are unique, non-empty and lowercase and
  // every description is non-empty.
  EntitySchema(std::string dataset_name, std::vector<EntityType> types);

  const std::string& dataset_name() const noexcept { return dataset_name_; }
  const std::vector<EntityType>& types() const noexcept { return types_; }
  bool contains(std::string_view type_name) const;
  const EntityType* find(std::string_view type_name) const;
  std::vector<std::string> type_names() const;

  // Built-in schemas for i2b2, ncbi-disease and bc2gm.
  static EntitySchema i2b2();
  static EntitySchema ncbi_disease();
  static EntitySchema bc2gm();
  // Resolves a built-in name ("i2b2", "ncbi-disease", "bc2gm"); throws
  // ConfigError otherwise.
  static EntitySchema builtin(std::string_view name);
  // JSON: {"dataset_name": str, "types": [{"name": str, "description": str}]}
  static EntitySchema from_json_file(const std::filesystem::path& path);

 private:
  std::string dataset_name_;
  std::vector<EntityType> types_;
};

// [start, end) token span with a schema type.
struct EntityMention {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string entity_type;
  std::string surface;

  bool operator==(const EntityMention&) const = default;
};

struct TokenizedSentence {
  std::string id;
  std::vector<std::string> tokens;
  std::optional<std::vector<std::string>> gold_labels;

  // Tokens joined by single spaces.
  std::string text() const;
  bool has_gold() const noexcept { return gold_labels.has_value(); }
};

enum class Split { train, dev, test };
enum class RepairMode { promote, strict };

std::string_view to_string(Split split);
Split split_from_string(std::string_view s);

struct Corpus {
  EntitySchema schema;
  std::vector<TokenizedSentence> sentences;
  Split split = Split::train;

  const TokenizedSentence* find(std::string_view id) const;
};

// Builds a mention over `tokens`, filling in the surface string.
EntityMention make_mention(std::span<const std::string> tokens, std::size_t start, std::size_t end,
                           std::string entity_type);

// Parses CoNLL-style BIO text: "<token><TAB or space><label>" per line, blank
// line between sentences. Bare "B"/"I" labels are accepted for single-type
// schemas and label types are matched case-insensitively.
Corpus parse_bio_corpus(std::string_view content, const EntitySchema& schema, Split split,
                        RepairMode repair = RepairMode::promote);
Corpus load_bio_corpus(const std::filesystem::path& path, const EntitySchema& schema, Split split,
                       RepairMode repair = RepairMode::promote);

// Tab-separated CoNLL text, one blank line after every sentence.
std::string serialize_conll(const Corpus& corpus);

std::vector<EntityMention> mentions_from_bio(const TokenizedSentence& sentence);
std::vector<EntityMention> mentions_from_labels(std::span<const std::string> tokens,
                                                std::span<const std::string> labels);
std::vector<std::string> bio_from_mentions(std::span<const std::string> tokens,
                                           std::span<const EntityMention> mentions);

// True if every mention is in range, non-empty, non-overlapping, has a
// surface equal to its joined tokens, and (when `schema` is given) a known
// type.
bool mentions_consistent(std::span<const std::string> tokens, std::span<const EntityMention> mentions,
                         const EntitySchema* schema = nullptr);

}  // namespace bioner
