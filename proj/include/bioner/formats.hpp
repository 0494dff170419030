#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bioner/corpus.hpp"

namespace bioner {

enum class FormatKind { tanl, dice };

std::string_view to_string(FormatKind kind);
FormatKind format_from_string(std::string_view s);

// Result of turning free-form model output back into mentions over the
// original sentence. Decoders never throw; problems land in `anomalies`.
struct DecodeReport {
  std::vector<EntityMention> mentions;
  // Fraction of original tokens recovered in the generated text.
  double alignment_ratio = 0.0;
  std::vector<std::string> anomalies;
};

// Maps surface strings back onto token spans. Matching is tried in three
// tiers, each returning the earliest start at or after the cursor that does
// not overlap a claimed span: exact token sequence, case-insensitive token
// sequence, and finally whitespace-insensitive character match (handles
// detokenized output such as "pain," for tokens "pain" ",").
class SpanAligner {
 public:
  explicit SpanAligner(std::span<const std::string> tokens);

  std::optional<std::pair<std::size_t, std::size_t>> find(std::string_view surface, std::size_t from) const;
  void claim(std::size_t start, std::size_t end);
  bool is_claimed(std::size_t index) const { return claimed_[index]; }

 private:
  bool free_range(std::size_t start, std::size_t end) const;

  std::span<const std::string> tokens_;
  std::vector<std::string> lowered_;
  std::vector<bool> claimed_;
};

// TANL: the sentence with every mention replaced by "[ <surface> | <type> ]".
std::string tanl_encode(const TokenizedSentence& sentence, std::span<const EntityMention> mentions);
DecodeReport tanl_decode(std::string_view generated, const TokenizedSentence& original, const EntitySchema& schema);

// One DICE clause: "entity type is <name>. <description>. entity is <slot>".
std::string dice_clause(const EntityType& type, std::string_view slot);
inline constexpr std::string_view kDiceEmptySlot = "<entity>";
inline constexpr std::string_view kDiceSeparator = " ; ";

// Sentence text, then one clause per schema type (in schema order) with the
// literal "<entity>" slot, each on its own line.
std::string dice_encode_input(const TokenizedSentence& sentence, const EntitySchema& schema);
// Same layout with each slot filled by that type's surfaces joined by " ; ".
std::string dice_encode_output(const TokenizedSentence& sentence, std::span<const EntityMention> mentions,
                               const EntitySchema& schema);
DecodeReport dice_decode(std::string_view generated, const TokenizedSentence& original, const EntitySchema& schema);

// Query-side encoding of an arbitrary body (the sentence text, possibly with
// an appended context block): TANL uses the body as is, DICE appends the
// empty-slot clauses.
std::string format_query(FormatKind kind, std::string_view body, const EntitySchema& schema);

std::string encode_input(FormatKind kind, const TokenizedSentence& sentence, const EntitySchema& schema);
std::string encode_output(FormatKind kind, const TokenizedSentence& sentence, std::span<const EntityMention> mentions,
                          const EntitySchema& schema);
DecodeReport decode(FormatKind kind, std::string_view generated, const TokenizedSentence& original,
                    const EntitySchema& schema);

}  // namespace bioner
