#include "bioner/formats.hpp"

#include <algorithm>
#include <cctype>

#include "bioner/error.hpp"
#include "bioner/text.hpp"

namespace bioner {

std::string_view to_string(FormatKind kind) { return kind == FormatKind::tanl ? "tanl" : "dice"; }

FormatKind format_from_string(std::string_view s) {
  std::string key = text::to_lower(s);
  if (key == "tanl") return FormatKind::tanl;
  if (key == "dice") return FormatKind::dice;
  throw ArgumentError("unknown format: " + std::string(s));
}

// ---------------------------------------------------------------------------
// SpanAligner

SpanAligner::SpanAligner(std::span<const std::string> tokens) : tokens_(tokens), claimed_(tokens.size(), false) {
  lowered_.reserve(tokens.size());
  for (const auto& t : tokens) lowered_.push_back(text::to_lower(t));
}

bool SpanAligner::free_range(std::size_t start, std::size_t end) const {
  for (std::size_t i = start; i < end; ++i) {
    if (claimed_[i]) return false;
  }
  return true;
}

void SpanAligner::claim(std::size_t start, std::size_t end) {
  for (std::size_t i = start; i < end && i < claimed_.size(); ++i) claimed_[i] = true;
}

std::optional<std::pair<std::size_t, std::size_t>> SpanAligner::find(std::string_view surface,
                                                                      std::size_t from) const {
  const auto words = text::split_ws(surface);
  const std::size_t n = tokens_.size();
  if (words.empty() || from >= n) return std::nullopt;

  if (words.size() <= n) {
    for (std::size_t i = from; i + words.size() <= n; ++i) {
      if (std::equal(words.begin(), words.end(), tokens_.begin() + static_cast<std::ptrdiff_t>(i)) &&
          free_range(i, i + words.size()))
        return std::pair{i, i + words.size()};
    }
    std::vector<std::string> lowered_words;
    for (const auto& w : words) lowered_words.push_back(text::to_lower(w));
    for (std::size_t i = from; i + words.size() <= n; ++i) {
      if (std::equal(lowered_words.begin(), lowered_words.end(), lowered_.begin() + static_cast<std::ptrdiff_t>(i)) &&
          free_range(i, i + words.size()))
        return std::pair{i, i + words.size()};
    }
  }

  std::string compact;
  for (const auto& w : words) compact += text::to_lower(w);
  for (std::size_t i = from; i < n; ++i) {
    if (claimed_[i] || lowered_[i].empty() || compact.compare(0, lowered_[i].size(), lowered_[i]) != 0) continue;
    std::size_t matched = 0;
    std::size_t j = i;
    while (j < n && !claimed_[j] && matched < compact.size() &&
           compact.compare(matched, lowered_[j].size(), lowered_[j]) == 0) {
      matched += lowered_[j].size();
      ++j;
    }
    if (matched == compact.size()) return std::pair{i, j};
  }
  return std::nullopt;
}

namespace {

// Tokens within this distance of the cursor may absorb a plain generated
// word; anything further is treated as paraphrase and skipped.
constexpr std::size_t kPlainWindow = 3;

struct PlainCursor {
  std::span<const std::string> tokens;
  std::vector<bool>& recovered;
  std::size_t cursor = 0;

  void consume(std::string_view word) {
    const std::size_t limit = std::min(tokens.size(), cursor + kPlainWindow);
    for (std::size_t p = cursor; p < limit; ++p) {
      if (tokens[p] == word) {
        recovered[p] = true;
        cursor = p + 1;
        return;
      }
    }
    for (std::size_t p = cursor; p < limit; ++p) {
      if (text::iequals(tokens[p], word)) {
        recovered[p] = true;
        cursor = p + 1;
        return;
      }
    }
  }
};

double ratio(const std::vector<bool>& recovered) {
  if (recovered.empty()) return 1.0;
  auto hit = static_cast<double>(std::count(recovered.begin(), recovered.end(), true));
  return hit / static_cast<double>(recovered.size());
}

void sort_mentions(std::vector<EntityMention>& mentions) {
  std::sort(mentions.begin(), mentions.end(),
            [](const EntityMention& a, const EntityMention& b) { return a.start < b.start; });
}

std::vector<EntityMention> checked_sorted(const TokenizedSentence& sentence, std::span<const EntityMention> mentions) {
  std::vector<EntityMention> sorted(mentions.begin(), mentions.end());
  sort_mentions(sorted);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& m = sorted[i];
    if (m.start >= m.end || m.end > sentence.tokens.size())
      throw PreconditionError("mention out of range in sentence " + sentence.id);
    if (i > 0 && sorted[i - 1].end > m.start)
      throw PreconditionError("overlapping mentions in sentence " + sentence.id);
  }
  return sorted;
}

std::string description_text(const EntityType& type) {
  std::string_view d = text::trim(type.description);
  while (!d.empty() && d.back() == '.') d.remove_suffix(1);
  return std::string(text::trim(d));
}

// A segment of TANL output: either plain text or a "[ surface | type ]" tag.
struct TanlItem {
  bool tagged = false;
  std::string body;  // plain text, or the tag surface
  std::string type;
};

std::vector<TanlItem> scan_tanl(std::string_view gen) {
  std::vector<TanlItem> items;
  std::string plain;
  std::size_t i = 0;
  while (i < gen.size()) {
    if (gen[i] == '[') {
      std::size_t close = gen.find(']', i + 1);
      std::size_t reopen = gen.find('[', i + 1);
      if (close != std::string_view::npos && (reopen == std::string_view::npos || reopen > close)) {
        std::string_view inner = gen.substr(i + 1, close - i - 1);
        std::size_t bar = inner.rfind('|');
        if (bar != std::string_view::npos) {
          if (!plain.empty()) items.push_back({false, std::move(plain), {}});
          plain.clear();
          items.push_back({true, std::string(text::trim(inner.substr(0, bar))),
                           std::string(text::trim(inner.substr(bar + 1)))});
          i = close + 1;
          continue;
        }
      }
    }
    plain += gen[i];
    ++i;
  }
  if (!plain.empty()) items.push_back({false, std::move(plain), {}});
  return items;
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '-';
}

// Case-insensitive search for `needle` starting at `from`.
std::size_t ifind(std::string_view hay, std::string_view needle, std::size_t from = 0) {
  if (needle.size() > hay.size()) return std::string_view::npos;
  for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
    if (text::iequals(hay.substr(i, needle.size()), needle)) return i;
  }
  return std::string_view::npos;
}

constexpr std::string_view kClauseMarker = "entity type is ";
constexpr std::string_view kSlotMarker = "entity is";

// Locates "entity type is <name>" followed by a non-word character.
std::size_t find_clause(std::string_view gen, std::string_view name) {
  std::size_t from = 0;
  for (;;) {
    std::size_t at = ifind(gen, kClauseMarker, from);
    if (at == std::string_view::npos) return at;
    std::size_t name_at = at + kClauseMarker.size();
    while (name_at < gen.size() && gen[name_at] == ' ') ++name_at;
    if (text::iequals(gen.substr(name_at, name.size()), name)) {
      std::size_t after = name_at + name.size();
      if (after >= gen.size() || !is_word_char(gen[after])) return at;
    }
    from = at + 1;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// TANL

std::string tanl_encode(const TokenizedSentence& sentence, std::span<const EntityMention> mentions) {
  const auto sorted = checked_sorted(sentence, mentions);
  std::vector<std::string> items;
  std::size_t next = 0;
  for (std::size_t i = 0; i < sentence.tokens.size();) {
    if (next < sorted.size() && sorted[next].start == i) {
      const auto& m = sorted[next++];
      std::span<const std::string> span(sentence.tokens.data() + m.start, m.end - m.start);
      items.push_back("[ " + text::join(span, " ") + " | " + m.entity_type + " ]");
      i = m.end;
    } else {
      items.push_back(sentence.tokens[i]);
      ++i;
    }
  }
  return text::join(items, " ");
}

DecodeReport tanl_decode(std::string_view generated, const TokenizedSentence& original, const EntitySchema& schema) {
  DecodeReport report;
  const auto& tokens = original.tokens;
  std::vector<bool> recovered(tokens.size(), false);
  SpanAligner aligner(tokens);
  PlainCursor plain{tokens, recovered};

  for (const auto& item : scan_tanl(generated)) {
    if (!item.tagged) {
      for (const auto& w : text::split_ws(item.body)) plain.consume(w);
      continue;
    }
    if (item.body.empty()) {
      report.anomalies.push_back("empty surface for type '" + item.type + "'");
      continue;
    }
    const std::string type = text::to_lower(item.type);
    const bool known = schema.contains(type);
    auto span = aligner.find(item.body, plain.cursor);
    if (span) {
      for (std::size_t p = span->first; p < span->second; ++p) recovered[p] = true;
      plain.cursor = span->second;
    }
    if (!known) {
      report.anomalies.push_back("unknown type '" + item.type + "' for '" + item.body + "'");
      continue;
    }
    if (!span) {
      report.anomalies.push_back("unmatched surface '" + item.body + "' (" + type + ")");
      continue;
    }
    aligner.claim(span->first, span->second);
    report.mentions.push_back(make_mention(tokens, span->first, span->second, type));
  }
  sort_mentions(report.mentions);
  report.alignment_ratio = ratio(recovered);
  return report;
}

// ---------------------------------------------------------------------------
// DICE

std::string dice_clause(const EntityType& type, std::string_view slot) {
  return std::string(kClauseMarker) + type.name + ". " + description_text(type) + ". " + std::string(kSlotMarker) +
         " " + std::string(slot);
}

std::string format_query(FormatKind kind, std::string_view body, const EntitySchema& schema) {
  if (kind == FormatKind::tanl) return std::string(body);
  std::string out(body);
  for (const auto& t : schema.types()) {
    out += '\n';
    out += dice_clause(t, kDiceEmptySlot);
  }
  return out;
}

std::string dice_encode_input(const TokenizedSentence& sentence, const EntitySchema& schema) {
  if (sentence.tokens.empty()) throw PreconditionError("sentence " + sentence.id + " has no tokens");
  return format_query(FormatKind::dice, sentence.text(), schema);
}

std::string dice_encode_output(const TokenizedSentence& sentence, std::span<const EntityMention> mentions,
                               const EntitySchema& schema) {
  if (sentence.tokens.empty()) throw PreconditionError("sentence " + sentence.id + " has no tokens");
  const auto sorted = checked_sorted(sentence, mentions);
  std::string out = sentence.text();
  for (const auto& t : schema.types()) {
    std::vector<std::string> surfaces;
    for (const auto& m : sorted) {
      if (m.entity_type == t.name) {
        surfaces.push_back(text::join(std::span<const std::string>(sentence.tokens).subspan(m.start, m.end - m.start), " "));
      }
    }
    out += '\n';
    out += dice_clause(t, surfaces.empty() ? std::string(kDiceEmptySlot) : text::join(surfaces, kDiceSeparator));
  }
  return out;
}

DecodeReport dice_decode(std::string_view generated, const TokenizedSentence& original, const EntitySchema& schema) {
  DecodeReport report;
  const auto& tokens = original.tokens;
  std::vector<bool> recovered(tokens.size(), false);
  SpanAligner aligner(tokens);

  // Echoed sentence text before the first clause.
  std::size_t first_clause = ifind(generated, kClauseMarker);
  PlainCursor plain{tokens, recovered};
  for (const auto& w : text::split_ws(generated.substr(0, first_clause))) plain.consume(w);

  for (const auto& type : schema.types()) {
    std::size_t at = find_clause(generated, type.name);
    if (at == std::string_view::npos) {
      report.anomalies.push_back("missing clause: " + type.name);
      continue;
    }
    std::size_t next_clause = ifind(generated, kClauseMarker, at + kClauseMarker.size());
    std::size_t slot_at = ifind(generated, kSlotMarker, at + kClauseMarker.size());
    if (slot_at == std::string_view::npos || (next_clause != std::string_view::npos && slot_at > next_clause)) {
      report.anomalies.push_back("malformed clause: " + type.name);
      continue;
    }
    slot_at += kSlotMarker.size();
    std::size_t slot_end = std::min(generated.find('\n', slot_at), next_clause);
    std::string_view slot = generated.substr(slot_at, slot_end == std::string_view::npos ? slot_end : slot_end - slot_at);

    std::size_t cursor = 0;
    for (auto piece : text::split(slot, ";")) {
      for (std::size_t p; (p = piece.find(kDiceEmptySlot)) != std::string::npos;) piece.erase(p, kDiceEmptySlot.size());
      std::string surface(text::trim(piece));
      if (surface.empty()) continue;
      auto span = aligner.find(surface, cursor);
      if (!span && (surface.back() == '.' || surface.back() == ',')) {
        surface.pop_back();
        surface = std::string(text::trim(surface));
        if (!surface.empty()) span = aligner.find(surface, cursor);
      }
      if (!span) {
        report.anomalies.push_back("unmatched surface '" + surface + "' (" + type.name + ")");
        continue;
      }
      aligner.claim(span->first, span->second);
      for (std::size_t p = span->first; p < span->second; ++p) recovered[p] = true;
      cursor = span->second;
      report.mentions.push_back(make_mention(tokens, span->first, span->second, type.name));
    }
  }
  sort_mentions(report.mentions);
  report.alignment_ratio = ratio(recovered);
  return report;
}

// ---------------------------------------------------------------------------
// Dispatch

std::string encode_input(FormatKind kind, const TokenizedSentence& sentence, const EntitySchema& schema) {
  return kind == FormatKind::tanl ? sentence.text() : dice_encode_input(sentence, schema);
}

std::string encode_output(FormatKind kind, const TokenizedSentence& sentence, std::span<const EntityMention> mentions,
                          const EntitySchema& schema) {
  return kind == FormatKind::tanl ? tanl_encode(sentence, mentions) : dice_encode_output(sentence, mentions, schema);
}

DecodeReport decode(FormatKind kind, std::string_view generated, const TokenizedSentence& original,
                    const EntitySchema& schema) {
  return kind == FormatKind::tanl ? tanl_decode(generated, original, schema)
                                  : dice_decode(generated, original, schema);
}

}  // namespace bioner
