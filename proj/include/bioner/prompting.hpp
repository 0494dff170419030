#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bioner/corpus.hpp"
#include "bioner/formats.hpp"

namespace bioner {

enum class Role { user, assistant };

std::string_view to_string(Role role);

struct ChatTurn {
  Role role = Role::user;
  std::string text;

  bool operator==(const ChatTurn&) const = default;
};

// A chat prompt: instruction, alternating user/assistant turns ending with
// the query, and bookkeeping metadata (format, k, strategy, demo and query
// ids, pipeline stage).
struct PromptBundle {
  std::string system_text;
  std::vector<ChatTurn> turns;
  std::map<std::string, std::string> metadata;

  bool operator==(const PromptBundle&) const = default;
  const std::string& query_text() const { return turns.back().text; }
  std::string meta(const std::string& key) const;
};

namespace meta_keys {
inline constexpr const char* kFormat = "format";
inline constexpr const char* kShots = "k";
inline constexpr const char* kStrategy = "strategy";
inline constexpr const char* kDemoIds = "demo_ids";
inline constexpr const char* kQueryId = "query_id";
inline constexpr const char* kStage = "stage";
}  // namespace meta_keys

inline constexpr std::string_view kStageNer = "ner";
inline constexpr std::string_view kStageCandidates = "candidates";

// Canonical JSON (fixed key order, compact). Digests are taken over this.
nlohmann::ordered_json bundle_to_json(const PromptBundle& bundle);
PromptBundle bundle_from_json(const nlohmann::json& j);
std::string serialize_bundle(const PromptBundle& bundle);

// Everything the model reads, for token counting: system text and turn texts
// joined by newlines.
std::string bundle_text(const PromptBundle& bundle);

// Artifact-authored instruction presets.
std::string default_instruction(FormatKind format, const EntitySchema& schema);
std::string output_format_spec(FormatKind format);

// Demonstrations are rendered as (user: encoded input, assistant: encoded
// gold output) pairs in the order given. `strategy` is recorded in metadata.
PromptBundle build_icl_prompt(const TokenizedSentence& query, std::span<const TokenizedSentence> demos,
                              FormatKind format, const EntitySchema& schema, std::string_view instruction,
                              std::string_view strategy = "unspecified");

// Zero-shot prompt; the system text extends `instruction` with the type
// inventory and the output-format description.
PromptBundle build_zero_shot_prompt(const TokenizedSentence& query, FormatKind format, const EntitySchema& schema,
                                    std::string_view instruction);
// Same, over an already-prepared query body (e.g. sentence text with an
// appended definitions block).
PromptBundle build_zero_shot_prompt_from_text(std::string_view query_id, std::string_view body, FormatKind format,
                                              const EntitySchema& schema, std::string_view instruction);

}  // namespace bioner
