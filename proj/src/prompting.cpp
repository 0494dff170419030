#include "bioner/prompting.hpp"

#include "bioner/error.hpp"
#include "bioner/text.hpp"

namespace bioner {

std::string_view to_string(Role role) { return role == Role::user ? "user" : "assistant"; }

std::string PromptBundle::meta(const std::string& key) const {
  auto it = metadata.find(key);
  return it == metadata.end() ? std::string() : it->second;
}

nlohmann::ordered_json bundle_to_json(const PromptBundle& bundle) {
  nlohmann::ordered_json j;
  j["system"] = bundle.system_text;
  auto turns = nlohmann::ordered_json::array();
  for (const auto& t : bundle.turns) {
    nlohmann::ordered_json tj;
    tj["role"] = to_string(t.role);
    tj["text"] = t.text;
    turns.push_back(std::move(tj));
  }
  j["turns"] = std::move(turns);
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  for (const auto& [k, v] : bundle.metadata) meta[k] = v;
  j["metadata"] = std::move(meta);
  return j;
}

PromptBundle bundle_from_json(const nlohmann::json& j) {
  PromptBundle b;
  b.system_text = j.at("system").get<std::string>();
  for (const auto& t : j.at("turns")) {
    const auto role = t.at("role").get<std::string>();
    if (role != "user" && role != "assistant") throw ProtocolError("unknown role: " + role);
    b.turns.push_back({role == "user" ? Role::user : Role::assistant, t.at("text").get<std::string>()});
  }
  for (const auto& [k, v] : j.at("metadata").items()) b.metadata[k] = v.get<std::string>();
  return b;
}

std::string serialize_bundle(const PromptBundle& bundle) { return bundle_to_json(bundle).dump(); }

std::string bundle_text(const PromptBundle& bundle) {
  std::string out = bundle.system_text;
  for (const auto& t : bundle.turns) {
    out += '\n';
    out += t.text;
  }
  return out;
}

std::string default_instruction(FormatKind format, const EntitySchema& schema) {
  const std::string types = text::join(schema.type_names(), ", ");
  if (format == FormatKind::tanl) {
    return "You are a biomedical named entity recognition system. Repeat the sentence, wrapping each entity as "
           "[ mention | type ], where type is one of: " +
           types + ". Keep every other word unchanged and add no commentary.";
  }
  return "You are a biomedical named entity recognition system. Copy the sentence and its template clauses, "
         "replacing each <entity> placeholder with the mentions of that entity type found in the sentence, "
         "separated by \" ; \". Entity types: " +
         types + ". Keep <entity> when the sentence has no mention of that type and add no commentary.";
}

std::string output_format_spec(FormatKind format) {
  if (format == FormatKind::tanl) return "the sentence with every entity written as [ mention | type ]";
  return "the sentence, then one line per entity type: entity type is <type>. <description>. entity is "
         "<mentions separated by \" ; \", or <entity> if none>";
}

namespace {

void require_instruction(std::string_view instruction) {
  if (text::trim(instruction).empty()) throw ArgumentError("instruction must not be empty");
}

}  // namespace

PromptBundle build_icl_prompt(const TokenizedSentence& query, std::span<const TokenizedSentence> demos,
                              FormatKind format, const EntitySchema& schema, std::string_view instruction,
                              std::string_view strategy) {
  require_instruction(instruction);
  if (demos.empty()) throw ArgumentError("ICL prompt needs at least one demonstration");
  PromptBundle b;
  b.system_text = std::string(instruction);
  std::vector<std::string> ids;
  for (const auto& d : demos) {
    if (!d.has_gold()) throw ArgumentError("demonstration " + d.id + " has no gold labels");
    const auto mentions = mentions_from_bio(d);
    b.turns.push_back({Role::user, encode_input(format, d, schema)});
    b.turns.push_back({Role::assistant, encode_output(format, d, mentions, schema)});
    ids.push_back(d.id);
  }
  b.turns.push_back({Role::user, encode_input(format, query, schema)});
  b.metadata[meta_keys::kFormat] = std::string(to_string(format));
  b.metadata[meta_keys::kShots] = std::to_string(demos.size());
  b.metadata[meta_keys::kStrategy] = std::string(strategy);
  b.metadata[meta_keys::kDemoIds] = text::join(ids, ",");
  b.metadata[meta_keys::kQueryId] = query.id;
  b.metadata[meta_keys::kStage] = std::string(kStageNer);
  return b;
}

PromptBundle build_zero_shot_prompt_from_text(std::string_view query_id, std::string_view body, FormatKind format,
                                              const EntitySchema& schema, std::string_view instruction) {
  require_instruction(instruction);
  PromptBundle b;
  b.system_text = std::string(instruction) + "\n\nEntity types:";
  for (const auto& t : schema.types()) b.system_text += "\n- " + t.name + ": " + t.description;
  b.system_text += "\n\nOutput format: " + output_format_spec(format);
  b.turns.push_back({Role::user, format_query(format, body, schema)});
  b.metadata[meta_keys::kFormat] = std::string(to_string(format));
  b.metadata[meta_keys::kShots] = "0";
  b.metadata[meta_keys::kStrategy] = "none";
  b.metadata[meta_keys::kDemoIds] = "";
  b.metadata[meta_keys::kQueryId] = std::string(query_id);
  b.metadata[meta_keys::kStage] = std::string(kStageNer);
  return b;
}

PromptBundle build_zero_shot_prompt(const TokenizedSentence& query, FormatKind format, const EntitySchema& schema,
                                    std::string_view instruction) {
  if (format == FormatKind::dice && query.tokens.empty())
    throw PreconditionError("sentence " + query.id + " has no tokens");
  return build_zero_shot_prompt_from_text(query.id, query.text(), format, schema, instruction);
}

}  // namespace bioner
