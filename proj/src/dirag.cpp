#include "bioner/dirag.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "bioner/prompting.hpp"
#include "bioner/text.hpp"

namespace bioner {

// ---------------------------------------------------------------------------
// Dictionary

std::span<const DictEntry> Dictionary::entries_for(std::string_view term) const {
  auto it = entries_.find(text::to_lower(text::trim(term)));
  if (it == entries_.end()) return {};
  return it->second;
}

void Dictionary::add(DictEntry entry) {
  if (text::trim(entry.term).empty()) throw ArgumentError("dictionary entry with empty term");
  if (text::trim(entry.definition).empty()) throw ArgumentError("empty definition for term '" + entry.term + "'");
  const std::string key = text::to_lower(text::trim(entry.term));
  entries_[key].push_back(std::move(entry));
}

Dictionary parse_dictionary(std::string_view content, std::string name) {
  Dictionary dict(std::move(name));
  std::size_t line_no = 0;
  for (const auto& raw : text::split(content, "\n")) {
    ++line_no;
    if (text::trim(raw).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    for (const char* field : {"term", "definition"}) {
      if (!j.contains(field) || !j[field].is_string())
        throw FormatError(std::string("missing string field '") + field + "'", line_no);
    }
    DictEntry e;
    e.term = j["term"].get<std::string>();
    e.definition = j["definition"].get<std::string>();
    e.source = j.value("source", "");
    if (j.contains("semantic_types")) {
      if (!j["semantic_types"].is_array()) throw FormatError("semantic_types must be an array", line_no);
      for (const auto& t : j["semantic_types"]) e.semantic_types.push_back(t.get<std::string>());
    }
    if (text::trim(e.term).empty()) throw FormatError("empty term", line_no);
    if (text::trim(e.definition).empty()) throw FormatError("empty definition for '" + e.term + "'", line_no);
    dict.add(std::move(e));
  }
  return dict;
}

Dictionary load_dictionary(const std::filesystem::path& path) {
  return parse_dictionary(text::read_file(path), path.stem().string());
}

std::optional<DictEntry> lookup(const KnowledgeBase& kb, std::string_view candidate, const EntryRanker& ranker) {
  const auto entries = kb.entries_for(candidate);
  if (entries.empty()) return std::nullopt;
  std::size_t pick = ranker ? ranker(entries, candidate) : 0;
  if (pick >= entries.size()) pick = 0;
  return entries[pick];
}

// ---------------------------------------------------------------------------
// Augmentation

std::string augment_input(const TokenizedSentence& sentence, std::span<const DictionaryHit> hits) {
  std::string out = sentence.text();
  if (hits.empty()) return out;
  out += "\n\nRelevant medical definitions:";
  for (const auto& h : hits) out += "\n- " + h.term + ": " + h.entry.definition;
  return out;
}

// ---------------------------------------------------------------------------
// Stage 1

std::string default_candidate_instruction(const EntitySchema& schema) {
  return "List every word or phrase in the sentence that could be a medical named entity (for example: " +
         text::join(schema.type_names(), ", ") +
         "). Write one per line, copied exactly as it appears in the sentence, with no numbering and no "
         "commentary.";
}

PromptBundle build_candidate_prompt(const TokenizedSentence& sentence, const EntitySchema& schema,
                                    std::string_view instruction) {
  PromptBundle b;
  b.system_text = instruction.empty() ? default_candidate_instruction(schema) : std::string(instruction);
  b.turns.push_back({Role::user, sentence.text()});
  b.metadata[meta_keys::kQueryId] = sentence.id;
  b.metadata[meta_keys::kStage] = std::string(kStageCandidates);
  return b;
}

namespace {

std::string_view strip_bullet(std::string_view line) {
  if (line.size() >= 2 && (line[0] == '-' || line[0] == '*') && line[1] == ' ') return text::trim(line.substr(2));
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i > 0 && i + 1 < line.size() && (line[i] == '.' || line[i] == ')') && line[i + 1] == ' ')
    return text::trim(line.substr(i + 2));
  return line;
}

}  // namespace

CandidateList parse_candidates(std::string_view response, std::string_view sentence_text) {
  CandidateList out;
  std::set<std::string> seen;
  for (const auto& raw : text::split(response, "\n")) {
    std::string_view line = strip_bullet(text::trim(raw));
    if (line.empty()) continue;
    if (!seen.insert(text::to_lower(line)).second) continue;
    if (text::icontains(sentence_text, line)) {
      out.candidates.emplace_back(line);
    } else {
      out.discarded.emplace_back(line);
    }
  }
  return out;
}

CandidateList extract_candidates(const TokenizedSentence& sentence, LlmClient& client, const EntitySchema& schema,
                                 const CompletionSettings& settings, std::string_view instruction) {
  CompletionRequest req{settings.model_name, build_candidate_prompt(sentence, schema, instruction),
                        settings.temperature, settings.max_output_tokens};
  const auto ex = client.complete(req);
  return parse_candidates(ex.response_text, sentence.text());
}

// ---------------------------------------------------------------------------
// Pipeline

void resolve_candidates(const KnowledgeBase& kb, DiragTrace& trace, const DiragOptions& options) {
  trace.hits.clear();
  trace.misses.clear();
  for (const auto& c : trace.candidates) {
    if (auto e = lookup(kb, c, options.ranker)) {
      trace.hits.push_back({c, c, std::move(*e)});
      continue;
    }
    bool any = false;
    const auto words = text::split_ws(c);
    if (options.per_word_fallback && words.size() > 1) {
      std::set<std::string> tried;
      for (const auto& w : words) {
        if (!tried.insert(text::to_lower(w)).second) continue;
        if (auto e = lookup(kb, w, options.ranker)) {
          trace.hits.push_back({c, w, std::move(*e)});
          any = true;
        }
      }
    }
    if (!any) trace.misses.push_back(c);
  }
}

DiragTrace run_dirag(const TokenizedSentence& sentence, LlmClient& client, const KnowledgeBase& kb, FormatKind format,
                     const EntitySchema& schema, const DiragOptions& options) {
  DiragTrace trace;
  try {
    const auto& st = options.settings;
    CompletionRequest req{st.model_name, build_candidate_prompt(sentence, schema, options.candidate_instruction),
                          st.temperature, st.max_output_tokens};
    trace.exchanges.push_back(client.complete(req));
    auto cl = parse_candidates(trace.exchanges.back().response_text, sentence.text());
    trace.candidates = std::move(cl.candidates);
    trace.discarded = std::move(cl.discarded);
  } catch (const Error& e) {
    throw DiragAborted(std::string("candidate extraction failed for ") + sentence.id + ": " + e.what(), "candidates",
                       std::move(trace));
  }

  resolve_candidates(kb, trace, options);

  // One definition line per distinct matched term.
  std::vector<DictionaryHit> lines;
  std::set<std::string> seen;
  for (const auto& h : trace.hits) {
    if (seen.insert(text::to_lower(h.term)).second) lines.push_back(h);
  }
  trace.augmented_text = augment_input(sentence, lines);

  const std::string instruction =
      options.ner_instruction.empty() ? default_instruction(format, schema) : options.ner_instruction;
  trace.final_prompt = build_zero_shot_prompt_from_text(sentence.id, trace.augmented_text, format, schema, instruction);
  try {
    CompletionRequest req{options.settings.model_name, trace.final_prompt, options.settings.temperature,
                          options.settings.max_output_tokens};
    trace.exchanges.push_back(client.complete(req));
    trace.response_text = trace.exchanges.back().response_text;
  } catch (const Error& e) {
    throw DiragAborted(std::string("NER call failed for ") + sentence.id + ": " + e.what(), "ner", std::move(trace));
  }
  trace.final_report = decode(format, trace.response_text, sentence, schema);
  return trace;
}

}  // namespace bioner
