#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bioner/corpus.hpp"
#include "bioner/error.hpp"
#include "bioner/formats.hpp"
#include "bioner/llm.hpp"

namespace bioner {

struct DictEntry {
  std::string term;
  std::string definition;
  std::vector<std::string> semantic_types;
  std::string source;

  bool operator==(const DictEntry&) const = default;
};

// Source of term definitions. The shipped implementation is a file-backed
// dictionary; a licensed UMLS extract can be converted to the same format or
// served through another implementation.
class KnowledgeBase {
 public:
  virtual ~KnowledgeBase() = default;
  virtual std::string name() const = 0;
  // All entries for `term`, case-insensitively, in load order.
  virtual std::span<const DictEntry> entries_for(std::string_view term) const = 0;
};

class Dictionary final : public KnowledgeBase {
 public:
  explicit Dictionary(std::string name = "dictionary") : name_(std::move(name)) {}

  std::string name() const override { return name_; }
  std::span<const DictEntry> entries_for(std::string_view term) const override;

  // Throws ArgumentError on an empty term or definition.
  void add(DictEntry entry);
  std::size_t term_count() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

 private:
  std::string name_;
  std::map<std::string, std::vector<DictEntry>> entries_;
};

// JSON Lines of {term, definition, semantic_types, source}.
Dictionary parse_dictionary(std::string_view content, std::string name = "dictionary");
Dictionary load_dictionary(const std::filesystem::path& path);

// Picks one of several entries for a candidate; defaults to the first.
using EntryRanker = std::function<std::size_t(std::span<const DictEntry>, std::string_view candidate)>;

std::optional<DictEntry> lookup(const KnowledgeBase& kb, std::string_view candidate, const EntryRanker& ranker = {});

struct DictionaryHit {
  std::string candidate;  // the grounded candidate that produced the hit
  std::string term;       // the string that matched (candidate or one of its words)
  DictEntry entry;
};

// Sentence text, then a blank line and a "Relevant medical definitions:"
// block with one "- <term>: <definition>" line per hit. Unchanged text when
// there are no hits.
std::string augment_input(const TokenizedSentence& sentence, std::span<const DictionaryHit> hits);

struct CompletionSettings {
  std::string model_name = "mock";
  double temperature = 0.0;
  int max_output_tokens = 1024;
};

std::string default_candidate_instruction(const EntitySchema& schema);
PromptBundle build_candidate_prompt(const TokenizedSentence& sentence, const EntitySchema& schema,
                                    std::string_view instruction);

struct CandidateList {
  std::vector<std::string> candidates;
  std::vector<std::string> discarded;  // not found in the sentence text
};

// Trimmed, deduplicated (case-insensitively) non-empty lines, with list
// bullets stripped; lines that do not occur in `sentence_text` are
// discarded.
CandidateList parse_candidates(std::string_view response, std::string_view sentence_text);

CandidateList extract_candidates(const TokenizedSentence& sentence, LlmClient& client, const EntitySchema& schema,
                                 const CompletionSettings& settings, std::string_view instruction = {});

struct DiragOptions {
  bool per_word_fallback = true;
  std::string candidate_instruction;  // empty: preset
  std::string ner_instruction;        // empty: preset for the format
  EntryRanker ranker;
  CompletionSettings settings;
};

struct DiragTrace {
  std::vector<std::string> candidates;
  std::vector<std::string> discarded;
  std::vector<DictionaryHit> hits;
  std::vector<std::string> misses;
  std::string augmented_text;
  PromptBundle final_prompt;
  std::string response_text;
  DecodeReport final_report;
  std::vector<LlmExchange> exchanges;  // candidate call, then NER call
};

// Thrown when a model call fails mid-pipeline; carries what was done so far.
class DiragAborted : public Error {
 public:
  DiragAborted(const std::string& what, std::string stage, DiragTrace partial)
      : Error(what), stage_(std::move(stage)), partial_(std::move(partial)) {}
  const std::string& stage() const noexcept { return stage_; }
  const DiragTrace& partial() const noexcept { return partial_; }

 private:
  std::string stage_;
  DiragTrace partial_;
};

// Candidate lookup alone: partitions candidates into hits and misses.
void resolve_candidates(const KnowledgeBase& kb, DiragTrace& trace, const DiragOptions& options);

// Candidate extraction, lookup, augmentation, zero-shot NER on the augmented
// input, decode against the original tokens.
DiragTrace run_dirag(const TokenizedSentence& sentence, LlmClient& client, const KnowledgeBase& kb, FormatKind format,
                     const EntitySchema& schema, const DiragOptions& options = {});

}  // namespace bioner
