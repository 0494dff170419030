#include "bioner/corpus.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "bioner/error.hpp"
#include "bioner/text.hpp"

namespace bioner {

// ---------------------------------------------------------------------------
// EntitySchema

EntitySchema::EntitySchema(std::string dataset_name, std::vector<EntityType> types)
    : dataset_name_(std::move(dataset_name)), types_(std::move(types)) {
  std::set<std::string> seen;
  for (const auto& t : types_) {
    if (t.name.empty()) throw SchemaError("schema " + dataset_name_ + ": empty type name");
    if (t.name != text::to_lower(t.name))
      throw SchemaError("schema " + dataset_name_ + ": type name must be lowercase: " + t.name);
    if (t.name.find_first_of(" \t\n") != std::string::npos)
      throw SchemaError("schema " + dataset_name_ + ": type name contains whitespace: " + t.name);
    if (!seen.insert(t.name).second)
      throw SchemaError("schema " + dataset_name_ + ": duplicate type " + t.name);
    if (text::trim(t.description).empty())
      throw SchemaError("schema " + dataset_name_ + ": empty description for " + t.name);
  }
}

bool EntitySchema::contains(std::string_view type_name) const { return find(type_name) != nullptr; }

const EntityType* EntitySchema::find(std::string_view type_name) const {
  for (const auto& t : types_) {
    if (t.name == type_name) return &t;
  }
  return nullptr;
}

std::vector<std::string> EntitySchema::type_names() const {
  std::vector<std::string> names;
  names.reserve(types_.size());
  for (const auto& t : types_) names.push_back(t.name);
  return names;
}

EntitySchema EntitySchema::i2b2() {
  return EntitySchema(
      "i2b2",
      {{"test", "a procedure, panel or measurement performed to examine the patient, such as a laboratory test or imaging study"},
       {"treatment", "a drug, procedure or other intervention given to the patient to treat a medical problem"},
       {"problem", "a disease, symptom, finding or other medical condition observed in the patient"}});
}

EntitySchema EntitySchema::ncbi_disease() {
  return EntitySchema("ncbi-disease",
                      {{"disease", "a disease, disorder or syndrome mentioned in biomedical literature"}});
}

EntitySchema EntitySchema::bc2gm() {
  return EntitySchema("bc2gm", {{"gene", "a gene or gene product such as a protein or RNA mentioned in the text"}});
}

EntitySchema EntitySchema::builtin(std::string_view name) {
  std::string key = text::to_lower(name);
  if (key == "i2b2") return i2b2();
  if (key == "ncbi-disease" || key == "ncbi_disease") return ncbi_disease();
  if (key == "bc2gm") return bc2gm();
  throw ConfigError("unknown built-in schema: " + std::string(name));
}

EntitySchema EntitySchema::from_json_file(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("schema file " + path.string() + ": " + e.what());
  }
  if (!doc.contains("dataset_name") || !doc.contains("types") || !doc["types"].is_array())
    throw ConfigError("schema file " + path.string() + ": expected dataset_name and types");
  std::vector<EntityType> types;
  for (const auto& t : doc["types"]) {
    types.push_back({t.value("name", ""), t.value("description", "")});
  }
  return EntitySchema(doc["dataset_name"].get<std::string>(), std::move(types));
}

// ---------------------------------------------------------------------------
// Sentences and corpora

std::string TokenizedSentence::text() const { return text::join(tokens, " "); }

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  throw ArgumentError("unknown split: " + std::string(s));
}

const TokenizedSentence* Corpus::find(std::string_view id) const {
  for (const auto& s : sentences) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

EntityMention make_mention(std::span<const std::string> tokens, std::size_t start, std::size_t end,
                           std::string entity_type) {
  if (start >= end || end > tokens.size())
    throw PreconditionError("mention span [" + std::to_string(start) + "," + std::to_string(end) +
                            ") out of range for " + std::to_string(tokens.size()) + " tokens");
  return {start, end, std::move(entity_type), text::join(tokens.subspan(start, end - start), " ")};
}

namespace {

struct ParsedLabel {
  char tag = 'O';  // 'O', 'B' or 'I'
  std::string type;
};

ParsedLabel parse_label(std::string_view raw, const EntitySchema& schema, std::size_t line) {
  if (raw == "O") return {};
  char tag = raw.empty() ? '\0' : raw[0];
  if (tag != 'B' && tag != 'I') throw ParseError("invalid BIO label '" + std::string(raw) + "'", line);
  std::string type;
  if (raw.size() == 1) {
    if (schema.types().size() != 1)
      throw ParseError("untyped label '" + std::string(raw) + "' needs a single-type schema", line);
    type = schema.types().front().name;
  } else {
    if (raw[1] != '-' || raw.size() < 3) throw ParseError("invalid BIO label '" + std::string(raw) + "'", line);
    type = text::to_lower(raw.substr(2));
    if (!schema.contains(type))
      throw SchemaError("line " + std::to_string(line) + ": unknown entity type '" + std::string(raw.substr(2)) +
                        "' for schema " + schema.dataset_name());
  }
  return {tag, type};
}

}  // namespace

Corpus parse_bio_corpus(std::string_view content, const EntitySchema& schema, Split split, RepairMode repair) {
  Corpus corpus{schema, {}, split};
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
  std::string open_type;  // type of the span the previous token belongs to

  auto flush = [&] {
    if (tokens.empty()) return;
    TokenizedSentence s;
    s.id = std::string(to_string(split)) + "-" + std::to_string(corpus.sentences.size());
    s.tokens = std::move(tokens);
    s.gold_labels = std::move(labels);
    corpus.sentences.push_back(std::move(s));
    tokens.clear();
    labels.clear();
    open_type.clear();
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    std::size_t nl = content.find('\n', pos);
    std::string_view line = content.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? content.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (text::trim(line).empty()) {
      flush();
      continue;
    }
    auto fields = text::split_ws(line);
    if (fields.size() != 2)
      throw ParseError("expected '<token> <label>', got " + std::to_string(fields.size()) + " field(s)", line_no);

    ParsedLabel label = parse_label(fields[1], schema, line_no);
    if (label.tag == 'I' && open_type != label.type) {
      if (repair == RepairMode::strict)
        throw ParseError("I-" + label.type + " without an open " + label.type + " span", line_no);
      label.tag = 'B';
    }
    open_type = label.tag == 'O' ? std::string() : label.type;
    tokens.push_back(std::move(fields[0]));
    labels.push_back(label.tag == 'O' ? std::string("O") : std::string(1, label.tag) + "-" + label.type);
  }
  flush();

  if (corpus.sentences.empty()) throw EmptyCorpusError("corpus contains no sentences");
  return corpus;
}

Corpus load_bio_corpus(const std::filesystem::path& path, const EntitySchema& schema, Split split,
                       RepairMode repair) {
  return parse_bio_corpus(text::read_file(path), schema, split, repair);
}

std::string serialize_conll(const Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus.sentences) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      out += s.tokens[i];
      out += '\t';
      out += s.gold_labels ? (*s.gold_labels)[i] : std::string("O");
      out += '\n';
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// BIO <-> spans

std::vector<EntityMention> mentions_from_labels(std::span<const std::string> tokens,
                                                std::span<const std::string> labels) {
  if (labels.size() != tokens.size())
    throw PreconditionError("label count " + std::to_string(labels.size()) + " != token count " +
                            std::to_string(tokens.size()));
  std::vector<EntityMention> out;
  std::size_t i = 0;
  while (i < labels.size()) {
    const std::string& l = labels[i];
    if (l == "O") {
      ++i;
      continue;
    }
    if (l.size() < 3 || l[1] != '-' || (l[0] != 'B' && l[0] != 'I'))
      throw PreconditionError("invalid BIO label '" + l + "' at token " + std::to_string(i));
    if (l[0] == 'I') throw PreconditionError("I- label without open span at token " + std::to_string(i));
    std::string type = l.substr(2);
    std::size_t j = i + 1;
    while (j < labels.size() && labels[j] == "I-" + type) ++j;
    out.push_back(make_mention(tokens, i, j, std::move(type)));
    i = j;
  }
  return out;
}

std::vector<EntityMention> mentions_from_bio(const TokenizedSentence& sentence) {
  if (!sentence.gold_labels) throw PreconditionError("sentence " + sentence.id + " has no gold labels");
  return mentions_from_labels(sentence.tokens, *sentence.gold_labels);
}

std::vector<std::string> bio_from_mentions(std::span<const std::string> tokens,
                                           std::span<const EntityMention> mentions) {
  std::vector<std::string> labels(tokens.size(), "O");
  std::vector<const EntityMention*> owner(tokens.size(), nullptr);
  for (const auto& m : mentions) {
    if (m.start >= m.end || m.end > tokens.size())
      throw PreconditionError("mention [" + std::to_string(m.start) + "," + std::to_string(m.end) +
                              ") out of range for " + std::to_string(tokens.size()) + " tokens");
    for (std::size_t i = m.start; i < m.end; ++i) {
      if (owner[i] != nullptr) {
        const auto& o = *owner[i];
        throw ConflictError("overlapping mentions [" + std::to_string(o.start) + "," + std::to_string(o.end) +
                            ")" + o.entity_type + " and [" + std::to_string(m.start) + "," +
                            std::to_string(m.end) + ")" + m.entity_type);
      }
      owner[i] = &m;
      labels[i] = (i == m.start ? "B-" : "I-") + m.entity_type;
    }
  }
  return labels;
}

bool mentions_consistent(std::span<const std::string> tokens, std::span<const EntityMention> mentions,
                         const EntitySchema* schema) {
  std::vector<bool> used(tokens.size(), false);
  for (const auto& m : mentions) {
    if (m.start >= m.end || m.end > tokens.size()) return false;
    if (schema != nullptr && !schema->contains(m.entity_type)) return false;
    if (m.surface != text::join(tokens.subspan(m.start, m.end - m.start), " ")) return false;
    for (std::size_t i = m.start; i < m.end; ++i) {
      if (used[i]) return false;
      used[i] = true;
    }
  }
  return true;
}

}  // namespace bioner
