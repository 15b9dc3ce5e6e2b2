/* Copyright 2026 The softmrc Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Annotated documents, the standoff format, tokenization, vocabularies, the
// synthetic corpus generator and the few-shot sampler.

#ifndef SOFTMRC_CORPUS_H_
#define SOFTMRC_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "softmrc/schema.h"
#include "softmrc/tokens.h"

namespace softmrc {

// Malformed or inconsistent annotation data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Entity {
  std::string id;  // "T<k>"
  std::string type;
  std::size_t start = 0;  // byte offsets into the document text
  std::size_t end = 0;
  std::string surface;
};

struct Relation {
  std::string id;  // "R<k>"
  std::string type;
  std::string trigger_id;
  std::string attribute_id;
};

struct AnnotatedDocument {
  std::string id;
  std::string text;
  std::vector<Entity> entities;
  std::vector<Relation> relations;

  const Entity* entity(const std::string& entity_id) const;
};

// Offsets in range, surface == text[start, end), unique ids, relation
// arguments resolve. Overlapping and nested entities are allowed.
void validate(const AnnotatedDocument& doc);
// Additionally checks entity and relation types against `schema`.
void validate(const AnnotatedDocument& doc, const RelationSchema& schema);

// Standoff: `T<id>\t<type> <start> <end>\t<surface>` and
// `R<id>\t<type> Arg1:T<i> Arg2:T<j>`. Other line kinds are ignored.
// Discontinuous entities (`start end;start end`) collapse to their extent.
AnnotatedDocument parse_standoff(const std::string& doc_id, const std::string& text,
                                 const std::string& ann);
AnnotatedDocument read_standoff(const std::filesystem::path& txt_path,
                                const std::filesystem::path& ann_path);
std::string write_ann(const AnnotatedDocument& doc);
// Writes <dir>/<id>.txt and <dir>/<id>.ann.
void write_standoff(const AnnotatedDocument& doc, const std::filesystem::path& dir);

// All <id>.txt/<id>.ann pairs in `dir`, sorted by id. A .txt without .ann
// is read with no annotations.
std::vector<AnnotatedDocument> load_corpus(const std::filesystem::path& dir);
void save_corpus(const std::vector<AnnotatedDocument>& docs, const std::filesystem::path& dir);

// Maximal runs of ASCII letters/digits (and any byte >= 0x80) are tokens;
// every other non-space byte is a token of its own.
std::vector<CharSpan> tokenize_spans(const std::string& text);

class Vocabulary {
 public:
  Vocabulary();
  // Lower-cased tokens of every document, ids assigned in first-seen order.
  static Vocabulary build(const std::vector<AnnotatedDocument>& docs);
  // Adds `word` (lower-cased) if missing and returns its id.
  std::size_t add(const std::string& word);
  std::size_t id(const std::string& word) const;
  const std::string& word(std::size_t id) const { return words_.at(id); }
  std::size_t size() const { return words_.size(); }

  // One word per line in id order, reserved entries first.
  std::string serialize() const;
  static Vocabulary parse(const std::string& contents);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

TokenSequence tokenize(const std::string& text, const Vocabulary& vocab);

// Smallest token span covering [start, end); nullopt when no token overlaps.
// `exact` is set when both ends fall on token boundaries.
std::optional<TokenSpan> align_span(const TokenSequence& seq, std::size_t start,
                                    std::size_t end, bool* exact = nullptr);

// Generator profile. See data/*.profile for the text format.
struct TemplatePiece {
  std::string literal;
  std::string slot_type;   // empty for literals
  std::string slot_group;  // empty for standalone slots
};

struct SentenceTemplate {
  std::vector<TemplatePiece> pieces;
  bool has_slot_type(const std::string& type) const;
};

struct CorpusProfile {
  std::string name;
  RelationSchema schema;
  std::map<std::string, std::vector<std::string>> lexicon;
  // Wrappers like "history of {}" that turn an entity into a nested pair.
  std::map<std::string, std::vector<std::string>> nest_wrappers;
  std::vector<std::pair<std::string, std::string>> abbreviations;
  double abbreviation_rate = 0.0;
  double nested_rate = 0.0;
  double zipf_exponent = 0.0;
  std::size_t min_sentences = 3;
  std::size_t max_sentences = 5;
  std::vector<SentenceTemplate> templates;

  static CorpusProfile parse(const std::string& contents, const RelationSchema& schema);
  // Resolves the profile's `schema <name>` line to <dir>/<name>.schema.
  static CorpusProfile load(const std::filesystem::path& path);
  void validate() const;
};

// Pure function of (profile, n_docs, seed). Document ids are
// "<profile>-<seed>-<index>".
std::vector<AnnotatedDocument> generate_corpus(const CorpusProfile& profile, std::size_t n_docs,
                                               std::uint64_t seed);

// Number of sentences (split at '.' tokens followed by whitespace or end of
// text) containing at least one pair of overlapping entities, and the total.
std::pair<std::size_t, std::size_t> overlapping_sentence_count(
    const std::vector<AnnotatedDocument>& docs);

// Entities strictly contained in (or identical in extent to, but listed
// after) another entity of the same document.
std::size_t nested_entity_count(const AnnotatedDocument& doc);
bool is_nested_inside_other(const AnnotatedDocument& doc, std::size_t entity_index);

struct FewShotSpec {
  std::size_t k = 5;
  std::uint64_t seed = 0;
  std::vector<std::string> categories;
};

inline const std::vector<std::size_t> kFewShotGrid = {5, 10, 20, 50, 100};

// Greedy cover: repeatedly adds the document that covers the most remaining
// per-category deficit (ties broken by a seeded order) until every category
// has >= k annotated mentions. Selections for smaller grid values are grown
// first, so the result for k contains the result for every grid k' < k.
std::vector<AnnotatedDocument> sample_few_shot(const std::vector<AnnotatedDocument>& corpus,
                                               const FewShotSpec& spec);

std::map<std::string, std::size_t> category_counts(const std::vector<AnnotatedDocument>& docs);

}  // namespace softmrc

#endif  // SOFTMRC_CORPUS_H_
