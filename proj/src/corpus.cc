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

#include "softmrc/corpus.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace softmrc {

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DataError("cannot open " + p.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& contents) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + p.string());
  os << contents;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

const Entity* AnnotatedDocument::entity(const std::string& entity_id) const {
  for (const auto& e : entities)
    if (e.id == entity_id) return &e;
  return nullptr;
}

void validate(const AnnotatedDocument& doc) {
  std::set<std::string> ids;
  for (const auto& e : doc.entities) {
    if (!ids.insert(e.id).second) throw DataError(doc.id + ": duplicate id " + e.id);
    if (!(e.start < e.end && e.end <= doc.text.size()))
      throw DataError(doc.id + ": entity " + e.id + " has offsets " + std::to_string(e.start) +
                      "-" + std::to_string(e.end) + " outside text of length " +
                      std::to_string(doc.text.size()));
    if (doc.text.compare(e.start, e.end - e.start, e.surface) != 0)
      throw DataError(doc.id + ": entity " + e.id + " surface '" + e.surface +
                      "' does not match text '" + doc.text.substr(e.start, e.end - e.start) + "'");
  }
  for (const auto& r : doc.relations) {
    if (!ids.insert(r.id).second) throw DataError(doc.id + ": duplicate id " + r.id);
    for (const auto* arg : {&r.trigger_id, &r.attribute_id})
      if (!doc.entity(*arg))
        throw DataError(doc.id + ": relation " + r.id + " references missing entity " + *arg);
  }
}

void validate(const AnnotatedDocument& doc, const RelationSchema& schema) {
  validate(doc);
  for (const auto& e : doc.entities)
    if (!schema.has_concept(e.type))
      throw DataError(doc.id + ": entity " + e.id + " has type " + e.type + " not in schema " +
                      schema.name);
  for (const auto& r : doc.relations) {
    const RelationType* rt = schema.relation(r.type);
    if (!rt) throw DataError(doc.id + ": relation " + r.id + " has unknown type " + r.type);
    const Entity* t = doc.entity(r.trigger_id);
    const Entity* a = doc.entity(r.attribute_id);
    if (t->type != rt->trigger_type || a->type != rt->attribute_type)
      throw DataError(doc.id + ": relation " + r.id + " (" + r.type + ") links " + t->type +
                      " and " + a->type);
  }
}

AnnotatedDocument parse_standoff(const std::string& doc_id, const std::string& text,
                                 const std::string& ann) {
  AnnotatedDocument doc;
  doc.id = doc_id;
  doc.text = text;
  std::istringstream in(ann);
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> discontinuous;
  auto fail = [&](const std::string& what) {
    throw DataError(doc_id + ".ann line " + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab1 = line.find('\t');
    if (tab1 == std::string::npos) fail("missing tab");
    std::string id = line.substr(0, tab1);
    if (id[0] == 'T') {
      auto tab2 = line.find('\t', tab1 + 1);
      if (tab2 == std::string::npos) fail("entity line needs a surface field");
      std::istringstream fs(line.substr(tab1 + 1, tab2 - tab1 - 1));
      Entity e;
      e.id = id;
      std::string offsets;
      if (!(fs >> e.type)) fail("missing entity type");
      std::getline(fs, offsets);
      std::size_t lo = std::string::npos, hi = 0;
      std::istringstream frag(offsets);
      std::string piece;
      std::size_t fragments = 0;
      while (std::getline(frag, piece, ';')) {
        std::istringstream ps(piece);
        std::size_t s, t;
        if (!(ps >> s >> t)) fail("bad offsets for " + id);
        lo = std::min(lo, s);
        hi = std::max(hi, t);
        ++fragments;
      }
      if (fragments == 0) fail("missing offsets for " + id);
      e.start = lo;
      e.end = hi;
      e.surface = line.substr(tab2 + 1);
      if (fragments > 1) {
        discontinuous.insert(id);
        if (e.end <= text.size()) e.surface = text.substr(e.start, e.end - e.start);
      }
      doc.entities.push_back(std::move(e));
    } else if (id[0] == 'R') {
      std::istringstream fs(line.substr(tab1 + 1));
      Relation r;
      r.id = id;
      std::string a1, a2;
      if (!(fs >> r.type >> a1 >> a2)) fail("relation line needs type and two arguments");
      if (a1.rfind("Arg1:", 0) != 0 || a2.rfind("Arg2:", 0) != 0) fail("bad relation arguments");
      r.trigger_id = a1.substr(5);
      r.attribute_id = a2.substr(5);
      doc.relations.push_back(std::move(r));
    }
  }
  validate(doc);
  return doc;
}

AnnotatedDocument read_standoff(const std::filesystem::path& txt_path,
                                const std::filesystem::path& ann_path) {
  std::string ann = std::filesystem::exists(ann_path) ? read_file(ann_path) : std::string();
  return parse_standoff(txt_path.stem().string(), read_file(txt_path), ann);
}

std::string write_ann(const AnnotatedDocument& doc) {
  std::string out;
  for (const auto& e : doc.entities)
    out += e.id + "\t" + e.type + " " + std::to_string(e.start) + " " + std::to_string(e.end) +
           "\t" + e.surface + "\n";
  for (const auto& r : doc.relations)
    out += r.id + "\t" + r.type + " Arg1:" + r.trigger_id + " Arg2:" + r.attribute_id + "\n";
  return out;
}

void write_standoff(const AnnotatedDocument& doc, const std::filesystem::path& dir) {
  write_file(dir / (doc.id + ".txt"), doc.text);
  write_file(dir / (doc.id + ".ann"), write_ann(doc));
}

std::vector<AnnotatedDocument> load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("corpus directory not found: " + dir.string());
  std::vector<std::filesystem::path> txts;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".txt") txts.push_back(entry.path());
  std::sort(txts.begin(), txts.end());
  std::vector<AnnotatedDocument> docs;
  for (const auto& t : txts) {
    auto ann = t;
    ann.replace_extension(".ann");
    docs.push_back(read_standoff(t, ann));
  }
  return docs;
}

void save_corpus(const std::vector<AnnotatedDocument>& docs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& d : docs) write_standoff(d, dir);
}

std::vector<CharSpan> tokenize_spans(const std::string& text) {
  std::vector<CharSpan> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (word_byte(c)) {
      std::size_t j = i;
      while (j < n && word_byte(static_cast<unsigned char>(text[j]))) ++j;
      out.push_back({i, j});
      i = j;
    } else {
      out.push_back({i, i + 1});
      ++i;
    }
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* w : {"[PAD]", "[UNK]", "[SEP]", "[S]", "[E]"}) {
    index_.emplace(w, words_.size());
    words_.emplace_back(w);
  }
}

std::size_t Vocabulary::add(const std::string& word) {
  std::string w = lower(word);
  auto it = index_.find(w);
  if (it != index_.end()) return it->second;
  index_.emplace(w, words_.size());
  words_.push_back(w);
  return words_.size() - 1;
}

std::size_t Vocabulary::id(const std::string& word) const {
  auto it = index_.find(lower(word));
  if (it == index_.end() || it->second < kNumReservedIds) return kUnkId;
  return it->second;
}

Vocabulary Vocabulary::build(const std::vector<AnnotatedDocument>& docs) {
  Vocabulary v;
  for (const auto& d : docs)
    for (const auto& s : tokenize_spans(d.text)) v.add(d.text.substr(s.start, s.end - s.start));
  return v;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& w : words_) out += w + "\n";
  return out;
}

Vocabulary Vocabulary::parse(const std::string& contents) {
  Vocabulary v;
  std::istringstream in(contents);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (row < kNumReservedIds) {
      if (line != v.words_[row]) throw DataError("vocabulary must start with the reserved tokens");
    } else {
      if (v.index_.count(line)) throw DataError("duplicate vocabulary entry " + line);
      v.index_.emplace(line, v.words_.size());
      v.words_.push_back(line);
    }
    ++row;
  }
  return v;
}

TokenSequence tokenize(const std::string& text, const Vocabulary& vocab) {
  TokenSequence seq;
  seq.char_spans = tokenize_spans(text);
  seq.ids.reserve(seq.char_spans.size());
  for (const auto& s : seq.char_spans) seq.ids.push_back(vocab.id(text.substr(s.start, s.end - s.start)));
  return seq;
}

std::optional<TokenSpan> align_span(const TokenSequence& seq, std::size_t start, std::size_t end,
                                    bool* exact) {
  std::optional<std::size_t> first, last;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto& s = seq.char_spans[i];
    if (s.end <= start || s.start >= end) continue;
    if (!first) first = i;
    last = i;
  }
  if (!first) {
    if (exact) *exact = false;
    return std::nullopt;
  }
  if (exact)
    *exact = seq.char_spans[*first].start == start && seq.char_spans[*last].end == end;
  return TokenSpan{*first, *last};
}

// ---------------------------------------------------------------------------
// Profiles and generation.

bool SentenceTemplate::has_slot_type(const std::string& type) const {
  return std::any_of(pieces.begin(), pieces.end(),
                     [&](const TemplatePiece& p) { return p.slot_type == type; });
}

namespace {

std::vector<std::string> split_alternatives(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string part;
  while (std::getline(in, part, '|')) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

SentenceTemplate parse_template(const std::string& text, std::size_t lineno) {
  SentenceTemplate t;
  std::size_t i = 0;
  while (i < text.size()) {
    auto open = text.find('{', i);
    if (open == std::string::npos) {
      t.pieces.push_back({text.substr(i), "", ""});
      break;
    }
    if (open > i) t.pieces.push_back({text.substr(i, open - i), "", ""});
    auto close = text.find('}', open);
    if (close == std::string::npos)
      throw std::invalid_argument("profile line " + std::to_string(lineno) + ": unclosed slot");
    std::string slot = text.substr(open + 1, close - open - 1);
    TemplatePiece p;
    auto colon = slot.find(':');
    p.slot_type = slot.substr(0, colon);
    if (colon != std::string::npos) p.slot_group = slot.substr(colon + 1);
    if (p.slot_type.empty())
      throw std::invalid_argument("profile line " + std::to_string(lineno) + ": empty slot");
    t.pieces.push_back(std::move(p));
    i = close + 1;
  }
  return t;
}

}  // namespace

CorpusProfile CorpusProfile::parse(const std::string& contents, const RelationSchema& schema) {
  CorpusProfile p;
  p.schema = schema;
  std::istringstream in(contents);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto sp = t.find_first_of(" \t");
    std::string kw = t.substr(0, sp);
    std::string rest = sp == std::string::npos ? "" : trim(t.substr(sp));
    auto split_type = [&](std::string& type, std::string& body) {
      auto s = rest.find_first_of(" \t");
      if (s == std::string::npos)
        throw std::invalid_argument("profile line " + std::to_string(lineno) + ": missing values");
      type = rest.substr(0, s);
      body = trim(rest.substr(s));
    };
    if (kw == "name") {
      p.name = rest;
    } else if (kw == "schema") {
      // Resolved by load().
    } else if (kw == "sentences") {
      std::istringstream ss(rest);
      if (!(ss >> p.min_sentences >> p.max_sentences))
        throw std::invalid_argument("profile line " + std::to_string(lineno) + ": sentences <min> <max>");
    } else if (kw == "nested_rate") {
      p.nested_rate = std::stod(rest);
    } else if (kw == "zipf") {
      p.zipf_exponent = std::stod(rest);
    } else if (kw == "abbreviation_rate") {
      p.abbreviation_rate = std::stod(rest);
    } else if (kw == "lex") {
      std::string type, body;
      split_type(type, body);
      auto alts = split_alternatives(body);
      auto& dst = p.lexicon[type];
      dst.insert(dst.end(), alts.begin(), alts.end());
    } else if (kw == "nest") {
      std::string type, body;
      split_type(type, body);
      auto alts = split_alternatives(body);
      auto& dst = p.nest_wrappers[type];
      dst.insert(dst.end(), alts.begin(), alts.end());
    } else if (kw == "abbrev") {
      auto arrow = rest.find("=>");
      if (arrow == std::string::npos)
        throw std::invalid_argument("profile line " + std::to_string(lineno) + ": abbrev <full> => <short>");
      p.abbreviations.emplace_back(trim(rest.substr(0, arrow)), trim(rest.substr(arrow + 2)));
    } else if (kw == "sentence") {
      p.templates.push_back(parse_template(rest, lineno));
    } else {
      throw std::invalid_argument("profile line " + std::to_string(lineno) + ": unknown keyword " + kw);
    }
  }
  p.validate();
  return p;
}

CorpusProfile CorpusProfile::load(const std::filesystem::path& path) {
  std::string contents = read_file(path);
  std::istringstream in(contents);
  std::string line, schema_name;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kw;
    if ((ls >> kw) && kw == "schema") ls >> schema_name;
  }
  if (schema_name.empty()) throw std::invalid_argument(path.string() + ": missing schema line");
  auto schema = RelationSchema::load(path.parent_path() / (schema_name + ".schema"));
  return parse(contents, schema);
}

void CorpusProfile::validate() const {
  if (name.empty()) throw std::invalid_argument("profile has no name");
  if (templates.empty()) throw std::invalid_argument("profile " + name + " has no sentences");
  if (min_sentences == 0 || min_sentences > max_sentences)
    throw std::invalid_argument("profile " + name + ": bad sentence range");
  if (nested_rate < 0.0 || nested_rate > 1.0)
    throw std::invalid_argument("profile " + name + ": nested_rate must be in [0,1]");
  for (const auto& [type, wrappers] : nest_wrappers) {
    if (!schema.has_concept(type))
      throw std::invalid_argument("profile " + name + ": nest type " + type + " not in schema");
    for (const auto& w : wrappers)
      if (w.find("{}") == std::string::npos || w == "{}")
        throw std::invalid_argument("profile " + name + ": wrapper '" + w + "' needs {} and text");
  }
  for (const auto& t : templates) {
    std::map<std::string, std::string> group_trigger;
    for (const auto& p : t.pieces) {
      if (p.slot_type.empty()) continue;
      if (!schema.has_concept(p.slot_type))
        throw std::invalid_argument("profile " + name + ": slot type " + p.slot_type +
                                    " not in schema " + schema.name);
      if (!lexicon.count(p.slot_type) || lexicon.at(p.slot_type).empty())
        throw std::invalid_argument("profile " + name + ": no lexicon for " + p.slot_type);
      if (schema.is_trigger(p.slot_type) && !p.slot_group.empty()) {
        if (group_trigger.count(p.slot_group))
          throw std::invalid_argument("profile " + name + ": group " + p.slot_group +
                                      " has two triggers");
        group_trigger[p.slot_group] = p.slot_type;
      }
    }
    for (const auto& p : t.pieces) {
      if (p.slot_type.empty() || schema.is_trigger(p.slot_type) || p.slot_group.empty()) continue;
      auto it = group_trigger.find(p.slot_group);
      if (it == group_trigger.end())
        throw std::invalid_argument("profile " + name + ": attribute group " + p.slot_group +
                                    " has no trigger in its sentence");
      if (!schema.relation_between(it->second, p.slot_type))
        throw std::invalid_argument("profile " + name + ": no relation between " + it->second +
                                    " and " + p.slot_type);
    }
  }
}

namespace {

struct PendingEntity {
  std::string type;
  std::size_t start, end;
  std::string group;  // relation group; empty if unrelated
  bool trigger;
  std::size_t order;
};

std::size_t pick(std::mt19937_64& rng, std::size_t n, double zipf) {
  if (zipf <= 0.0) return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / std::pow(static_cast<double>(i + 1), zipf);
  return std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng);
}

double unit(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace

std::vector<AnnotatedDocument> generate_corpus(const CorpusProfile& profile, std::size_t n_docs,
                                               std::uint64_t seed) {
  if (n_docs == 0) throw std::invalid_argument("n_docs must be at least 1");
  profile.validate();
  std::mt19937_64 rng(seed);

  std::vector<std::size_t> nestable;
  for (std::size_t i = 0; i < profile.templates.size(); ++i)
    for (const auto& [type, w] : profile.nest_wrappers)
      if (profile.templates[i].has_slot_type(type)) {
        nestable.push_back(i);
        break;
      }

  std::vector<AnnotatedDocument> docs;
  docs.reserve(n_docs);
  const std::size_t width = std::to_string(n_docs).size() < 4 ? 4 : std::to_string(n_docs).size();
  for (std::size_t d = 0; d < n_docs; ++d) {
    AnnotatedDocument doc;
    std::string idx = std::to_string(d + 1);
    doc.id = profile.name + "-" + std::to_string(seed) + "-" +
             std::string(width - idx.size(), '0') + idx;
    std::size_t n_sent = std::uniform_int_distribution<std::size_t>(
        profile.min_sentences, profile.max_sentences)(rng);
    std::vector<PendingEntity> pending;
    std::vector<std::pair<std::size_t, std::size_t>> rel_pairs;  // indices into pending
    for (std::size_t s = 0; s < n_sent; ++s) {
      if (s > 0) doc.text += ' ';
      bool nest = !nestable.empty() && unit(rng) < profile.nested_rate;
      const SentenceTemplate& tpl =
          nest ? profile.templates[nestable[pick(rng, nestable.size(), 0.0)]]
               : profile.templates[pick(rng, profile.templates.size(), 0.0)];
      std::vector<std::size_t> nest_slots;
      for (std::size_t i = 0; i < tpl.pieces.size(); ++i)
        if (profile.nest_wrappers.count(tpl.pieces[i].slot_type)) nest_slots.push_back(i);
      std::size_t nest_at = nest ? nest_slots[pick(rng, nest_slots.size(), 0.0)] : tpl.pieces.size();

      std::map<std::string, std::size_t> group_trigger;
      std::vector<std::pair<std::string, std::size_t>> group_attrs;
      for (std::size_t i = 0; i < tpl.pieces.size(); ++i) {
        const auto& piece = tpl.pieces[i];
        if (piece.slot_type.empty()) {
          doc.text += piece.literal;
          continue;
        }
        const auto& lex = profile.lexicon.at(piece.slot_type);
        std::string surface = lex[pick(rng, lex.size(), profile.zipf_exponent)];
        if (profile.abbreviation_rate > 0.0) {
          for (const auto& [full, abbr] : profile.abbreviations)
            if (full == surface) {
              if (unit(rng) < profile.abbreviation_rate) surface = abbr;
              break;
            }
        }
        bool trig = profile.schema.is_trigger(piece.slot_type);
        std::size_t start = doc.text.size();
        if (i == nest_at) {
          const auto& wraps = profile.nest_wrappers.at(piece.slot_type);
          const std::string& w = wraps[pick(rng, wraps.size(), 0.0)];
          auto hole = w.find("{}");
          std::string outer = w.substr(0, hole) + surface + w.substr(hole + 2);
          doc.text += outer;
          pending.push_back({piece.slot_type, start, start + outer.size(), piece.slot_group, trig,
                             pending.size()});
          std::size_t outer_idx = pending.size() - 1;
          pending.push_back({piece.slot_type, start + hole, start + hole + surface.size(), "", trig,
                             pending.size()});
          if (trig && !piece.slot_group.empty()) group_trigger[piece.slot_group] = outer_idx;
          else if (!piece.slot_group.empty()) group_attrs.emplace_back(piece.slot_group, outer_idx);
          continue;
        }
        doc.text += surface;
        pending.push_back({piece.slot_type, start, start + surface.size(), piece.slot_group, trig,
                           pending.size()});
        if (trig && !piece.slot_group.empty()) group_trigger[piece.slot_group] = pending.size() - 1;
        else if (!piece.slot_group.empty()) group_attrs.emplace_back(piece.slot_group, pending.size() - 1);
      }
      for (const auto& [g, a] : group_attrs) rel_pairs.emplace_back(group_trigger.at(g), a);
    }
    doc.text += '\n';

    std::vector<std::size_t> order(pending.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto &x = pending[a], &y = pending[b];
      if (x.start != y.start) return x.start < y.start;
      if (x.end != y.end) return x.end > y.end;
      return x.order < y.order;
    });
    std::vector<std::size_t> id_of(pending.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& p = pending[order[k]];
      id_of[order[k]] = k + 1;
      doc.entities.push_back({"T" + std::to_string(k + 1), p.type, p.start, p.end,
                              doc.text.substr(p.start, p.end - p.start)});
    }
    std::sort(rel_pairs.begin(), rel_pairs.end(), [&](const auto& a, const auto& b) {
      return std::pair(id_of[a.first], id_of[a.second]) < std::pair(id_of[b.first], id_of[b.second]);
    });
    for (std::size_t r = 0; r < rel_pairs.size(); ++r) {
      const auto& t = pending[rel_pairs[r].first];
      const auto& a = pending[rel_pairs[r].second];
      doc.relations.push_back({"R" + std::to_string(r + 1),
                               *profile.schema.relation_between(t.type, a.type),
                               "T" + std::to_string(id_of[rel_pairs[r].first]),
                               "T" + std::to_string(id_of[rel_pairs[r].second])});
    }
    validate(doc, profile.schema);
    docs.push_back(std::move(doc));
  }
  return docs;
}

namespace {

// Sentence end offsets: '.' tokens followed by whitespace or end of text.
std::vector<std::size_t> sentence_ends(const std::string& text) {
  std::vector<std::size_t> ends;
  for (const auto& s : tokenize_spans(text)) {
    if (text[s.start] != '.' || s.end - s.start != 1) continue;
    if (s.end == text.size() || std::isspace(static_cast<unsigned char>(text[s.end])))
      ends.push_back(s.end);
  }
  if (ends.empty() || ends.back() < text.size()) ends.push_back(text.size());
  return ends;
}

bool overlaps(const Entity& a, const Entity& b) { return a.start < b.end && b.start < a.end; }

}  // namespace

std::pair<std::size_t, std::size_t> overlapping_sentence_count(
    const std::vector<AnnotatedDocument>& docs) {
  std::size_t hit = 0, total = 0;
  for (const auto& doc : docs) {
    auto ends = sentence_ends(doc.text);
    // Trailing whitespace after the last '.' is not a sentence.
    if (ends.size() > 1 && trim(doc.text.substr(ends[ends.size() - 2])).empty()) ends.pop_back();
    std::vector<std::vector<const Entity*>> by_sentence(ends.size());
    for (const auto& e : doc.entities) {
      auto it = std::upper_bound(ends.begin(), ends.end(), e.start);
      by_sentence[std::min<std::size_t>(it - ends.begin(), ends.size() - 1)].push_back(&e);
    }
    for (const auto& ents : by_sentence) {
      bool any = false;
      for (std::size_t i = 0; i < ents.size() && !any; ++i)
        for (std::size_t j = i + 1; j < ents.size() && !any; ++j) any = overlaps(*ents[i], *ents[j]);
      hit += any;
    }
    total += ends.size();
  }
  return {hit, total};
}

bool is_nested_inside_other(const AnnotatedDocument& doc, std::size_t i) {
  const Entity& e = doc.entities[i];
  for (std::size_t j = 0; j < doc.entities.size(); ++j) {
    if (j == i) continue;
    const Entity& o = doc.entities[j];
    if (o.start <= e.start && e.end <= o.end) {
      bool same = o.start == e.start && o.end == e.end;
      if (!same || j < i) return true;
    }
  }
  return false;
}

std::size_t nested_entity_count(const AnnotatedDocument& doc) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < doc.entities.size(); ++i) n += is_nested_inside_other(doc, i);
  return n;
}

std::map<std::string, std::size_t> category_counts(const std::vector<AnnotatedDocument>& docs) {
  std::map<std::string, std::size_t> out;
  for (const auto& d : docs)
    for (const auto& e : d.entities) ++out[e.type];
  return out;
}

std::vector<AnnotatedDocument> sample_few_shot(const std::vector<AnnotatedDocument>& corpus,
                                               const FewShotSpec& spec) {
  if (spec.k == 0) throw std::invalid_argument("few-shot k must be positive");
  auto supply = category_counts(corpus);
  for (const auto& c : spec.categories)
    if (supply[c] < spec.k)
      throw DataError("few-shot: category " + c + " has " + std::to_string(supply[c]) +
                      " mentions, fewer than k=" + std::to_string(spec.k));

  std::vector<std::size_t> rank(corpus.size());
  {
    std::vector<std::size_t> perm(corpus.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(spec.seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t r = 0; r < perm.size(); ++r) rank[perm[r]] = r;
  }
  std::vector<std::map<std::string, std::size_t>> counts(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i)
    for (const auto& e : corpus[i].entities) ++counts[i][e.type];

  std::vector<std::size_t> stages;
  for (std::size_t g : kFewShotGrid)
    if (g < spec.k) stages.push_back(g);
  stages.push_back(spec.k);

  std::vector<bool> chosen(corpus.size(), false);
  std::map<std::string, std::size_t> have;
  for (std::size_t target : stages) {
    while (true) {
      std::map<std::string, std::size_t> deficit;
      for (const auto& c : spec.categories)
        if (have[c] < target) deficit[c] = target - have[c];
      if (deficit.empty()) break;
      std::size_t best = corpus.size(), best_cover = 0;
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (chosen[i]) continue;
        std::size_t cover = 0;
        for (const auto& [c, need] : deficit) {
          auto it = counts[i].find(c);
          if (it != counts[i].end()) cover += std::min(it->second, need);
        }
        if (cover > best_cover || (cover == best_cover && cover > 0 && rank[i] < rank[best])) {
          best = i;
          best_cover = cover;
        }
      }
      if (best == corpus.size())
        throw DataError("few-shot: cannot cover category " + deficit.begin()->first);
      chosen[best] = true;
      for (const auto& [c, n] : counts[best]) have[c] += n;
    }
  }
  std::vector<AnnotatedDocument> out;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (chosen[i]) out.push_back(corpus[i]);
  return out;
}

}  // namespace softmrc
