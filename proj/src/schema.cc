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

#include "softmrc/schema.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace softmrc {

std::vector<std::string> RelationSchema::concept_types() const {
  std::vector<std::string> out = trigger_types;
  out.insert(out.end(), attribute_types.begin(), attribute_types.end());
  return out;
}

bool RelationSchema::is_trigger(const std::string& type) const {
  return std::find(trigger_types.begin(), trigger_types.end(), type) != trigger_types.end();
}

bool RelationSchema::has_concept(const std::string& type) const {
  return is_trigger(type) ||
         std::find(attribute_types.begin(), attribute_types.end(), type) != attribute_types.end();
}

const RelationType* RelationSchema::relation(const std::string& n) const {
  for (const auto& r : relations)
    if (r.name == n) return &r;
  return nullptr;
}

std::vector<const RelationType*> RelationSchema::relations_for_trigger(
    const std::string& trigger_type) const {
  std::vector<const RelationType*> out;
  for (const auto& r : relations)
    if (r.trigger_type == trigger_type) out.push_back(&r);
  return out;
}

std::optional<std::string> RelationSchema::relation_between(
    const std::string& trigger_type, const std::string& attribute_type) const {
  for (const auto& r : relations)
    if (r.trigger_type == trigger_type && r.attribute_type == attribute_type) return r.name;
  return std::nullopt;
}

void RelationSchema::validate() const {
  std::set<std::string> seen;
  for (const auto& t : concept_types())
    if (!seen.insert(t).second) throw std::invalid_argument("schema: duplicate type " + t);
  std::set<std::string> rel_names;
  for (const auto& r : relations) {
    if (!rel_names.insert(r.name).second)
      throw std::invalid_argument("schema: duplicate relation " + r.name);
    if (seen.count(r.name)) throw std::invalid_argument("schema: relation name clashes with type " + r.name);
    if (!is_trigger(r.trigger_type))
      throw std::invalid_argument("schema: relation " + r.name + " uses undeclared trigger " +
                                  r.trigger_type);
    if (std::find(attribute_types.begin(), attribute_types.end(), r.attribute_type) ==
        attribute_types.end())
      throw std::invalid_argument("schema: relation " + r.name + " uses undeclared attribute " +
                                  r.attribute_type);
  }
}

RelationSchema RelationSchema::parse(const std::string& contents) {
  RelationSchema s;
  std::istringstream in(contents);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw) || kw[0] == '#') continue;
    auto need = [&](std::string& v) {
      if (!(ls >> v))
        throw std::invalid_argument("schema line " + std::to_string(lineno) + ": missing field");
    };
    if (kw == "name") {
      need(s.name);
    } else if (kw == "trigger") {
      s.trigger_types.emplace_back();
      need(s.trigger_types.back());
    } else if (kw == "attribute") {
      s.attribute_types.emplace_back();
      need(s.attribute_types.back());
    } else if (kw == "relation") {
      RelationType r;
      need(r.name);
      need(r.trigger_type);
      need(r.attribute_type);
      s.relations.push_back(std::move(r));
    } else {
      throw std::invalid_argument("schema line " + std::to_string(lineno) + ": unknown keyword " + kw);
    }
  }
  s.validate();
  return s;
}

RelationSchema RelationSchema::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open schema " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

std::string RelationSchema::serialize() const {
  std::string out = "name " + name + "\n";
  for (const auto& t : trigger_types) out += "trigger " + t + "\n";
  for (const auto& t : attribute_types) out += "attribute " + t + "\n";
  for (const auto& r : relations)
    out += "relation " + r.name + " " + r.trigger_type + " " + r.attribute_type + "\n";
  return out;
}

}  // namespace softmrc
