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

#ifndef SOFTMRC_SCHEMA_H_
#define SOFTMRC_SCHEMA_H_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace softmrc {

struct RelationType {
  std::string name;
  std::string trigger_type;
  std::string attribute_type;
};

// Concept and relation inventory shared by a corpus and a model.
struct RelationSchema {
  std::string name;
  std::vector<std::string> trigger_types;
  std::vector<std::string> attribute_types;
  std::vector<RelationType> relations;

  // Trigger types first, then attribute types.
  std::vector<std::string> concept_types() const;
  bool is_trigger(const std::string& type) const;
  bool has_concept(const std::string& type) const;
  const RelationType* relation(const std::string& name) const;
  std::vector<const RelationType*> relations_for_trigger(const std::string& trigger_type) const;
  std::optional<std::string> relation_between(const std::string& trigger_type,
                                              const std::string& attribute_type) const;

  // Throws if type names repeat or a relation references an undeclared type.
  void validate() const;

  // Text form:
  //   name <schema name>
  //   trigger <Type>
  //   attribute <Type>
  //   relation <Name> <TriggerType> <AttributeType>
  static RelationSchema parse(const std::string& contents);
  static RelationSchema load(const std::filesystem::path& path);
  std::string serialize() const;
};

}  // namespace softmrc

#endif  // SOFTMRC_SCHEMA_H_
