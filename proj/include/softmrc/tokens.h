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

#ifndef SOFTMRC_TOKENS_H_
#define SOFTMRC_TOKENS_H_

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace softmrc {

// Reserved vocabulary ids. The anchors mark trigger spans for relation
// queries and never come out of the tokenizer.
inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kUnkId = 1;
inline constexpr std::size_t kSepId = 2;
inline constexpr std::size_t kStartAnchorId = 3;
inline constexpr std::size_t kEndAnchorId = 4;
inline constexpr std::size_t kNumReservedIds = 5;

inline bool is_anchor(std::size_t id) { return id == kStartAnchorId || id == kEndAnchorId; }

struct CharSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  bool operator==(const CharSpan&) const = default;
};

// Token ids plus the character span each token covers in its source text.
// Offsets, not strings, are authoritative.
struct TokenSequence {
  std::vector<std::size_t> ids;
  std::vector<CharSpan> char_spans;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

// Inclusive token span [start, end].
struct TokenSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  auto operator<=>(const TokenSpan&) const = default;
};

}  // namespace softmrc

#endif  // SOFTMRC_TOKENS_H_
