// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <string_view>

#include "kgc/autograd.hpp"

namespace kgc {

/// Anything that maps a piece of text to a fixed-size pooled vector. The
/// desk-scale transformer implements it; a pretrained model adapter can too.
class SentenceEncoder {
 public:
  virtual ~SentenceEncoder() = default;
  virtual Eigen::Index dim() const = 0;
  virtual Vector encode(std::string_view text) const = 0;
  /// Identifies the weights; folded into every artifact built from them.
  virtual std::string id() const = 0;
};

}  // namespace kgc
