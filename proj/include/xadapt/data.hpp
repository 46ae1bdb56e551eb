// Copyright 2026 The xadapt Authors. All Rights Reserved.
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

#include <cstddef>
#include <string>
#include <vector>

namespace xadapt {

/// Frames x feature_dim reals, row-major.
struct FeatureSequence {
  std::size_t frames = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  double at(std::size_t t, std::size_t k) const { return values[t * dim + k]; }
  bool operator==(const FeatureSequence&) const = default;
};

using TokenSequence = std::vector<int>;

struct Utterance {
  std::string utt_id;
  FeatureSequence features;
  TokenSequence tokens;

  bool operator==(const Utterance&) const = default;
};

using TaskBatch = std::vector<Utterance>;

/// Reserved vocabulary entries; language tokens start at kFirstLabel.
namespace vocab {
inline constexpr int kBlank = 0;
inline constexpr int kSos = 1;
inline constexpr int kEos = 2;
inline constexpr int kFirstLabel = 3;
}  // namespace vocab

}  // namespace xadapt
