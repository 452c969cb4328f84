// Copyright 2026 The fusedet Authors. All Rights Reserved.
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

#include <stdexcept>
#include <string>

namespace fusedet {

enum class Errc {
  TruncatedFile,
  NonFiniteValue,
  MissingKey,
  MalformedMatrix,
  FieldCount,
  NumericParse,
  UnsupportedDtype,
  UnsupportedRank,
  BadMagic,
  TruncatedPixelData,
  IoFailure,
  SingularTransform,
  EmptyVoxel,
  BatchTooSmall,
  EmptyVoxelRow,
  ShapeMismatch,
  NoVisiblePoints,
  IndivisibleGrid,
  NonPositiveSize,
  NoNegatives,
  DivergedLoss,
  SceneMismatch,
  InvalidConfig,
};

const char* to_string(Errc code) noexcept;

// Every failure raised by the library carries one of the codes above so
// callers (and tests) can branch on the kind rather than the message.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace fusedet
