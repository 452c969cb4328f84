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

#include "fusedet/error.hpp"

namespace fusedet {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::MissingKey: return "MissingKey";
    case Errc::MalformedMatrix: return "MalformedMatrix";
    case Errc::FieldCount: return "FieldCount";
    case Errc::NumericParse: return "NumericParse";
    case Errc::UnsupportedDtype: return "UnsupportedDtype";
    case Errc::UnsupportedRank: return "UnsupportedRank";
    case Errc::BadMagic: return "BadMagic";
    case Errc::TruncatedPixelData: return "TruncatedPixelData";
    case Errc::IoFailure: return "IoFailure";
    case Errc::SingularTransform: return "SingularTransform";
    case Errc::EmptyVoxel: return "EmptyVoxel";
    case Errc::BatchTooSmall: return "BatchTooSmall";
    case Errc::EmptyVoxelRow: return "EmptyVoxelRow";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NoVisiblePoints: return "NoVisiblePoints";
    case Errc::IndivisibleGrid: return "IndivisibleGrid";
    case Errc::NonPositiveSize: return "NonPositiveSize";
    case Errc::NoNegatives: return "NoNegatives";
    case Errc::DivergedLoss: return "DivergedLoss";
    case Errc::SceneMismatch: return "SceneMismatch";
    case Errc::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace fusedet
