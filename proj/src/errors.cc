// Copyright 2026 The Deflate Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "deflate/errors.h"

namespace deflate {

const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParameter:
      return "parameter error";
    case ErrorKind::kDimension:
      return "dimension error";
    case ErrorKind::kDegenerateInput:
      return "degenerate input";
    case ErrorKind::kDegenerateGap:
      return "degenerate gap";
    case ErrorKind::kNumeric:
      return "numeric error";
    case ErrorKind::kWarmStart:
      return "warm-start error";
    case ErrorKind::kDivergence:
      return "divergence";
    case ErrorKind::kSchedule:
      return "schedule error";
    case ErrorKind::kDomain:
      return "domain error";
    case ErrorKind::kNonUniqueFit:
      return "nonunique fit";
    case ErrorKind::kNoFit:
      return "no fit";
    case ErrorKind::kConfig:
      return "config error";
    case ErrorKind::kIo:
      return "i/o error";
  }
  return "error";
}

}  // namespace deflate
