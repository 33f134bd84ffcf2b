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

#ifndef DEFLATE_ERRORS_H_
#define DEFLATE_ERRORS_H_

#include <stdexcept>
#include <string>

namespace deflate {

enum class ErrorKind {
  kParameter,
  kDimension,
  kDegenerateInput,
  kDegenerateGap,
  kNumeric,
  kWarmStart,
  kDivergence,
  kSchedule,
  kDomain,
  kNonUniqueFit,
  kNoFit,
  kConfig,
  kIo,
};

const char* ErrorKindName(ErrorKind kind);

// All library failures are reported through this type (or a subclass).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + detail),
        kind_(kind),
        detail_(detail) {}

  ErrorKind kind() const { return kind_; }
  // Message without the kind prefix.
  const std::string& detail() const { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace deflate

#endif  // DEFLATE_ERRORS_H_
