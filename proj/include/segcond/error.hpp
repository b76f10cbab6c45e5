// Copyright 2026 The segcond Authors
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

namespace segcond {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SEGCOND_DEFINE_ERROR(Name)                  \
  class Name : public Error {                       \
   public:                                          \
    explicit Name(const std::string& what_arg)      \
        : Error(std::string(#Name ": ") + what_arg) {} \
  }

SEGCOND_DEFINE_ERROR(LengthMismatch);
SEGCOND_DEFINE_ERROR(DimensionMismatch);
SEGCOND_DEFINE_ERROR(InvalidArgument);
SEGCOND_DEFINE_ERROR(UnknownEntityId);
SEGCOND_DEFINE_ERROR(RangeError);
SEGCOND_DEFINE_ERROR(GammaOutOfRange);
SEGCOND_DEFINE_ERROR(DimensionError);
SEGCOND_DEFINE_ERROR(UnreachableQuery);
SEGCOND_DEFINE_ERROR(ShapeMismatch);
SEGCOND_DEFINE_ERROR(EmptySet);
SEGCOND_DEFINE_ERROR(ManifestParseError);
SEGCOND_DEFINE_ERROR(ImageIoError);

#undef SEGCOND_DEFINE_ERROR

}  // namespace segcond
