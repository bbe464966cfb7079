// Copyright 2026 The gradinv Authors
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

#pragma once

#include <stdexcept>
#include <string>

namespace gradinv {

// Base of every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform for an op.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN or infinity produced by a forward computation.
class NumericFault : public Error {
 public:
  using Error::Error;
};

// create_graph was requested through an op with no double-backward rule.
class UnsupportedOpError : public Error {
 public:
  using Error::Error;
};

// Inconsistent model/parameter layout (missing final FC, misaligned sets).
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or schema violations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input files (dataset, checkpoint, archive).
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace gradinv
