/*
 *  Copyright 2026 The fseg Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace fseg {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or map sizes do not agree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value is outside the domain an operation accepts (bad config, label id, factor...).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// An operation was called on state that has not been prepared for it
/// (backward without forward cache, uncalibrated ReLUMax, missing AMMS stats).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File does not start with the expected magic bytes.
class MagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// File format version this build cannot read.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// File ended before all declared content was read.
class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Training diverged (non-finite loss).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace fseg
