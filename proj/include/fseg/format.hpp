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

#include <charconv>
#include <string>
#include <system_error>

#include "fseg/error.hpp"

namespace fseg {

/// Shortest decimal that parses back to the same value ("inf", "-inf", "nan" for specials).
template <typename Float>
std::string shortest(Float v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw FormatError("float formatting failed");
  return std::string(buf, end);
}

template <typename Number>
Number parse_number(const std::string& text) {
  Number v{};
  const char* first = text.data();
  const char* last = first + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) throw FormatError("cannot parse number '" + text + "'");
  return v;
}

}  // namespace fseg
