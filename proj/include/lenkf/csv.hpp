// Copyright 2026 The lenkf Authors
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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "lenkf/error.hpp"

namespace lenkf {

/// Formats a double with 17 significant digits ("%.17g"), '.' decimal point.
std::string format_real(double v);

/// RFC-4180 quoting: fields containing ',', '"', CR or LF are quoted.
std::string csv_escape(std::string_view s);

/// Minimal RFC-4180 writer with LF line endings.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& file, const std::vector<std::string>& header);

  void begin_row() { first_ = true; }
  void end_row() { out_ << '\n'; }

  template <typename T>
  void field(const T& v) {
    if (!first_) out_ << ',';
    first_ = false;
    if constexpr (std::is_floating_point_v<T>) {
      out_ << format_real(static_cast<double>(v));
    } else if constexpr (std::is_integral_v<T>) {
      out_ << std::to_string(v);
    } else {
      out_ << csv_escape(std::string_view(v));
    }
  }

  template <typename... Ts>
  void row(const Ts&... vs) {
    begin_row();
    (field(vs), ...);
    end_row();
  }

  void flush();

 private:
  std::ofstream out_;
  bool first_ = true;
};

}  // namespace lenkf
