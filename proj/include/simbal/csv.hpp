// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace simbal {

// Shortest round-trip decimal form; "nan"/"inf" for non-finite values.
std::string format_double(double v);

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  // "# key=value ..." provenance line.
  void comment(const std::string& text);
  void header(const std::vector<std::string>& columns) { row(columns); }
  void row(const std::vector<std::string>& cells);

 private:
  std::ostream& out_;
};

}  // namespace simbal
