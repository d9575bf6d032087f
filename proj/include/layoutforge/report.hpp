// SPDX-License-Identifier: Apache-2.0
//
// Line-oriented "key = value" text used for CLI reports and traces.
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "layoutforge/guidance.hpp"

namespace layoutforge {

/// Shortest decimal that round-trips the double.
std::string format_number(double v);
std::string format_list(std::span<const double> values);
std::string format_list(std::span<const int> values);

class Report {
 public:
  void add(std::string_view key, std::string_view value);
  void add(std::string_view key, double value);
  void add(std::string_view key, int value);
  void add(std::string_view key, std::size_t value);
  void add(std::string_view key, bool value);

  const std::string& str() const { return text_; }

 private:
  std::string text_;
};

std::string phase_name(Phase p);

/// One line per step record.
std::string format_trace(const GuidanceTrace& trace);

}  // namespace layoutforge
