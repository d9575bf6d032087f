// SPDX-License-Identifier: Apache-2.0
#include "layoutforge/report.hpp"

#include <array>
#include <charconv>

namespace layoutforge {

std::string format_number(double v) {
  if (v == 0.0) return "0";  // folds -0
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string format_list(std::span<const double> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_number(values[i]);
  }
  return out;
}

std::string format_list(std::span<const int> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

void Report::add(std::string_view key, std::string_view value) {
  text_.append(key);
  text_ += " = ";
  text_.append(value);
  text_ += '\n';
}

void Report::add(std::string_view key, double value) { add(key, format_number(value)); }
void Report::add(std::string_view key, int value) { add(key, std::to_string(value)); }
void Report::add(std::string_view key, std::size_t value) { add(key, std::to_string(value)); }
void Report::add(std::string_view key, bool value) { add(key, std::string_view(value ? "true" : "false")); }

std::string phase_name(Phase p) {
  switch (p) {
    case Phase::excite:
      return "excite";
    case Phase::rearrange:
      return "rearrange";
    case Phase::follow:
      return "follow";
  }
  return "unknown";
}

std::string format_trace(const GuidanceTrace& trace) {
  std::string out;
  for (const StepRecord& r : trace.records) {
    out += "t=" + std::to_string(r.t) + " phase=" + phase_name(r.phase);
    if (r.phase1) {
      out += " loss_be=" + format_number(r.phase1->be);
      out += " loss_ol_total=" + format_number(r.phase1->ol_total);
      out += " loss_norm_total=" + format_number(r.phase1->norm_total);
      out += " loss1_total=" + format_number(r.phase1->total);
    }
    if (r.phase3) {
      out += " loss_inside=" + format_number(r.phase3->inside);
      out += " loss_fill=" + format_number(r.phase3->fill);
      out += " loss3_total=" + format_number(r.phase3->total);
    }
    if (r.phase == Phase::rearrange && trace.plan) {
      out += " overlap_before=" + std::to_string(trace.plan->overlap_before);
      out += " overlap_after=" + std::to_string(trace.plan->overlap_after);
    }
    out += " max_attention=" + format_list(r.max_attention) + '\n';
  }
  return out;
}

}  // namespace layoutforge
