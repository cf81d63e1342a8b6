#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clci/autodiff.hpp"

namespace clci::cli {

struct GradCheckCase {
  std::string op;       // e.g. "conv2d"
  std::string variant;  // configuration and differentiated argument
  GradCheckReport report;
};

// Every differentiable op the model uses, plus the ConvLSTM step.
const std::vector<std::string>& gradcheck_op_names();

// Name of the deliberately wrong op added by `inject_fault`.
inline constexpr const char* kFaultyOp = "faulty_square";

// Runs double-precision gradient checks for `ops` (names from
// gradcheck_op_names()). Each case differentiates a random weighted sum of the
// op output, so every input element receives an O(1) gradient. With
// `inject_fault` a squaring op whose backward rule is off by a factor is
// checked as well. Throws ConfigError for unknown op names.
std::vector<GradCheckCase> run_gradcheck_suite(const std::vector<std::string>& ops,
                                               std::uint64_t seed,
                                               double epsilon, double tolerance,
                                               bool inject_fault = false);

}  // namespace clci::cli
