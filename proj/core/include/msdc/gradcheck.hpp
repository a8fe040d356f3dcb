#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "msdc/autograd.hpp"

namespace msdc {

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor);
  /// keeps entries whose true gradient is ~0 from dividing roundoff by zero.
  double floor = 1e-6;
  /// Coordinates probed per input; 0 probes every coordinate.
  std::int64_t max_probes_per_input = 0;
  /// Replace probes whose forward and backward one-sided slopes disagree by
  /// more than the tolerance (a kink within one step) with other coordinates.
  /// Fails when fewer than half of the requested probes are smooth.
  bool skip_nonsmooth = false;
  std::uint64_t seed = 0x5eed;
};

struct GradCheckReport {
  std::string name;
  double tolerance = 0;
  std::vector<double> max_relative_error;  // one per input
  bool passed = false;
  std::int64_t skipped_probes = 0;
  std::string failure;  // set when a value or gradient is non-finite, or on error
  double seconds = 0;

  double worst() const;
  std::string summary() const;
};

using DifferentiableFn = std::function<Var<double>(const std::vector<Var<double>>&)>;

/// Compares reverse-mode gradients of sum_i w_i * f(inputs)_i (fixed random
/// weights w) against central differences.
GradCheckReport grad_check(const DifferentiableFn& fn, const std::vector<Tensor<double>>& inputs, double tolerance,
                           const GradCheckOptions& options = {});

/// Every backward rule the network uses, on small randomized tensors, plus
/// the end-to-end loss of the full pipeline (checked at `end_to_end_tolerance`).
std::vector<GradCheckReport> run_gradcheck_suite(double tolerance, double end_to_end_tolerance,
                                                 std::uint64_t seed = 1);

}  // namespace msdc
