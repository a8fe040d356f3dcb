#include "msdc/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "msdc/ops.hpp"

namespace msdc {

double GradCheckReport::worst() const {
  double w = 0;
  for (double e : max_relative_error) w = std::max(w, e);
  return w;
}

std::string GradCheckReport::summary() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-28s %s  max_rel_err=%.3e  tol=%.0e  (%.2fs)", name.c_str(),
                passed ? "PASS" : "FAIL", worst(), tolerance, seconds);
  std::string s = buf;
  if (skipped_probes) s += "  skipped " + std::to_string(skipped_probes) + " non-smooth probe(s)";
  if (!failure.empty()) s += "  " + failure;
  return s;
}

GradCheckReport grad_check(const DifferentiableFn& fn, const std::vector<Tensor<double>>& inputs, double tolerance,
                           const GradCheckOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  GradCheckReport report;
  report.tolerance = tolerance;
  report.max_relative_error.assign(inputs.size(), 0.0);
  std::mt19937_64 rng(options.seed);

  auto finish = [&](bool ok) {
    report.passed = ok;
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
  };

  try {
    std::vector<Var<double>> leaves;
    for (const auto& t : inputs) leaves.emplace_back(t, true);
    const Var<double> out = fn(leaves);
    if (auto bad = out.value().first_non_finite()) {
      report.failure = "non-finite output at flat index " + std::to_string(*bad);
      return finish(false);
    }
    std::uniform_real_distribution<double> unit(0.5, 1.5);
    Tensor<double> weights(out.shape());
    for (auto& w : weights.values()) w = (rng() & 1 ? 1.0 : -1.0) * unit(rng);
    backward(weighted_sum(out, weights));

    auto eval = [&](const std::vector<Tensor<double>>& xs) {
      NoGradGuard guard;
      std::vector<Var<double>> vs;
      for (const auto& t : xs) vs.emplace_back(t, false);
      const Var<double> y = fn(vs);
      double acc = 0;
      for (std::int64_t i = 0; i < weights.size(); ++i) acc += weights[i] * y.value()[i];
      return acc;
    };

    std::vector<Tensor<double>> probe = inputs;
    const double center = options.skip_nonsmooth ? eval(probe) : 0.0;
    bool ok = true;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const Tensor<double>& analytic = leaves[k].grad();
      if (auto bad = analytic.first_non_finite()) {
        report.failure = "non-finite gradient of input " + std::to_string(k) + " at flat index " + std::to_string(*bad);
        return finish(false);
      }
      std::vector<std::int64_t> coords(static_cast<std::size_t>(inputs[k].size()));
      std::iota(coords.begin(), coords.end(), 0);
      const bool sampled =
          options.max_probes_per_input > 0 && static_cast<std::int64_t>(coords.size()) > options.max_probes_per_input;
      if (sampled) std::shuffle(coords.begin(), coords.end(), rng);
      const std::int64_t wanted = sampled ? options.max_probes_per_input : static_cast<std::int64_t>(coords.size());
      std::int64_t accepted = 0;
      for (std::int64_t i : coords) {
        if (accepted == wanted) break;
        const double original = probe[k][i];
        probe[k][i] = original + options.step;
        const double up = eval(probe);
        probe[k][i] = original - options.step;
        const double down = eval(probe);
        probe[k][i] = original;
        if (!std::isfinite(up) || !std::isfinite(down)) {
          report.failure = "non-finite value while probing input " + std::to_string(k) + " index " + std::to_string(i);
          return finish(false);
        }
        if (options.skip_nonsmooth) {
          // One-sided slopes that disagree mean a kink lies within one step.
          const double right = (up - center) / options.step, left = (center - down) / options.step;
          if (std::abs(right - left) > tolerance * std::max({std::abs(right), std::abs(left), options.floor})) {
            ++report.skipped_probes;
            continue;
          }
        }
        ++accepted;
        const double numeric = (up - down) / (2.0 * options.step);
        const double a = analytic[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
        const double rel = std::abs(a - numeric) / denom;
        report.max_relative_error[k] = std::max(report.max_relative_error[k], rel);
        if (rel >= tolerance) ok = false;
      }
      if (2 * accepted < wanted) {
        report.failure = "input " + std::to_string(k) + ": only " + std::to_string(accepted) + " of " +
                         std::to_string(wanted) + " probes were smooth";
        ok = false;
      }
    }
    return finish(ok);
  } catch (const std::exception& e) {
    report.failure = e.what();
    return finish(false);
  }
}

}  // namespace msdc
