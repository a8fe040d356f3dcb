#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "msdc/autograd.hpp"

namespace msdc {

/// Moments are stored per parameter in the ParamSet's order.
struct AdamState {
  std::vector<Tensor<float>> m;
  std::vector<Tensor<float>> v;
  std::int64_t t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// Zero moments shaped like `params`.
  static AdamState for_params(const ParamSet<float>& params);
  bool operator==(const AdamState& other) const;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& parameter)
      : std::runtime_error("non-finite gradient in '" + parameter + "'"), parameter_(parameter) {}
  const std::string& parameter() const { return parameter_; }

 private:
  std::string parameter_;
};

/// One bias-corrected Adam update of every parameter, after which gradients
/// are zeroed. Nothing is modified when any gradient is non-finite.
/// Returns the number of parameter tensors updated.
std::size_t adam_step(ParamSet<float>& params, AdamState& state);

}  // namespace msdc
