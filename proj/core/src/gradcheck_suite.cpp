#include <random>

#include "msdc/gradcheck.hpp"
#include "msdc/loss_metrics.hpp"
#include "msdc/model.hpp"
#include "msdc/ops.hpp"

namespace msdc {
namespace {

using Vars = std::vector<Var<double>>;

class Source {
 public:
  explicit Source(std::uint64_t seed) : rng_(seed) {}

  Tensor<double> uniform(Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.values()) v = u(rng_);
    return t;
  }

  /// Magnitudes in [gap, 1]: keeps finite differences clear of ReLU's kink.
  Tensor<double> away_from_zero(Shape shape, double gap) {
    Tensor<double> t = uniform(std::move(shape), gap, 1.0);
    for (auto& v : t.values()) v *= (rng_() & 1) ? 1.0 : -1.0;
    return t;
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Model parameters whose names start with one of `prefixes`, exposed as
/// grad-check inputs after the leading non-parameter inputs.
struct ParamInputs {
  ParamSet<double> base;
  std::vector<std::size_t> indices;

  ParamInputs(const ModelConfig& config, std::uint64_t seed, const std::vector<std::string>& prefixes)
      : base(init_params<double>(config, seed)) {
    // Non-trivial affine terms so their gradients are exercised away from the init point.
    std::mt19937_64 rng(seed ^ 0xa5a5);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (auto& p : base.params()) {
      if (p.name.ends_with(".bn.gamma") || p.name.ends_with(".bn.beta") || p.name.ends_with(".bias")) {
        for (auto& v : p.mutable_value().values()) v += u(rng);
      }
    }
    for (std::size_t i = 0; i < base.size(); ++i) {
      for (const auto& prefix : prefixes) {
        if (base.params()[i].name.starts_with(prefix)) {
          indices.push_back(i);
          break;
        }
      }
    }
  }

  void append_values(std::vector<Tensor<double>>& inputs) const {
    for (std::size_t i : indices) inputs.push_back(base.params()[i].value());
  }

  ParamSet<double> bind(const Vars& v, std::size_t first) const {
    ParamSet<double> ps = base.clone();
    for (std::size_t k = 0; k < indices.size(); ++k) ps.rebind(indices[k], v[first + k]);
    return ps;
  }
};

}  // namespace

std::vector<GradCheckReport> run_gradcheck_suite(double tol, double e2e_tol, std::uint64_t seed) {
  std::vector<GradCheckReport> out;
  Source src(seed);
  GradCheckOptions opts;
  opts.seed = seed;
  auto check = [&](const std::string& name, const DifferentiableFn& fn, const std::vector<Tensor<double>>& inputs,
                   double tolerance, const GradCheckOptions& o) {
    GradCheckReport r = grad_check(fn, inputs, tolerance, o);
    r.name = name;
    out.push_back(std::move(r));
  };
  auto op = [&](const std::string& name, const DifferentiableFn& fn, const std::vector<Tensor<double>>& inputs) {
    check(name, fn, inputs, tol, opts);
  };

  op("conv2d", [](const Vars& v) { return convolve(v[0], v[1], v[2], 2, 1, 1); },
     {src.uniform({2, 3, 5, 6}), src.uniform({4, 3, 3, 3}), src.uniform({4})});
  op("conv2d stride 2 no bias", [](const Vars& v) { return convolve(v[0], v[1], Var<double>{}, 2, 2, 2); },
     {src.uniform({2, 2, 7, 8}), src.uniform({3, 2, 5, 5})});
  op("conv3d", [](const Vars& v) { return convolve(v[0], v[1], v[2], 3, 1, 1); },
     {src.uniform({1, 2, 3, 4, 5}), src.uniform({3, 2, 3, 3, 3}), src.uniform({3})});
  op("conv3d stride 2", [](const Vars& v) { return convolve(v[0], v[1], Var<double>{}, 3, 2, 1); },
     {src.uniform({2, 2, 4, 4, 6}), src.uniform({2, 2, 3, 3, 3})});
  op("transposed conv2d", [](const Vars& v) { return transposed_convolve(v[0], v[1], 2); },
     {src.uniform({2, 3, 3, 4}), src.uniform({3, 2, 3, 3})});
  op("transposed conv3d", [](const Vars& v) { return transposed_convolve(v[0], v[1], 3); },
     {src.uniform({1, 3, 2, 3, 3}), src.uniform({3, 2, 3, 3, 3})});

  op("batch_norm train",
     [](const Vars& v) {
       Tensor<double> rm = Tensor<double>::zeros({3}), rv = Tensor<double>::full({3}, 1.0);
       return batch_norm(v[0], v[1], v[2], rm, rv, BatchNormOptions{});
     },
     {src.uniform({2, 3, 4, 5}, -2.0, 3.0), src.uniform({3}, 0.5, 1.5), src.uniform({3})});
  {
    const Tensor<double> mean = src.uniform({3}), var = src.uniform({3}, 0.5, 2.0);
    op("batch_norm infer",
       [mean, var](const Vars& v) {
         Tensor<double> rm = mean, rv = var;
         return batch_norm(v[0], v[1], v[2], rm, rv, BatchNormOptions{1e-5, 0.1, NormMode::infer});
       },
       {src.uniform({2, 3, 2, 2, 3}), src.uniform({3}, 0.5, 1.5), src.uniform({3})});
  }
  op("relu", [](const Vars& v) { return relu(v[0]); }, {src.away_from_zero({2, 3, 4, 4}, 0.05)});
  op("add and scale", [](const Vars& v) { return scale(add(v[0], v[1]), -0.75); },
     {src.uniform({2, 3, 4}), src.uniform({2, 3, 4})});
  op("reshape", [](const Vars& v) { return reshape(v[0], {6, 4}); }, {src.uniform({2, 3, 4})});
  op("softmax_along", [](const Vars& v) { return softmax_along(v[0], 1); }, {src.uniform({2, 5, 3, 3}, -3.0, 3.0)});
  op("concat", [](const Vars& v) { return concat<double>({v[0], v[1]}, 1); },
     {src.uniform({2, 2, 3, 3}), src.uniform({2, 3, 3, 3})});
  op("slice", [](const Vars& v) { return slice(v[0], 2, 1, 2); }, {src.uniform({2, 3, 4, 3})});
  op("resize_bilinear up", [](const Vars& v) { return resize_bilinear(v[0], 8, 12); }, {src.uniform({2, 2, 4, 6})});
  op("resize_bilinear odd", [](const Vars& v) { return resize_bilinear(v[0], 7, 5); }, {src.uniform({1, 2, 4, 6})});
  op("build_cost_volume", [](const Vars& v) { return build_cost_volume(v[0], v[1], 16); },
     {src.uniform({2, 3, 4, 6}), src.uniform({2, 3, 4, 6})});
  op("disparity_expectation", [](const Vars& v) { return disparity_expectation(v[0]); },
     {src.uniform({2, 6, 3, 4}, 0.0, 1.0)});
  op("soft_argmin", [](const Vars& v) { return soft_argmin(v[0]); }, {src.uniform({2, 8, 3, 4}, -3.0, 3.0)});
  op("mean", [](const Vars& v) { return mean(v[0]); }, {src.uniform({3, 5})});
  {
    // Residuals stay at least 0.05 from the critical point; a quarter of the pixels are unlabeled.
    Tensor<double> gt = src.uniform({2, 4, 5}, 1.0, 10.0), pred(gt.shape());
    std::uniform_real_distribution<double> near(0.05, 2.95), far(3.05, 6.0);
    for (std::int64_t i = 0; i < gt.size(); ++i) {
      const double r = (i % 2 ? near(src.rng()) : far(src.rng())) * ((src.rng()() & 1) ? 1.0 : -1.0);
      pred[i] = gt[i] + r;
      if (i % 4 == 3) gt[i] = 0;
    }
    op("smooth_l1_loss", [gt](const Vars& v) { return smooth_l1_loss(v[0], gt); }, {pred});
  }

  // Composite stages and the whole pipeline carry many ReLU kinks and the loss
  // kink at 3: probes are sampled, a shorter step makes straddling a kink
  // rarer, and probes that still straddle one are swapped for others.
  ModelConfig tiny = ModelConfig::with_base(4, 8);
  tiny.dense_block_depth = 2;
  tiny.dense_groups = 2;
  tiny.fusion_channels = 8;
  tiny.levels_3d = 2;
  GradCheckOptions sampled = opts;
  sampled.max_probes_per_input = 6;
  sampled.skip_nonsmooth = true;
  sampled.step = 1e-6;
  {
    ParamInputs pi(tiny, seed + 11, {"match."});
    std::vector<Tensor<double>> inputs{src.uniform({1, 8, 2, 4, 8})};
    pi.append_values(inputs);
    check("match_features",
          [&pi, tiny](const Vars& v) {
            ParamSet<double> ps = pi.bind(v, 1);
            return match_features(v[0], ps, tiny, NormMode::train);
          },
          inputs, e2e_tol, sampled);
  }
  {
    ParamInputs pi(tiny, seed + 12, {"recover."});
    std::vector<Tensor<double>> inputs{src.uniform({1, 8, 2, 4, 8})};
    pi.append_values(inputs);
    check("recover_scale",
          [&pi, tiny](const Vars& v) {
            ParamSet<double> ps = pi.bind(v, 1);
            return recover_scale(v[0], ps, tiny, NormMode::train);
          },
          inputs, e2e_tol, sampled);
  }
  {
    ParamInputs pi(tiny, seed + 13, {""});
    std::vector<Tensor<double>> inputs{src.uniform({1, 3, 16, 32}, 0.0, 1.0), src.uniform({1, 3, 16, 32}, 0.0, 1.0)};
    pi.append_values(inputs);
    const Tensor<double> gt = src.uniform({1, 16, 32}, 1.0, 7.0);
    check("end-to-end loss",
          [&pi, tiny, gt](const Vars& v) {
            ParamSet<double> ps = pi.bind(v, 2);
            return smooth_l1_loss(forward(v[0], v[1], ps, tiny, NormMode::train), gt);
          },
          inputs, e2e_tol, sampled);
  }
  return out;
}

}  // namespace msdc
