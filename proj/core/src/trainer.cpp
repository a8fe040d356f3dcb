#include "msdc/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "msdc/dataset.hpp"
#include "msdc/parallel.hpp"

namespace msdc {
namespace {

std::uint64_t crop_seed(std::uint64_t seed, std::int64_t step, int slot) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                    static_cast<std::uint32_t>(slot), 0xc709u};
  std::mt19937_64 rng(seq);
  return rng();
}

}  // namespace

void TrainRunConfig::validate() const {
  model.validate();
  if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
  if (max_steps < 0) throw std::invalid_argument("step count must not be negative");
  if (crop_height < 0 || crop_width < 0 || (crop_height == 0) != (crop_width == 0)) {
    throw std::invalid_argument("crop needs both height and width, or neither");
  }
  if (checkpoint_every < 0 || log_every < 1) throw std::invalid_argument("cadences must be positive");
  if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
}

std::string train_log_header() { return "step,loss,epe,seconds"; }

std::string to_csv_row(const TrainLogRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.6f", static_cast<long long>(r.step), r.loss, r.epe, r.seconds);
  return buf;
}

Checkpoint initial_checkpoint(const TrainRunConfig& config) {
  config.validate();
  Checkpoint ck;
  ck.config = config.model;
  ck.params = init_params<float>(config.model, config.seed);
  ck.adam = AdamState::for_params(ck.params);
  ck.adam.lr = config.learning_rate;
  ck.rng_seed = config.seed;
  return ck;
}

std::int64_t sample_for_slot(std::int64_t n, int batch_size, std::int64_t step, int slot, std::uint64_t seed) {
  const std::int64_t position = step * batch_size + slot;
  const std::int64_t epoch = position / n;
  return epoch_order(n, epoch, seed)[static_cast<std::size_t>(position % n)];
}

TrainResult run_training(const TrainRunConfig& config, const std::vector<StereoSample>& dataset,
                         const std::optional<Checkpoint>& resume, const TrainCallbacks& callbacks) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("training set is empty");

  TrainResult result;
  if (resume) {
    if (!(resume->config == config.model)) throw std::invalid_argument("checkpoint was trained with another model configuration");
    result.checkpoint.config = resume->config;
    result.checkpoint.params = resume->params.clone();
    result.checkpoint.adam = resume->adam;
    result.checkpoint.step = resume->step;
    result.checkpoint.rng_seed = resume->rng_seed;
  } else {
    result.checkpoint = initial_checkpoint(config);
  }
  Checkpoint& ck = result.checkpoint;
  const ModelConfig& model = ck.config;
  const auto n = static_cast<std::int64_t>(dataset.size());

  // Shape problems surface here, before any parameter changes.
  const std::int64_t H = config.crop_height ? config.crop_height : dataset.front().height();
  const std::int64_t W = config.crop_width ? config.crop_width : dataset.front().width();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    dataset[i].validate();
    const bool fits = config.crop_height ? (dataset[i].height() >= H && dataset[i].width() >= W)
                                         : (dataset[i].height() == H && dataset[i].width() == W);
    if (!fits) {
      throw ShapeError("sample " + std::to_string(i) + " is " + std::to_string(dataset[i].height()) + "x" +
                       std::to_string(dataset[i].width()) + ", training needs " + std::to_string(H) + "x" +
                       std::to_string(W));
    }
  }
  model.check_input(H, W);

  const bool deterministic = thread_count() == 1;
  using Clock = std::chrono::steady_clock;
  while (ck.step < config.max_steps) {
    const auto t0 = Clock::now();
    std::vector<StereoSample> crops;
    std::vector<const StereoSample*> batch;
    crops.reserve(static_cast<std::size_t>(config.batch_size));
    for (int slot = 0; slot < config.batch_size; ++slot) {
      const StereoSample& s = dataset[static_cast<std::size_t>(sample_for_slot(n, config.batch_size, ck.step, slot, ck.rng_seed))];
      if (config.crop_height) {
        crops.push_back(random_crop(s, H, W, crop_seed(ck.rng_seed, ck.step, slot)));
        batch.push_back(&crops.back());
      } else {
        batch.push_back(&s);
      }
    }
    const StereoBatch b = stack_samples(batch);

    Var<float> pred = forward(Var<float>(b.left), Var<float>(b.right), ck.params, model, NormMode::train);
    Var<float> loss = smooth_l1_loss(pred, b.gt, b.valid);
    backward(loss);

    TrainLogRecord rec;
    rec.loss = loss.value()[0];
    rec.epe = disparity_metrics<float>(pred.value().values(), b.gt.values(), b.valid).mae;
    adam_step(ck.params, ck.adam);
    ++ck.step;
    rec.step = ck.step;
    rec.seconds = deterministic ? 0.0 : std::chrono::duration<double>(Clock::now() - t0).count();

    if (ck.step % config.log_every == 0 || ck.step == config.max_steps) {
      result.log.push_back(rec);
      if (callbacks.on_log) callbacks.on_log(rec);
    }
    if (config.checkpoint_every && ck.step % config.checkpoint_every == 0 && callbacks.on_checkpoint) {
      callbacks.on_checkpoint(ck);
    }
  }
  return result;
}

Tensor<float> predict_disparity(const ParamSet<float>& params, const ModelConfig& config, const StereoSample& sample) {
  config.check_input(sample.height(), sample.width());
  NoGradGuard no_grad;
  ParamSet<float> view = params;  // shares weights; infer mode leaves buffers untouched
  const StereoBatch b = stack_samples({&sample});
  Var<float> pred = forward(Var<float>(b.left), Var<float>(b.right), view, config, NormMode::infer);
  return pred.value().reshaped({sample.height(), sample.width()});
}

Evaluation evaluate_predictions(const Predictor& predictor, const std::vector<StereoSample>& dataset) {
  Evaluation ev;
  std::int64_t good = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    SampleEvaluation se;
    se.index = static_cast<std::int64_t>(i);
    try {
      const StereoSample& s = dataset[i];
      const Tensor<float> pred = predictor(s);
      if (pred.shape() != s.gt.shape()) {
        throw ShapeError("prediction " + shape_str(pred.shape()) + " does not match gt " + shape_str(s.gt.shape()));
      }
      se.report = disparity_metrics<float>(pred.values(), s.gt.values(), s.valid);
      se.ok = true;
    } catch (const std::exception& e) {
      se.error = e.what();
    }
    if (se.ok) {
      ++good;
      MetricReport& m = ev.mean;
      m.mae += se.report.mae;
      m.rms += se.report.rms;
      for (std::size_t k = 0; k < m.rate_gt.size(); ++k) m.rate_gt[k] += se.report.rate_gt[k];
      m.d1 += se.report.d1;
      m.valid_count += se.report.valid_count;
    } else {
      ++ev.status;
    }
    ev.samples.push_back(std::move(se));
  }
  if (good > 0) {
    MetricReport& m = ev.mean;
    const double g = static_cast<double>(good);
    m.mae /= g;
    m.rms /= g;
    for (auto& r : m.rate_gt) r /= g;
    m.d1 /= g;
  }
  return ev;
}

Evaluation evaluate_model(const ParamSet<float>& params, const ModelConfig& config,
                          const std::vector<StereoSample>& dataset) {
  return evaluate_predictions([&](const StereoSample& s) { return predict_disparity(params, config, s); }, dataset);
}

}  // namespace msdc
