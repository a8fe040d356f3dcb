#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "msdc/checkpoint.hpp"
#include "msdc/loss_metrics.hpp"
#include "msdc/sample.hpp"

namespace msdc {

struct TrainRunConfig {
  // Published recipe, kept for reference; desk-scale runs override them.
  static constexpr int kReferenceBatchSize = 8;
  static constexpr int kSceneFlowEpochs = 50;
  static constexpr int kKittiFinetuneEpochs = 1000;
  static constexpr int kReferenceCropHeight = 256;
  static constexpr int kReferenceCropWidth = 512;

  ModelConfig model;
  int batch_size = kReferenceBatchSize;
  /// Total optimizer steps; a resumed run stops at the same absolute step.
  std::int64_t max_steps = 0;
  /// Shuffle, crop and initialization seed.
  std::uint64_t seed = 0;
  /// Random crop size; 0 trains on whole samples.
  std::int64_t crop_height = 0;
  std::int64_t crop_width = 0;
  /// Steps between checkpoint callbacks; 0 disables them.
  std::int64_t checkpoint_every = 0;
  /// Steps between log records; the last step is always logged.
  std::int64_t log_every = 1;
  double learning_rate = 1e-3;

  void validate() const;
};

struct TrainLogRecord {
  std::int64_t step = 0;  // 1-based count of completed optimizer steps
  double loss = 0;
  double epe = 0;      // batch end-point error before the update
  double seconds = 0;  // wall time of the step; 0 in single-thread deterministic mode
};

/// "step,loss,epe,seconds"
std::string train_log_header();
std::string to_csv_row(const TrainLogRecord& record);

struct TrainCallbacks {
  std::function<void(const TrainLogRecord&)> on_log;
  std::function<void(const Checkpoint&)> on_checkpoint;
};

struct TrainResult {
  std::vector<TrainLogRecord> log;
  Checkpoint checkpoint;
};

/// Fresh model and optimizer for `config` at step 0.
Checkpoint initial_checkpoint(const TrainRunConfig& config);

/// Which sample fills batch slot `slot` at optimizer step `step` (0-based):
/// consecutive epochs each visit every sample once in a seeded order.
std::int64_t sample_for_slot(std::int64_t dataset_size, int batch_size, std::int64_t step, int slot,
                             std::uint64_t seed);

/// Adam on the smooth-L1 loss. With `resume`, training continues from its
/// step, weights, moments and data-stream seed.
TrainResult run_training(const TrainRunConfig& config, const std::vector<StereoSample>& dataset,
                         const std::optional<Checkpoint>& resume = std::nullopt, const TrainCallbacks& callbacks = {});

/// (H, W) disparity from batch-norm running statistics, without recording a graph.
Tensor<float> predict_disparity(const ParamSet<float>& params, const ModelConfig& config, const StereoSample& sample);

using Predictor = std::function<Tensor<float>(const StereoSample&)>;

struct SampleEvaluation {
  std::int64_t index = 0;
  bool ok = false;
  MetricReport report;
  std::string error;
};

struct Evaluation {
  std::vector<SampleEvaluation> samples;
  /// Field-wise mean over successful samples; valid_count is their total.
  MetricReport mean;
  /// 0 when every sample was evaluated, otherwise the number of failures.
  int status = 0;
};

Evaluation evaluate_predictions(const Predictor& predictor, const std::vector<StereoSample>& dataset);
Evaluation evaluate_model(const ParamSet<float>& params, const ModelConfig& config,
                          const std::vector<StereoSample>& dataset);

}  // namespace msdc
