#include <gtest/gtest.h>

#include <cmath>

#include "msdc/trainer.hpp"

using namespace msdc;

namespace {

ParamSet<float> one_param(float grad) {
  ParamSet<float> ps;
  ps.add("w", Tensor<float>::full({3}, 0.5f));
  ps.at("w").mutable_grad().fill(grad);
  return ps;
}

ModelConfig tiny_model() {
  ModelConfig c = ModelConfig::with_base(4, 8);
  c.dense_block_depth = 2;
  c.dense_groups = 2;
  c.levels_3d = 2;
  return c;
}

std::vector<StereoSample> tiny_data(int n) {
  std::vector<StereoSample> out;
  for (int i = 0; i < n; ++i) out.push_back(generate_synthetic_pair(random_synth_spec(16, 32, 8, 40 + static_cast<unsigned>(i))));
  return out;
}

TrainRunConfig tiny_run(std::int64_t steps) {
  TrainRunConfig r;
  r.model = tiny_model();
  r.batch_size = 2;
  r.max_steps = steps;
  r.seed = 3;
  return r;
}

}  // namespace

TEST(Adam, FirstStepWithUnitGradient) {
  auto ps = one_param(1.0f);
  auto st = AdamState::for_params(ps);
  EXPECT_EQ(adam_step(ps, st), 1u);
  EXPECT_EQ(st.t, 1);
  const double expected_update = 1e-3 / (1.0 + 1e-8);
  // float storage: within half a ulp of 0.499
  for (float v : ps.at("w").value().values()) EXPECT_NEAR(v, 0.5 - expected_update, 3e-8);
  for (float g : ps.at("w").grad().values()) EXPECT_EQ(g, 0.0f);
  for (float v : st.v[0].values()) EXPECT_GE(v, 0.0f);
}

TEST(Adam, ZeroGradientLeavesValuesExactly) {
  auto ps = one_param(0.0f);
  auto st = AdamState::for_params(ps);
  const auto before = ps.at("w").value();
  for (int i = 0; i < 3; ++i) adam_step(ps, st);
  EXPECT_TRUE(ps.at("w").value().identical(before));
}

TEST(Adam, FirstUpdateFollowsGradientSign) {
  ParamSet<float> ps;
  ps.add("w", Tensor<float>({4}));
  const float g[4] = {3.0f, -0.01f, 1e-6f, -250.0f};
  for (int i = 0; i < 4; ++i) ps.at("w").mutable_grad()[i] = g[i];
  auto st = AdamState::for_params(ps);
  adam_step(ps, st);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(std::signbit(-ps.at("w").value()[i]), std::signbit(g[i]));
}

TEST(Adam, NonFiniteGradientAbortsWithName) {
  auto ps = one_param(1.0f);
  ps.add("bad", Tensor<float>({2}));
  ps.at("bad").mutable_grad()[1] = std::nanf("");
  auto st = AdamState::for_params(ps);
  try {
    adam_step(ps, st);
    FAIL();
  } catch (const NonFiniteGradient& e) {
    EXPECT_EQ(e.parameter(), "bad");
  }
  EXPECT_EQ(st.t, 0);
  EXPECT_EQ(ps.at("w").value()[0], 0.5f);
}

TEST(Adam, UpdatesEveryModelTensor) {
  const ModelConfig c = tiny_model();
  auto ps = init_params<float>(c, 1);
  auto st = AdamState::for_params(ps);
  EXPECT_EQ(adam_step(ps, st), ps.size());
  EXPECT_EQ(st.m.size(), ps.size());
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  auto ck = initial_checkpoint(tiny_run(1));
  ck.step = 17;
  ck.adam.t = 17;
  ck.params.params()[0].mutable_value()[0] = -0.0f;
  ck.adam.m[1][0] = 1e-30f;
  const auto bytes = save_checkpoint(ck);
  const auto back = load_checkpoint(bytes);
  EXPECT_EQ(save_checkpoint(back), bytes);
  EXPECT_EQ(back.config, ck.config);
  EXPECT_EQ(back.step, 17);
  EXPECT_TRUE(back.adam == ck.adam);
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    EXPECT_TRUE(back.params.params()[i].value().identical(ck.params.params()[i].value()));
  }
}

TEST(Checkpoint, NamedErrors) {
  const auto bytes = save_checkpoint(initial_checkpoint(tiny_run(1)));
  auto code = [](std::vector<std::uint8_t> b) {
    try {
      load_checkpoint(b);
    } catch (const CheckpointError& e) {
      return e.code();
    }
    ADD_FAILURE() << "no error";
    return CheckpointErrorCode::mismatch;
  };
  auto flipped = bytes;
  flipped[0] ^= 0x20;
  EXPECT_EQ(code(flipped), CheckpointErrorCode::bad_magic);
  try {
    load_checkpoint(flipped);
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
  }
  auto version = bytes;
  version[4] = 9;
  EXPECT_EQ(code(version), CheckpointErrorCode::unsupported_version);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_EQ(code(truncated), CheckpointErrorCode::corrupt_length);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_EQ(code(trailing), CheckpointErrorCode::corrupt_length);
}

TEST(Training, ZeroStepsReturnsInitialCheckpoint) {
  const auto run = tiny_run(0);
  const auto result = run_training(run, tiny_data(2));
  EXPECT_TRUE(result.log.empty());
  EXPECT_EQ(save_checkpoint(result.checkpoint), save_checkpoint(initial_checkpoint(run)));
}

TEST(Training, IdenticalSeedsGiveIdenticalRuns) {
  const auto data = tiny_data(3);
  const auto a = run_training(tiny_run(4), data), b = run_training(tiny_run(4), data);
  ASSERT_EQ(a.log.size(), 4u);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].loss, b.log[i].loss);
    EXPECT_EQ(a.log[i].epe, b.log[i].epe);
  }
  EXPECT_EQ(save_checkpoint(a.checkpoint), save_checkpoint(b.checkpoint));
}

TEST(Training, ResumeContinuesTrajectoryExactly) {
  const auto data = tiny_data(3);
  const auto whole = run_training(tiny_run(6), data);
  const auto first = run_training(tiny_run(3), data);
  const auto resumed = run_training(tiny_run(6), data, load_checkpoint(save_checkpoint(first.checkpoint)));
  ASSERT_EQ(resumed.log.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(resumed.log[i].step, whole.log[i + 3].step);
    EXPECT_EQ(resumed.log[i].loss, whole.log[i + 3].loss);
  }
  EXPECT_EQ(save_checkpoint(resumed.checkpoint), save_checkpoint(whole.checkpoint));
}

TEST(Training, CropsAndCallbacks) {
  auto run = tiny_run(4);
  run.crop_height = 8;
  run.crop_width = 16;
  run.checkpoint_every = 2;
  run.log_every = 3;
  std::vector<std::int64_t> saved, logged;
  TrainCallbacks cb;
  cb.on_checkpoint = [&](const Checkpoint& ck) { saved.push_back(ck.step); };
  cb.on_log = [&](const TrainLogRecord& r) { logged.push_back(r.step); };
  const auto result = run_training(run, tiny_data(2), std::nullopt, cb);
  EXPECT_EQ(saved, (std::vector<std::int64_t>{2, 4}));
  EXPECT_EQ(logged, (std::vector<std::int64_t>{3, 4}));
  EXPECT_EQ(result.checkpoint.step, 4);
}

TEST(Training, ShapeMismatchAbortsBeforeUpdating) {
  auto data = tiny_data(2);
  data.push_back(generate_synthetic_pair(random_synth_spec(24, 32, 8, 1)));
  EXPECT_THROW(run_training(tiny_run(2), data), ShapeError);
  auto odd = std::vector<StereoSample>{generate_synthetic_pair(random_synth_spec(12, 32, 8, 1))};
  EXPECT_THROW(run_training(tiny_run(2), odd), std::exception);
}

TEST(Training, SampleStreamVisitsEachSamplePerEpoch) {
  std::vector<int> seen(5, 0);
  for (std::int64_t step = 0; step < 5; ++step)
    for (int slot = 0; slot < 2; ++slot) ++seen[static_cast<std::size_t>(sample_for_slot(5, 2, step, slot, 9))];
  for (int s : seen) EXPECT_EQ(s, 2);  // 10 draws = 2 epochs
}

TEST(TrainLog, CsvFormat) {
  EXPECT_EQ(train_log_header(), "step,loss,epe,seconds");
  EXPECT_EQ(to_csv_row(TrainLogRecord{12, 0.5, 1.25, 0}), "12,0.5,1.25,0.000000");
}

TEST(Evaluation, PerfectPredictorAndAggregateMean) {
  const auto data = tiny_data(3);
  const auto ev = evaluate_predictions([](const StereoSample& s) { return s.gt; }, data);
  EXPECT_EQ(ev.status, 0);
  for (const auto& s : ev.samples) {
    EXPECT_EQ(s.report.mae, 0.0);
    for (int k = 1; k <= 5; ++k) EXPECT_EQ(s.report.rate_above(k), 0.0);
  }
  const auto off = evaluate_predictions(
      [](const StereoSample& s) {
        Tensor<float> p = s.gt;
        for (auto& v : p.values()) v += 1.5f;
        return p;
      },
      data);
  double sum = 0;
  for (const auto& s : off.samples) sum += s.report.mae;
  EXPECT_NEAR(off.mean.mae, sum / 3.0, 1e-12);
}

TEST(Evaluation, IncompatibleShapesAreReportedPerSample) {
  auto data = tiny_data(2);
  data.push_back(generate_synthetic_pair(random_synth_spec(20, 32, 8, 2)));
  const auto ck = initial_checkpoint(tiny_run(1));
  const auto ev = evaluate_model(ck.params, ck.config, data);
  EXPECT_EQ(ev.status, 1);
  EXPECT_TRUE(ev.samples[0].ok);
  EXPECT_FALSE(ev.samples[2].ok);
  EXPECT_FALSE(ev.samples[2].error.empty());
}

TEST(Evaluation, PureAndInferenceMode) {
  const auto data = tiny_data(2);
  const auto ck = initial_checkpoint(tiny_run(1));
  const auto before = save_checkpoint(ck);
  const auto a = evaluate_model(ck.params, ck.config, data), b = evaluate_model(ck.params, ck.config, data);
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_EQ(a.samples[i].report.to_csv_row(), b.samples[i].report.to_csv_row());
  EXPECT_EQ(save_checkpoint(ck), before);
}
