#include "msdc_cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "msdc/checkpoint.hpp"
#include "msdc/colormap.hpp"
#include "msdc/dataset.hpp"
#include "msdc/gradcheck.hpp"
#include "msdc/kitti.hpp"
#include "msdc/trainer.hpp"

namespace fs = std::filesystem;

namespace msdc::cli {
namespace {

/// Thrown by subcommands for failed checks (exit 2) as opposed to bad input.
struct VerificationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelFlags {
  int base_channels = 32;
  int max_disparity = 192;
  int levels_3d = 4;
  std::string variant = "full";

  void attach(CLI::App& app) {
    app.add_option("--base-channels", base_channels, "Unary feature width F")->capture_default_str();
    app.add_option("--max-disparity", max_disparity, "Disparity range D (multiple of 4)")->capture_default_str();
    app.add_option("--levels-3d", levels_3d, "Resolution levels of the 3D matcher")->capture_default_str();
    app.add_option("--variant", variant, "Ablation variant")
        ->check(CLI::IsMember({"full", "2d", "3d", "both"}))
        ->capture_default_str();
  }

  ModelConfig build() const {
    ModelConfig c = ModelConfig::with_base(base_channels, max_disparity);
    c.levels_3d = levels_3d;
    c.variant = parse_variant(variant);
    c.validate();
    return c;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

std::string step_name(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%06lld.ckpt", static_cast<long long>(step));
  return buf;
}

/// Views under left/ and right/ by file stem; ground truth is not needed.
std::vector<std::pair<std::string, StereoSample>> read_views(const fs::path& root) {
  std::vector<fs::path> lefts;
  for (const auto& e : fs::directory_iterator(root / "left")) {
    if (e.is_regular_file() && e.path().extension() == ".png") lefts.push_back(e.path());
  }
  std::sort(lefts.begin(), lefts.end());
  std::vector<std::pair<std::string, StereoSample>> out;
  for (const auto& lp : lefts) {
    const std::string stem = lp.stem().string();
    StereoSample s;
    s.left = normalize_image(read_png(lp));
    s.right = normalize_image(read_png(root / "right" / (stem + ".png")));
    if (s.left.shape() != s.right.shape()) throw ShapeError("views of " + stem + " differ in size");
    s.gt = Tensor<float>({s.left.dim(1), s.left.dim(2)});
    s.valid.assign(static_cast<std::size_t>(s.gt.size()), 0);
    out.emplace_back(stem, std::move(s));
  }
  if (out.empty()) throw std::runtime_error("no images under " + (root / "left").string());
  return out;
}

using Runner = std::function<int(std::ostream&, std::ostream&)>;

Runner synth_cmd(CLI::App& app) {
  struct Opts {
    std::string out;
    int count = 8, height = 64, width = 128, max_disparity = 32;
    std::uint64_t seed = 0;
  };
  auto o = std::make_shared<Opts>();
  app.description("Write a random-dot stereo dataset with exact ground truth");
  app.add_option("--out", o->out, "Dataset directory")->required();
  app.add_option("--count", o->count, "Number of pairs")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--height", o->height)->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--width", o->width)->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--max-disparity", o->max_disparity, "Disparities are drawn from [1, D)")->capture_default_str();
  app.add_option("--seed", o->seed)->capture_default_str();
  return [o](std::ostream& out, std::ostream&) {
    std::vector<StereoSample> samples;
    for (int i = 0; i < o->count; ++i) {
      samples.push_back(generate_synthetic_pair(
          random_synth_spec(o->height, o->width, o->max_disparity, o->seed * 1000003u + static_cast<unsigned>(i))));
    }
    write_dataset(o->out, samples);
    out << "wrote " << samples.size() << " pairs to " << o->out << "\n";
    return kOk;
  };
}

Runner train_cmd(CLI::App& app) {
  struct Opts {
    ModelFlags model;
    std::string data, out, resume;
    TrainRunConfig run;
  };
  auto o = std::make_shared<Opts>();
  o->run.max_steps = 100;
  app.description("Train on a dataset directory; writes train_log.csv and checkpoints");
  app.add_option("--data", o->data, "Dataset directory")->required();
  app.add_option("--out", o->out, "Output directory")->required();
  app.add_option("--steps", o->run.max_steps, "Total optimizer steps")->capture_default_str();
  app.add_option("--batch", o->run.batch_size)->capture_default_str();
  app.add_option("--seed", o->run.seed)->capture_default_str();
  app.add_option("--height", o->run.crop_height, "Crop height (0: whole images)")->capture_default_str();
  app.add_option("--width", o->run.crop_width, "Crop width (0: whole images)")->capture_default_str();
  app.add_option("--save-every", o->run.checkpoint_every, "Checkpoint cadence in steps (0: final only)")
      ->capture_default_str();
  app.add_option("--checkpoint", o->resume, "Resume from this checkpoint");
  o->model.attach(app);
  return [o](std::ostream& out, std::ostream&) {
    const auto data = read_dataset(o->data);
    std::optional<Checkpoint> resume;
    if (!o->resume.empty()) resume = load_checkpoint_file(o->resume);
    TrainRunConfig run = o->run;
    run.model = resume ? resume->config : o->model.build();

    const fs::path dir = o->out;
    fs::create_directories(dir);
    std::ofstream log(dir / "train_log.csv", std::ios::binary);
    if (!log) throw std::runtime_error("cannot write " + (dir / "train_log.csv").string());
    log << train_log_header() << "\n";
    TrainCallbacks cb;
    cb.on_log = [&](const TrainLogRecord& r) { log << to_csv_row(r) << "\n"; };
    cb.on_checkpoint = [&](const Checkpoint& ck) { save_checkpoint_file(dir / step_name(ck.step), ck); };
    const TrainResult result = run_training(run, data, resume, cb);
    save_checkpoint_file(dir / "final.ckpt", result.checkpoint);
    if (!result.log.empty()) {
      const auto& last = result.log.back();
      out << "step " << last.step << "  loss " << last.loss << "  epe " << last.epe << "\n";
    }
    out << "checkpoint " << (dir / "final.ckpt").string() << "\n";
    return kOk;
  };
}

Runner predict_cmd(CLI::App& app) {
  struct Opts {
    std::string checkpoint, data, out;
    bool colormap = false;
  };
  auto o = std::make_shared<Opts>();
  app.description("Write 16-bit disparity PNGs for every pair under left/ and right/");
  app.add_option("--checkpoint", o->checkpoint)->required();
  app.add_option("--data", o->data, "Directory with left/ and right/")->required();
  app.add_option("--out", o->out, "Output directory")->required();
  app.add_flag("--colormap", o->colormap, "Also write <stem>_color.png renders");
  return [o](std::ostream& out, std::ostream&) {
    const Checkpoint ck = load_checkpoint_file(o->checkpoint);
    fs::create_directories(o->out);
    const auto views = read_views(o->data);
    for (const auto& [stem, sample] : views) {
      const Tensor<float> disp = predict_disparity(ck.params, ck.config, sample);
      write_png(fs::path(o->out) / (stem + ".png"), encode_kitti_disparity(disp, {}));
      if (o->colormap) {
        write_png(fs::path(o->out) / (stem + "_color.png"), render_colormap(disp, ck.config.max_disparity - 1));
      }
    }
    out << "predicted " << views.size() << " pairs into " << o->out << "\n";
    return kOk;
  };
}

Runner eval_cmd(CLI::App& app) {
  struct Opts {
    std::string checkpoint, data, out;
  };
  auto o = std::make_shared<Opts>();
  app.description("Per-sample and mean metrics as CSV");
  app.add_option("--checkpoint", o->checkpoint)->required();
  app.add_option("--data", o->data, "Dataset directory")->required();
  app.add_option("--out", o->out, "CSV path (default: stdout)");
  return [o](std::ostream& out, std::ostream& err) {
    const Checkpoint ck = load_checkpoint_file(o->checkpoint);
    const Evaluation ev = evaluate_model(ck.params, ck.config, read_dataset(o->data));
    std::string csv = std::string("sample,") + MetricReport::csv_header() + "\n";
    for (const auto& s : ev.samples) {
      if (s.ok) {
        csv += sample_stem(s.index) + "," + s.report.to_csv_row() + "\n";
      } else {
        err << "sample " << sample_stem(s.index) << ": " << s.error << "\n";
      }
    }
    csv += "mean," + ev.mean.to_csv_row() + "\n";
    if (o->out.empty()) {
      out << csv;
    } else {
      write_text(o->out, csv);
    }
    if (ev.status != 0) throw VerificationFailure(std::to_string(ev.status) + " sample(s) could not be evaluated");
    return kOk;
  };
}

Runner gradcheck_cmd(CLI::App& app) {
  struct Opts {
    double tolerance = 1e-4;
    std::uint64_t seed = 1;
  };
  auto o = std::make_shared<Opts>();
  app.description("Finite-difference check of every backward rule");
  app.add_option("--tolerance", o->tolerance, "Max relative error per operation; the pipeline gets 10x")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", o->seed)->capture_default_str();
  return [o](std::ostream& out, std::ostream&) {
    int failed = 0;
    for (const auto& r : run_gradcheck_suite(o->tolerance, 10 * o->tolerance, o->seed)) {
      out << r.summary() << "\n";
      failed += r.passed ? 0 : 1;
    }
    if (failed) throw VerificationFailure(std::to_string(failed) + " gradient check(s) failed");
    out << "all gradient checks passed\n";
    return kOk;
  };
}

Runner info_cmd(CLI::App& app) {
  auto model = std::make_shared<ModelFlags>();
  app.description("Parameter count and layer plan of a configuration");
  model->attach(app);
  return [model](std::ostream& out, std::ostream&) {
    const ModelConfig c = model->build();
    const auto plan = layer_plan(c);
    static const std::map<LayerSpec::Kind, const char*> kinds{
        {LayerSpec::Kind::conv2d, "conv2d"}, {LayerSpec::Kind::conv3d, "conv3d"}, {LayerSpec::Kind::tconv3d, "tconv3d"}};
    char line[256];
    for (const auto& l : plan) {
      std::snprintf(line, sizeof line, "%-24s %-8s %4d -> %-4d k%d s%d %s%s%s %10lld\n", l.name.c_str(),
                    kinds.at(l.kind), l.in_channels, l.out_channels, l.kernel, l.stride, l.bias ? "bias " : "",
                    l.batch_norm ? "bn " : "", l.relu ? "relu" : "", static_cast<long long>(l.param_count()));
      out << line;
    }
    const std::int64_t n = count_params(plan);
    out << "variant " << to_string(c.variant) << "\n";
    out << "layers " << plan.size() << "\n";
    out << "parameters " << n << " (" << static_cast<double>(n) / 1e6 << "M; reference 4.6M)\n";
    out << "input size multiple of " << c.spatial_divisor() << "\n";
    return kOk;
  };
}

const std::map<std::string, Runner (*)(CLI::App&)>& commands() {
  static const std::map<std::string, Runner (*)(CLI::App&)> table{
      {"synth", synth_cmd}, {"train", train_cmd}, {"predict", predict_cmd},
      {"eval", eval_cmd},   {"gradcheck", gradcheck_cmd}, {"info", info_cmd},
  };
  return table;
}

void usage(std::ostream& os) {
  os << "usage: msdc <command> [--config FILE] [flags]\n\ncommands:\n"
        "  synth      write a synthetic dataset\n"
        "  train      train a model\n"
        "  predict    write disparity maps\n"
        "  eval       report metrics against ground truth\n"
        "  gradcheck  run the gradient-check suite\n"
        "  info       print the layer plan and parameter count\n\n"
        "Run `msdc <command> --help` for flags. MSDC_THREADS=1 gives byte-reproducible output.\n";
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty()) {
    usage(err);
    return kUsage;
  }
  if (args[0] == "-h" || args[0] == "--help" || args[0] == "help") {
    usage(out);
    return kOk;
  }
  const auto it = commands().find(args[0]);
  if (it == commands().end()) {
    err << "unknown command '" << args[0] << "'\n";
    usage(err);
    return kUsage;
  }

  CLI::App app{"", "msdc " + args[0]};
  app.set_config("--config", "", "File of `key = value` lines; flags given on the command line win");
  app.allow_config_extras(false);
  const Runner run = it->second(app);
  std::vector<std::string> rest(args.rbegin(), args.rend() - 1);  // CLI11 consumes from the back
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "msdc " << args[0] << ": " << e.what() << "\n";
    return kUsage;
  }

  try {
    return run(out, err);
  } catch (const VerificationFailure& e) {
    err << "verification failed: " << e.what() << "\n";
    return kVerificationFailed;
  } catch (const std::exception& e) {
    err << "msdc " << args[0] << ": " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace msdc::cli
