// cvdm: generate data, train, sample, evaluate and inspect schedules.
// Every command writes under one run directory together with a copy of the
// config it ran with.

#include "cvdm/convergence.hpp"
#include "cvdm/pipeline.hpp"

#include "CLI11.hpp"

#include <Eigen/Core>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace cvdm;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
  std::optional<int> steps;
  std::optional<int> T;
  std::string beta_mode;
  int index = 0;
  int limit = -1;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void apply_thread_cap() {
  const char* env = std::getenv("CVDM_NUM_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) {
    throw UsageError(std::string("CVDM_NUM_THREADS must be a positive integer, got '") + env + "'");
  }
  Eigen::setNbThreads(static_cast<int>(n));
}

struct Run {
  RunConfig config;
  fs::path dir;

  [[nodiscard]] fs::path data_dir() const {
    const fs::path p(config.paths.data_dir);
    return p.is_absolute() ? p : dir / p;
  }
  [[nodiscard]] fs::path checkpoint(const Options& o) const {
    return o.checkpoint.empty() ? dir / "checkpoints" / "final.ckpt" : fs::path(o.checkpoint);
  }
};

/// --config, else the copy stored in the run directory, else defaults.
Run open_run(const Options& o) {
  Run r;
  if (!o.config_path.empty()) r.config = load_config(o.config_path);
  r.dir = o.out.empty() ? fs::path(r.config.paths.run_dir) : fs::path(o.out);
  if (o.config_path.empty() && fs::exists(r.dir / "config.json")) r.config = load_config(r.dir / "config.json");
  if (o.seed) r.config.seed = *o.seed;
  if (o.steps) r.config.train.iterations = *o.steps;
  if (o.T) r.config.sampler.steps = *o.T;
  if (!o.beta_mode.empty()) {
    try {
      parse_beta_mode(o.beta_mode, r.config.sampler);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  r.config.finalize();
  r.config.sampler.validate();
  fs::create_directories(r.dir);
  io::write_json(r.dir / "config.json", to_json(r.config));
  return r;
}

Dataset require_split(const Run& r, const std::string& split) {
  const fs::path manifest = r.data_dir() / "manifest.json";
  if (!fs::exists(manifest)) {
    throw std::runtime_error("no dataset at " + r.data_dir().string() + "; run generate-data first");
  }
  const Dataset d = load_split(r.data_dir(), split);
  if (d.size() == 0) throw std::runtime_error("split '" + split + "' in " + r.data_dir().string() + " is empty");
  const int xc = d.samples.front().x.shape().c;
  if (xc != r.config.x_channels()) {
    throw std::runtime_error("dataset has " + std::to_string(xc) + " condition channels but the config expects " +
                             std::to_string(r.config.x_channels()) + "; regenerate the data");
  }
  return d;
}

int cmd_generate_data(const Options& o) {
  const Run r = open_run(o);
  write_dataset(r.data_dir(), r.config.data);
  std::cout << "wrote " << r.config.data.n_train << " train and " << r.config.data.n_val << " val pairs to "
            << r.data_dir().string() << '\n';
  return 0;
}

int cmd_train(const Options& o) {
  const Run r = open_run(o);
  const Dataset train = require_split(r, "train");
  ModelSet m = build_models(r.config);
  Trainer trainer(r.config.train, m.models(), r.config.seed);
  const std::string digest = model_digest(r.config);
  trainer.set_config_digest(digest);
  if (!o.checkpoint.empty()) {
    const std::string stored = checkpoint_digest(o.checkpoint);
    if (stored != digest) {
      throw DigestMismatch("checkpoint " + o.checkpoint + " has model config digest " + stored +
                           ", the current config has " + digest);
    }
    trainer.load_checkpoint(o.checkpoint, digest);
    std::cout << "resuming from step " << trainer.step() << '\n';
  }
  const auto start = std::chrono::steady_clock::now();
  const long long every = std::max(1, r.config.train.iterations / 20);
  trainer.run(train, r.dir / "train_log.csv", r.dir / "checkpoints", [&](long long s, const LossBreakdown& b) {
    if ((s + 1) % every != 0 && s + 1 != r.config.train.iterations) return;
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "step " << s + 1 << '/' << r.config.train.iterations << "  total " << std::setprecision(5) << b.total
              << "  l_inf_hat " << b.l_inf_hat << "  l_beta " << b.l_beta << "  alpha " << b.alpha << "  ("
              << std::setprecision(3) << sec << " s)\n";
  });
  std::cout << "final checkpoint: " << (r.dir / "checkpoints" / "final.ckpt").string() << '\n';
  return 0;
}

int cmd_sample(const Options& o) {
  const Run r = open_run(o);
  const Dataset val = require_split(r, "val");
  ModelSet m = build_models(r.config);
  const fs::path ckpt = r.checkpoint(o);
  load_parameters(m, ckpt, model_digest(r.config));
  const std::vector<SampleBatch> batches = sample_split(val, m, r.config.sampler, o.limit);
  const fs::path out = r.dir / "samples";
  fs::remove_all(out);
  nlohmann::json index = {{"checkpoint", fs::absolute(ckpt).string()},
                          {"config_digest", model_digest(r.config)},
                          {"T", r.config.sampler.steps},
                          {"beta_mode", beta_mode_string(r.config.sampler)},
                          {"n_samples", r.config.sampler.n_samples},
                          {"seed", r.config.sampler.seed},
                          {"ids", nlohmann::json::array()}};
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const std::string id = sample_id(val, static_cast<int>(i));
    const fs::path d = out / id;
    fs::create_directories(d);
    for (std::size_t k = 0; k < batches[i].samples.size(); ++k) {
      io::write_npy(d / ("sample_" + std::to_string(k) + ".npy"), batches[i].samples[k]);
    }
    io::write_npy(d / "mean.npy", batches[i].mean);
    io::write_npy(d / "variance.npy", batches[i].variance);
    io::write_png(d / "mean.png", io::plane(batches[i].mean), 0.0, 1.0);
    io::write_png(d / "truth.png", io::plane(val.samples[i].y), 0.0, 1.0);
    const Eigen::ArrayXXd v = io::plane(batches[i].variance);
    io::write_png(d / "variance.png", v, 0.0, std::max(v.maxCoeff(), 1e-12));
    index["ids"].push_back(id);
  }
  io::write_json(out / "samples.json", index);
  std::cout << "sampled " << batches.size() << " conditions x " << r.config.sampler.n_samples << " chains, T = "
            << r.config.sampler.steps << " (" << beta_mode_string(r.config.sampler) << ") into " << out.string()
            << '\n';
  return 0;
}

int cmd_eval(const Options& o) {
  const Run r = open_run(o);
  const Dataset val = require_split(r, "val");
  const fs::path in = r.dir / "samples";
  if (!fs::exists(in / "samples.json")) throw std::runtime_error("no samples in " + in.string() + "; run sample first");
  const nlohmann::json index = io::read_json(in / "samples.json");
  std::vector<Tensor> predictions;
  for (std::size_t i = 0; i < index.at("ids").size(); ++i) {
    const std::string id = index["ids"][i].get<std::string>();
    if (id != sample_id(val, static_cast<int>(i))) {
      throw std::runtime_error("sample " + id + " does not match validation sample " +
                               sample_id(val, static_cast<int>(i)));
    }
    predictions.push_back(io::read_npy(in / id / "mean.npy"));
  }
  const metrics::MetricReport report = evaluate_split(val, predictions, r.config.metrics);
  const fs::path out = r.dir / "eval";
  fs::create_directories(out);
  nlohmann::json j = report.to_json();
  j["samples_from"] = index;
  io::write_json(out / "metrics.json", j);
  report.write_csv(out / "metrics.csv");
  std::cout << std::setprecision(6) << "n = " << report.count() << "  MAE " << report.aggregate.mae << "  MS-SSIM "
            << report.aggregate.ms_ssim << "  SSIM " << report.aggregate.ssim << "  PSNR " << report.aggregate.psnr
            << " dB\n";
  return 0;
}

int cmd_schedule_report(const Options& o) {
  const Run r = open_run(o);
  const Dataset val = require_split(r, "val");
  if (o.index < 0 || o.index >= val.size()) {
    throw UsageError("--index must be in [0, " + std::to_string(val.size()) + ")");
  }
  ModelSet m = build_models(r.config);
  load_parameters(m, r.checkpoint(o), model_digest(r.config));
  const PairedSample& s = val.samples[static_cast<std::size_t>(o.index)];
  const ScheduleProfile p = schedule_profile(*m.schedule, s.x, s.y);
  const fs::path out = r.dir / "schedule" / sample_id(val, o.index);
  write_schedule_profile(out, p);
  std::cout << "schedule profile of " << sample_id(val, o.index) << " (" << p.structure_pixels
            << " structure pixels) in " << out.string() << '\n';
  return 0;
}

int cmd_convergence(const Options& o) {
  const Run r = open_run(o);
  const ConvergenceConfig& c = r.config.convergence;
  convergence::Surrogate surrogate;
  surrogate.delta = c.delta;
  const std::vector<convergence::LabSchedule> schedules = {
      convergence::LabSchedule::log_linear(c.log_snr_hi, c.log_snr_lo),
      convergence::LabSchedule::steep_sigmoid(c.sigmoid_k, c.log_snr_hi, c.log_snr_lo)};
  const convergence::Study study = convergence::convergence_study(schedules, surrogate, c.steps);
  const fs::path out = r.dir / "convergence";
  convergence::write_study(out, study);
  for (const auto& rep : study.reports) {
    std::cout << std::setprecision(4) << rep.schedule << ": slope " << rep.slope << ", ||SNR''|| " << rep.snr2_l2
              << ", L_inf " << rep.continuous << '\n';
  }
  std::cout << "dominance: " << (study.dominance ? "yes" : "no") << "  (" << out.string() << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional variational diffusion: data, training, sampling and evaluation"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON run config")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "top-level seed (overrides the config)");
    sub->add_option("--out", o.out, "run directory (default: paths.run_dir)");
  };
  auto with_checkpoint = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint file (default: <run>/checkpoints/final.ckpt)");
  };

  CLI::App* gen = app.add_subcommand("generate-data", "write the train/val dataset and its manifest");
  common(gen);
  CLI::App* train = app.add_subcommand("train", "train schedule and denoiser jointly");
  common(train);
  train->add_option("--checkpoint", o.checkpoint, "resume from this checkpoint");
  train->add_option("--steps", o.steps, "total iterations (overrides train.iterations)")->check(CLI::PositiveNumber);
  CLI::App* sample = app.add_subcommand("sample", "ancestral sampling on the validation split");
  common(sample);
  with_checkpoint(sample);
  sample->add_option("--T", o.T, "sampling steps (overrides sampler.T)")->check(CLI::PositiveNumber);
  sample->add_option("--beta-mode", o.beta_mode, "learned | ratio | linear:a:b");
  sample->add_option("--limit", o.limit, "sample only the first N validation conditions");
  CLI::App* eval = app.add_subcommand("eval", "metrics of the sample means against the validation targets");
  common(eval);
  CLI::App* report = app.add_subcommand("schedule-report", "gamma(t) and beta(t) by region for one validation sample");
  common(report);
  with_checkpoint(report);
  report->add_option("--index", o.index, "validation sample index");
  CLI::App* conv = app.add_subcommand("convergence", "discrete vs continuous diffusion loss study");
  common(conv);

  CLI11_PARSE(app, argc, argv);
  try {
    apply_thread_cap();
    if (*gen) return cmd_generate_data(o);
    if (*train) return cmd_train(o);
    if (*sample) return cmd_sample(o);
    if (*eval) return cmd_eval(o);
    if (*report) return cmd_schedule_report(o);
    if (*conv) return cmd_convergence(o);
  } catch (const DigestMismatch& e) {
    std::cerr << "refusing: " << e.what() << '\n';
    return 3;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
