#include "cvdm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace cvdm {
namespace fs = std::filesystem;

namespace {

const char* kScheduleParams = "schedule.";
const char* kDenoiserParams = "denoiser.";

std::vector<std::pair<std::string, Parameter*>> named_parameters(const Models& m) {
  std::vector<std::pair<std::string, Parameter*>> out;
  for (Parameter* p : m.schedule.parameters()) out.emplace_back(kScheduleParams + p->name, p);
  for (Parameter* p : m.denoiser.parameters()) out.emplace_back(kDenoiserParams + p->name, p);
  return out;
}

std::string describe(const LossBreakdown& b) {
  std::ostringstream os;
  os << std::setprecision(6) << "l_beta=" << b.l_beta << " kl_prior=" << b.kl_prior << " l_inf_hat=" << b.l_inf_hat
     << " l_gamma=" << b.l_gamma << " alpha=" << b.alpha;
  return os.str();
}

}  // namespace

std::vector<Parameter*> Models::parameters() const {
  std::vector<Parameter*> out = schedule.parameters();
  for (Parameter* p : denoiser.parameters()) out.push_back(p);
  return out;
}

io::TensorArchive export_parameters(const Models& models) {
  io::TensorArchive a;
  for (const auto& [name, p] : named_parameters(models)) a.tensors.emplace_back(name, p->value);
  return a;
}

void import_parameters(const Models& models, const io::TensorArchive& archive) {
  for (const auto& [name, p] : named_parameters(models)) {
    const Tensor& t = archive.get(name);
    if (t.shape() != p->value.shape()) {
      throw ShapeError("checkpoint tensor " + name + " has shape " + t.shape().str() + ", model expects " +
                       p->value.shape().str());
    }
    p->value = t;
  }
}

Trainer::Trainer(const TrainConfig& config, Models models, std::uint64_t seed)
    : config_(config),
      models_(models),
      seed_(seed),
      optimizer_(models.parameters(), AdamConfig{.learning_rate = config.learning_rate,
                                                 .beta1 = 0.9,
                                                 .beta2 = 0.999,
                                                 .eps = 1e-8,
                                                 .clip_norm = config.grad_clip_norm}) {
  if (config.iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (config.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(config.learning_rate >= 0)) throw std::invalid_argument("learning_rate must be >= 0");
}

double Trainer::alpha() const {
  if (config_.alpha_policy == AlphaPolicy::kFixed) return config_.alpha;
  return gamma_sum_ > 0 ? config_.alpha * inf_sum_ / gamma_sum_ : 0.0;
}

LossBreakdown Trainer::train_step(const Tensor& x, const Tensor& y) {
  Rng rng(seed_, "train-step", static_cast<std::uint64_t>(step_));
  optimizer_.zero_grad();
  LossResult r = loss_total(models_.schedule, as_predictor(models_.denoiser), x, y, 0.0, rng, config_.loss);
  if (config_.alpha_policy == AlphaPolicy::kAuto && alpha_samples_ < config_.alpha_warmup &&
      std::isfinite(r.parts.l_inf_hat) && std::isfinite(r.parts.l_gamma)) {
    inf_sum_ += r.parts.l_inf_hat;
    gamma_sum_ += r.parts.l_gamma;
    ++alpha_samples_;
  }
  const double a = alpha();
  ad::Var total = r.total;
  if (a != 0.0) total = total + a * r.l_gamma;
  r.parts.alpha = a;
  r.parts.total = total.item();
  if (!std::isfinite(r.parts.total)) {
    throw TrainingDivergence("non-finite loss at step " + std::to_string(step_) + ": " + describe(r.parts));
  }
  ad::backward(total);
  optimizer_.step();
  ++step_;
  return r.parts;
}

std::vector<int> Trainer::batch_indices(long long step, int dataset_size) const {
  if (dataset_size < 1) throw std::invalid_argument("empty dataset");
  std::vector<int> out;
  std::vector<int> perm;
  long long cached_epoch = -1;
  for (int j = 0; j < config_.batch_size; ++j) {
    const long long pos = step * config_.batch_size + j;
    const long long epoch = pos / dataset_size;
    if (epoch != cached_epoch) {
      perm.resize(static_cast<std::size_t>(dataset_size));
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng(seed_, "epoch", static_cast<std::uint64_t>(epoch));
      std::shuffle(perm.begin(), perm.end(), rng.engine());
      cached_epoch = epoch;
    }
    out.push_back(perm[static_cast<std::size_t>(pos % dataset_size)]);
  }
  return out;
}

void Trainer::run(const Dataset& data, const std::optional<fs::path>& log_path,
                  const std::optional<fs::path>& checkpoint_dir, const StepCallback& on_step) {
  std::ofstream log;
  if (log_path) {
    const bool fresh = step_ == 0 || !fs::exists(*log_path);
    if (log_path->has_parent_path()) fs::create_directories(log_path->parent_path());
    if (!fresh) {
      // Resuming from an earlier checkpoint: drop rows the resumed run will redo.
      std::ifstream in(*log_path);
      std::string line, kept;
      for (bool header = true; std::getline(in, line); header = false) {
        if (header || (!line.empty() && std::stoll(line.substr(0, line.find(','))) < step_)) kept += line + '\n';
      }
      in.close();
      std::ofstream(*log_path, std::ios::trunc) << kept;
    }
    log.open(*log_path, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("cannot open training log " + log_path->string());
    if (fresh) log << "step,l_beta,kl_prior,l_inf_hat,l_gamma,total,wall_time\n";
    log << std::setprecision(10);
  }
  const auto start = std::chrono::steady_clock::now();
  while (step_ < config_.iterations) {
    const long long s = step_;
    const auto [x, y] = data.batch(batch_indices(s, data.size()));
    const LossBreakdown b = train_step(x, y);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log && s % std::max(1, config_.log_every) == 0) {
      log << s << ',' << b.l_beta << ',' << b.kl_prior << ',' << b.l_inf_hat << ',' << b.l_gamma << ',' << b.total
          << ',' << wall << '\n';
    }
    if (checkpoint_dir && config_.checkpoint_every > 0 && step_ % config_.checkpoint_every == 0 &&
        step_ < config_.iterations) {
      save_checkpoint(*checkpoint_dir / ("step_" + std::to_string(step_) + ".ckpt"), digest_);
    }
    if (on_step) on_step(s, b);
  }
  if (checkpoint_dir) save_checkpoint(*checkpoint_dir / "final.ckpt", digest_);
}

void Trainer::save_checkpoint(const fs::path& path, const std::string& config_digest) const {
  io::TensorArchive a = export_parameters(models_);
  const auto named = named_parameters(models_);
  for (std::size_t k = 0; k < named.size(); ++k) {
    a.tensors.emplace_back("adam.m." + named[k].first, optimizer_.first_moments()[k]);
    a.tensors.emplace_back("adam.v." + named[k].first, optimizer_.second_moments()[k]);
  }
  a.meta = {{"format", "cvdm-checkpoint/1"},
            {"config_digest", config_digest},
            {"step", step_},
            {"seed", seed_},
            {"adam_steps", optimizer_.steps()},
            {"alpha", {{"inf_sum", inf_sum_}, {"gamma_sum", gamma_sum_}, {"samples", alpha_samples_}}}};
  io::save_archive(path, a);
}

void Trainer::load_checkpoint(const fs::path& path, const std::string& expected_digest) {
  const io::TensorArchive a = io::load_archive(path);
  const std::string stored = a.meta.at("config_digest").get<std::string>();
  if (!expected_digest.empty() && stored != expected_digest) {
    throw std::runtime_error("checkpoint " + path.string() + " was written for config digest " + stored +
                             ", current config has " + expected_digest);
  }
  import_parameters(models_, a);
  const auto named = named_parameters(models_);
  for (std::size_t k = 0; k < named.size(); ++k) {
    optimizer_.first_moments()[k] = a.get("adam.m." + named[k].first);
    optimizer_.second_moments()[k] = a.get("adam.v." + named[k].first);
  }
  optimizer_.set_steps(a.meta.at("adam_steps").get<long long>());
  step_ = a.meta.at("step").get<long long>();
  seed_ = a.meta.at("seed").get<std::uint64_t>();
  inf_sum_ = a.meta.at("alpha").at("inf_sum").get<double>();
  gamma_sum_ = a.meta.at("alpha").at("gamma_sum").get<double>();
  alpha_samples_ = a.meta.at("alpha").at("samples").get<int>();
}

}  // namespace cvdm
