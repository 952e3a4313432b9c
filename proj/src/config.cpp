#include "cvdm/config.hpp"

#include "cvdm/io.hpp"
#include "cvdm/rng.hpp"

#include <set>

namespace cvdm {
namespace {

using nlohmann::json;

/// Reads known keys from one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where() + "." + key + ": " + e.what());
    }
  }

  template <typename F>
  void child(const char* key, F&& read) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    Section s(j_.at(key), path_ + "." + key);
    read(s);
    s.finish();
  }

  template <typename E>
  void choice(const char* key, E& dst, const std::vector<std::pair<std::string, E>>& options) {
    std::string text;
    get(key, text);
    if (text.empty()) return;
    for (const auto& [name, value] : options) {
      if (name == text) {
        dst = value;
        return;
      }
    }
    std::string names;
    for (const auto& o : options) names += (names.empty() ? "" : ", ") + o.first;
    throw ConfigError(where() + "." + key + ": '" + text + "' is not one of " + names);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key " + where() + "." + key);
    }
  }

 private:
  [[nodiscard]] std::string where() const { return path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const std::vector<std::pair<std::string, ConditionLayout>> kLayouts = {{"stack", ConditionLayout::kStack},
                                                                       {"derivative", ConditionLayout::kDerivative}};
const std::vector<std::pair<std::string, ScheduleMode>> kModes = {{"pixelwise", ScheduleMode::kPixelwise},
                                                                  {"global", ScheduleMode::kGlobal}};
const std::vector<std::pair<std::string, ad::Padding>> kPaddings = {{"zero", ad::Padding::kZero},
                                                                    {"circular", ad::Padding::kCircular}};
const std::vector<std::pair<std::string, AlphaPolicy>> kPolicies = {{"auto", AlphaPolicy::kAuto},
                                                                    {"fixed", AlphaPolicy::kFixed}};
const std::vector<std::pair<std::string, GammaDerivative>> kDerivatives = {
    {"jet", GammaDerivative::kJet}, {"finite-difference", GammaDerivative::kFiniteDifference}};

template <typename E>
std::string name_of(E value, const std::vector<std::pair<std::string, E>>& options) {
  for (const auto& [name, v] : options)
    if (v == value) return name;
  return "";
}

json data_json(const DatasetConfig& d, bool with_seed) {
  json j = {{"kind", d.kind},
            {"n_train", d.n_train},
            {"n_val", d.n_val},
            {"size", d.size},
            {"optics", {{"wavelength", d.optics.wavelength}, {"defocus", d.optics.defocus}, {"pitch", d.optics.pitch}}},
            {"layout", name_of(d.pair.layout, kLayouts)},
            {"phase_scale", d.pair.phase_scale},
            {"xi_max", d.pair.xi_max},
            {"blur_sigma", d.blur_sigma},
            {"blur_noise", d.blur_noise},
            {"source_dir", d.source_dir},
            {"blobs", d.blobs}};
  if (d.pair.xi) j["xi"] = *d.pair.xi;
  if (with_seed) j["seed"] = d.seed;
  return j;
}

json schedule_json(const LearnedScheduleConfig& s) {
  return {{"time_hidden", s.time_hidden},         {"lambda_filters", s.lambda_filters},
          {"lambda_scales", s.lambda_scales},     {"instance_norm", s.instance_norm},
          {"lambda_init", s.lambda_init},         {"mode", name_of(s.mode, kModes)},
          {"tau_fit_steps", s.tau_fit_steps}};
}

json denoiser_json(const DenoiserConfig& d) {
  return {{"base_filters", d.base_filters},
          {"scales", d.scales},
          {"instance_norm", d.instance_norm},
          {"padding", name_of(d.padding, kPaddings)}};
}

}  // namespace

int RunConfig::x_channels() const {
  if (data.kind == "blur") return 1;
  return data.pair.layout == ConditionLayout::kStack ? 2 : 1;
}

void RunConfig::finalize() {
  data.seed = derive_seed(seed, "data");
  data.optics.height = data.optics.width = data.size;
  schedule.x_channels = denoiser.x_channels = x_channels();
  schedule.y_channels = denoiser.y_channels = y_channels();
  sampler.seed = derive_seed(seed, "sample");
}

RunConfig parse_config(const json& j) {
  RunConfig c;
  Section root(j, "config");
  root.get("seed", c.seed);
  root.child("data", [&](Section& s) {
    s.get("kind", c.data.kind);
    s.get("n_train", c.data.n_train);
    s.get("n_val", c.data.n_val);
    s.get("size", c.data.size);
    s.child("optics", [&](Section& o) {
      o.get("wavelength", c.data.optics.wavelength);
      o.get("defocus", c.data.optics.defocus);
      o.get("pitch", c.data.optics.pitch);
    });
    s.choice("layout", c.data.pair.layout, kLayouts);
    s.get("phase_scale", c.data.pair.phase_scale);
    s.get("xi_max", c.data.pair.xi_max);
    double xi = -1;
    s.get("xi", xi);
    if (xi >= 0) c.data.pair.xi = xi;
    s.get("blur_sigma", c.data.blur_sigma);
    s.get("blur_noise", c.data.blur_noise);
    s.get("source_dir", c.data.source_dir);
    s.get("blobs", c.data.blobs);
  });
  root.child("schedule", [&](Section& s) {
    s.get("time_hidden", c.schedule.time_hidden);
    s.get("lambda_filters", c.schedule.lambda_filters);
    s.get("lambda_scales", c.schedule.lambda_scales);
    s.get("instance_norm", c.schedule.instance_norm);
    s.get("lambda_init", c.schedule.lambda_init);
    s.choice("mode", c.schedule.mode, kModes);
    s.get("tau_fit_steps", c.schedule.tau_fit_steps);
  });
  root.child("denoiser", [&](Section& s) {
    s.get("base_filters", c.denoiser.base_filters);
    s.get("scales", c.denoiser.scales);
    s.get("instance_norm", c.denoiser.instance_norm);
    s.choice("padding", c.denoiser.padding, kPaddings);
  });
  root.child("train", [&](Section& s) {
    s.get("iterations", c.train.iterations);
    s.get("batch_size", c.train.batch_size);
    s.get("learning_rate", c.train.learning_rate);
    s.get("grad_clip_norm", c.train.grad_clip_norm);
    s.choice("alpha_policy", c.train.alpha_policy, kPolicies);
    s.get("alpha", c.train.alpha);
    s.get("alpha_warmup", c.train.alpha_warmup);
    s.get("checkpoint_every", c.train.checkpoint_every);
    s.choice("gamma_derivative", c.train.loss.gamma_derivative, kDerivatives);
    s.get("fd_step", c.train.loss.fd_step);
    s.get("snr_weight", c.train.loss.snr_weight);
  });
  root.child("sampler", [&](Section& s) {
    s.get("T", c.sampler.steps);
    std::string mode;
    s.get("beta_mode", mode);
    if (!mode.empty()) {
      try {
        parse_beta_mode(mode, c.sampler);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config.sampler.beta_mode: ") + e.what());
      }
    }
    s.get("n_samples", c.sampler.n_samples);
  });
  root.child("metrics", [&](Section& s) {
    s.get("peak", c.metrics.peak);
    s.get("ms_ssim_scales", c.metrics.ms_ssim_scales);
  });
  root.child("convergence", [&](Section& s) {
    s.get("T", c.convergence.steps);
    s.get("delta", c.convergence.delta);
    s.get("sigmoid_k", c.convergence.sigmoid_k);
    s.get("log_snr_hi", c.convergence.log_snr_hi);
    s.get("log_snr_lo", c.convergence.log_snr_lo);
  });
  root.child("paths", [&](Section& s) {
    s.get("data_dir", c.paths.data_dir);
    s.get("run_dir", c.paths.run_dir);
  });
  root.finish();

  if (c.data.kind != "qpi" && c.data.kind != "blur") throw ConfigError("config.data.kind must be 'qpi' or 'blur'");
  if (c.data.size < 11 || c.data.n_train < 1 || c.data.n_val < 0) {
    throw ConfigError("config.data: need size >= 11, n_train >= 1, n_val >= 0");
  }
  if (c.train.iterations < 1 || c.train.batch_size < 1 || !(c.train.learning_rate > 0)) {
    throw ConfigError("config.train: need iterations >= 1, batch_size >= 1, learning_rate > 0");
  }
  try {
    c.sampler.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config.sampler: ") + e.what());
  }
  c.finalize();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = io::read_json(path);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j);
}

json to_json(const DatasetConfig& config) { return data_json(config, true); }

json to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"data", data_json(c.data, false)},
          {"schedule", schedule_json(c.schedule)},
          {"denoiser", denoiser_json(c.denoiser)},
          {"train",
           {{"iterations", c.train.iterations},
            {"batch_size", c.train.batch_size},
            {"learning_rate", c.train.learning_rate},
            {"grad_clip_norm", c.train.grad_clip_norm},
            {"alpha_policy", name_of(c.train.alpha_policy, kPolicies)},
            {"alpha", c.train.alpha},
            {"alpha_warmup", c.train.alpha_warmup},
            {"checkpoint_every", c.train.checkpoint_every},
            {"gamma_derivative", name_of(c.train.loss.gamma_derivative, kDerivatives)},
            {"fd_step", c.train.loss.fd_step},
            {"snr_weight", c.train.loss.snr_weight}}},
          {"sampler", {{"T", c.sampler.steps}, {"beta_mode", beta_mode_string(c.sampler)}, {"n_samples", c.sampler.n_samples}}},
          {"metrics", {{"peak", c.metrics.peak}, {"ms_ssim_scales", c.metrics.ms_ssim_scales}}},
          {"convergence",
           {{"T", c.convergence.steps},
            {"delta", c.convergence.delta},
            {"sigmoid_k", c.convergence.sigmoid_k},
            {"log_snr_hi", c.convergence.log_snr_hi},
            {"log_snr_lo", c.convergence.log_snr_lo}}},
          {"paths", {{"data_dir", c.paths.data_dir}, {"run_dir", c.paths.run_dir}}}};
}

std::string model_digest(const RunConfig& c) {
  const json j = {{"x_channels", c.x_channels()},
                  {"y_channels", c.y_channels()},
                  {"schedule", schedule_json(c.schedule)},
                  {"denoiser", denoiser_json(c.denoiser)}};
  return io::fnv1a_hex(j.dump());
}

}  // namespace cvdm
