#include "cvdm/pipeline.hpp"

#include "cvdm/convergence.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace cvdm {
namespace fs = std::filesystem;

ModelSet build_models(const RunConfig& config) {
  Rng rng(config.seed, "init");
  ModelSet m;
  m.schedule = std::make_unique<LearnedSchedule>(config.schedule, rng);
  m.denoiser = std::make_unique<Denoiser>(config.denoiser, rng);
  return m;
}

std::string checkpoint_digest(const fs::path& checkpoint) {
  return io::load_archive(checkpoint).meta.at("config_digest").get<std::string>();
}

void load_parameters(const ModelSet& models, const fs::path& checkpoint, const std::string& expected_digest) {
  if (!fs::exists(checkpoint)) throw std::runtime_error("checkpoint " + checkpoint.string() + " does not exist");
  const io::TensorArchive a = io::load_archive(checkpoint);
  const std::string stored = a.meta.at("config_digest").get<std::string>();
  if (stored != expected_digest) {
    throw DigestMismatch("checkpoint " + checkpoint.string() + " was trained with model config digest " + stored +
                         " but the current config has digest " + expected_digest +
                         "; the schedule/denoiser/data-channel settings differ");
  }
  import_parameters(models.models(), a);
}

std::string sample_id(const Dataset& data, int index) {
  std::ostringstream os;
  os << std::setw(4) << std::setfill('0') << index;
  std::string src = data.samples.at(static_cast<std::size_t>(index)).source;
  for (char& ch : src) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '.') ch = '_';
  }
  return src.empty() ? os.str() : os.str() + "_" + src;
}

std::vector<SampleBatch> sample_split(const Dataset& data, const ModelSet& models, const SamplerConfig& config,
                                      int limit) {
  const int n = limit < 0 ? data.size() : std::min(limit, data.size());
  const TensorPredictor predictor = as_tensor_predictor(*models.denoiser);
  std::vector<SampleBatch> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SamplerConfig c = config;
    c.seed = derive_seed(config.seed, "condition", static_cast<std::uint64_t>(i));
    out.push_back(sample_batch(data.samples[static_cast<std::size_t>(i)].x, predictor, *models.schedule, c));
  }
  return out;
}

metrics::MetricReport evaluate_split(const Dataset& data, const std::vector<Tensor>& predictions,
                                     const metrics::MetricsConfig& config) {
  if (predictions.size() > data.samples.size()) throw std::invalid_argument("more predictions than samples");
  std::vector<Tensor> truth;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    truth.push_back(data.samples[i].y);
    ids.push_back(sample_id(data, static_cast<int>(i)));
  }
  return metrics::evaluate(truth, predictions, ids, config);
}

ScheduleProfile schedule_profile(ScheduleModel& schedule, const Tensor& x, const Tensor& y, int points) {
  if (x.shape().n != 1 || y.shape().n != 1) throw ShapeError("schedule_profile takes a single sample");
  if (points < 2) throw std::invalid_argument("schedule_profile needs at least 2 points");
  ad::NoGradGuard guard;
  ScheduleProfile p;
  p.lambda = schedule.lambda(ad::constant(x)).value();
  if (p.lambda.shape() != y.shape()) throw ShapeError("lambda map and target differ in shape");

  for (int k = 0; k < points; ++k) p.t.push_back(static_cast<double>(k) / (points - 1));
  const ad::Var tv = time_batch(p.t);
  const Eigen::ArrayXd rho = schedule.rho(tv, 0).value.value().data();
  const Eigen::ArrayXd tau = schedule.tau(tv).value().data();

  const Eigen::ArrayXd& lam = p.lambda.data();
  const Eigen::ArrayXd& target = y.data();
  const double level = target.mean();
  const Eigen::Array<bool, Eigen::Dynamic, 1> structure = target > level;
  p.structure_pixels = static_cast<int>(structure.count());
  const double n_all = static_cast<double>(lam.size());
  const double n_fg = std::max(1, p.structure_pixels);
  const double n_bg = std::max(1.0, n_all - p.structure_pixels);
  const Eigen::ArrayXd fg = structure.cast<double>();
  for (int k = 0; k < points; ++k) {
    const Eigen::ArrayXd g = (-lam * rho(k)).exp();
    const Eigen::ArrayXd b = lam * tau(k);
    p.gamma_all.push_back(g.mean());
    p.beta_all.push_back(b.mean());
    p.gamma_structure.push_back((g * fg).sum() / n_fg);
    p.beta_structure.push_back((b * fg).sum() / n_fg);
    p.gamma_background.push_back((g * (1.0 - fg)).sum() / n_bg);
    p.beta_background.push_back((b * (1.0 - fg)).sum() / n_bg);
  }

  constexpr int kOrder = 16, kPanels = 32;
  std::vector<double> nodes, weights, tq, wq;
  convergence::gauss_legendre(kOrder, nodes, weights);
  for (int j = 0; j < kPanels; ++j) {
    for (int q = 0; q < kOrder; ++q) {
      tq.push_back((j + 0.5 * (nodes[q] + 1.0)) / kPanels);
      wq.push_back(0.5 * weights[q] / kPanels);
    }
  }
  const Eigen::ArrayXd tau_q = schedule.tau(time_batch(tq)).value().data();
  const Eigen::Map<const Eigen::ArrayXd> w(wq.data(), static_cast<Eigen::Index>(wq.size()));
  const double tau_integral = (tau_q * w).sum();
  p.beta_integral = p.lambda;
  p.beta_integral.data() *= tau_integral;
  return p;
}

void write_schedule_profile(const fs::path& dir, const ScheduleProfile& p) {
  fs::create_directories(dir);
  std::ofstream csv(dir / "schedule.csv");
  if (!csv) throw std::runtime_error("cannot write " + (dir / "schedule.csv").string());
  csv << "t,gamma_mean,beta_mean,gamma_structure,beta_structure,gamma_background,beta_background\n";
  csv << std::setprecision(12);
  for (std::size_t k = 0; k < p.t.size(); ++k) {
    csv << p.t[k] << ',' << p.gamma_all[k] << ',' << p.beta_all[k] << ',' << p.gamma_structure[k] << ','
        << p.beta_structure[k] << ',' << p.gamma_background[k] << ',' << p.beta_background[k] << '\n';
  }
  io::write_svg_plot(dir / "schedule_beta.svg",
                     {{"structure", p.t, p.beta_structure}, {"background", p.t, p.beta_background}},
                     {.title = "mean beta(t) by region", .x_label = "t", .y_label = "beta"});
  io::write_svg_plot(dir / "schedule_gamma.svg",
                     {{"structure", p.t, p.gamma_structure}, {"background", p.t, p.gamma_background}},
                     {.title = "mean gamma(t) by region", .x_label = "t", .y_label = "gamma"});
  const Eigen::ArrayXXd lam = io::plane(p.lambda);
  io::write_png(dir / "lambda.png", lam, lam.minCoeff(), std::max(lam.maxCoeff(), lam.minCoeff() + 1e-12));
  io::write_npy(dir / "beta_integral.npy", p.beta_integral);
  const Eigen::ArrayXXd bi = io::plane(p.beta_integral);
  io::write_png(dir / "beta_integral.png", bi, bi.minCoeff(), std::max(bi.maxCoeff(), bi.minCoeff() + 1e-12));
}

}  // namespace cvdm
