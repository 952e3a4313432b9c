#include "cvdm/dataset.hpp"

#include "cvdm/config.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cvdm {
namespace fs = std::filesystem;

namespace {

Tensor to_tensor(const std::vector<const Image*>& channels) {
  const auto h = static_cast<int>(channels.front()->rows()), w = static_cast<int>(channels.front()->cols());
  Tensor t(Shape{1, static_cast<int>(channels.size()), h, w});
  for (std::size_t c = 0; c < channels.size(); ++c)
    for (int r = 0; r < h; ++r)
      for (int k = 0; k < w; ++k) t(0, static_cast<int>(c), r, k) = (*channels[c])(r, k);
  return t;
}

Image add_noise(const Image& img, double xi, Rng& rng) {
  Image out = img;
  const double sd = std::sqrt(xi);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += rng.normal(xi, sd);
  return out;
}

Image read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  in >> magic;
  auto next_int = [&in] {
    int v;
    while (in >> std::ws && in.peek() == '#') in.ignore(1 << 20, '\n');
    in >> v;
    return v;
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  if (!in || (magic != "P2" && magic != "P5") || maxval <= 0 || maxval > 65535) {
    throw io::FormatError(path.string() + ": unsupported PGM");
  }
  Image img(h, w);
  if (magic == "P5") {
    in.get();
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        int v = in.get();
        if (maxval > 255) v = (v << 8) | in.get();
        img(r, c) = static_cast<double>(v) / maxval;
      }
    }
  } else {
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) img(r, c) = static_cast<double>(next_int()) / maxval;
  }
  if (!in) throw io::FormatError(path.string() + ": truncated PGM");
  return img;
}

Image read_png_gray(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) throw io::FormatError(path.string() + ": " + image.message);
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    throw io::FormatError(path.string() + ": " + image.message);
  }
  Image img(image.height, image.width);
  for (png_uint_32 r = 0; r < image.height; ++r)
    for (png_uint_32 c = 0; c < image.width; ++c) img(r, c) = buf[r * image.width + c] / 255.0;
  return img;
}

Image box_resample(const Image& src, int height, int width) {
  const Eigen::Index side = std::min(src.rows(), src.cols());
  const Image sq = src.block((src.rows() - side) / 2, (src.cols() - side) / 2, side, side);
  Image out(height, width);
  for (int r = 0; r < height; ++r) {
    const Eigen::Index r0 = r * side / height, r1 = std::max(r0 + 1, (r + 1) * side / height);
    for (int c = 0; c < width; ++c) {
      const Eigen::Index c0 = c * side / width, c1 = std::max(c0 + 1, (c + 1) * side / width);
      out(r, c) = sq.block(r0, c0, r1 - r0, c1 - c0).mean();
    }
  }
  return out;
}

std::string sample_name(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04d.npy", prefix, i);
  return buf;
}

}  // namespace

PairedSample make_pair(const Image& source, const OpticalConfig& optics, Rng& noise_rng, const PairOptions& options) {
  if (source.rows() != optics.height || source.cols() != optics.width) {
    throw std::invalid_argument("make_pair: source size does not match the optics grid");
  }
  const Image phase = options.phase_scale * source;
  const Image amplitude = Image::Ones(source.rows(), source.cols());
  const Image i_d = fresnel_propagate(amplitude, phase, optics.defocus, optics);
  const Image i_md = fresnel_propagate(amplitude, phase, -optics.defocus, optics);

  PairedSample s;
  s.xi = options.xi.value_or(noise_rng.uniform(0.0, options.xi_max));
  const Image n_d = s.xi > 0 ? add_noise(i_d, s.xi, noise_rng) : i_d;
  const Image n_md = s.xi > 0 ? add_noise(i_md, s.xi, noise_rng) : i_md;
  if (options.layout == ConditionLayout::kStack) {
    s.x = to_tensor({&n_d, &n_md});
  } else {
    const Image deriv = intensity_derivative(n_md, n_d, optics.defocus);
    s.x = to_tensor({&deriv});
  }
  s.y = to_tensor({&source});
  return s;
}

PairedSample make_toy_blur_pair(const Image& source, double kernel_sigma, double noise_sigma, Rng& noise_rng) {
  if (!(kernel_sigma > 0)) throw std::invalid_argument("make_toy_blur_pair: kernel_sigma must be > 0");
  Image x = gaussian_blur(source, kernel_sigma);
  if (noise_sigma > 0) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += noise_rng.normal(0.0, noise_sigma);
  }
  PairedSample s;
  s.x = to_tensor({&x});
  s.y = to_tensor({&source});
  return s;
}

Image procedural_source(int height, int width, Rng& rng, int blobs) {
  Image img = Image::Zero(height, width);
  const double scale = std::min(height, width) / 32.0;
  for (int b = 0; b < blobs; ++b) {
    const double cy = rng.uniform(0, height), cx = rng.uniform(0, width);
    const double sy = rng.uniform(1.5, 5.0) * scale, sx = rng.uniform(1.5, 5.0) * scale;
    const double amp = rng.uniform(0.3, 1.0);
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const double dy = (r - cy) / sy, dx = (c - cx) / sx;
        img(r, c) += amp * std::exp(-0.5 * (dy * dy + dx * dx));
      }
    }
  }
  const double lo = img.minCoeff(), hi = img.maxCoeff();
  return hi > lo ? Image((img - lo) / (hi - lo)) : Image(Image::Zero(height, width));
}

std::vector<std::pair<std::string, Image>> load_source_directory(const fs::path& dir, int height, int width) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pgm" || ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::pair<std::string, Image>> out;
  for (const auto& f : files) {
    const Image raw = f.extension() == ".png" || f.extension() == ".PNG" ? read_png_gray(f) : read_pgm(f);
    out.emplace_back(f.filename().string(), box_resample(raw, height, width));
  }
  if (out.empty()) throw std::runtime_error("no .pgm or .png images in " + dir.string());
  return out;
}

std::pair<Tensor, Tensor> Dataset::batch(const std::vector<int>& indices) const {
  std::vector<Tensor> xs, ys;
  for (int i : indices) {
    xs.push_back(samples.at(static_cast<std::size_t>(i)).x);
    ys.push_back(samples.at(static_cast<std::size_t>(i)).y);
  }
  return {stack_samples(xs), stack_samples(ys)};
}

std::pair<Tensor, Tensor> Dataset::all() const {
  std::vector<int> idx(samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  return batch(idx);
}

Dataset generate_split(const DatasetConfig& config, const std::string& split) {
  int first = 0, count = 0;
  if (split == "train") {
    count = config.n_train;
  } else if (split == "val") {
    first = config.n_train;
    count = config.n_val;
  } else {
    throw std::invalid_argument("unknown split '" + split + "'");
  }
  OpticalConfig optics = config.optics;
  optics.height = optics.width = config.size;
  if (config.kind == "qpi") optics.validate(optics.defocus);
  else if (config.kind != "blur") throw std::invalid_argument("dataset kind must be 'qpi' or 'blur'");

  std::vector<std::pair<std::string, Image>> files;
  if (!config.source_dir.empty()) files = load_source_directory(config.source_dir, config.size, config.size);

  Dataset ds;
  for (int k = 0; k < count; ++k) {
    const int index = first + k;
    Image source;
    std::string id;
    if (files.empty()) {
      Rng src_rng(config.seed, "source", static_cast<std::uint64_t>(index));
      source = procedural_source(config.size, config.size, src_rng, config.blobs);
      id = "procedural:" + std::to_string(index);
    } else {
      const auto& f = files[static_cast<std::size_t>(index) % files.size()];
      source = f.second;
      id = f.first;
    }
    Rng noise_rng(config.seed, "noise", static_cast<std::uint64_t>(index));
    PairedSample s = config.kind == "qpi" ? make_pair(source, optics, noise_rng, config.pair)
                                          : make_toy_blur_pair(source, config.blur_sigma, config.blur_noise, noise_rng);
    s.source = id;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void write_dataset(const fs::path& dir, const DatasetConfig& config) {
  nlohmann::json manifest;
  manifest["config"] = to_json(config);
  manifest["phase_range"] = {0.0, config.pair.phase_scale};
  manifest["derivative_sign"] = "(I_{-d} - I_d) / (2d), opposite to the forward difference";
  manifest["noise"] = {{"distribution", "normal(mean=xi, variance=xi)"}, {"xi_max", config.pair.xi_max}};
  for (const std::string split : {"train", "val"}) {
    const Dataset ds = generate_split(config, split);
    nlohmann::json entries = nlohmann::json::array();
    for (int i = 0; i < ds.size(); ++i) {
      const PairedSample& s = ds.samples[static_cast<std::size_t>(i)];
      io::write_npy(dir / split / sample_name("x", i), s.x);
      io::write_npy(dir / split / sample_name("y", i), s.y);
      entries.push_back({{"index", i}, {"xi", s.xi}, {"source", s.source}});
    }
    manifest["splits"][split] = {{"count", ds.size()}, {"samples", entries}};
    if (!ds.samples.empty()) {
      const Shape xs = ds.samples.front().x.shape(), ys = ds.samples.front().y.shape();
      manifest["splits"][split]["x_shape"] = {xs.c, xs.h, xs.w};
      manifest["splits"][split]["y_shape"] = {ys.c, ys.h, ys.w};
    }
  }
  io::write_json(dir / "manifest.json", manifest);
}

Dataset load_split(const fs::path& dir, const std::string& split) {
  const nlohmann::json manifest = io::read_json(dir / "manifest.json");
  const auto& entry = manifest.at("splits").at(split);
  Dataset ds;
  for (int i = 0; i < entry.at("count").get<int>(); ++i) {
    PairedSample s;
    s.x = io::read_npy(dir / split / sample_name("x", i));
    s.y = io::read_npy(dir / split / sample_name("y", i));
    const auto& meta = entry.at("samples").at(static_cast<std::size_t>(i));
    s.xi = meta.at("xi").get<double>();
    s.source = meta.at("source").get<std::string>();
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace cvdm
