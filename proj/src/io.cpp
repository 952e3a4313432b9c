#include "cvdm/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <regex>
#include <sstream>

namespace cvdm::io {
namespace {

constexpr char kArchiveMagic[8] = {'C', 'V', 'D', 'M', 'C', 'K', 'P', 'T'};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string read_text(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string file_digest(const fs::path& path) { return fnv1a_hex(read_text(path)); }

void write_npy(const fs::path& path, const Tensor& t) {
  const Shape& s = t.shape();
  std::string shape = s.n == 1 ? "(" + std::to_string(s.c) + ", " + std::to_string(s.h) + ", " + std::to_string(s.w) + ")"
                               : "(" + std::to_string(s.n) + ", " + std::to_string(s.c) + ", " + std::to_string(s.h) +
                                     ", " + std::to_string(s.w) + ")";
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': " + shape + ", }";
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');

  std::ofstream out = open_out(path);
  out.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  const char len_bytes[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  out.write(len_bytes, 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

Tensor read_npy(const fs::path& path) {
  std::ifstream in = open_in(path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0) throw FormatError(path.string() + ": not an NPY file");
  std::uint32_t header_len = 0;
  if (magic[6] == 1) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    header_len = b[0] | (b[1] << 8);
  } else {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    header_len = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::string header(header_len, '\0');
  in.read(header.data(), header_len);

  std::smatch m;
  if (!std::regex_search(header, m, std::regex(R"('descr':\s*'([^']+)')"))) throw FormatError(path.string() + ": no descr");
  const std::string descr = m[1];
  if (descr != "<f8" && descr != "<f4") throw FormatError(path.string() + ": unsupported dtype " + descr);
  if (header.find("'fortran_order': True") != std::string::npos) throw FormatError(path.string() + ": Fortran order");
  if (!std::regex_search(header, m, std::regex(R"('shape':\s*\(([^)]*)\))"))) throw FormatError(path.string() + ": no shape");
  std::vector<int> dims;
  const std::string dims_text = m[1];
  const std::regex number(R"(\d+)");
  for (std::sregex_iterator it(dims_text.begin(), dims_text.end(), number), end; it != end; ++it) {
    dims.push_back(std::stoi(it->str()));
  }
  Shape s;
  if (dims.size() == 2) s = Shape{1, 1, dims[0], dims[1]};
  else if (dims.size() == 3) s = Shape{1, dims[0], dims[1], dims[2]};
  else if (dims.size() == 4) s = Shape{dims[0], dims[1], dims[2], dims[3]};
  else throw FormatError(path.string() + ": rank " + std::to_string(dims.size()) + " not supported");

  Tensor t(s);
  if (descr == "<f8") {
    in.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  } else {
    std::vector<float> buf(t.size());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    for (std::size_t i = 0; i < buf.size(); ++i) t.data()[static_cast<Eigen::Index>(i)] = buf[i];
  }
  if (!in) throw FormatError(path.string() + ": truncated data");
  return t;
}

const Tensor& TensorArchive::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw FormatError("archive has no tensor '" + name + "'");
}

void save_archive(const fs::path& path, const TensorArchive& archive) {
  nlohmann::json header;
  header["meta"] = archive.meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    const Shape& s = t.shape();
    header["tensors"].push_back({{"name", name}, {"shape", {s.n, s.c, s.h, s.w}}, {"dtype", "float64"}, {"offset", offset}});
    offset += t.size() * sizeof(double);
  }
  const std::string text = header.dump();
  const std::uint64_t len = text.size();

  // Write to a sibling file first so an interrupted save never clobbers a good checkpoint.
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out = open_out(tmp);
    out.write(kArchiveMagic, 8);
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& entry : archive.tensors) {
      const Tensor& t = entry.second;
      out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

TensorArchive load_archive(const fs::path& path) {
  std::ifstream in = open_in(path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kArchiveMagic, 8) != 0) throw FormatError(path.string() + ": not a checkpoint");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1ULL << 32)) throw FormatError(path.string() + ": bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const nlohmann::json header = nlohmann::json::parse(text);

  TensorArchive archive;
  archive.meta = header.at("meta");
  const auto data_start = in.tellg();
  for (const auto& entry : header.at("tensors")) {
    if (entry.at("dtype") != "float64") throw FormatError(path.string() + ": unsupported dtype");
    const auto dims = entry.at("shape").get<std::vector<int>>();
    Tensor t(Shape{dims.at(0), dims.at(1), dims.at(2), dims.at(3)});
    in.seekg(data_start + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw FormatError(path.string() + ": truncated tensor data");
    archive.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  return archive;
}

Eigen::ArrayXXd plane(const Tensor& t, int n, int c) {
  const Shape& s = t.shape();
  Eigen::ArrayXXd out(s.h, s.w);
  for (int h = 0; h < s.h; ++h)
    for (int w = 0; w < s.w; ++w) out(h, w) = t(n, c, h, w);
  return out;
}

void write_png(const fs::path& path, const Eigen::ArrayXXd& p, double lo, double hi) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto rows = static_cast<std::size_t>(p.rows()), cols = static_cast<std::size_t>(p.cols());
  std::vector<png_byte> buf(rows * cols);
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = std::clamp((p(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) - lo) / span, 0.0, 1.0);
      buf[r * cols + c] = static_cast<png_byte>(std::lround(v * 255.0));
    }
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(cols);
  image.height = static_cast<png_uint_32>(rows);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw std::runtime_error("PNG write failed for " + path.string() + ": " + image.message);
  }
}

void write_svg_plot(const fs::path& path, const std::vector<PlotSeries>& series, const PlotOptions& options) {
  const double width = 640, height = 420, left = 70, right = 20, top = 40, bottom = 55;
  auto tx = [&](double v) { return options.log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return options.log_y ? std::log10(v) : v; };

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(tx(s.x[i])) || !std::isfinite(ty(s.y[i]))) continue;
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) y1 = y0 + 1;
  auto px = [&](double v) { return left + (tx(v) - x0) / (x1 - x0) * (width - left - right); };
  auto py = [&](double v) { return height - bottom - (ty(v) - y0) / (y1 - y0) * (height - top - bottom); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream svg;
  svg << std::setprecision(6);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << options.title << "</text>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\"" << width - right << "\" y2=\""
      << height - bottom << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << height - bottom
      << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = x0 + (x1 - x0) * k / 4, fy = y0 + (y1 - y0) * k / 4;
    const double vx = options.log_x ? std::pow(10.0, fx) : fx, vy = options.log_y ? std::pow(10.0, fy) : fy;
    svg << "<text x=\"" << px(vx) << "\" y=\"" << height - bottom + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
        << vx << "</text>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << py(vy) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << vy
        << "</text>\n";
  }
  svg << "<text x=\"" << (left + width - right) / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">" << options.x_label << "</text>\n";
  svg << "<text x=\"16\" y=\"" << (top + height - bottom) / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
      << "transform=\"rotate(-90 16 " << (top + height - bottom) / 2 << ")\">" << options.y_label << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = colors[k % 6];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(tx(s.x[i])) && std::isfinite(ty(s.y[i]))) svg << px(s.x[i]) << "," << py(s.y[i]) << " ";
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << width - right - 150 << "\" y=\"" << top + 16 * (k + 1) << "\" font-size=\"12\" fill=\""
        << color << "\">" << s.label << "</text>\n";
  }
  svg << "</svg>\n";
  std::ofstream out = open_out(path);
  out << svg.str();
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
}

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace cvdm::io
