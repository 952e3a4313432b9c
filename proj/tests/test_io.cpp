#include "cvdm/config.hpp"
#include "cvdm/io.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace cvdm;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cvdm_test_io";
  fs::create_directories(dir);
  return dir / name;
}

Tensor ramp(Shape s) {
  Tensor t(s);
  for (Eigen::Index i = 0; i < t.data().size(); ++i) t.data()(i) = 0.25 * static_cast<double>(i) - 3.0;
  return t;
}

void write_raw(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

}  // namespace

TEST(Io, Fnv1aKnownValues) {
  EXPECT_EQ(io::fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(io::fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(Io, NpyRoundTripsEveryRank) {
  const fs::path p = temp_file("t.npy");
  const Tensor one = ramp(Shape{1, 2, 3, 4});
  io::write_npy(p, one);
  const Tensor back = io::read_npy(p);
  EXPECT_EQ(back.shape(), one.shape());
  EXPECT_TRUE((back.data() == one.data()).all());

  const Tensor many = ramp(Shape{3, 1, 2, 2});
  io::write_npy(p, many);
  EXPECT_EQ(io::read_npy(p).shape(), many.shape());

  std::ifstream in(p, std::ios::binary);
  std::string magic(6, '\0');
  in.read(magic.data(), 6);
  EXPECT_EQ(magic, "\x93NUMPY");
}

TEST(Io, NpyReadsFloat32AndRank2) {
  const fs::path p = temp_file("f4.npy");
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }";
  while ((10 + header.size() + 1) % 64 != 0) header += ' ';
  header += '\n';
  std::string bytes = "\x93NUMPY";
  bytes += '\x01';
  bytes += '\x00';
  bytes += static_cast<char>(header.size() & 0xff);
  bytes += static_cast<char>(header.size() >> 8);
  bytes += header;
  for (int i = 0; i < 6; ++i) {
    const float f = 0.5f * static_cast<float>(i);
    char b[4];
    std::memcpy(b, &f, 4);
    bytes.append(b, 4);
  }
  write_raw(p, bytes);
  const Tensor t = io::read_npy(p);
  EXPECT_EQ(t.shape(), (Shape{1, 1, 2, 3}));
  EXPECT_EQ(t.data()(5), 2.5);
}

TEST(Io, NpyRejectsFortranOrderAndGarbage) {
  const fs::path p = temp_file("bad.npy");
  write_raw(p, "not an npy file at all");
  EXPECT_THROW(io::read_npy(p), io::FormatError);
  std::string header = "{'descr': '<f8', 'fortran_order': True, 'shape': (2, 2), }\n";
  std::string bytes = "\x93NUMPY";
  bytes += '\x01';
  bytes += '\x00';
  bytes += static_cast<char>(header.size());
  bytes += '\x00';
  bytes += header + std::string(32, '\0');
  write_raw(p, bytes);
  EXPECT_THROW(io::read_npy(p), io::FormatError);
}

TEST(Io, ArchiveRoundTripsTensorsAndMetadata) {
  const fs::path p = temp_file("a.ckpt");
  io::TensorArchive a;
  a.meta = {{"step", 12}, {"note", "x"}};
  a.tensors.emplace_back("w", ramp(Shape{2, 3, 1, 1}));
  a.tensors.emplace_back("b", Tensor::scalar(-1.5));
  io::save_archive(p, a);
  const io::TensorArchive back = io::load_archive(p);
  EXPECT_EQ(back.meta["step"], 12);
  EXPECT_EQ(back.get("w").shape(), (Shape{2, 3, 1, 1}));
  EXPECT_TRUE((back.get("w").data() == a.tensors[0].second.data()).all());
  EXPECT_EQ(back.get("b").item(), -1.5);
  EXPECT_THROW((void)back.get("missing"), io::FormatError);

  std::ifstream in(p, std::ios::binary);
  std::string magic(8, '\0');
  in.read(magic.data(), 8);
  EXPECT_EQ(magic, "CVDMCKPT");
}

TEST(Io, TruncatedArchiveIsRejected) {
  const fs::path p = temp_file("short.ckpt");
  io::TensorArchive a;
  a.tensors.emplace_back("w", ramp(Shape{1, 1, 8, 8}));
  io::save_archive(p, a);
  fs::resize_file(p, fs::file_size(p) - 16);
  EXPECT_THROW(io::load_archive(p), io::FormatError);
}

TEST(Config, DefaultsRoundTripThroughJson) {
  const RunConfig c = parse_config(json::object());
  const RunConfig again = parse_config(to_json(c));
  EXPECT_EQ(to_json(c).dump(), to_json(again).dump());
  EXPECT_EQ(c.x_channels(), 2);
  EXPECT_EQ(c.denoiser.x_channels, 2);
  EXPECT_EQ(c.schedule.x_channels, 2);
}

TEST(Config, UnknownKeysNameTheirPath) {
  try {
    (void)parse_config(json{{"train", {{"learning_rat", 1e-3}}}});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.learning_rat"), std::string::npos) << e.what();
  }
  EXPECT_THROW((void)parse_config(json{{"bogus", 1}}), ConfigError);
  EXPECT_THROW((void)parse_config(json{{"data", {{"optics", {{"wavelenght", 1}}}}}}), ConfigError);
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW((void)parse_config(json{{"schedule", {{"mode", "sideways"}}}}), ConfigError);
  EXPECT_THROW((void)parse_config(json{{"train", {{"iterations", "many"}}}}), ConfigError);
  EXPECT_THROW((void)parse_config(json{{"sampler", {{"beta_mode", "linear:0.1"}}}}), ConfigError);
}

TEST(Config, ChannelCountsFollowTheData) {
  EXPECT_EQ(parse_config(json{{"data", {{"kind", "blur"}}}}).x_channels(), 1);
  const RunConfig d = parse_config(json{{"data", {{"layout", "derivative"}}}});
  EXPECT_EQ(d.x_channels(), 1);
  EXPECT_EQ(d.denoiser.x_channels, 1);
}

TEST(Config, SeedDerivesSectionSeeds) {
  const RunConfig a = parse_config(json{{"seed", 5}}), b = parse_config(json{{"seed", 6}});
  EXPECT_NE(a.data.seed, b.data.seed);
  EXPECT_NE(a.sampler.seed, b.sampler.seed);
  EXPECT_NE(a.data.seed, a.sampler.seed);
  EXPECT_EQ(a.data.seed, parse_config(json{{"seed", 5}}).data.seed);
}

TEST(Config, DigestIgnoresKeyOrderAndNonModelSections) {
  const json a = json::parse(R"({"schedule": {"time_hidden": 32, "mode": "global"}, "denoiser": {"scales": 2}})");
  const json b = json::parse(R"({"denoiser": {"scales": 2}, "schedule": {"mode": "global", "time_hidden": 32}})");
  EXPECT_EQ(model_digest(parse_config(a)), model_digest(parse_config(b)));
  json c = a;
  c["train"] = {{"iterations", 7}};
  c["sampler"] = {{"T", 10}};
  EXPECT_EQ(model_digest(parse_config(a)), model_digest(parse_config(c)));
  json d = a;
  d["denoiser"]["scales"] = 3;
  EXPECT_NE(model_digest(parse_config(a)), model_digest(parse_config(d)));
  json e = a;
  e["data"] = {{"kind", "blur"}};
  EXPECT_NE(model_digest(parse_config(a)), model_digest(parse_config(e)));
}

TEST(Config, LoadsFromFile) {
  const fs::path p = temp_file("run.json");
  io::write_json(p, json{{"seed", 3}, {"train", {{"batch_size", 2}}}});
  const RunConfig c = load_config(p);
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.train.batch_size, 2);
  EXPECT_THROW(load_config(temp_file("absent.json")), std::exception);
}
