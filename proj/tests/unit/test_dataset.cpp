#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include "wdeos/dataset.hpp"
#include "wdeos/error.hpp"

using namespace wdeos;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "wdeos_dataset_test";
  fs::create_directories(dir);
  return dir / name;
}

// Byte-valued fake CIFAR records with labels i % 10.
ImageDataset fake_cifar(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> byte(0, 255);
  ImageDataset ds;
  ds.channels = 3;
  ds.inputs = DenseMatrix(n, kCifarPixels);
  for (double& v : ds.inputs.values()) v = byte(rng) / 255.0;
  for (std::size_t i = 0; i < n; ++i) ds.labels.push_back(static_cast<int>(i % 10));
  ds.one_hot = DenseMatrix(n, 10);
  for (std::size_t i = 0; i < n; ++i) ds.one_hot(i, i % 10) = 1.0;
  return ds;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::string> cifar_batches() {
  const char* dir = std::getenv("CIFAR10_DIR");
  if (!dir) return {};
  std::vector<std::string> out;
  for (int i = 1; i <= 5; ++i) out.push_back((fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin")).string());
  return out;
}

}  // namespace

TEST(Synthetic, SameSeedSameData) {
  const auto a = synthetic_dataset(50, 8, 4, 3, SyntheticMode::random_labels);
  const auto b = synthetic_dataset(50, 8, 4, 3, SyntheticMode::random_labels);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(synthetic_dataset(50, 8, 4, 4, SyntheticMode::random_labels).inputs, a.inputs);
}

TEST(Synthetic, TeacherLabelsAreArgmax) {
  const auto ds = synthetic_dataset(200, 6, 5, 1, SyntheticMode::teacher);
  ASSERT_EQ(ds.teacher.rows(), 6u);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    int best = 0;
    double top = -1e300;
    for (std::size_t k = 0; k < 5; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < 6; ++j) s += ds.inputs(i, j) * ds.teacher(j, k);
      if (s > top) {
        top = s;
        best = static_cast<int>(k);
      }
    }
    EXPECT_EQ(ds.labels[i], best);
  }
}

TEST(Synthetic, RandomLabelsMatchRegeneration) {
  const std::size_t n = 500, d = 64, c = 10;
  const auto ds = synthetic_dataset(n, d, c, 0, SyntheticMode::random_labels);
  std::mt19937_64 rng(0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n * d; ++i) (void)normal(rng);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(c) - 1);
  std::vector<int> hist(c, 0), expect(c, 0);
  for (std::size_t i = 0; i < n; ++i) ++expect[static_cast<std::size_t>(pick(rng))];
  for (int l : ds.labels) ++hist[static_cast<std::size_t>(l)];
  EXPECT_EQ(hist, expect);
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(ds.one_hot(i, static_cast<std::size_t>(ds.labels[i])), 1.0);
}

TEST(Normalize, SelfStatsGiveUnitMoments) {
  auto ds = fake_cifar(30, 1);
  const auto norm = normalize_per_channel(ds, StatsSource::self);
  const ChannelStats st = channel_stats(norm);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    EXPECT_NEAR(st.mean[ch], 0.0, 1e-10);
    EXPECT_NEAR(st.stddev[ch], 1.0, 1e-10);
  }
  EXPECT_EQ(norm.meta.normalization, "self");
  EXPECT_FALSE(norm.meta.stats_fallback);
}

TEST(Normalize, ConstantImagesHaveZeroStd) {
  ImageDataset ds = fake_cifar(5, 2);
  for (double& v : ds.inputs.values()) v = 0.5;
  EXPECT_THROW(normalize_per_channel(ds, StatsSource::self), InvalidArgument);
}

TEST(Normalize, FullSetStatsDifferFromSelfAndAreRecorded) {
  const auto ds = fake_cifar(30, 3);
  ChannelStats full{{0.49, 0.48, 0.45}, {0.25, 0.24, 0.26}, kCifarTrainSize};
  const auto a = normalize_per_channel(ds, StatsSource::full_train_set, full);
  const auto b = normalize_per_channel(ds, StatsSource::self);
  EXPECT_NE(a.inputs, b.inputs);
  EXPECT_EQ(a.meta.normalization, "full_train_set");
  EXPECT_FALSE(a.meta.stats_fallback);
  EXPECT_NEAR(a.inputs(0, 0), (ds.inputs(0, 0) - 0.49) / 0.25, 1e-15);

  full.samples = 5000;
  const auto c = normalize_per_channel(ds, StatsSource::full_train_set, full);
  EXPECT_EQ(c.meta.normalization, "self");
  EXPECT_TRUE(c.meta.stats_fallback);
  EXPECT_EQ(c.inputs, b.inputs);
}

TEST(CifarBin, RoundTrip) {
  const auto ds = fake_cifar(25, 4);
  const fs::path p = scratch("roundtrip.bin");
  write_cifar10_bin(ds, p.string());
  EXPECT_EQ(fs::file_size(p), 25u * kCifarRecord);
  const auto back = load_cifar10_bin({p.string()}, 25);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.inputs, ds.inputs);
  EXPECT_EQ(back.channels, 3u);
  const auto head = load_cifar10_bin({p.string(), p.string()}, 30);
  EXPECT_EQ(head.size(), 30u);
  EXPECT_EQ(head.labels[25], ds.labels[0]);
  const ChannelStats streamed = cifar10_channel_stats({p.string()});
  const ChannelStats direct = channel_stats(ds);
  for (std::size_t ch = 0; ch < 3; ++ch) EXPECT_NEAR(streamed.stddev[ch], direct.stddev[ch], 1e-10);
}

TEST(CifarBin, EmptyRequest) {
  const fs::path p = scratch("empty_req.bin");
  write_cifar10_bin(fake_cifar(2, 5), p.string());
  const auto ds = load_cifar10_bin({p.string()}, 0);
  EXPECT_EQ(ds.size(), 0u);
}

TEST(CifarBin, StructuredParseErrors) {
  const fs::path p = scratch("bad.bin");
  std::vector<unsigned char> bytes(2 * kCifarRecord, 1);
  bytes[kCifarRecord] = 10;  // second label out of range
  write_bytes(p, bytes);
  try {
    load_cifar10_bin({p.string()}, 2);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.byte_offset(), kCifarRecord);
  }

  bytes.assign(kCifarRecord + 100, 1);
  write_bytes(p, bytes);
  try {
    load_cifar10_bin({p.string()}, 1);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.byte_offset(), kCifarRecord);
  }

  bytes.assign(kCifarRecord, 1);
  write_bytes(p, bytes);
  EXPECT_THROW(load_cifar10_bin({p.string()}, 2), ParseError);
  EXPECT_THROW(load_cifar10_bin({(fs::temp_directory_path() / "no_such_cifar.bin").string()}, 1), IoError);
}

TEST(CifarBin, WriterRejectsNonByteValues) {
  auto ds = fake_cifar(1, 6);
  ds.inputs(0, 0) = 0.123456;
  EXPECT_THROW(write_cifar10_bin(ds, scratch("x.bin").string()), InvalidArgument);
}

TEST(Slice, CopiesRowsAndMetadata) {
  const auto ds = synthetic_dataset(10, 3, 2, 9, SyntheticMode::teacher);
  const auto s = ds.slice(4, 3);
  EXPECT_EQ(s.size(), 3u);
  EXPECT_EQ(s.labels[0], ds.labels[4]);
  EXPECT_EQ(s.inputs(2, 1), ds.inputs(6, 1));
  EXPECT_EQ(s.meta.seed, ds.meta.seed);
  EXPECT_THROW(ds.slice(8, 3), InvalidArgument);
}

TEST(CifarReal, FirstFiveThousandClassBalance) {
  const auto paths = cifar_batches();
  if (paths.empty()) GTEST_SKIP() << "CIFAR10_DIR not set";
  const auto ds = load_cifar10_bin({paths[0]}, 5000);
  std::vector<int> hist(10, 0);
  for (int l : ds.labels) ++hist[static_cast<std::size_t>(l)];
  for (int h : hist) {
    EXPECT_GE(h, 460);
    EXPECT_LE(h, 520);
  }
}

TEST(CifarReal, FullSetNormalizationDiffersFromSelf) {
  const auto paths = cifar_batches();
  if (paths.empty()) GTEST_SKIP() << "CIFAR10_DIR not set";
  const auto ds = load_cifar10_bin({paths[0]}, 5000);
  const auto full = cifar10_channel_stats(paths);
  ASSERT_EQ(full.samples, kCifarTrainSize);
  const auto a = normalize_per_channel(ds, StatsSource::full_train_set, full);
  const auto b = normalize_per_channel(ds, StatsSource::self);
  EXPECT_NE(a.inputs, b.inputs);
  EXPECT_EQ(a.meta.normalization, "full_train_set");
  EXPECT_EQ(b.meta.normalization, "self");
}
