#ifndef WDEOS_DATASET_HPP
#define WDEOS_DATASET_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wdeos/linalg.hpp"
#include "wdeos/mlp.hpp"

namespace wdeos {

inline constexpr std::size_t kCifarPixels = 3072;
inline constexpr std::size_t kCifarRecord = 3073;
inline constexpr std::size_t kCifarClasses = 10;
inline constexpr std::size_t kCifarTrainSize = 50000;

/// Per-channel mean and (population) standard deviation. A channel is a
/// contiguous block of input columns.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::size_t samples = 0;
};

enum class StatsSource { full_train_set, self };
enum class SyntheticMode { random_labels, teacher };

const char* to_string(StatsSource s);
const char* to_string(SyntheticMode m);
SyntheticMode parse_synthetic_mode(const std::string& name);
StatsSource parse_stats_source(const std::string& name);

struct DatasetMetadata {
  std::string source;  // "cifar10-bin" or "synthetic"
  std::optional<std::uint64_t> seed;
  /// Which statistics normalized the inputs: "none", "self", "full_train_set".
  std::string normalization = "none";
  /// full_train_set was requested but the complete training set was not
  /// available, so the subset's own statistics were used.
  bool stats_fallback = false;
  std::optional<ChannelStats> stats;
};

struct ImageDataset {
  DenseMatrix inputs;  // N x d
  std::vector<int> labels;
  DenseMatrix one_hot;  // N x C
  std::size_t channels = 1;
  /// Teacher weights (d x C) of a SyntheticMode::teacher dataset, else empty.
  DenseMatrix teacher;
  DatasetMetadata meta;

  std::size_t size() const { return labels.size(); }
  std::size_t num_classes() const { return one_hot.cols(); }
  LabeledBatch to_batch() const { return {inputs, one_hot}; }
  /// Rows [begin, begin + count).
  ImageDataset slice(std::size_t begin, std::size_t count) const;
};

/// First `count` records across `paths` in order; pixels scaled by 1/255.
ImageDataset load_cifar10_bin(const std::vector<std::string>& paths, std::size_t count);

/// Streams every record of `paths` (no dataset is kept in memory).
ChannelStats cifar10_channel_stats(const std::vector<std::string>& paths);

ChannelStats channel_stats(const ImageDataset& ds);

/// Affine per-channel standardization. With full_train_set the statistics
/// come from `full` when it covers all 50 000 training images; otherwise the
/// subset's own statistics are used and meta.stats_fallback is set.
ImageDataset normalize_per_channel(const ImageDataset& ds, StatsSource source,
                                   const std::optional<ChannelStats>& full = std::nullopt);

/// Inputs i.i.d. N(0,1). Labels uniform (random_labels) or the argmax of
/// x·T for a seeded N(0,1) teacher T (teacher).
ImageDataset synthetic_dataset(std::size_t n, std::size_t d, std::size_t c, std::uint64_t seed, SyntheticMode mode);

/// Writes the dataset in the CIFAR-10 binary layout. Inputs must be
/// byte-valued, i.e. k/255 for integers k in [0, 255].
void write_cifar10_bin(const ImageDataset& ds, const std::string& path);

}  // namespace wdeos

#endif  // WDEOS_DATASET_HPP
