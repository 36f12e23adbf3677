#include "wdeos/dataset.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "wdeos/error.hpp"

namespace wdeos {

const char* to_string(StatsSource s) { return s == StatsSource::self ? "self" : "full_train_set"; }
const char* to_string(SyntheticMode m) { return m == SyntheticMode::teacher ? "teacher" : "random_labels"; }

SyntheticMode parse_synthetic_mode(const std::string& name) {
  if (name == "random_labels") return SyntheticMode::random_labels;
  if (name == "teacher") return SyntheticMode::teacher;
  throw InvalidArgument("unknown synthetic mode '" + name + "'");
}

StatsSource parse_stats_source(const std::string& name) {
  if (name == "self") return StatsSource::self;
  if (name == "full_train_set") return StatsSource::full_train_set;
  throw InvalidArgument("unknown stats source '" + name + "'");
}

namespace {

DenseMatrix one_hot_of(const std::vector<int>& labels, std::size_t c) {
  DenseMatrix m(labels.size(), c);
  for (std::size_t i = 0; i < labels.size(); ++i) m(i, static_cast<std::size_t>(labels[i])) = 1.0;
  return m;
}

// Calls fn(label, pixels) for every record in order; stops after `limit`.
template <class Fn>
std::size_t scan_records(const std::vector<std::string>& paths, std::size_t limit, Fn&& fn) {
  std::size_t seen = 0;
  std::vector<unsigned char> rec(kCifarRecord);
  for (const auto& path : paths) {
    if (seen >= limit) break;
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open " + path);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    if (bytes % kCifarRecord != 0)
      throw ParseError(path + ": size is not a multiple of " + std::to_string(kCifarRecord) +
                           " (truncated record)",
                       bytes - bytes % kCifarRecord);
    const std::size_t records = bytes / kCifarRecord;
    for (std::size_t r = 0; r < records && seen < limit; ++r, ++seen) {
      in.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(kCifarRecord));
      if (!in) throw ParseError(path + ": short read", r * kCifarRecord);
      if (rec[0] >= kCifarClasses)
        throw ParseError(path + ": label byte " + std::to_string(rec[0]) + " out of range", r * kCifarRecord);
      fn(static_cast<int>(rec[0]), rec.data() + 1);
    }
  }
  return seen;
}

}  // namespace

ImageDataset ImageDataset::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > size()) throw InvalidArgument("slice: range exceeds dataset");
  ImageDataset out;
  const std::size_t d = inputs.cols(), c = one_hot.cols();
  out.inputs = DenseMatrix(count, d);
  out.one_hot = DenseMatrix(count, c);
  for (std::size_t i = 0; i < count; ++i) {
    std::copy_n(inputs.row(begin + i).begin(), d, out.inputs.row(i).begin());
    std::copy_n(one_hot.row(begin + i).begin(), c, out.one_hot.row(i).begin());
  }
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    labels.begin() + static_cast<std::ptrdiff_t>(begin + count));
  out.channels = channels;
  out.teacher = teacher;
  out.meta = meta;
  return out;
}

ImageDataset load_cifar10_bin(const std::vector<std::string>& paths, std::size_t count) {
  ImageDataset ds;
  ds.channels = 3;
  ds.meta.source = "cifar10-bin";
  ds.inputs = DenseMatrix(count, kCifarPixels);
  ds.labels.reserve(count);
  std::size_t row = 0;
  const std::size_t got = scan_records(paths, count, [&](int label, const unsigned char* px) {
    ds.labels.push_back(label);
    auto dst = ds.inputs.row(row++);
    for (std::size_t j = 0; j < kCifarPixels; ++j) dst[j] = px[j] / 255.0;
  });
  if (got < count)
    throw ParseError("only " + std::to_string(got) + " records available, " + std::to_string(count) + " requested",
                     got * kCifarRecord);
  ds.one_hot = one_hot_of(ds.labels, kCifarClasses);
  return ds;
}

namespace {

struct StatsAccumulator {
  std::vector<double> sum, sumsq;
  std::size_t per_channel = 0, samples = 0;

  StatsAccumulator(std::size_t channels, std::size_t width)
      : sum(channels, 0.0), sumsq(channels, 0.0), per_channel(width) {}

  template <class T, class Scale>
  void add(const T* row, Scale scale) {
    for (std::size_t ch = 0; ch < sum.size(); ++ch) {
      double s = 0.0, q = 0.0;
      for (std::size_t j = 0; j < per_channel; ++j) {
        const double v = scale(row[ch * per_channel + j]);
        s += v;
        q += v * v;
      }
      sum[ch] += s;
      sumsq[ch] += q;
    }
    ++samples;
  }

  ChannelStats finish() const {
    ChannelStats st;
    st.samples = samples;
    const double cnt = static_cast<double>(samples * per_channel);
    for (std::size_t ch = 0; ch < sum.size(); ++ch) {
      const double m = sum[ch] / cnt;
      st.mean.push_back(m);
      st.stddev.push_back(std::sqrt(std::max(0.0, sumsq[ch] / cnt - m * m)));
    }
    return st;
  }
};

}  // namespace

ChannelStats cifar10_channel_stats(const std::vector<std::string>& paths) {
  StatsAccumulator acc(3, kCifarPixels / 3);
  scan_records(paths, static_cast<std::size_t>(-1),
               [&](int, const unsigned char* px) { acc.add(px, [](unsigned char b) { return b / 255.0; }); });
  return acc.finish();
}

ChannelStats channel_stats(const ImageDataset& ds) {
  const std::size_t d = ds.inputs.cols();
  if (ds.channels == 0 || d % ds.channels != 0) throw InvalidArgument("channel_stats: width not divisible by channels");
  if (ds.size() == 0) throw InvalidArgument("channel_stats: empty dataset");
  // Two-pass for accuracy: mean first, then centred second moment.
  const std::size_t w = d / ds.channels;
  ChannelStats st;
  st.samples = ds.size();
  const double cnt = static_cast<double>(ds.size() * w);
  for (std::size_t ch = 0; ch < ds.channels; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i)
      for (std::size_t j = 0; j < w; ++j) s += ds.inputs(i, ch * w + j);
    const double m = s / cnt;
    double q = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i)
      for (std::size_t j = 0; j < w; ++j) q += (ds.inputs(i, ch * w + j) - m) * (ds.inputs(i, ch * w + j) - m);
    st.mean.push_back(m);
    st.stddev.push_back(std::sqrt(q / cnt));
  }
  return st;
}

ImageDataset normalize_per_channel(const ImageDataset& ds, StatsSource source, const std::optional<ChannelStats>& full) {
  ImageDataset out = ds;
  ChannelStats st;
  out.meta.stats_fallback = false;
  if (source == StatsSource::full_train_set && full && full->samples >= kCifarTrainSize) {
    st = *full;
    out.meta.normalization = "full_train_set";
  } else {
    st = channel_stats(ds);
    out.meta.normalization = "self";
    out.meta.stats_fallback = source == StatsSource::full_train_set;
  }
  if (st.mean.size() != ds.channels) throw InvalidArgument("normalize_per_channel: channel count mismatch");
  for (double s : st.stddev)
    if (!(s > 0.0)) throw InvalidArgument("normalize_per_channel: zero standard deviation in a channel");
  const std::size_t w = ds.inputs.cols() / ds.channels;
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t ch = 0; ch < ds.channels; ++ch)
      for (std::size_t j = 0; j < w; ++j) {
        double& v = out.inputs(i, ch * w + j);
        v = (v - st.mean[ch]) / st.stddev[ch];
      }
  out.meta.stats = st;
  return out;
}

ImageDataset synthetic_dataset(std::size_t n, std::size_t d, std::size_t c, std::uint64_t seed, SyntheticMode mode) {
  if (n < 1 || d < 1 || c < 1) throw InvalidArgument("synthetic_dataset: n, d, c must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ImageDataset ds;
  ds.meta.source = "synthetic";
  ds.meta.seed = seed;
  ds.inputs = DenseMatrix(n, d);
  for (double& v : ds.inputs.values()) v = normal(rng);
  ds.labels.resize(n);
  if (mode == SyntheticMode::random_labels) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(c) - 1);
    for (int& l : ds.labels) l = pick(rng);
  } else {
    ds.teacher = DenseMatrix(d, c);
    for (double& v : ds.teacher.values()) v = normal(rng);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_v = -INFINITY;
      for (std::size_t k = 0; k < c; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += ds.inputs(i, j) * ds.teacher(j, k);
        if (s > best_v) {
          best_v = s;
          best = k;
        }
      }
      ds.labels[i] = static_cast<int>(best);
    }
  }
  ds.one_hot = one_hot_of(ds.labels, c);
  return ds;
}

void write_cifar10_bin(const ImageDataset& ds, const std::string& path) {
  if (ds.inputs.cols() != kCifarPixels) throw InvalidArgument("write_cifar10_bin: inputs must have 3072 columns");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  std::vector<unsigned char> rec(kCifarRecord);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] < 0 || ds.labels[i] >= static_cast<int>(kCifarClasses))
      throw InvalidArgument("write_cifar10_bin: label out of range");
    rec[0] = static_cast<unsigned char>(ds.labels[i]);
    for (std::size_t j = 0; j < kCifarPixels; ++j) {
      const double b = ds.inputs(i, j) * 255.0;
      const double r = std::round(b);
      if (r < 0.0 || r > 255.0 || std::abs(b - r) > 1e-9)
        throw InvalidArgument("write_cifar10_bin: input is not byte-valued");
      rec[j + 1] = static_cast<unsigned char>(r);
    }
    out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(kCifarRecord));
  }
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace wdeos
