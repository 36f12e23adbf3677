#include "wdeos/mlp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "wdeos/error.hpp"

namespace wdeos {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const Mat>;
using MatMap = Eigen::Map<Mat>;
using ConstRowMap = Eigen::Map<const Eigen::RowVectorXd>;
using RowMap = Eigen::Map<Eigen::RowVectorXd>;

Mat activate(const Mat& z, Activation a) {
  switch (a) {
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::tanh: return z.array().tanh().matrix();
    case Activation::identity: return z;
  }
  return z;
}

// σ'(z); the relu subgradient at 0 is 0.
Mat activation_slope(const Mat& z, Activation a) {
  switch (a) {
    case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: {
      const Mat t = z.array().tanh().matrix();
      return (1.0 - t.array().square()).matrix();
    }
    case Activation::identity: return Mat::Ones(z.rows(), z.cols());
  }
  return z;
}

// σ''(z); zero for piecewise-linear activations.
Mat activation_curvature(const Mat& z, Activation a) {
  if (a == Activation::tanh) {
    const Mat t = z.array().tanh().matrix();
    return (-2.0 * t.array() * (1.0 - t.array().square())).matrix();
  }
  return Mat::Zero(z.rows(), z.cols());
}

ConstMatMap as_matrix(const DenseMatrix& m) {
  return ConstMatMap(m.values().data(), static_cast<Eigen::Index>(m.rows()),
                     static_cast<Eigen::Index>(m.cols()));
}

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw InvalidArgument("unknown activation '" + name + "'");
}

const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw InvalidArgument("MlpSpec: need at least input and output sizes");
  for (std::size_t s : layer_sizes)
    if (s < 1) throw InvalidArgument("MlpSpec: layer sizes must be >= 1");
}

std::size_t count_params(const MlpSpec& spec) {
  spec.validate();
  std::size_t p = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l)
    p += spec.layer_sizes[l] * spec.layer_sizes[l + 1] + spec.layer_sizes[l + 1];
  return p;
}

struct Mlp::Tape {
  std::vector<Mat> z;  // pre-activations, z[l] for layer l+1
  std::vector<Mat> a;  // a[0] = inputs, a[l] = output of layer l
};

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t offset = 0;
  for (std::size_t l = 0; l < spec_.num_layers(); ++l) {
    const std::size_t fi = spec_.layer_sizes[l], fo = spec_.layer_sizes[l + 1];
    layout_.push_back({offset, offset + fi * fo, fi, fo});
    offset += fi * fo + fo;
  }
  num_params_ = offset;
}

ParamVector Mlp::init_params() const {
  std::mt19937_64 rng(spec_.init_seed);
  ParamVector p(num_params_);
  for (const auto& blk : layout_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(blk.fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < blk.fan_in * blk.fan_out + blk.fan_out; ++i) p[blk.weight_offset + i] = dist(rng);
  }
  return p;
}

void Mlp::check_params(std::span<const double> params) const {
  if (params.size() != num_params_)
    throw InvalidArgument("parameter vector has length " + std::to_string(params.size()) + ", expected " +
                          std::to_string(num_params_));
}

void Mlp::check_inputs(const DenseMatrix& inputs) const {
  if (inputs.cols() != spec_.input_dim())
    throw InvalidArgument("input width " + std::to_string(inputs.cols()) + " does not match network input " +
                          std::to_string(spec_.input_dim()));
}

Mlp::Tape Mlp::run_forward(std::span<const double> params, const DenseMatrix& inputs) const {
  check_params(params);
  check_inputs(inputs);
  Tape t;
  t.a.emplace_back(as_matrix(inputs));
  const std::size_t L = layout_.size();
  for (std::size_t l = 0; l < L; ++l) {
    const auto& blk = layout_[l];
    ConstMatMap w(params.data() + blk.weight_offset, static_cast<Eigen::Index>(blk.fan_in),
                  static_cast<Eigen::Index>(blk.fan_out));
    ConstRowMap b(params.data() + blk.bias_offset, static_cast<Eigen::Index>(blk.fan_out));
    Mat z = t.a.back() * w;
    z.rowwise() += b;
    if (!z.allFinite()) throw OverflowError(l + 1, "pre-activation");
    t.a.push_back(l + 1 < L ? activate(z, spec_.activation) : z);
    t.z.push_back(std::move(z));
  }
  return t;
}

DenseMatrix Mlp::forward(std::span<const double> params, const DenseMatrix& inputs) const {
  const Tape t = run_forward(params, inputs);
  const Mat& out = t.a.back();
  return DenseMatrix(static_cast<std::size_t>(out.rows()), static_cast<std::size_t>(out.cols()),
                     std::vector<double>(out.data(), out.data() + out.size()));
}

double Mlp::loss(std::span<const double> params, const LabeledBatch& batch) const {
  const Tape t = run_forward(params, batch.inputs);
  const double n = static_cast<double>(batch.size());
  const double l = 0.5 * (t.a.back() - as_matrix(batch.targets)).squaredNorm() / n;
  if (!std::isfinite(l)) throw OverflowError(layout_.size(), "loss");
  return l;
}

namespace {

// Reverse pass from the output adjoint dz (N x C). Writes ∂/∂θ into grad.
template <class Layout, class TapeT>
void backprop(const Layout& layout, const TapeT& t, std::span<const double> params, Activation act, Mat dz,
              std::span<double> grad) {
  for (std::size_t l = layout.size(); l-- > 0;) {
    const auto& blk = layout[l];
    MatMap gw(grad.data() + blk.weight_offset, static_cast<Eigen::Index>(blk.fan_in),
              static_cast<Eigen::Index>(blk.fan_out));
    RowMap gb(grad.data() + blk.bias_offset, static_cast<Eigen::Index>(blk.fan_out));
    gw.noalias() = t.a[l].transpose() * dz;
    gb = dz.colwise().sum();
    if (l == 0) break;
    ConstMatMap w(params.data() + blk.weight_offset, static_cast<Eigen::Index>(blk.fan_in),
                  static_cast<Eigen::Index>(blk.fan_out));
    Mat da = dz * w.transpose();
    dz = da.cwiseProduct(activation_slope(t.z[l - 1], act));
  }
}

}  // namespace

LossAndGrad Mlp::loss_and_grad(std::span<const double> params, const LabeledBatch& batch) const {
  if (batch.targets.rows() != batch.inputs.rows() || batch.targets.cols() != spec_.output_dim())
    throw InvalidArgument("target shape does not match batch/network");
  const Tape t = run_forward(params, batch.inputs);
  const double n = static_cast<double>(batch.size());
  const Mat resid = t.a.back() - as_matrix(batch.targets);
  LossAndGrad out;
  out.loss = 0.5 * resid.squaredNorm() / n;
  if (!std::isfinite(out.loss)) throw OverflowError(layout_.size(), "loss");
  out.grad.assign(num_params_, 0.0);
  backprop(layout_, t, params, spec_.activation, resid / n, out.grad);
  for (std::size_t l = 0; l < layout_.size(); ++l) {
    const auto& blk = layout_[l];
    for (std::size_t i = blk.weight_offset; i < blk.bias_offset + blk.fan_out; ++i)
      if (!std::isfinite(out.grad[i])) throw OverflowError(l + 1, "gradient");
  }
  return out;
}

namespace {

// Forward-mode tangent of every pre-activation along direction v.
template <class Layout, class TapeT>
std::vector<Mat> tangent_forward(const Layout& layout, const TapeT& t, std::span<const double> params,
                                 Activation act, std::span<const double> v) {
  std::vector<Mat> rz;
  Mat ra;  // tangent of the layer input; zero for the data
  for (std::size_t l = 0; l < layout.size(); ++l) {
    const auto& blk = layout[l];
    ConstMatMap w(params.data() + blk.weight_offset, static_cast<Eigen::Index>(blk.fan_in),
                  static_cast<Eigen::Index>(blk.fan_out));
    ConstMatMap vw(v.data() + blk.weight_offset, static_cast<Eigen::Index>(blk.fan_in),
                   static_cast<Eigen::Index>(blk.fan_out));
    ConstRowMap vb(v.data() + blk.bias_offset, static_cast<Eigen::Index>(blk.fan_out));
    Mat z = t.a[l] * vw;
    if (l > 0) z.noalias() += ra * w;
    z.rowwise() += vb;
    if (l + 1 < layout.size()) ra = z.cwiseProduct(activation_slope(t.z[l], act));
    rz.push_back(std::move(z));
  }
  return rz;
}

// Second-order reverse pass: given the output adjoint dz and its tangent rdz,
// accumulate the tangent of the gradient into out.
template <class Layout, class TapeT>
void tangent_backward(const Layout& layout, const TapeT& t, const std::vector<Mat>& rz,
                      std::span<const double> params, Activation act, std::span<const double> v, Mat dz,
                      Mat rdz, std::span<double> out) {
  for (std::size_t l = layout.size(); l-- > 0;) {
    const auto& blk = layout[l];
    MatMap gw(out.data() + blk.weight_offset, static_cast<Eigen::Index>(blk.fan_in),
              static_cast<Eigen::Index>(blk.fan_out));
    RowMap gb(out.data() + blk.bias_offset, static_cast<Eigen::Index>(blk.fan_out));
    gw.noalias() = t.a[l].transpose() * rdz;
    if (l > 0) {
      const Mat ra = rz[l - 1].cwiseProduct(activation_slope(t.z[l - 1], act));
      gw.noalias() += ra.transpose() * dz;
    }
    gb = rdz.colwise().sum();
    if (l == 0) break;
    ConstMatMap w(params.data() + blk.weight_offset, static_cast<Eigen::Index>(blk.fan_in),
                  static_cast<Eigen::Index>(blk.fan_out));
    ConstMatMap vw(v.data() + blk.weight_offset, static_cast<Eigen::Index>(blk.fan_in),
                   static_cast<Eigen::Index>(blk.fan_out));
    const Mat da = dz * w.transpose();
    Mat rda = rdz * w.transpose();
    rda.noalias() += dz * vw.transpose();
    const Mat slope = activation_slope(t.z[l - 1], act);
    rdz = rda.cwiseProduct(slope);
    if (act == Activation::tanh)
      rdz += da.cwiseProduct(activation_curvature(t.z[l - 1], act)).cwiseProduct(rz[l - 1]);
    dz = da.cwiseProduct(slope);
  }
}

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw InvalidArgument(std::string(what) + ": direction has non-finite entries");
}

}  // namespace

Vector Mlp::hvp(std::span<const double> params, const LabeledBatch& batch, std::span<const double> v) const {
  check_params(v);
  check_finite(v, "hvp");
  const Tape t = run_forward(params, batch.inputs);
  const double n = static_cast<double>(batch.size());
  const auto rz = tangent_forward(layout_, t, params, spec_.activation, v);
  const Mat dz = (t.a.back() - as_matrix(batch.targets)) / n;
  const Mat rdz = rz.back() / n;
  Vector out(num_params_, 0.0);
  tangent_backward(layout_, t, rz, params, spec_.activation, v, dz, rdz, out);
  for (double x : out)
    if (!std::isfinite(x)) throw OverflowError(layout_.size(), "Hessian-vector product");
  return out;
}

Vector Mlp::weighted_output_hvp(std::span<const double> params, const DenseMatrix& inputs,
                                std::span<const double> w, std::span<const double> v) const {
  check_params(v);
  const Tape t = run_forward(params, inputs);
  const auto rows = t.a.back().rows(), cols = t.a.back().cols();
  if (w.size() != static_cast<std::size_t>(rows * cols)) throw InvalidArgument("weighted_output_hvp: weight length");
  const auto rz = tangent_forward(layout_, t, params, spec_.activation, v);
  const Mat dz = ConstMatMap(w.data(), rows, cols);
  Vector out(num_params_, 0.0);
  tangent_backward(layout_, t, rz, params, spec_.activation, v, dz, Mat::Zero(rows, cols), out);
  return out;
}

Vector Mlp::jvp(std::span<const double> params, const DenseMatrix& inputs, std::span<const double> v,
                OutputMode mode) const {
  check_params(v);
  check_finite(v, "jvp");
  const Tape t = run_forward(params, inputs);
  const auto rz = tangent_forward(layout_, t, params, spec_.activation, v);
  const Mat& out = rz.back();
  if (mode == OutputMode::per_sample_sum) {
    const Eigen::VectorXd s = out.rowwise().sum();
    return Vector(s.data(), s.data() + s.size());
  }
  return Vector(out.data(), out.data() + out.size());
}

Vector Mlp::vjp(std::span<const double> params, const DenseMatrix& inputs, std::span<const double> w,
                OutputMode mode) const {
  const Tape t = run_forward(params, inputs);
  const auto rows = t.a.back().rows(), cols = t.a.back().cols();
  Mat dz(rows, cols);
  if (mode == OutputMode::per_sample_sum) {
    if (w.size() != static_cast<std::size_t>(rows)) throw InvalidArgument("vjp: weight length must equal N");
    for (Eigen::Index i = 0; i < rows; ++i) dz.row(i).setConstant(w[static_cast<std::size_t>(i)]);
  } else {
    if (w.size() != static_cast<std::size_t>(rows * cols)) throw InvalidArgument("vjp: weight length must equal N*C");
    dz = ConstMatMap(w.data(), rows, cols);
  }
  Vector out(num_params_, 0.0);
  backprop(layout_, t, params, spec_.activation, std::move(dz), out);
  return out;
}

}  // namespace wdeos
