#ifndef WDEOS_MLP_HPP
#define WDEOS_MLP_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wdeos/linalg.hpp"

namespace wdeos {

/// Hidden-layer nonlinearity. The output layer is always linear.
enum class Activation { relu, tanh, identity };

Activation parse_activation(const std::string& name);
const char* to_string(Activation a);

struct MlpSpec {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., output
  Activation activation = Activation::relu;
  std::uint64_t init_seed = 0;

  void validate() const;
  std::size_t num_layers() const { return layer_sizes.size() - 1; }
  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
};

/// Offsets of one dense layer inside the flat parameter vector. The weight
/// block is fan_in x fan_out, row-major, followed by fan_out biases.
struct LayerBlock {
  std::size_t weight_offset;
  std::size_t bias_offset;
  std::size_t fan_in;
  std::size_t fan_out;
};

using ParamVector = std::vector<double>;

struct LabeledBatch {
  DenseMatrix inputs;   // N x d
  DenseMatrix targets;  // N x C

  std::size_t size() const { return inputs.rows(); }
};

struct LossAndGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// How the C network outputs of one sample enter a Jacobian product.
enum class OutputMode {
  per_output,      // M = N*C rows, one per (sample, class)
  per_sample_sum,  // M = N rows, classes summed per sample
};

/// Fully connected network with mean-squared-error loss
///   L(θ) = (1/N) Σ_i ½ ||f(θ, x_i) − y_i||².
/// All derivative products act on a flat parameter vector laid out as
/// [W_1, b_1, W_2, b_2, ...].
class Mlp {
 public:
  explicit Mlp(MlpSpec spec);

  const MlpSpec& spec() const noexcept { return spec_; }
  std::size_t num_params() const noexcept { return num_params_; }
  const std::vector<LayerBlock>& layout() const noexcept { return layout_; }

  /// Uniform(−1/√fan_in, 1/√fan_in) for every weight and bias.
  ParamVector init_params() const;

  DenseMatrix forward(std::span<const double> params, const DenseMatrix& inputs) const;
  double loss(std::span<const double> params, const LabeledBatch& batch) const;
  LossAndGrad loss_and_grad(std::span<const double> params, const LabeledBatch& batch) const;

  /// ∇²L(θ)·v of the unregularized loss (forward-over-reverse R-operator).
  Vector hvp(std::span<const double> params, const LabeledBatch& batch, std::span<const double> v) const;

  /// J·v, row-major over (sample, class) or per sample depending on mode.
  Vector jvp(std::span<const double> params, const DenseMatrix& inputs, std::span<const double> v,
             OutputMode mode = OutputMode::per_output) const;
  /// Jᵀ·w.
  Vector vjp(std::span<const double> params, const DenseMatrix& inputs, std::span<const double> w,
             OutputMode mode = OutputMode::per_output) const;

  /// ∇(Σ_ic w_ic f_ic) differentiated once more along v with the weights w
  /// held fixed: (Σ_ic w_ic ∇²f_ic)·v. With w = (f − y)/N this is the
  /// residual term of the Gauss-Newton decomposition applied to v.
  Vector weighted_output_hvp(std::span<const double> params, const DenseMatrix& inputs,
                             std::span<const double> w, std::span<const double> v) const;

 private:
  struct Tape;
  Tape run_forward(std::span<const double> params, const DenseMatrix& inputs) const;
  void check_params(std::span<const double> params) const;
  void check_inputs(const DenseMatrix& inputs) const;

  MlpSpec spec_;
  std::vector<LayerBlock> layout_;
  std::size_t num_params_ = 0;
};

/// Parameter count Σ (fan_in·fan_out + fan_out).
std::size_t count_params(const MlpSpec& spec);

}  // namespace wdeos

#endif  // WDEOS_MLP_HPP
