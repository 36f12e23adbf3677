#ifndef WDEOS_LINALG_HPP
#define WDEOS_LINALG_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace wdeos {

using Vector = std::vector<double>;

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix diagonal(std::span<const double> diag);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  double max_abs() const;
  bool all_finite() const;
  /// max |A - A^T|; requires a square matrix.
  double asymmetry() const;

  Vector multiply(std::span<const double> v) const;
  DenseMatrix transpose() const;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Matrix-free symmetric operator: `apply(in, out)` writes A·in into out.
/// Both spans have length `dim`. Must be deterministic and re-entrant.
struct LinearOperator {
  std::size_t dim = 0;
  std::function<void(std::span<const double>, std::span<double>)> apply;

  Vector operator()(std::span<const double> v) const;
};

struct EigenPair {
  double value = 0.0;
  Vector vector;
};

/// Flip the vector so that its largest-magnitude component is positive.
/// Ties resolve to the first such index.
void normalize_sign(std::span<double> v);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

/// Full eigendecomposition of a symmetric matrix, sorted by descending
/// eigenvalue, eigenvectors sign-normalized.
std::vector<EigenPair> dense_sym_eig(const DenseMatrix& a);

/// Materialize an operator column by column (test and small-problem helper).
DenseMatrix materialize(const LinearOperator& op);

struct LanczosOptions {
  std::size_t k = 1;
  std::size_t max_iters = 64;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  /// Optional starting vector (warm start). Random (seeded) when empty.
  std::span<const double> start = {};
};

/// Top-k eigenpairs (largest algebraic eigenvalues) by Lanczos with full
/// reorthogonalization. Throws ConvergenceError with best-so-far Ritz values
/// when the residual test ||Av - λv|| <= tol * max(1, |λ|) is not met within
/// max_iters.
std::vector<EigenPair> lanczos_topk(const LinearOperator& op, const LanczosOptions& opts);

struct PowerOptions {
  std::size_t max_iters = 2000;
  double tol = 1e-8;
  std::uint64_t seed = 0;
  /// Reject eigenvalues whose eigenspace is not one-dimensional.
  bool check_gap = true;
};

/// Dominant eigenpair by power iteration. Requires the dominant eigenvalue to
/// be the top one and positive.
EigenPair power_iteration(const LinearOperator& op, const PowerOptions& opts);

}  // namespace wdeos

#endif  // WDEOS_LINALG_HPP
