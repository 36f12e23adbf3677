#include "wdeos/linalg.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "wdeos/error.hpp"

namespace wdeos {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw InvalidArgument("DenseMatrix: data length " + std::to_string(data_.size()) +
                          " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::diagonal(std::span<const double> diag) {
  DenseMatrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

double DenseMatrix::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool DenseMatrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double DenseMatrix::asymmetry() const {
  if (rows_ != cols_) throw InvalidArgument("asymmetry: matrix is not square");
  double m = 0.0;
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = i + 1; j < cols_; ++j) m = std::max(m, std::abs((*this)(i, j) - (*this)(j, i)));
  return m;
}

Vector DenseMatrix::multiply(std::span<const double> v) const {
  if (v.size() != cols_) throw InvalidArgument("DenseMatrix::multiply: dimension mismatch");
  Vector out(rows_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i) out[i] = dot(row(i), v);
  return out;
}

DenseMatrix DenseMatrix::transpose() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Vector LinearOperator::operator()(std::span<const double> v) const {
  Vector out(dim, 0.0);
  apply(v, out);
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void normalize_sign(std::span<double> v) {
  std::size_t arg = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > best) {
      best = std::abs(v[i]);
      arg = i;
    }
  }
  if (!v.empty() && v[arg] < 0.0)
    for (double& x : v) x = -x;
}

std::vector<EigenPair> dense_sym_eig(const DenseMatrix& a) {
  if (a.rows() != a.cols()) throw InvalidArgument("dense_sym_eig: matrix is not square");
  if (!a.all_finite()) throw InvalidArgument("dense_sym_eig: non-finite entries");
  if (a.asymmetry() > 1e-10 * a.max_abs())
    throw InvalidArgument("dense_sym_eig: matrix is not symmetric");
  const auto n = static_cast<Eigen::Index>(a.rows());
  if (n == 0) return {};
  if (n > 5000) throw InvalidArgument("dense_sym_eig: dimension above 5000");

  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      m(i, j) = 0.5 * (a(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) +
                       a(static_cast<std::size_t>(j), static_cast<std::size_t>(i)));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success) throw ConvergenceError("dense_sym_eig: solver failed", {}, {});

  std::vector<EigenPair> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index c = n - 1; c >= 0; --c) {
    EigenPair p;
    p.value = es.eigenvalues()(c);
    p.vector.assign(es.eigenvectors().col(c).data(), es.eigenvectors().col(c).data() + n);
    normalize_sign(p.vector);
    out.push_back(std::move(p));
  }
  return out;
}

DenseMatrix materialize(const LinearOperator& op) {
  DenseMatrix m(op.dim, op.dim);
  Vector e(op.dim, 0.0), col(op.dim, 0.0);
  for (std::size_t j = 0; j < op.dim; ++j) {
    e[j] = 1.0;
    op.apply(e, col);
    e[j] = 0.0;
    for (std::size_t i = 0; i < op.dim; ++i) m(i, j) = col[i];
  }
  return m;
}

namespace {

Vector random_unit(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (double& x : v) x = normal(rng);
  const double nv = norm2(v);
  for (double& x : v) x /= nv;
  return v;
}

// Two passes of classical Gram-Schmidt against the basis.
void orthogonalize(std::span<double> w, const std::vector<Vector>& basis) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& b : basis) {
      const double c = dot(b, w);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= c * b[i];
    }
  }
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

}  // namespace

std::vector<EigenPair> lanczos_topk(const LinearOperator& op, const LanczosOptions& opts) {
  const std::size_t n = op.dim;
  if (n == 0) throw InvalidArgument("lanczos_topk: empty operator");
  if (opts.k < 1 || opts.k > std::min<std::size_t>(n, 16))
    throw InvalidArgument("lanczos_topk: k must lie in [1, min(dim, 16)]");
  if (!(opts.tol > 0.0)) throw InvalidArgument("lanczos_topk: tol must be positive");
  const std::size_t m_max = std::min(opts.max_iters, n);
  if (m_max < opts.k) throw InvalidArgument("lanczos_topk: max_iters smaller than k");

  std::mt19937_64 rng(opts.seed);
  Vector q;
  if (!opts.start.empty()) {
    if (opts.start.size() != n) throw InvalidArgument("lanczos_topk: start vector has wrong length");
    q.assign(opts.start.begin(), opts.start.end());
    const double nq = norm2(q);
    if (!(nq > 0.0) || !std::isfinite(nq)) {
      q = random_unit(n, rng);
    } else {
      for (double& x : q) x /= nq;
    }
  } else {
    q = random_unit(n, rng);
  }

  std::vector<Vector> basis;
  std::vector<double> alphas, betas;
  Vector w(n), prev;
  double anorm = 0.0;
  std::vector<double> best_values, best_residuals;

  for (std::size_t j = 0; j < m_max; ++j) {
    basis.push_back(q);
    op.apply(q, w);
    const double a = dot(q, w);
    axpy(-a, q, w);
    if (!betas.empty()) axpy(-betas.back(), prev, w);
    orthogonalize(w, basis);
    double b = norm2(w);
    alphas.push_back(a);
    anorm = std::max({anorm, std::abs(a), b});
    const std::size_t m = j + 1;
    const bool breakdown = b <= 1e-13 * std::max(anorm, std::numeric_limits<double>::min());
    if (breakdown) b = 0.0;

    if (m >= opts.k) {
      Eigen::VectorXd diag(static_cast<Eigen::Index>(m));
      Eigen::VectorXd sub(static_cast<Eigen::Index>(m > 1 ? m - 1 : 0));
      for (std::size_t i = 0; i < m; ++i) diag(static_cast<Eigen::Index>(i)) = alphas[i];
      for (std::size_t i = 0; i + 1 < m; ++i) sub(static_cast<Eigen::Index>(i)) = betas[i];
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
      es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
      const auto& theta = es.eigenvalues();
      const auto& s = es.eigenvectors();

      best_values.assign(opts.k, 0.0);
      best_residuals.assign(opts.k, 0.0);
      bool converged = true;
      for (std::size_t i = 0; i < opts.k; ++i) {
        const auto col = static_cast<Eigen::Index>(m - 1 - i);
        best_values[i] = theta(col);
        best_residuals[i] = std::abs(b * s(static_cast<Eigen::Index>(m - 1), col));
        if (best_residuals[i] > opts.tol * std::max(1.0, std::abs(theta(col)))) converged = false;
      }

      if (converged) {
        std::vector<EigenPair> out;
        Vector av(n);
        bool verified = true;
        for (std::size_t i = 0; i < opts.k; ++i) {
          const auto col = static_cast<Eigen::Index>(m - 1 - i);
          EigenPair p;
          p.value = theta(col);
          p.vector.assign(n, 0.0);
          for (std::size_t r = 0; r < m; ++r) axpy(s(static_cast<Eigen::Index>(r), col), basis[r], p.vector);
          const double nv = norm2(p.vector);
          for (double& x : p.vector) x /= nv;
          normalize_sign(p.vector);
          op.apply(p.vector, av);
          axpy(-p.value, p.vector, av);
          best_residuals[i] = norm2(av);
          if (best_residuals[i] > opts.tol * std::max(1.0, std::abs(p.value))) verified = false;
          out.push_back(std::move(p));
        }
        if (verified) return out;
      }
    }

    if (m == m_max) break;
    prev = q;
    if (breakdown) {
      // Invariant subspace found before k pairs converged: continue from a
      // fresh direction orthogonal to everything seen so far.
      Vector fresh = random_unit(n, rng);
      orthogonalize(fresh, basis);
      const double nf = norm2(fresh);
      if (nf < 1e-8) break;
      for (double& x : fresh) x /= nf;
      betas.push_back(0.0);
      q = std::move(fresh);
    } else {
      betas.push_back(b);
      for (std::size_t i = 0; i < n; ++i) q[i] = w[i] / b;
    }
  }
  throw ConvergenceError("lanczos_topk: residual tolerance not met within " +
                             std::to_string(m_max) + " iterations",
                         best_values, best_residuals);
}

EigenPair power_iteration(const LinearOperator& op, const PowerOptions& opts) {
  const std::size_t n = op.dim;
  if (n == 0) throw InvalidArgument("power_iteration: empty operator");
  if (!(opts.tol > 0.0)) throw InvalidArgument("power_iteration: tol must be positive");
  std::mt19937_64 rng(opts.seed);
  Vector v = random_unit(n, rng);
  Vector w(n);
  std::vector<double> history;
  double lambda = 0.0;
  bool converged = false;

  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    op.apply(v, w);
    lambda = dot(v, w);
    Vector r = w;
    axpy(-lambda, v, r);
    const double res = norm2(r);
    history.push_back(res);
    const double nw = norm2(w);
    if (!(nw > 0.0)) throw ConvergenceError("power_iteration: operator annihilated the iterate", {lambda}, history);
    if (res <= opts.tol * std::abs(lambda)) {
      converged = true;
      break;
    }
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
  }
  if (!converged)
    throw ConvergenceError("power_iteration: no convergence within " + std::to_string(opts.max_iters) +
                               " iterations (eigenvalue gap too small?)",
                           {lambda}, history);
  if (!(lambda > 0.0))
    throw ConvergenceError("power_iteration: dominant eigenvalue is not positive", {lambda}, history);

  if (opts.check_gap && n > 1) {
    // Iterate on the orthogonal complement of v. A second eigenvalue equal to
    // lambda means v is not determined by the operator.
    const std::vector<Vector> span_v{v};
    Vector u = random_unit(n, rng);
    Vector au(n);
    for (std::size_t it = 0; it < opts.max_iters; ++it) {
      orthogonalize(u, span_v);
      const double nu = norm2(u);
      if (nu < 1e-12) break;
      for (double& x : u) x /= nu;
      op.apply(u, au);
      orthogonalize(au, span_v);
      const double mu = dot(u, au);
      if (std::abs(lambda - mu) <= 100.0 * opts.tol * std::abs(lambda)) {
        throw ConvergenceError("power_iteration: top eigenvalue is degenerate (gap below tolerance)",
                               {lambda, mu}, history);
      }
      Vector r = au;
      axpy(-mu, u, r);
      if (norm2(r) <= opts.tol * std::max(std::abs(mu), 1e-300)) break;
      u = au;
    }
  }
  normalize_sign(v);
  return {lambda, v};
}

}  // namespace wdeos
