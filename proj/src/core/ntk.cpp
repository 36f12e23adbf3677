#include "wdeos/ntk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "wdeos/error.hpp"

namespace wdeos {

namespace {

std::size_t gram_dim(const Mlp& mlp, const DenseMatrix& inputs, OutputMode mode) {
  return mode == OutputMode::per_output ? inputs.rows() * mlp.spec().output_dim() : inputs.rows();
}

double top_eigenvalue(const LinearOperator& op, const SolverConfig& s) {
  LanczosOptions lo;
  lo.k = 1;
  lo.max_iters = s.max_iters;
  lo.tol = s.tol;
  lo.seed = s.seed;
  return lanczos_topk(op, lo).front().value;
}

}  // namespace

LinearOperator ntk_gram_operator(const Mlp& mlp, std::span<const double> params, const DenseMatrix& inputs,
                                 OutputMode mode) {
  if (inputs.rows() == 0) throw InvalidArgument("ntk: empty batch");
  LinearOperator op;
  op.dim = gram_dim(mlp, inputs, mode);
  const double inv_n = 1.0 / static_cast<double>(inputs.rows());
  op.apply = [&mlp, params, &inputs, mode, inv_n](std::span<const double> v, std::span<double> out) {
    const Vector jt = mlp.vjp(params, inputs, v, mode);
    const Vector jjt = mlp.jvp(params, inputs, jt, mode);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = inv_n * jjt[i];
  };
  return op;
}

LinearOperator ntk_param_operator(const Mlp& mlp, std::span<const double> params, const DenseMatrix& inputs,
                                  OutputMode mode) {
  if (inputs.rows() == 0) throw InvalidArgument("ntk: empty batch");
  LinearOperator op;
  op.dim = mlp.num_params();
  const double inv_n = 1.0 / static_cast<double>(inputs.rows());
  op.apply = [&mlp, params, &inputs, mode, inv_n](std::span<const double> v, std::span<double> out) {
    const Vector j = mlp.jvp(params, inputs, v, mode);
    const Vector jtj = mlp.vjp(params, inputs, j, mode);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = inv_n * jtj[i];
  };
  return op;
}

LinearOperator residual_operator(const Mlp& mlp, std::span<const double> params, const LabeledBatch& batch) {
  if (batch.size() == 0) throw InvalidArgument("ntk: empty batch");
  LinearOperator op;
  op.dim = mlp.num_params();
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  op.apply = [&mlp, params, &batch, inv_n](std::span<const double> v, std::span<double> out) {
    const Vector hv = mlp.hvp(params, batch, v);
    const Vector j = mlp.jvp(params, batch.inputs, v);
    const Vector gn = mlp.vjp(params, batch.inputs, j);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = hv[i] - inv_n * gn[i];
  };
  return op;
}

double ntk_lambda_max(const Mlp& mlp, std::span<const double> params, const DenseMatrix& inputs,
                      const NtkConfig& cfg) {
  return top_eigenvalue(ntk_gram_operator(mlp, params, inputs, cfg.mode), cfg.solver);
}

double residual_spectral_norm(const Mlp& mlp, std::span<const double> params, const LabeledBatch& batch,
                              const SolverConfig& solver) {
  const LinearOperator r = residual_operator(mlp, params, batch);
  LinearOperator neg;
  neg.dim = r.dim;
  neg.apply = [&r](std::span<const double> v, std::span<double> out) {
    r.apply(v, out);
    for (double& x : out) x = -x;
  };
  const double up = top_eigenvalue(r, solver);
  const double down = top_eigenvalue(neg, solver);
  return std::max({up, down, 0.0});
}

NtkReport weyl_check(const Mlp& mlp, std::span<const double> params, const LabeledBatch& batch,
                     const SolverConfig& solver, double tol) {
  NtkReport rep;
  rep.n_samples = batch.size();
  rep.tol = tol;
  rep.lambda_max_ntk = top_eigenvalue(ntk_gram_operator(mlp, params, batch.inputs, OutputMode::per_output), solver);
  rep.lambda_max_hessian = sharpness(mlp, params, batch, 1, solver).values.front();
  rep.residual_norm = residual_spectral_norm(mlp, params, batch, solver);
  rep.weyl_satisfied = std::abs(rep.lambda_max_hessian - rep.lambda_max_ntk) <= rep.residual_norm + tol;
  return rep;
}

std::vector<NtkConvergenceRow> ntk_convergence(const Mlp& mlp, std::span<const double> params,
                                               const DenseMatrix& inputs, const std::vector<std::size_t>& n_grid,
                                               const NtkConfig& cfg) {
  std::vector<NtkConvergenceRow> rows;
  for (std::size_t n : n_grid) {
    if (n < 1 || n > inputs.rows()) throw InvalidArgument("ntk_convergence: n outside [1, N]");
    DenseMatrix sub(n, inputs.cols());
    std::copy_n(inputs.values().begin(), n * inputs.cols(), sub.values().begin());
    NtkConvergenceRow row;
    row.n = n;
    row.lambda_max = ntk_lambda_max(mlp, params, sub, cfg);
    row.lambda_max_unnormalized = row.lambda_max * static_cast<double>(n);
    rows.push_back(row);
  }
  return rows;
}

namespace {

void validate(const RankOneModel& m) {
  const std::size_t n = m.spectrum.size();
  if (n == 0 || m.b.size() != n) throw InvalidArgument("rank_one: spectrum and b must have equal nonzero length");
  if (!(m.alpha >= 0.0) || !std::isfinite(m.alpha)) throw InvalidArgument("rank_one: alpha must be finite and >= 0");
  for (std::size_t i = 1; i < n; ++i)
    if (m.spectrum[i] > m.spectrum[i - 1]) throw InvalidArgument("rank_one: spectrum must be sorted descending");
  if (std::abs(norm2(m.b) - 1.0) > 1e-10) throw InvalidArgument("rank_one: b must be a unit vector");
}

}  // namespace

std::vector<EigenPair> rank_one_eigs(const RankOneModel& model) {
  validate(model);
  const std::size_t n = model.spectrum.size();
  const double alpha = model.alpha;
  const double eps = std::numeric_limits<double>::epsilon();
  double scale = alpha;
  for (double l : model.spectrum) scale = std::max(scale, std::abs(l));
  scale = std::max(scale, 1.0);

  // Orthonormal working basis (column k of `basis`) in which the matrix is
  // diag(d) + α·z·zᵀ. Repeated eigenvalues get a Householder reflection that
  // moves the group's share of b onto its first member.
  DenseMatrix basis = DenseMatrix::identity(n);
  std::vector<double> d(model.spectrum), z(model.b.begin(), model.b.end());
  for (std::size_t g = 0; g < n;) {
    std::size_t e = g + 1;
    while (e < n && d[g] - d[e] <= 8.0 * eps * scale) ++e;
    if (e - g > 1) {
      for (std::size_t i = g + 1; i < e; ++i) d[i] = d[g];
      double nz = 0.0;
      for (std::size_t i = g; i < e; ++i) nz += z[i] * z[i];
      nz = std::sqrt(nz);
      if (nz > 0.0) {
        // Householder u = z_I − σ‖z_I‖e_1 with σ chosen to avoid cancellation.
        const double sigma = z[g] >= 0.0 ? -1.0 : 1.0;
        std::vector<double> u(z.begin() + static_cast<std::ptrdiff_t>(g), z.begin() + static_cast<std::ptrdiff_t>(e));
        u[0] -= sigma * nz;
        const double uu = std::inner_product(u.begin(), u.end(), u.begin(), 0.0);
        if (uu > 0.0) {
          for (std::size_t c = 0; c < e - g; ++c)
            for (std::size_t r = 0; r < e - g; ++r)
              basis(g + r, g + c) = (r == c ? 1.0 : 0.0) - 2.0 * u[r] * u[c] / uu;
        }
        z[g] = sigma * nz;
        for (std::size_t i = g + 1; i < e; ++i) z[i] = 0.0;
      }
    }
    g = e;
  }

  std::vector<EigenPair> pairs;
  pairs.reserve(n);
  auto column = [&](std::size_t k) {
    Vector v(n);
    for (std::size_t r = 0; r < n; ++r) v[r] = basis(r, k);
    return v;
  };

  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < n; ++k) {
    if (alpha * std::abs(z[k]) <= 2.0 * eps * scale) {
      Vector v = column(k);
      normalize_sign(v);
      pairs.push_back({d[k], std::move(v)});
    } else {
      active.push_back(k);
    }
  }

  double zz = 0.0;
  for (std::size_t k : active) zz += z[k] * z[k];

  for (std::size_t a = 0; a < active.size(); ++a) {
    const std::size_t lo_k = active[a];
    const double lower = d[lo_k];
    const double upper = a == 0 ? lower + alpha * zz : d[active[a - 1]];

    // f in shifted form around `origin`, evaluated without cancellation.
    auto f = [&](double origin, double delta) {
      double s = 0.0;
      for (std::size_t k : active) s += z[k] * z[k] / ((d[k] - origin) - delta);
      return 1.0 + alpha * s;
    };
    double origin = lower, lo = 0.0, hi = upper - lower;
    const double half = 0.5 * (upper - lower);
    if (a > 0 && f(lower, half) < 0.0) {
      origin = upper;
      lo = -half;
      hi = 0.0;
    }
    for (int it = 0; it < 4000; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid == lo || mid == hi) break;
      if (f(origin, mid) < 0.0)
        lo = mid;
      else
        hi = mid;
    }
    const double delta = std::abs(f(origin, lo)) < std::abs(f(origin, hi)) ? lo : hi;
    const double mu = origin + delta;

    Vector v(n, 0.0);
    for (std::size_t k : active) {
      const double w = z[k] / ((d[k] - origin) - delta);
      for (std::size_t r = 0; r < n; ++r) v[r] += w * basis(r, k);
    }
    const double nv = norm2(v);
    for (double& x : v) x /= nv;
    normalize_sign(v);
    pairs.push_back({mu, std::move(v)});
  }

  std::stable_sort(pairs.begin(), pairs.end(), [](const EigenPair& x, const EigenPair& y) { return x.value > y.value; });
  return pairs;
}

double secular_residual(const RankOneModel& model, double mu) {
  double s = 0.0, mag = 0.0;
  for (std::size_t i = 0; i < model.spectrum.size(); ++i) {
    const double t = model.b[i] * model.b[i] / (model.spectrum[i] - mu);
    s += t;
    mag += std::abs(t);
  }
  return std::abs(1.0 + model.alpha * s) / (1.0 + model.alpha * mag);
}

std::vector<AlignmentPoint> alignment_sweep(const std::vector<double>& spectrum, const Vector& b,
                                            const std::vector<double>& alpha_grid) {
  for (std::size_t i = 1; i < alpha_grid.size(); ++i)
    if (alpha_grid[i] < alpha_grid[i - 1]) throw InvalidArgument("alignment_sweep: alpha grid must be ascending");
  std::vector<AlignmentPoint> out;
  out.reserve(alpha_grid.size());
  for (double a : alpha_grid) {
    const auto pairs = rank_one_eigs({spectrum, b, a});
    AlignmentPoint p;
    p.alpha = a;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const double al = std::abs(dot(pairs[i].vector, b));
      if (al > p.alignment) {
        p.alignment = al;
        p.index = i + 1;
      }
    }
    out.push_back(p);
  }
  return out;
}

std::vector<double> separated_spectrum(const SeparatedSpectrum& s) {
  if (s.leading < 1 || s.leading > s.n) throw InvalidArgument("separated_spectrum: need 1 <= leading <= n");
  if (!(s.ratio > 1.0) || !(s.floor > 0.0)) throw InvalidArgument("separated_spectrum: ratio > 1 and floor > 0");
  std::vector<double> lam;
  for (std::size_t i = 1; i <= s.leading; ++i)
    lam.push_back(s.floor * std::pow(s.ratio, static_cast<double>(s.leading - i)));
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  const double bulk = s.bulk_scale * std::pow(static_cast<double>(s.n), 0.3);
  for (std::size_t i = s.leading; i < s.n; ++i) lam.push_back(bulk * u(rng));
  std::sort(lam.begin(), lam.end(), std::greater<>());
  return lam;
}

std::pair<double, double> alignment_band(const std::vector<double>& spectrum, std::size_t j, std::size_t k) {
  if (j < 2 || j > k || k > spectrum.size()) throw InvalidArgument("alignment_band: need 2 <= j <= k <= n");
  return {spectrum[j - 1] - spectrum[k - 1], spectrum[j - 2] - spectrum[k - 1]};
}

}  // namespace wdeos
