#include "rpace/covariance.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "rpace/errors.hpp"
#include "rpace/parallel.hpp"

namespace rpace {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// One kernel-window entry near a grid node.
struct WindowEntry {
  int subject;
  int obs;  // observation index within the subject
  double kval;
  double delta;
  const VectorXd* vec;
};

struct PairAccumulator {
  // Normal equations for the local plane in scaled regressors x1, x2;
  // shared across all D^2 entries of the response.
  double s00 = 0, s10 = 0, s01 = 0, s20 = 0, s11 = 0, s02 = 0;
  MatrixXd b0, b1, b2, scratch;

  explicit PairAccumulator(int dim)
      : b0(MatrixXd::Zero(dim, dim)),
        b1(MatrixXd::Zero(dim, dim)),
        b2(MatrixXd::Zero(dim, dim)),
        scratch(dim, dim) {}

  void add(double wt, double x1, double x2, const VectorXd& lj, const VectorXd& ll) {
    s00 += wt;
    s10 += wt * x1;
    s01 += wt * x2;
    s20 += wt * x1 * x1;
    s11 += wt * x1 * x2;
    s02 += wt * x2 * x2;
    scratch.noalias() = lj * ll.transpose();
    b0.noalias() += wt * scratch;
    b1.noalias() += (wt * x1) * scratch;
    b2.noalias() += (wt * x2) * scratch;
  }

  MatrixXd solve(double s, double t) const {
    Eigen::Matrix3d m;
    m << s00, s10, s01, s10, s20, s11, s01, s11, s02;
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (!(sv(0) > 0.0) || sv(2) <= 1e-10 * sv(0)) {
      throw DegenerateError("covariance",
                            "rank-deficient smoother window at (s,t)=(" +
                                std::to_string(s) + "," + std::to_string(t) +
                                "); bandwidth too small");
    }
    const Eigen::Matrix3d inv =
        svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
    return inv(0, 0) * b0 + inv(0, 1) * b1 + inv(0, 2) * b2;
  }
};

std::vector<WindowEntry> window_entries(double target, double h,
                                        const LogResiduals& residuals,
                                        const std::vector<double>& weights) {
  std::vector<WindowEntry> entries;
  for (int i = 0; i < residuals.n(); ++i) {
    if (weights[i] == 0.0) continue;
    const auto& times = residuals.times[i];
    for (int j = 0; j < static_cast<int>(times.size()); ++j) {
      const double delta = times[j] - target;
      if (std::abs(delta) >= h) continue;
      entries.push_back({i, j, kernel_h(delta, h), delta, &residuals.vectors[i][j]});
    }
  }
  return entries;
}

MatrixXd smooth_from_windows(double s, double t, double h,
                             const std::vector<WindowEntry>& row,
                             const std::vector<WindowEntry>& col,
                             const std::vector<double>& weights, int dim) {
  PairAccumulator acc(dim);
  // Entries are grouped by subject in construction order; walk matching
  // subject runs with two pointers.
  size_t a = 0;
  while (a < row.size()) {
    const int subj = row[a].subject;
    size_t a_end = a;
    while (a_end < row.size() && row[a_end].subject == subj) ++a_end;
    size_t b = 0;
    while (b < col.size() && col[b].subject < subj) ++b;
    size_t b_end = b;
    while (b_end < col.size() && col[b_end].subject == subj) ++b_end;
    for (size_t ja = a; ja < a_end; ++ja) {
      for (size_t jb = b; jb < b_end; ++jb) {
        if (row[ja].obs == col[jb].obs) continue;  // diagonal carries the nugget
        acc.add(weights[subj] * row[ja].kval * col[jb].kval, row[ja].delta / h,
                col[jb].delta / h, *row[ja].vec, *col[jb].vec);
      }
    }
    a = a_end;
  }
  return acc.solve(s, t);
}

}  // namespace

LogResiduals log_residuals(const Manifold& manifold, const LongitudinalDataset& data,
                           const MeanCurve& curve) {
  LogResiduals out;
  out.dim = manifold.ambient_dim();
  out.times.resize(data.n());
  out.vectors.resize(data.n());
  for (int i = 0; i < data.n(); ++i) {
    const auto& s = data.subjects[i];
    out.times[i] = s.times;
    out.vectors[i].reserve(s.m());
    for (int j = 0; j < s.m(); ++j) {
      const VectorXd mu = eval_mean(manifold, curve, s.times[j]);
      try {
        out.vectors[i].push_back(manifold.log(mu, s.points[j]));
      } catch (const CutLocusError& err) {
        throw CutLocusError("residuals", std::string(err.what()) + " (subject " + s.id +
                                             ", observation " + std::to_string(j) +
                                             " at t=" + std::to_string(s.times[j]) + ")");
      }
    }
  }
  return out;
}

CovarianceSurface::CovarianceSurface(VectorXd grid, int dim)
    : grid_(std::move(grid)), dim_(dim) {
  blocks_.assign(grid_.size() * grid_.size(), MatrixXd::Zero(dim_, dim_));
}

int CovarianceSurface::cell(double x) const {
  const int g = grid_size();
  int hi = static_cast<int>(std::lower_bound(grid_.begin(), grid_.end(), x) -
                            grid_.begin());
  hi = std::clamp(hi, 1, g - 1);
  return hi - 1;
}

MatrixXd CovarianceSurface::eval(double s, double t) const {
  const double span = grid_[grid_size() - 1] - grid_[0];
  const double slack = 1e-9 * std::max(span, 1.0);
  if (s < grid_[0] - slack || s > grid_[grid_size() - 1] + slack || t < grid_[0] - slack ||
      t > grid_[grid_size() - 1] + slack) {
    throw InvalidInputError("covariance", "surface evaluation outside the grid");
  }
  const double sc = std::clamp(s, grid_[0], grid_[grid_size() - 1]);
  const double tc = std::clamp(t, grid_[0], grid_[grid_size() - 1]);
  const int a = cell(sc), b = cell(tc);
  const double u = (sc - grid_[a]) / (grid_[a + 1] - grid_[a]);
  const double v = (tc - grid_[b]) / (grid_[b + 1] - grid_[b]);
  return (1 - u) * (1 - v) * at(a, b) + u * (1 - v) * at(a + 1, b) +
         (1 - u) * v * at(a, b + 1) + u * v * at(a + 1, b + 1);
}

double CovarianceSurface::trace_eval(double t) const {
  const double tc = std::clamp(t, grid_[0], grid_[grid_size() - 1]);
  const int a = cell(tc);
  const double u = (tc - grid_[a]) / (grid_[a + 1] - grid_[a]);
  const double t00 = at(a, a).trace(), t10 = at(a + 1, a).trace();
  const double t01 = at(a, a + 1).trace(), t11 = at(a + 1, a + 1).trace();
  return (1 - u) * (1 - u) * t00 + u * (1 - u) * (t10 + t01) + u * u * t11;
}

void CovarianceSurface::symmetrize() {
  const int g = grid_size();
  for (int a = 0; a < g; ++a) {
    for (int b = a; b < g; ++b) {
      const MatrixXd avg = 0.5 * (at(a, b) + at(b, a).transpose());
      at(a, b) = avg;
      at(b, a) = avg.transpose();
    }
  }
}

MatrixXd smooth_covariance_at(double s, double t, double h_gamma,
                              const LogResiduals& residuals,
                              const std::vector<double>& cov_weights) {
  const auto row = window_entries(s, h_gamma, residuals, cov_weights);
  const auto col = window_entries(t, h_gamma, residuals, cov_weights);
  return smooth_from_windows(s, t, h_gamma, row, col, cov_weights, residuals.dim);
}

CovarianceSurface covariance_surface(const LogResiduals& residuals, double h_gamma,
                                     const std::vector<double>& cov_weights,
                                     const VectorXd& grid, int threads) {
  const int g = static_cast<int>(grid.size());
  CovarianceSurface surface(grid, residuals.dim);
  std::vector<std::vector<WindowEntry>> windows(g);
  for (int a = 0; a < g; ++a) {
    windows[a] = window_entries(grid[a], h_gamma, residuals, cov_weights);
  }
  std::vector<std::string> failures(g);
  parallel_for(g, threads, [&](int a) {
    for (int b = 0; b < g; ++b) {
      try {
        surface.at(a, b) = smooth_from_windows(grid[a], grid[b], h_gamma, windows[a],
                                               windows[b], cov_weights, residuals.dim);
      } catch (const Error& err) {
        if (failures[a].empty()) failures[a] = err.what();
      }
    }
  });
  std::string detail;
  int n_failed = 0;
  for (int a = 0; a < g; ++a) {
    if (!failures[a].empty()) {
      ++n_failed;
      if (n_failed <= 3) detail += "\n  " + failures[a];
    }
  }
  if (n_failed > 0) {
    throw DegenerateError("covariance", "surface smoothing failed on " +
                                            std::to_string(n_failed) + " grid row(s)" +
                                            detail);
  }
  surface.symmetrize();
  return surface;
}

VectorXd trapezoid_weights(const VectorXd& grid) {
  const int g = static_cast<int>(grid.size());
  VectorXd w = VectorXd::Zero(g);
  for (int a = 0; a + 1 < g; ++a) {
    const double half = 0.5 * (grid[a + 1] - grid[a]);
    w[a] += half;
    w[a + 1] += half;
  }
  return w;
}

EigenDecomposition eigendecompose(const CovarianceSurface& surface,
                                  const VectorXd& quad_weights) {
  const int g = surface.grid_size();
  const int dim = surface.dim();
  const int size = g * dim;

  MatrixXd op(size, size);
  for (int a = 0; a < g; ++a) {
    for (int b = 0; b < g; ++b) {
      op.block(a * dim, b * dim, dim, dim) =
          std::sqrt(quad_weights[a] * quad_weights[b]) * surface.at(a, b);
    }
  }
  const double asym = (op - op.transpose()).norm();
  if (asym > 1e-10 * std::max(1.0, op.norm())) {
    throw InvalidInputError("covariance",
                            "eigendecompose requires a symmetric surface (asymmetry " +
                                std::to_string(asym) + ")");
  }
  op = 0.5 * (op + op.transpose().eval());

  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(op);
  if (solver.info() != Eigen::Success) {
    throw ConditioningError("covariance", "eigendecomposition failed", "-", 0.0);
  }

  const VectorXd& vals = solver.eigenvalues();  // ascending
  const double lambda_max = vals[size - 1];
  const double cutoff = std::max(0.0, 1e-12 * lambda_max);

  EigenDecomposition out;
  std::vector<double> kept;
  for (int k = size - 1; k >= 0; --k) {
    if (!(vals[k] > cutoff)) break;
    kept.push_back(vals[k]);
    MatrixXd phi(g, dim);
    const VectorXd& u = solver.eigenvectors().col(k);
    for (int a = 0; a < g; ++a) {
      phi.row(a) = u.segment(a * dim, dim).transpose() / std::sqrt(quad_weights[a]);
    }
    // Sign convention: largest-magnitude entry positive.
    int ra = 0, rb = 0;
    for (int a = 0; a < g; ++a) {
      for (int b = 0; b < dim; ++b) {
        if (std::abs(phi(a, b)) > std::abs(phi(ra, rb))) {
          ra = a;
          rb = b;
        }
      }
    }
    if (phi(ra, rb) < 0.0) phi = -phi;
    out.functions.push_back(std::move(phi));
  }
  out.values = Eigen::Map<VectorXd>(kept.data(), kept.size());
  return out;
}

double estimate_sigma2(const LogResiduals& residuals, const CovarianceSurface& surface,
                       int intrinsic_dim, bool* floored) {
  const int n = residuals.n();
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const int m = static_cast<int>(residuals.times[i].size());
    const double scale = 1.0 / (static_cast<double>(n) * intrinsic_dim * m);
    for (int j = 0; j < m; ++j) {
      total += scale * (residuals.vectors[i][j].squaredNorm() -
                        surface.trace_eval(residuals.times[i][j]));
    }
  }
  const bool hit = total < 1e-10;
  if (floored) *floored = hit;
  return hit ? 1e-10 : total;
}

VectorXd cumulative_fve(const VectorXd& eigenvalues) {
  VectorXd fve(eigenvalues.size());
  const double total = eigenvalues.sum();
  double cum = 0.0;
  for (int k = 0; k < eigenvalues.size(); ++k) {
    cum += eigenvalues[k];
    fve[k] = total > 0.0 ? cum / total : 1.0;
  }
  return fve;
}

int select_K(const VectorXd& eigenvalues, const TruncationRule& rule) {
  if (eigenvalues.size() == 0) {
    throw InvalidInputError("truncation", "select_K needs at least one eigenvalue");
  }
  if (rule.explicit_k) {
    return std::clamp(*rule.explicit_k, 1, static_cast<int>(eigenvalues.size()));
  }
  const VectorXd fve = cumulative_fve(eigenvalues);
  for (int k = 0; k < fve.size(); ++k) {
    if (fve[k] >= rule.fve_threshold) return k + 1;
  }
  return static_cast<int>(eigenvalues.size());
}

VectorXd CovarianceModel::eval_eigenfunction(int k, double t) const {
  const int g = static_cast<int>(grid.size());
  const double tc = std::clamp(t, grid[0], grid[g - 1]);
  int hi = static_cast<int>(std::lower_bound(grid.begin(), grid.end(), tc) - grid.begin());
  hi = std::clamp(hi, 1, g - 1);
  const int lo = hi - 1;
  const double frac = (tc - grid[lo]) / (grid[hi] - grid[lo]);
  return ((1.0 - frac) * eigenfunctions[k].row(lo) + frac * eigenfunctions[k].row(hi))
      .transpose();
}

void project_eigenfunctions(CovarianceModel& model, const Manifold& manifold,
                            const MeanCurve& curve) {
  const int g = static_cast<int>(model.grid.size());
  const auto inner = [&](const MatrixXd& f1, const MatrixXd& f2) {
    double acc = 0.0;
    for (int a = 0; a < g; ++a) acc += model.quad_weights[a] * f1.row(a).dot(f2.row(a));
    return acc;
  };
  // The tangent bundle over the grid spans at most G*d functions, so trailing
  // eigenpairs whose projection falls into the span of the previous ones are
  // dropped together with their eigenvalues.
  std::vector<MatrixXd> kept_functions;
  std::vector<double> kept_values;
  for (size_t k = 0; k < model.eigenfunctions.size(); ++k) {
    MatrixXd phi = std::move(model.eigenfunctions[k]);
    for (int a = 0; a < g; ++a) {
      phi.row(a) =
          manifold.project_tangent(curve.points[a], phi.row(a).transpose()).transpose();
    }
    for (const MatrixXd& prev : kept_functions) phi -= inner(phi, prev) * prev;
    const double norm = std::sqrt(std::max(0.0, inner(phi, phi)));
    if (norm < 1e-8) continue;
    phi /= norm;
    kept_functions.push_back(std::move(phi));
    kept_values.push_back(model.eigenvalues[k]);
  }
  model.eigenfunctions = std::move(kept_functions);
  model.eigenvalues =
      Eigen::Map<Eigen::VectorXd>(kept_values.data(), kept_values.size());
}

}  // namespace rpace
