#include "rpace/pace.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "rpace/errors.hpp"

namespace rpace {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Stacked interpolated eigenfunctions, (m D) x K_all, one column per pair.
MatrixXd stacked_eigenfunctions(const CovarianceModel& model,
                                const std::vector<double>& times) {
  const int m = static_cast<int>(times.size());
  const int dim = model.eigenfunctions.empty()
                      ? model.surface.dim()
                      : static_cast<int>(model.eigenfunctions[0].cols());
  MatrixXd phi(m * dim, model.n_components());
  for (int k = 0; k < model.n_components(); ++k) {
    for (int j = 0; j < m; ++j) {
      phi.block(j * dim, k, dim, 1) = model.eval_eigenfunction(k, times[j]);
    }
  }
  return phi;
}

}  // namespace

MatrixXd subject_covariance(const CovarianceModel& model,
                            const std::vector<double>& times) {
  const int dim = model.surface.dim();
  const int size = static_cast<int>(times.size()) * dim;
  const MatrixXd phi = stacked_eigenfunctions(model, times);
  MatrixXd sigma = MatrixXd::Identity(size, size) * model.sigma2;
  if (phi.cols() > 0) {
    sigma.noalias() += phi * model.eigenvalues.asDiagonal() * phi.transpose();
  }
  return sigma;
}

VectorXd blup_scores(const CovarianceModel& model, const std::vector<double>& times,
                     const std::vector<VectorXd>& log_obs, int K,
                     const std::string& subject_id) {
  const int m = static_cast<int>(times.size());
  if (m < 1 || log_obs.size() != times.size()) {
    throw InvalidInputError("scores", "subject " + subject_id +
                                          " has mismatched times and observations");
  }
  const int k_use = std::min<int>(K, model.n_components());
  VectorXd xi = VectorXd::Zero(K);
  if (k_use == 0) return xi;

  const int dim = model.surface.dim();
  VectorXd stacked(m * dim);
  for (int j = 0; j < m; ++j) stacked.segment(j * dim, dim) = log_obs[j];

  const MatrixXd phi = stacked_eigenfunctions(model, times);
  MatrixXd sigma = MatrixXd::Identity(m * dim, m * dim) * model.sigma2;
  sigma.noalias() += phi * model.eigenvalues.asDiagonal() * phi.transpose();

  Eigen::LDLT<MatrixXd> ldlt(sigma);
  if (ldlt.info() != Eigen::Success) {
    throw ConditioningError("scores", "covariance factorization failed", subject_id,
                            ldlt.rcond());
  }
  const VectorXd z = ldlt.solve(stacked);
  if (!z.allFinite()) {
    throw ConditioningError("scores", "non-finite BLUP solve", subject_id, ldlt.rcond());
  }
  for (int k = 0; k < k_use; ++k) xi[k] = model.eigenvalues[k] * phi.col(k).dot(z);
  return xi;
}

std::pair<MatrixXd, MatrixXd> reconstruct(const Manifold& manifold,
                                          const CovarianceModel& model,
                                          const MeanCurve& curve, const VectorXd& scores,
                                          int K, bool tangent_projection,
                                          std::vector<int>* clamped) {
  const int g = static_cast<int>(curve.grid.size());
  const int dim = manifold.ambient_dim();
  const int k_use = std::min<int>({K, model.n_components(),
                                   static_cast<int>(scores.size())});
  MatrixXd log_path = MatrixXd::Zero(g, dim);
  MatrixXd path(g, dim);
  const double radius = manifold.injectivity_radius();
  for (int a = 0; a < g; ++a) {
    VectorXd v = VectorXd::Zero(dim);
    for (int k = 0; k < k_use; ++k) {
      v += scores[k] * model.eigenfunctions[k].row(a).transpose();
    }
    if (tangent_projection) v = manifold.project_tangent(curve.points[a], v);
    if (std::isfinite(radius)) {
      const double norm = v.norm();
      if (norm > radius - 1e-6) {
        v *= (radius - 1e-6) / norm;
        if (clamped) clamped->push_back(a);
      }
    }
    log_path.row(a) = v.transpose();
    path.row(a) = manifold.exp(curve.points[a], v).transpose();
  }
  return {std::move(log_path), std::move(path)};
}

FitResult fit(const Manifold& manifold, const LongitudinalDataset& data,
              const FitConfig& config) {
  data.validate(manifold);
  const std::vector<int> counts = data.counts();

  Eigen::VectorXd grid;
  if (config.grid) {
    grid = *config.grid;
  } else {
    const auto [lo, hi] = data.time_range();
    grid = make_grid(lo, hi, config.grid_size);
  }

  FitResult result;

  if (config.h_mu) {
    result.h_mu = *config.h_mu;
    if (result.h_mu <= 0.0) throw InvalidInputError("config", "h_mu must be positive");
  } else {
    const std::vector<double> candidates = config.bandwidth_candidates
                                               ? *config.bandwidth_candidates
                                               : default_bandwidth_candidates(data);
    const GcvResult gcv = gcv_bandwidth(manifold, data, config.scheme, candidates, grid);
    result.h_mu = gcv.h_mu;
    result.gcv_candidates = gcv.candidates;
    result.gcv_scores = gcv.scores;
  }
  result.h_gamma = config.h_gamma.value_or(config.h_gamma_factor * result.h_mu);
  if (result.h_gamma <= 0.0) throw InvalidInputError("config", "h_gamma must be positive");

  const std::vector<double> weights = mean_weights(config.scheme, counts, result.h_mu);
  result.mean = estimate_mean_curve(manifold, data, result.h_mu, weights, grid);

  const LogResiduals residuals = log_residuals(manifold, data, result.mean);
  const std::vector<double> vw = cov_weights(config.scheme, counts, result.h_gamma);

  result.model.grid = grid;
  result.model.surface =
      covariance_surface(residuals, result.h_gamma, vw, grid, config.threads);
  result.model.quad_weights = trapezoid_weights(grid);

  EigenDecomposition eig = eigendecompose(result.model.surface, result.model.quad_weights);
  result.model.eigenvalues = std::move(eig.values);
  result.model.eigenfunctions = std::move(eig.functions);
  if (config.tangent_projection && result.model.n_components() > 0) {
    project_eigenfunctions(result.model, manifold, result.mean);
  }

  result.model.sigma2 = estimate_sigma2(residuals, result.model.surface,
                                        manifold.intrinsic_dim(),
                                        &result.model.sigma2_floored);

  // All eigenvalues can fall below the discard threshold (constant data);
  // the truncation is then clamped to a single zero-score component.
  result.K = result.model.n_components() > 0
                 ? select_K(result.model.eigenvalues, config.truncation)
                 : 1;

  const int n = data.n();
  result.scores = Eigen::MatrixXd::Zero(n, result.K);
  result.log_paths.resize(n);
  result.paths.resize(n);
  result.clamped.resize(n);
  for (int i = 0; i < n; ++i) {
    if (result.model.n_components() > 0) {
      result.scores.row(i) = blup_scores(result.model, residuals.times[i],
                                         residuals.vectors[i], result.K,
                                         data.subjects[i].id)
                                 .transpose();
    }
    auto [log_path, path] =
        reconstruct(manifold, result.model, result.mean, result.scores.row(i).transpose(),
                    result.K, config.tangent_projection, &result.clamped[i]);
    result.log_paths[i] = std::move(log_path);
    result.paths[i] = std::move(path);
  }
  return result;
}

}  // namespace rpace
