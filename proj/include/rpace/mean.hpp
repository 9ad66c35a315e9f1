#pragma once

#include <optional>
#include <vector>

#include "rpace/dataset.hpp"
#include "rpace/smoothing.hpp"

namespace rpace {

struct MeanFitOptions {
  int max_iterations = 200;
  double initial_step = 0.5;   // trial step; exact for the flat quadratic case
  double step_shrink = 0.5;    // Armijo backtracking factor
  double armijo_c = 1e-4;
  int max_backtracks = 60;
  double grad_tol = 1e-8;  // stop when ||grad|| <= grad_tol * (1 + |Q|)
  std::vector<double>* objective_trace = nullptr;  // per-iteration objectives
};

// Double-weighted Frechet function Q(y, t) = sum_i w_i sum_j w_hat_ij d^2(Y_ij, y).
double frechet_objective(const Manifold& manifold, const Eigen::VectorXd& y, double t,
                         double h, const PooledObs& obs);

// Riemannian gradient descent minimizer of Q(., t) started from `init`.
Eigen::VectorXd estimate_mean_at(const Manifold& manifold, double t, double h,
                                 const PooledObs& obs, const Eigen::VectorXd& init,
                                 const MeanFitOptions& options = {});

// Local extrinsic weighted mean projected to the manifold; optimizer seed.
Eigen::VectorXd extrinsic_local_mean(const Manifold& manifold, double t, double h,
                                     const PooledObs& obs);

// Mean fits at a sorted list of targets, each warm-started from the previous
// solution (the first from the projected extrinsic mean). `inits` optionally
// supplies a per-target starting point instead.
std::vector<Eigen::VectorXd> fit_mean_at_times(
    const Manifold& manifold, const std::vector<double>& targets, double h,
    const PooledObs& obs, const MeanFitOptions& options = {},
    const std::vector<Eigen::VectorXd>* inits = nullptr);

MeanCurve estimate_mean_curve(const Manifold& manifold, const LongitudinalDataset& data,
                              double h, const std::vector<double>& subject_weights,
                              const Eigen::VectorXd& grid,
                              const MeanFitOptions& options = {});

// Geodesic interpolation of the curve; exact at grid nodes.
Eigen::VectorXd eval_mean(const Manifold& manifold, const MeanCurve& curve, double t);

Eigen::VectorXd make_grid(double lo, double hi, int size);

struct GcvResult {
  double h_mu = 0.0;
  std::vector<double> candidates;
  std::vector<double> scores;  // +inf marks inadmissible candidates
  // Mean fits behind each admissible candidate, at the unique observation
  // times; kept so the criterion can be re-evaluated from the saved fits.
  std::vector<double> unique_times;
  std::vector<std::vector<Eigen::VectorXd>> fits;  // per candidate (empty if skipped)
};

// GCV(h) = sum_ij d^2(mu_hat(T_ij), Y_ij) / (1 - K_h(0)/N)^2, with mu_hat
// refit at the exact observation times under each candidate bandwidth.
// Candidates with degenerate moments anywhere on the working grid or at an
// observation time are skipped; ties break toward the larger bandwidth.
GcvResult gcv_bandwidth(const Manifold& manifold, const LongitudinalDataset& data,
                        WeightScheme scheme, const std::vector<double>& candidates,
                        const Eigen::VectorXd& working_grid,
                        const MeanFitOptions& options = {});

}  // namespace rpace
