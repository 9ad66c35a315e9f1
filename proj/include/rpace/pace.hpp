#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rpace/covariance.hpp"
#include "rpace/dataset.hpp"
#include "rpace/mean.hpp"

namespace rpace {

struct FitConfig {
  WeightScheme scheme = WeightScheme::Obs;
  TruncationRule truncation{};
  std::optional<double> h_mu;
  std::optional<double> h_gamma;
  double h_gamma_factor = 2.0;  // h_gamma = factor * h_mu unless overridden
  int grid_size = 51;
  std::optional<Eigen::VectorXd> grid;  // explicit working grid
  std::optional<std::vector<double>> bandwidth_candidates;
  bool tangent_projection = true;
  int threads = 1;
};

struct FitResult {
  MeanCurve mean;
  CovarianceModel model;
  int K = 1;
  double h_mu = 0.0;
  double h_gamma = 0.0;
  Eigen::MatrixXd scores;                    // n x K (zero-padded past available pairs)
  std::vector<Eigen::MatrixXd> log_paths;    // per subject, G x D on the grid
  std::vector<Eigen::MatrixXd> paths;        // per subject, G x D on the grid
  std::vector<std::vector<int>> clamped;     // per subject, clamped grid node indices
  std::vector<double> gcv_candidates;
  std::vector<double> gcv_scores;
};

// Conditional covariance Sigma_i of the stacked log observations at the
// subject's times: sum_k lambda_k phi_ik phi_ik' + sigma^2 I, over all
// retained eigenpairs. Positive definite whenever sigma^2 > 0.
Eigen::MatrixXd subject_covariance(const CovarianceModel& model,
                                   const std::vector<double>& times);

// BLUP scores xi_ik = lambda_k phi_ik' Sigma_i^{-1} L_i for k = 1..K, via a
// symmetric factorization solve.
Eigen::VectorXd blup_scores(const CovarianceModel& model,
                            const std::vector<double>& times,
                            const std::vector<Eigen::VectorXd>& log_obs, int K,
                            const std::string& subject_id = "?");

// K-truncated tangent path and its exponential image on the grid. Tangent
// norms beyond the injectivity radius are clamped to radius - 1e-6 and the
// affected node indices reported through `clamped`.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> reconstruct(
    const Manifold& manifold, const CovarianceModel& model, const MeanCurve& curve,
    const Eigen::VectorXd& scores, int K, bool tangent_projection,
    std::vector<int>* clamped = nullptr);

// Full pipeline: GCV bandwidth, mean curve, log residuals, covariance
// surface, eigenstructure, noise variance, truncation, BLUP scores and
// reconstructed trajectories. Deterministic given data and config.
FitResult fit(const Manifold& manifold, const LongitudinalDataset& data,
              const FitConfig& config = {});

}  // namespace rpace
