#pragma once

#include <optional>
#include <vector>

#include "rpace/dataset.hpp"
#include "rpace/mean.hpp"

namespace rpace {

// Log-mapped observations around the fitted mean curve, per subject; each
// vector is tangent at eval_mean(curve, T_ij).
struct LogResiduals {
  int dim = 0;  // ambient D
  std::vector<std::vector<double>> times;
  std::vector<std::vector<Eigen::VectorXd>> vectors;

  int n() const { return static_cast<int>(times.size()); }
};

LogResiduals log_residuals(const Manifold& manifold, const LongitudinalDataset& data,
                           const MeanCurve& curve);

// Grid-sampled D x D covariance surface with bilinear off-grid evaluation.
class CovarianceSurface {
 public:
  CovarianceSurface() = default;
  CovarianceSurface(Eigen::VectorXd grid, int dim);

  int grid_size() const { return static_cast<int>(grid_.size()); }
  int dim() const { return dim_; }
  const Eigen::VectorXd& grid() const { return grid_; }

  Eigen::MatrixXd& at(int a, int b) { return blocks_[a * grid_.size() + b]; }
  const Eigen::MatrixXd& at(int a, int b) const { return blocks_[a * grid_.size() + b]; }

  Eigen::MatrixXd eval(double s, double t) const;
  double trace_eval(double t) const;  // Tr Gamma(t, t)

  // Gamma(s,t) <- (Gamma(s,t) + Gamma(t,s)') / 2, exact symmetry afterwards.
  void symmetrize();

 private:
  int cell(double x) const;

  Eigen::VectorXd grid_;
  int dim_ = 0;
  std::vector<Eigen::MatrixXd> blocks_;
};

// Local-linear scatterplot smoother of the raw tensors L_ij L_il' (j != l)
// at a single target (s, t). Throws DegenerateError when the local normal
// equations are rank deficient.
Eigen::MatrixXd smooth_covariance_at(double s, double t, double h_gamma,
                                     const LogResiduals& residuals,
                                     const std::vector<double>& cov_weights);

CovarianceSurface covariance_surface(const LogResiduals& residuals, double h_gamma,
                                     const std::vector<double>& cov_weights,
                                     const Eigen::VectorXd& grid, int threads = 1);

Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& grid);

struct EigenDecomposition {
  Eigen::VectorXd values;                       // descending, strictly positive kept
  std::vector<Eigen::MatrixXd> functions;       // each G x D, quadrature-orthonormal
};

// Spectral decomposition of the surface as an integral operator under the
// given quadrature. Eigenpairs with value <= max(0, 1e-12 * lambda_1) are
// dropped; each eigenfunction is signed so its largest-magnitude entry is
// positive.
EigenDecomposition eigendecompose(const CovarianceSurface& surface,
                                  const Eigen::VectorXd& quad_weights);

// sigma^2 = sum_i sum_j (n d m_i)^{-1} (|L_ij|^2 - Tr Gamma(T_ij, T_ij)),
// floored at 1e-10 (flag set when the floor was applied).
double estimate_sigma2(const LogResiduals& residuals, const CovarianceSurface& surface,
                       int intrinsic_dim, bool* floored = nullptr);

struct TruncationRule {
  double fve_threshold = 0.95;
  std::optional<int> explicit_k;
};

int select_K(const Eigen::VectorXd& eigenvalues, const TruncationRule& rule);

// Cumulative fraction-of-variance-explained sequence.
Eigen::VectorXd cumulative_fve(const Eigen::VectorXd& eigenvalues);

struct CovarianceModel {
  Eigen::VectorXd grid;
  CovarianceSurface surface;
  Eigen::VectorXd eigenvalues;
  std::vector<Eigen::MatrixXd> eigenfunctions;  // G x D each
  Eigen::VectorXd quad_weights;
  double sigma2 = 0.0;
  bool sigma2_floored = false;

  int n_components() const { return static_cast<int>(eigenvalues.size()); }

  // phi_k(t) by linear interpolation of the grid rows.
  Eigen::VectorXd eval_eigenfunction(int k, double t) const;
};

// Projects each eigenfunction row onto the tangent space at the mean curve
// and restores quadrature orthonormality by modified Gram-Schmidt.
void project_eigenfunctions(CovarianceModel& model, const Manifold& manifold,
                            const MeanCurve& curve);

}  // namespace rpace
