#pragma once

#include <vector>

#include "rpace/dataset.hpp"

namespace rpace {

enum class WeightScheme { Obs, Subj, Intm };

const char* weight_scheme_name(WeightScheme scheme);
WeightScheme weight_scheme_from_name(const std::string& name);

// Epanechnikov kernel K(x) = 0.75 (1 - x^2) on [-1, 1].
inline double epanechnikov(double x) {
  return std::abs(x) <= 1.0 ? 0.75 * (1.0 - x * x) : 0.0;
}

// Scaled kernel K_h(x) = K(x/h) / h.
inline double kernel_h(double x, double h) { return epanechnikov(x / h) / h; }

// Per-subject weights w_i for mean smoothing, normalized so sum_i m_i w_i = 1.
//   OBS:  w_i = 1 / (n mbar)
//   SUBJ: w_i = 1 / (n m_i)
//   INTM: convex blend with alpha = c2 / (c1 + c2),
//         c1 = 1/(mbar h) + mbar2/mbar^2, c2 = 1/(mbar_H h) + 1.
std::vector<double> mean_weights(WeightScheme scheme, const std::vector<int>& counts,
                                 double h);

// Per-subject weights v_i for covariance smoothing, normalized so
// sum_i m_i (m_i - 1) v_i = 1. Subjects with m_i < 2 get weight zero; the
// SUBJ and INTM subject terms divide by the count n' of subjects with pairs.
std::vector<double> cov_weights(WeightScheme scheme, const std::vector<int>& counts,
                                double h_gamma);

// Empirical kernel moments at t: u_k = sum_i w_i sum_j K_h(T_ij - t)(T_ij - t)^k.
struct LocalMoments {
  double u0 = 0.0;
  double u1 = 0.0;
  double u2 = 0.0;
  double sigma0_sq = 0.0;  // u0 u2 - u1^2
  bool degenerate = true;  // sigma0_sq <= 1e-12 u0 u2
};

// Pooled observations sorted by time, with the subject mean-weight attached
// to each observation. Built once per (dataset, weights) pair.
class PooledObs {
 public:
  PooledObs(const LongitudinalDataset& data, const std::vector<double>& subject_weights);

  int size() const { return static_cast<int>(times_.size()); }
  double time(int k) const { return times_[k]; }
  double weight(int k) const { return weights_[k]; }
  int subject(int k) const { return subject_[k]; }
  const Eigen::VectorXd& point(int k) const { return *points_[k]; }
  double min_time() const { return times_.front(); }
  double max_time() const { return times_.back(); }

  // Indices of observations with |T - t| < h, as a [first, last) range.
  std::pair<int, int> window(double t, double h) const;

 private:
  std::vector<double> times_;
  std::vector<double> weights_;
  std::vector<int> subject_;
  std::vector<const Eigen::VectorXd*> points_;
};

LocalMoments local_moments(double t, double h, const PooledObs& obs);

// Local linear weight at observation time t_obs for target t:
//   K_h(t_obs - t) {u2 - u1 (t_obs - t)} / sigma0_sq.
// Throws DegenerateError when the moments are degenerate.
double local_weight(double t_obs, double t, double h, const LocalMoments& moments);

// Default GCV candidate bandwidths: 10 log-spaced values from
// 1.5 * (max gap between sorted pooled times) to range(T) / 2.
std::vector<double> default_bandwidth_candidates(const LongitudinalDataset& data);

}  // namespace rpace
