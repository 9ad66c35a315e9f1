#include "rpace/mean.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rpace/errors.hpp"

namespace rpace {

namespace {

using Eigen::VectorXd;

// Signed local-linear coefficients c_k = w_k * w_hat_k over the kernel window,
// with the window points packed column-wise for batched geometry calls.
// The coefficients sum to 1 and their first moment about t is 0.
struct LocalFit {
  Eigen::MatrixXd points;
  VectorXd coeff;
  std::vector<int> subject;
  std::vector<double> times;
};

LocalFit local_fit(double t, double h, const PooledObs& obs, const Manifold& manifold) {
  const LocalMoments moments = local_moments(t, h, obs);
  if (moments.degenerate) {
    throw DegenerateError("mean", "degenerate local moments at t=" + std::to_string(t) +
                                      "; bandwidth too small");
  }
  LocalFit fit;
  const auto [first, last] = obs.window(t, h);
  const int width = last - first;
  fit.points.resize(manifold.ambient_dim(), width);
  fit.coeff.resize(width);
  fit.subject.reserve(width);
  fit.times.reserve(width);
  for (int k = first; k < last; ++k) {
    fit.coeff[k - first] = obs.weight(k) * local_weight(obs.time(k), t, h, moments);
    fit.points.col(k - first) = obs.point(k);
    fit.subject.push_back(obs.subject(k));
    fit.times.push_back(obs.time(k));
  }
  return fit;
}

double objective(const Manifold& manifold, const LocalFit& fit, const VectorXd& y) {
  return manifold.weighted_sqdist_sum(fit.points, fit.coeff, y);
}

// Riemannian gradient of the objective: -2 sum_k c_k Log_y(Y_k).
void gradient(const Manifold& manifold, const LocalFit& fit, const VectorXd& y, double t,
              VectorXd& g) {
  try {
    manifold.frechet_gradient(fit.points, fit.coeff, y, g);
  } catch (const CutLocusError& err) {
    // Identify the offending observation for the error report.
    std::string context = " (target t=" + std::to_string(t) + ")";
    for (int k = 0; k < fit.points.cols(); ++k) {
      if (manifold.dist(fit.points.col(k), y) > M_PI - 1e-9) {
        context = " (subject index " + std::to_string(fit.subject[k]) +
                  ", observation at t=" + std::to_string(fit.times[k]) +
                  ", target t=" + std::to_string(t) + ")";
        break;
      }
    }
    throw CutLocusError("mean", std::string(err.what()) + context);
  }
}

VectorXd minimize(const Manifold& manifold, const LocalFit& fit, const VectorXd& init,
                  double t, const MeanFitOptions& options) {
  VectorXd y = init;
  VectorXd g(manifold.ambient_dim());
  VectorXd y_prev, g_prev;
  double q = objective(manifold, fit, y);
  double trial_step = options.initial_step;
  if (options.objective_trace) options.objective_trace->push_back(q);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    gradient(manifold, fit, y, t, g);
    const double gnorm = g.norm();
    if (gnorm <= options.grad_tol * (1.0 + std::abs(q))) return y;

    // Barzilai-Borwein trial step from the previous accepted move (ambient
    // chord approximation); Armijo backtracking guards the descent.
    double step = options.initial_step;
    if (y_prev.size() > 0) {
      const VectorXd s = y - y_prev;
      const double denom = s.dot(g - g_prev);
      if (denom > 0.0) {
        step = std::clamp(s.squaredNorm() / denom, 0.05 * options.initial_step,
                          20.0 * options.initial_step);
      }
    }
    y_prev = y;
    g_prev = g;

    bool accepted = false;
    for (int bt = 0; bt < options.max_backtracks; ++bt) {
      const VectorXd trial = manifold.exp(y, -step * g);
      const double q_trial = objective(manifold, fit, trial);
      if (q_trial <= q - options.armijo_c * step * gnorm * gnorm) {
        y = trial;
        q = q_trial;
        accepted = true;
        break;
      }
      step *= options.step_shrink;
    }
    if (options.objective_trace) options.objective_trace->push_back(q);
    if (!accepted) {
      // No admissible descent step left; accept only if already near-stationary.
      if (gnorm <= 1e-6) return y;
      throw OptimizationError("mean", "line search stalled at t=" + std::to_string(t) +
                                          " with gradient norm " + std::to_string(gnorm));
    }
  }
  gradient(manifold, fit, y, t, g);
  if (g.norm() <= 1e-6) return y;
  throw OptimizationError("mean", "no convergence after " +
                                      std::to_string(options.max_iterations) +
                                      " iterations at t=" + std::to_string(t) +
                                      ", gradient norm " + std::to_string(g.norm()));
}

VectorXd extrinsic_seed(const Manifold& manifold, const LocalFit& fit) {
  const VectorXd mean = fit.points * fit.coeff;
  try {
    return manifold.project(mean);
  } catch (const DegenerateError&) {
    // Signed weights can cancel the extrinsic mean; seed from the most
    // influential observation instead.
    int best = 0;
    for (int k = 1; k < fit.coeff.size(); ++k) {
      if (std::abs(fit.coeff[k]) > std::abs(fit.coeff[best])) best = k;
    }
    return fit.points.col(best);
  }
}

}  // namespace

double frechet_objective(const Manifold& manifold, const VectorXd& y, double t, double h,
                         const PooledObs& obs) {
  return objective(manifold, local_fit(t, h, obs, manifold), y);
}

VectorXd estimate_mean_at(const Manifold& manifold, double t, double h,
                          const PooledObs& obs, const VectorXd& init,
                          const MeanFitOptions& options) {
  return minimize(manifold, local_fit(t, h, obs, manifold), init, t, options);
}

VectorXd extrinsic_local_mean(const Manifold& manifold, double t, double h,
                              const PooledObs& obs) {
  return extrinsic_seed(manifold, local_fit(t, h, obs, manifold));
}

std::vector<VectorXd> fit_mean_at_times(const Manifold& manifold,
                                        const std::vector<double>& targets, double h,
                                        const PooledObs& obs,
                                        const MeanFitOptions& options,
                                        const std::vector<VectorXd>* inits) {
  if (inits && inits->size() != targets.size()) {
    throw InvalidInputError("mean", "warm-start list does not match targets");
  }
  std::vector<VectorXd> fits;
  fits.reserve(targets.size());
  for (size_t a = 0; a < targets.size(); ++a) {
    const LocalFit fit = local_fit(targets[a], h, obs, manifold);
    const VectorXd init = inits          ? (*inits)[a]
                          : fits.empty() ? extrinsic_seed(manifold, fit)
                                         : fits.back();
    fits.push_back(minimize(manifold, fit, init, targets[a], options));
  }
  return fits;
}

MeanCurve estimate_mean_curve(const Manifold& manifold, const LongitudinalDataset& data,
                              double h, const std::vector<double>& subject_weights,
                              const Eigen::VectorXd& grid,
                              const MeanFitOptions& options) {
  if (grid.size() < 2 || !std::is_sorted(grid.begin(), grid.end())) {
    throw InvalidInputError("mean", "working grid must be increasing with >= 2 nodes");
  }
  const PooledObs obs(data, subject_weights);
  MeanCurve curve;
  curve.grid = grid;
  curve.bandwidth = h;
  curve.points.resize(grid.size());
  std::string failures;
  int n_failed = 0;
  std::optional<VectorXd> prev;
  for (int a = 0; a < grid.size(); ++a) {
    try {
      const LocalFit fit = local_fit(grid[a], h, obs, manifold);
      const VectorXd init = prev ? *prev : extrinsic_seed(manifold, fit);
      curve.points[a] = minimize(manifold, fit, init, grid[a], options);
      prev = curve.points[a];
    } catch (const Error& err) {
      ++n_failed;
      if (n_failed <= 5) {
        failures += "\n  grid index " + std::to_string(a) + ": " + err.what();
      }
      prev.reset();
    }
  }
  if (n_failed > 0) {
    throw OptimizationError("mean", "mean estimation failed at " +
                                        std::to_string(n_failed) + " grid point(s)" +
                                        failures);
  }
  return curve;
}

VectorXd eval_mean(const Manifold& manifold, const MeanCurve& curve, double t) {
  const auto& grid = curve.grid;
  const int g = static_cast<int>(grid.size());
  const double span = grid[g - 1] - grid[0];
  const double slack = 1e-9 * std::max(span, 1.0);
  if (t < grid[0] - slack || t > grid[g - 1] + slack) {
    throw InvalidInputError("mean", "t=" + std::to_string(t) +
                                        " outside the mean curve domain [" +
                                        std::to_string(grid[0]) + ", " +
                                        std::to_string(grid[g - 1]) + "]");
  }
  const double tc = std::clamp(t, grid[0], grid[g - 1]);
  int hi = static_cast<int>(std::lower_bound(grid.begin(), grid.end(), tc) - grid.begin());
  if (hi == 0) return curve.points[0];
  if (grid[hi] == tc) return curve.points[hi];
  const int lo = hi - 1;
  const double frac = (tc - grid[lo]) / (grid[hi] - grid[lo]);
  return manifold.exp(curve.points[lo],
                      frac * manifold.log(curve.points[lo], curve.points[hi]));
}

Eigen::VectorXd make_grid(double lo, double hi, int size) {
  if (size < 2 || !(hi > lo)) {
    throw InvalidInputError("grid", "need at least 2 nodes and a positive range");
  }
  return Eigen::VectorXd::LinSpaced(size, lo, hi);
}

GcvResult gcv_bandwidth(const Manifold& manifold, const LongitudinalDataset& data,
                        WeightScheme scheme, const std::vector<double>& candidates,
                        const Eigen::VectorXd& working_grid,
                        const MeanFitOptions& options) {
  if (candidates.empty()) {
    throw InvalidInputError("gcv", "empty bandwidth candidate grid");
  }
  const std::vector<int> counts = data.counts();
  const double total_obs = data.total_obs();

  GcvResult result;
  result.candidates = candidates;
  std::sort(result.candidates.begin(), result.candidates.end());
  result.scores.assign(result.candidates.size(), std::numeric_limits<double>::infinity());

  // Unique observation times; duplicates share one mean fit.
  std::vector<double>& unique_times = result.unique_times;
  for (const auto& s : data.subjects) {
    unique_times.insert(unique_times.end(), s.times.begin(), s.times.end());
  }
  std::sort(unique_times.begin(), unique_times.end());
  unique_times.erase(std::unique(unique_times.begin(), unique_times.end()),
                     unique_times.end());

  result.fits.resize(result.candidates.size());
  bool any = false;
  double best = std::numeric_limits<double>::infinity();
  const std::vector<Eigen::VectorXd>* warm = nullptr;
  for (size_t c = 0; c < result.candidates.size(); ++c) {
    const double h = result.candidates[c];
    const double denom = 1.0 - kernel_h(0.0, h) / total_obs;
    if (denom <= 0.0) continue;
    const std::vector<double> w = mean_weights(scheme, counts, h);
    const PooledObs obs(data, w);
    bool admissible = true;
    for (int a = 0; a < working_grid.size() && admissible; ++a) {
      admissible = !local_moments(working_grid[a], h, obs).degenerate;
    }
    if (!admissible) continue;
    try {
      // Candidates are ascending; the previous candidate's fits are good
      // starting points for the next.
      result.fits[c] = fit_mean_at_times(manifold, unique_times, h, obs, options, warm);
      warm = &result.fits[c];
      double sse = 0.0;
      for (const auto& s : data.subjects) {
        for (int j = 0; j < s.m(); ++j) {
          const auto it =
              std::lower_bound(unique_times.begin(), unique_times.end(), s.times[j]);
          const double d =
              manifold.dist(result.fits[c][it - unique_times.begin()], s.points[j]);
          sse += d * d;
        }
      }
      result.scores[c] = sse / (denom * denom);
    } catch (const Error&) {
      result.fits[c].clear();
      continue;  // candidate unusable at some observation time
    }
    if (result.scores[c] <= best) {  // ties break toward the larger h
      best = result.scores[c];
      result.h_mu = result.candidates[c];
      any = true;
    }
  }
  if (!any) {
    throw DegenerateError("gcv",
                          "bandwidth selection failed: every candidate is degenerate");
  }
  return result;
}

}  // namespace rpace
