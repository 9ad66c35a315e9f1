#include "rpace/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rpace/errors.hpp"

namespace rpace {

const char* weight_scheme_name(WeightScheme scheme) {
  switch (scheme) {
    case WeightScheme::Obs:
      return "obs";
    case WeightScheme::Subj:
      return "subj";
    case WeightScheme::Intm:
      return "intm";
  }
  return "?";
}

WeightScheme weight_scheme_from_name(const std::string& name) {
  if (name == "obs") return WeightScheme::Obs;
  if (name == "subj") return WeightScheme::Subj;
  if (name == "intm") return WeightScheme::Intm;
  throw InvalidInputError("config", "unknown weight scheme '" + name + "'");
}

std::vector<double> mean_weights(WeightScheme scheme, const std::vector<int>& counts,
                                 double h) {
  const int n = static_cast<int>(counts.size());
  if (n == 0) throw InvalidInputError("weights", "empty subject counts");
  for (int m : counts) {
    if (m < 1) throw InvalidInputError("weights", "subject with no observations");
  }
  if (h <= 0.0) throw InvalidInputError("weights", "bandwidth must be positive");

  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double mbar = total / n;

  double alpha = 0.0;
  if (scheme == WeightScheme::Intm) {
    double m2 = 0.0, inv = 0.0;
    for (int m : counts) {
      m2 += static_cast<double>(m) * m;
      inv += 1.0 / m;
    }
    m2 /= n;
    const double mbar_h = n / inv;  // harmonic mean
    const double c1 = 1.0 / (mbar * h) + m2 / (mbar * mbar);
    const double c2 = 1.0 / (mbar_h * h) + 1.0;
    alpha = c2 / (c1 + c2);
  }

  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    const double obs = 1.0 / (n * mbar);
    const double subj = 1.0 / (n * static_cast<double>(counts[i]));
    switch (scheme) {
      case WeightScheme::Obs:
        w[i] = obs;
        break;
      case WeightScheme::Subj:
        w[i] = subj;
        break;
      case WeightScheme::Intm:
        w[i] = alpha * obs + (1.0 - alpha) * subj;
        break;
    }
  }
  return w;
}

std::vector<double> cov_weights(WeightScheme scheme, const std::vector<int>& counts,
                                double h_gamma) {
  const int n = static_cast<int>(counts.size());
  if (n == 0) throw InvalidInputError("weights", "empty subject counts");
  if (h_gamma <= 0.0) throw InvalidInputError("weights", "bandwidth must be positive");

  double pairs = 0.0;  // sum m_i (m_i - 1)
  int n_pairs = 0;     // subjects contributing pairs
  for (int m : counts) {
    pairs += static_cast<double>(m) * (m - 1);
    if (m >= 2) ++n_pairs;
  }
  if (n_pairs == 0) {
    throw DegenerateError("weights",
                          "covariance unidentifiable: no subject has two observations");
  }

  double alpha = 0.0;
  if (scheme == WeightScheme::Intm) {
    double m2 = 0.0, m3 = 0.0, m4 = 0.0, inv = 0.0, inv2 = 0.0;
    for (int m : counts) {
      const double md = m;
      m2 += md * md;
      m3 += md * md * md;
      m4 += md * md * md * md;
      inv += 1.0 / md;
      inv2 += 1.0 / (md * md);
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    const double mbar_h = n / inv;
    const double mbar_q = n / inv2;
    const double h2 = h_gamma * h_gamma;
    const double c1 = 1.0 / (m2 * h2) + m3 / (m2 * m2 * h_gamma) + m4 / (m2 * m2);
    const double c2 = 1.0 / (mbar_q * h2) + 1.0 / (mbar_h * h_gamma) + 1.0;
    alpha = c2 / (c1 + c2);
  }

  std::vector<double> v(n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (counts[i] < 2) continue;
    const double mi = counts[i];
    const double obs = 1.0 / pairs;
    const double subj = 1.0 / (n_pairs * mi * (mi - 1.0));
    switch (scheme) {
      case WeightScheme::Obs:
        v[i] = obs;
        break;
      case WeightScheme::Subj:
        v[i] = subj;
        break;
      case WeightScheme::Intm:
        v[i] = alpha * obs + (1.0 - alpha) * subj;
        break;
    }
  }
  return v;
}

PooledObs::PooledObs(const LongitudinalDataset& data,
                     const std::vector<double>& subject_weights) {
  if (subject_weights.size() != data.subjects.size()) {
    throw InvalidInputError("weights", "weight vector does not match subject count");
  }
  const int total = data.total_obs();
  std::vector<int> order(total);
  times_.reserve(total);
  weights_.reserve(total);
  subject_.reserve(total);
  points_.reserve(total);
  for (int i = 0; i < data.n(); ++i) {
    const auto& s = data.subjects[i];
    for (int j = 0; j < s.m(); ++j) {
      times_.push_back(s.times[j]);
      weights_.push_back(subject_weights[i]);
      subject_.push_back(i);
      points_.push_back(&s.points[j]);
    }
  }
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return times_[a] < times_[b]; });
  auto permute = [&order](auto& v) {
    auto copy = v;
    for (size_t k = 0; k < order.size(); ++k) v[k] = copy[order[k]];
  };
  permute(times_);
  permute(weights_);
  permute(subject_);
  permute(points_);
}

std::pair<int, int> PooledObs::window(double t, double h) const {
  const auto lo = std::lower_bound(times_.begin(), times_.end(), t - h);
  const auto hi = std::upper_bound(times_.begin(), times_.end(), t + h);
  return {static_cast<int>(lo - times_.begin()), static_cast<int>(hi - times_.begin())};
}

LocalMoments local_moments(double t, double h, const PooledObs& obs) {
  LocalMoments m;
  const auto [first, last] = obs.window(t, h);
  for (int k = first; k < last; ++k) {
    const double delta = obs.time(k) - t;
    const double kw = obs.weight(k) * kernel_h(delta, h);
    m.u0 += kw;
    m.u1 += kw * delta;
    m.u2 += kw * delta * delta;
  }
  m.sigma0_sq = m.u0 * m.u2 - m.u1 * m.u1;
  m.degenerate = m.sigma0_sq <= 1e-12 * m.u0 * m.u2;
  return m;
}

double local_weight(double t_obs, double t, double h, const LocalMoments& moments) {
  if (moments.degenerate) {
    throw DegenerateError("smoothing", "degenerate local moments at t=" +
                                           std::to_string(t) +
                                           "; bandwidth too small");
  }
  const double delta = t_obs - t;
  return kernel_h(delta, h) * (moments.u2 - moments.u1 * delta) / moments.sigma0_sq;
}

std::vector<double> default_bandwidth_candidates(const LongitudinalDataset& data) {
  std::vector<double> times;
  times.reserve(data.total_obs());
  for (const auto& s : data.subjects) {
    times.insert(times.end(), s.times.begin(), s.times.end());
  }
  if (times.size() < 2) {
    throw InvalidInputError("bandwidth", "need at least two observations");
  }
  std::sort(times.begin(), times.end());
  double max_gap = 0.0;
  for (size_t k = 1; k < times.size(); ++k) {
    max_gap = std::max(max_gap, times[k] - times[k - 1]);
  }
  const double range = times.back() - times.front();
  if (range <= 0.0) {
    throw InvalidInputError("bandwidth", "all observation times coincide");
  }
  double lo = 1.5 * max_gap;
  double hi = range / 2.0;
  if (lo <= 0.0) lo = hi / 10.0;
  if (lo >= hi) return {std::max(lo, hi)};
  const int count = 10;
  std::vector<double> grid(count);
  for (int k = 0; k < count; ++k) {
    grid[k] = lo * std::pow(hi / lo, static_cast<double>(k) / (count - 1));
  }
  return grid;
}

}  // namespace rpace
