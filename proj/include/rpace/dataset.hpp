#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "rpace/geometry.hpp"

namespace rpace {

// Irregular observations of one subject; times sorted ascending.
struct Subject {
  std::string id;
  std::vector<double> times;
  std::vector<Eigen::VectorXd> points;

  int m() const { return static_cast<int>(times.size()); }
};

struct LongitudinalDataset {
  ManifoldKind kind;
  std::vector<Subject> subjects;

  int n() const { return static_cast<int>(subjects.size()); }

  int total_obs() const {
    int total = 0;
    for (const auto& s : subjects) total += s.m();
    return total;
  }

  std::vector<int> counts() const {
    std::vector<int> m;
    m.reserve(subjects.size());
    for (const auto& s : subjects) m.push_back(s.m());
    return m;
  }

  std::pair<double, double> time_range() const;

  // Checks m_i >= 1, sorted times, and point invariants; throws listing offenders.
  void validate(const Manifold& manifold) const;
};

// Frechet mean curve sampled on a working grid.
struct MeanCurve {
  Eigen::VectorXd grid;  // increasing, covers [min T, max T]
  std::vector<Eigen::VectorXd> points;
  double bandwidth = 0.0;
};

}  // namespace rpace
