#include "rpace/dataset.hpp"

#include <algorithm>
#include <limits>

#include "rpace/errors.hpp"

namespace rpace {

std::pair<double, double> LongitudinalDataset::time_range() const {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& s : subjects) {
    for (double t : s.times) {
      lo = std::min(lo, t);
      hi = std::max(hi, t);
    }
  }
  if (!(lo <= hi)) throw InvalidInputError("dataset", "dataset has no observations");
  return {lo, hi};
}

void LongitudinalDataset::validate(const Manifold& manifold) const {
  if (manifold.kind() != kind) {
    throw InvalidInputError("dataset", "manifold does not match dataset kind");
  }
  std::string offenders;
  int bad = 0;
  for (const auto& s : subjects) {
    if (s.times.empty()) {
      throw InvalidInputError("dataset", "subject " + s.id + " has no observations");
    }
    if (s.times.size() != s.points.size()) {
      throw InvalidInputError("dataset", "subject " + s.id + " times/points mismatch");
    }
    if (!std::is_sorted(s.times.begin(), s.times.end())) {
      throw InvalidInputError("dataset", "subject " + s.id + " times not sorted");
    }
    for (size_t j = 0; j < s.points.size(); ++j) {
      try {
        manifold.check_point(s.points[j]);
      } catch (const Error& err) {
        ++bad;
        if (bad <= 5) {
          offenders += "\n  subject " + s.id + " t=" + std::to_string(s.times[j]) +
                       ": " + err.what();
        }
      }
    }
  }
  if (bad > 0) {
    throw InvalidInputError("dataset", std::to_string(bad) +
                                           " observation(s) violate manifold invariants" +
                                           offenders);
  }
}

}  // namespace rpace
