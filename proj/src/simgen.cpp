#include "rpace/simgen.hpp"

#include <algorithm>
#include <cmath>

#include "rpace/errors.hpp"
#include "rpace/parallel.hpp"

namespace rpace {

namespace {

using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

using RowMat3 = Eigen::Matrix<double, 3, 3, Eigen::RowMajor>;

VectorXd flatten(const Matrix3d& m) {
  VectorXd v(9);
  Eigen::Map<RowMat3>(v.data()) = m;
  return v;
}

Matrix3d unflatten(const VectorXd& v) {
  return Eigen::Map<const RowMat3>(v.data());
}

}  // namespace

ScenarioConfig ScenarioConfig::preset(ManifoldFamily family, int scenario) {
  ScenarioConfig config;
  config.manifold = family;
  switch (scenario) {
    case 1:
      config.n = 100;
      config.m_max = 20;
      break;
    case 2:
      config.n = 100;
      config.m_max = 5;
      break;
    case 3:
      config.n = 50;
      config.m_max = 20;
      break;
    default:
      throw InvalidInputError("simulate", "unknown scenario preset " +
                                              std::to_string(scenario));
  }
  return config;
}

double cosine_basis(int k, double t) { return std::sqrt(2.0) * std::cos(k * M_PI * t); }

VectorXd lambda_sequence(const ScenarioConfig& config) {
  VectorXd lambda(config.n_components);
  for (int k = 1; k <= config.n_components; ++k) {
    lambda[k - 1] = std::pow(config.lambda_base, k / config.lambda_exponent_scale);
  }
  return lambda;
}

SimTruthModel::SimTruthModel(const ScenarioConfig& config) : family_(config.manifold) {
  switch (family_) {
    case ManifoldFamily::Sphere:
      manifold_ = std::make_shared<Sphere>(2);
      break;
    case ManifoldFamily::Rotation:
      manifold_ = std::make_shared<So3>(config.so3_metric_scale);
      break;
    default:
      throw InvalidInputError("simulate", "scenarios are defined on S^2 and SO(3)");
  }
}

VectorXd SimTruthModel::mean_at(double t) const {
  if (family_ == ManifoldFamily::Sphere) {
    Vector3d pole(0.0, 0.0, 1.0);
    Vector3d v(2.0 * t / std::sqrt(2.0), 0.3 * M_PI * std::sin(M_PI * t), 0.0);
    return manifold_->exp(pole, v);
  }
  const Matrix3d a =
      skew_lower(Vector3d(2.0 * t, 0.3 * M_PI * std::sin(M_PI * t), 0.0));
  return flatten(rotation_exp(a));
}

VectorXd SimTruthModel::eigenfunction_at(int k, double t) const {
  if (family_ == ManifoldFamily::Sphere) {
    const Vector3d pole(0.0, 0.0, 1.0);
    const VectorXd mu = mean_at(t);
    Vector3d at_pole(cosine_basis(k, t / 2.0), cosine_basis(k, (t + 1.0) / 2.0), 0.0);
    return rotation_between(pole, mu) * (at_pole / std::sqrt(2.0));
  }
  const auto& so3 = static_cast<const So3&>(*manifold_);
  const Matrix3d body =
      skew_lower(Vector3d(cosine_basis(k, t / 3.0), cosine_basis(k, (t + 1.0) / 3.0),
                          cosine_basis(k, (t + 2.0) / 3.0))) /
      std::sqrt(3.0);
  return so3.metric_scale() * flatten(unflatten(mean_at(t)) * body);
}

SimData generate(const ScenarioConfig& config, const VectorXd& eval_grid) {
  if (config.n < 2 || config.m_max < 1 || config.sigma2 < 0.0) {
    throw InvalidInputError("simulate", "need n >= 2, m_max >= 1, sigma2 >= 0");
  }
  const SimTruthModel truth(config);
  const Manifold& manifold = truth.manifold();
  const VectorXd lambda = lambda_sequence(config);
  const VectorXd sd = lambda.cwiseSqrt();
  const double noise_sd = std::sqrt(config.sigma2);
  const int d = manifold.intrinsic_dim();
  Rng rng(config.seed);

  SimData out;
  out.grid = eval_grid;
  out.data.kind = manifold.kind();
  out.data.subjects.resize(config.n);
  out.true_scores.resize(config.n, config.n_components);
  out.true_paths.resize(config.n);

  // Truth evaluated once on the grid, shared by all subjects.
  std::vector<VectorXd> grid_mean(eval_grid.size());
  std::vector<std::vector<VectorXd>> grid_phi(eval_grid.size());
  for (int a = 0; a < eval_grid.size(); ++a) {
    grid_mean[a] = truth.mean_at(eval_grid[a]);
    grid_phi[a].reserve(config.n_components);
    for (int k = 1; k <= config.n_components; ++k) {
      grid_phi[a].push_back(truth.eigenfunction_at(k, eval_grid[a]));
    }
  }

  for (int i = 0; i < config.n; ++i) {
    Subject& subj = out.data.subjects[i];
    subj.id = "s" + std::to_string(i + 1);
    const int m = rng.uniform_int(1, config.m_max);
    subj.times.resize(m);
    for (int j = 0; j < m; ++j) subj.times[j] = rng.uniform();
    std::sort(subj.times.begin(), subj.times.end());

    for (int k = 0; k < config.n_components; ++k) {
      out.true_scores(i, k) = rng.normal(0.0, sd[k]);
    }

    subj.points.reserve(m);
    for (int j = 0; j < m; ++j) {
      const double t = subj.times[j];
      const VectorXd mu = truth.mean_at(t);
      VectorXd tangent = VectorXd::Zero(manifold.ambient_dim());
      for (int k = 1; k <= config.n_components; ++k) {
        tangent += out.true_scores(i, k - 1) * truth.eigenfunction_at(k, t);
      }
      const MatrixXd basis = manifold.tangent_basis(mu);
      for (int a = 0; a < d; ++a) tangent += rng.normal(0.0, noise_sd) * basis.col(a);
      subj.points.push_back(manifold.exp(mu, tangent));
    }

    MatrixXd path(eval_grid.size(), manifold.ambient_dim());
    for (int a = 0; a < eval_grid.size(); ++a) {
      VectorXd tangent = VectorXd::Zero(manifold.ambient_dim());
      for (int k = 0; k < config.n_components; ++k) {
        tangent += out.true_scores(i, k) * grid_phi[a][k];
      }
      path.row(a) = manifold.exp(grid_mean[a], tangent).transpose();
    }
    out.true_paths[i] = std::move(path);
  }
  return out;
}

double replicate_mise(const std::vector<MatrixXd>& fitted,
                      const std::vector<MatrixXd>& truths, const Manifold& manifold,
                      const VectorXd& grid) {
  if (fitted.size() != truths.size()) {
    throw InvalidInputError("rmise", "fitted/truth subject counts differ");
  }
  const VectorXd quad = trapezoid_weights(grid);
  const double dim = manifold.ambient_dim();
  double total = 0.0;
  for (size_t i = 0; i < fitted.size(); ++i) {
    if (fitted[i].rows() != grid.size() || truths[i].rows() != grid.size()) {
      throw InvalidInputError("rmise", "trajectory grids do not match");
    }
    double integral = 0.0;
    for (int a = 0; a < grid.size(); ++a) {
      const double dist =
          manifold.dist(fitted[i].row(a).transpose(), truths[i].row(a).transpose());
      integral += quad[a] * dist * dist;
    }
    total += integral / dim;
  }
  return total / static_cast<double>(fitted.size());
}

double rmise(const std::vector<std::vector<MatrixXd>>& fitted_replicates,
             const std::vector<std::vector<MatrixXd>>& true_replicates,
             const Manifold& manifold, const VectorXd& grid) {
  if (fitted_replicates.empty() || fitted_replicates.size() != true_replicates.size()) {
    throw InvalidInputError("rmise", "replicate counts do not match");
  }
  double mean = 0.0;
  for (size_t b = 0; b < fitted_replicates.size(); ++b) {
    mean += replicate_mise(fitted_replicates[b], true_replicates[b], manifold, grid);
  }
  return std::sqrt(mean / static_cast<double>(fitted_replicates.size()));
}

FitResult extrinsic_baseline(const Manifold& manifold, const LongitudinalDataset& data,
                             const FitConfig& config) {
  LongitudinalDataset ambient = data;
  ambient.kind = ManifoldKind::euclidean(manifold.ambient_dim());
  const Euclidean flat(manifold.ambient_dim());
  FitResult result = fit(flat, ambient, config);
  for (auto& path : result.paths) {
    for (int a = 0; a < path.rows(); ++a) {
      path.row(a) = manifold.project(path.row(a).transpose()).transpose();
    }
  }
  return result;
}

StudyResult run_study(const ScenarioConfig& config, const StudyOptions& options) {
  const SimTruthModel truth(config);
  const Manifold& manifold = truth.manifold();
  const VectorXd grid = make_grid(0.0, 1.0, config.grid_size);
  const int B = config.replicates;
  const int kmax = options.k_max;

  std::vector<std::string> methods = {"rpace"};
  if (options.include_extrinsic) methods.push_back("extrinsic");
  if (options.include_oracle) methods.push_back("oracle");
  const int n_methods = static_cast<int>(methods.size());

  // mise[method][b * kmax + (K-1)]; NaN marks a failed replicate.
  std::vector<std::vector<double>> mise(
      n_methods, std::vector<double>(B * kmax, std::numeric_limits<double>::quiet_NaN()));

  FitConfig fit_config;
  fit_config.truncation.explicit_k = kmax;
  fit_config.grid = grid;
  fit_config.grid_size = config.grid_size;

  const Euclidean flat(manifold.ambient_dim());

  parallel_for(B, options.threads, [&](int b) {
    ScenarioConfig rep = config;
    rep.seed = Rng::derive(config.seed, static_cast<std::uint64_t>(b));
    const SimData sim = generate(rep, grid);

    for (int m = 0; m < n_methods; ++m) {
      try {
        std::vector<MatrixXd> paths(sim.data.n());
        if (methods[m] == "oracle") {
          for (int K = 1; K <= kmax; ++K) {
            for (int i = 0; i < sim.data.n(); ++i) {
              MatrixXd path(grid.size(), manifold.ambient_dim());
              for (int a = 0; a < grid.size(); ++a) {
                VectorXd tangent = VectorXd::Zero(manifold.ambient_dim());
                for (int k = 1; k <= K; ++k) {
                  tangent += sim.true_scores(i, k - 1) *
                             truth.eigenfunction_at(k, grid[a]);
                }
                path.row(a) =
                    manifold.exp(truth.mean_at(grid[a]), tangent).transpose();
              }
              paths[i] = std::move(path);
            }
            mise[m][b * kmax + K - 1] =
                replicate_mise(paths, sim.true_paths, manifold, grid);
          }
          continue;
        }
        const bool extrinsic = methods[m] == "extrinsic";
        const Manifold& work_manifold = extrinsic ? static_cast<const Manifold&>(flat)
                                                  : manifold;
        const FitResult result = extrinsic
                                     ? extrinsic_baseline(manifold, sim.data, fit_config)
                                     : fit(manifold, sim.data, fit_config);
        for (int K = 1; K <= kmax; ++K) {
          for (int i = 0; i < sim.data.n(); ++i) {
            std::vector<int> clamps;
            auto [log_path, path] =
                reconstruct(work_manifold, result.model, result.mean,
                            result.scores.row(i).transpose(), K,
                            fit_config.tangent_projection, &clamps);
            if (extrinsic) {
              for (int a = 0; a < path.rows(); ++a) {
                path.row(a) = manifold.project(path.row(a).transpose()).transpose();
              }
            }
            paths[i] = std::move(path);
          }
          mise[m][b * kmax + K - 1] =
              replicate_mise(paths, sim.true_paths, manifold, grid);
        }
      } catch (const Error&) {
        // Failed replicate for this method; recorded via the NaN cells.
      }
    }
  });

  StudyResult out;
  out.config = config;
  out.options = options;
  for (int m = 0; m < n_methods; ++m) {
    for (int K = 1; K <= kmax; ++K) {
      std::vector<double> values;
      values.reserve(B);
      for (int b = 0; b < B; ++b) {
        const double v = mise[m][b * kmax + K - 1];
        if (std::isfinite(v)) values.push_back(v);
      }
      const int n_fail = B - static_cast<int>(values.size());
      if (static_cast<double>(n_fail) > options.max_failure_rate * B) {
        throw Error("study", methods[m] + " failed on " + std::to_string(n_fail) +
                                 " of " + std::to_string(B) + " replicates");
      }
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= values.size();
      double var = 0.0;
      for (double v : values) var += (v - mean) * (v - mean);
      var = values.size() > 1 ? var / (values.size() - 1.0) : 0.0;
      const double root = std::sqrt(mean);
      StudyRow row;
      row.method = methods[m];
      row.manifold = manifold.kind().name();
      row.scenario = options.scenario_label;
      row.K = K;
      row.rmise = root;
      // Delta method: se(sqrt(m)) = se(m) / (2 sqrt(m)).
      row.mc_se = root > 0.0 ? std::sqrt(var / values.size()) / (2.0 * root) : 0.0;
      row.n_fail = n_fail;
      out.rows.push_back(row);
    }
  }
  return out;
}

}  // namespace rpace
