#include "rpace/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "rpace/errors.hpp"
#include "rpace/version.hpp"

namespace rpace {

namespace {

using nlohmann::json;

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_double(const std::string& token, const std::string& where) {
  double value = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw IoError("ingest", "cannot parse number '" + token + "' at " + where);
  }
  return value;
}

std::string trim_cr(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
  return s;
}

std::string family_name(ManifoldFamily family) {
  switch (family) {
    case ManifoldFamily::Sphere:
      return "sphere";
    case ManifoldFamily::Rotation:
      return "so3";
    case ManifoldFamily::Euclidean:
      return "euclidean";
  }
  return "?";
}

ManifoldFamily family_from_name(const std::string& name) {
  if (name == "sphere") return ManifoldFamily::Sphere;
  if (name == "so3") return ManifoldFamily::Rotation;
  if (name == "euclidean") return ManifoldFamily::Euclidean;
  throw IoError("metadata", "unknown manifold family '" + name + "'");
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("io", "cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("io", "cannot open " + path.string());
  return in;
}

void write_trajectories(const std::filesystem::path& path,
                        const std::vector<std::string>& ids,
                        const std::vector<Eigen::MatrixXd>& paths,
                        const Eigen::VectorXd& grid,
                        const std::vector<std::vector<int>>& clamped) {
  auto out = open_out(path);
  const int dim = paths.empty() ? 0 : static_cast<int>(paths[0].cols());
  out << "subject_id,t,clamped";
  for (int c = 1; c <= dim; ++c) out << ",c" << c;
  out << "\n";
  for (size_t i = 0; i < paths.size(); ++i) {
    size_t next_clamp = 0;
    for (int a = 0; a < grid.size(); ++a) {
      bool is_clamped = false;
      while (next_clamp < clamped[i].size() && clamped[i][next_clamp] < a) ++next_clamp;
      if (next_clamp < clamped[i].size() && clamped[i][next_clamp] == a) is_clamped = true;
      out << ids[i] << ',' << format_double(grid[a]) << ',' << (is_clamped ? 1 : 0);
      for (int c = 0; c < dim; ++c) out << ',' << format_double(paths[i](a, c));
      out << "\n";
    }
  }
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

LongitudinalDataset ingest_csv(const std::filesystem::path& path,
                               const ManifoldKind& kind, const Manifold& manifold,
                               const IngestOptions& options) {
  if (manifold.kind() != kind) {
    throw InvalidInputError("ingest", "manifold does not match requested kind");
  }
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("ingest", path.string() + " is empty");
  const auto header = split_csv(trim_cr(line));
  const int dim = kind.ambient_dim;
  if (header.size() != static_cast<size_t>(dim) + 2 || header[0] != "subject_id" ||
      header[1] != "time") {
    throw IoError("ingest", path.string() + ": expected header subject_id,time,c1..c" +
                                std::to_string(dim));
  }

  LongitudinalDataset data;
  data.kind = kind;
  std::unordered_map<std::string, int> index;
  std::vector<std::vector<long>> row_lines;
  long line_no = 1;
  std::string offenders;
  int bad = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string clean = trim_cr(line);
    if (clean.empty()) continue;
    const auto fields = split_csv(clean);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != static_cast<size_t>(dim) + 2) {
      throw IoError("ingest", "row with " + std::to_string(fields.size()) +
                                  " fields (expected " + std::to_string(dim + 2) +
                                  ") at " + where);
    }
    const double t = parse_double(fields[1], where);
    Eigen::VectorXd coords(dim);
    for (int c = 0; c < dim; ++c) coords[c] = parse_double(fields[c + 2], where);

    if (options.project_on_ingest) {
      try {
        const Eigen::VectorXd projected = manifold.project(coords);
        if ((projected - coords).norm() > options.tolerance) {
          ++bad;
          if (bad <= 5) {
            offenders += "\n  " + where + ": distance to manifold " +
                         format_double((projected - coords).norm());
          }
          continue;
        }
        coords = projected;
      } catch (const Error& err) {
        ++bad;
        if (bad <= 5) offenders += "\n  " + where + ": " + err.what();
        continue;
      }
    } else {
      try {
        manifold.check_point(coords);
      } catch (const Error& err) {
        ++bad;
        if (bad <= 5) offenders += "\n  " + where + ": " + err.what();
        continue;
      }
    }

    auto [it, inserted] = index.try_emplace(fields[0], data.n());
    if (inserted) {
      data.subjects.push_back(Subject{fields[0], {}, {}});
      row_lines.emplace_back();
    }
    Subject& subj = data.subjects[it->second];
    subj.times.push_back(t);
    subj.points.push_back(std::move(coords));
    row_lines[it->second].push_back(line_no);
  }
  if (bad > 0) {
    throw InvalidInputError("ingest", std::to_string(bad) +
                                          " row(s) violate manifold invariants" +
                                          offenders);
  }
  if (data.subjects.empty()) throw IoError("ingest", path.string() + " has no data rows");

  // Sort within subject and reject duplicate (subject, time) pairs.
  std::string dups;
  int n_dups = 0;
  for (size_t i = 0; i < data.subjects.size(); ++i) {
    Subject& subj = data.subjects[i];
    std::vector<int> order(subj.times.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return subj.times[a] < subj.times[b]; });
    Subject sorted{subj.id, {}, {}};
    for (int k : order) {
      sorted.times.push_back(subj.times[k]);
      sorted.points.push_back(std::move(subj.points[k]));
    }
    for (size_t j = 1; j < sorted.times.size(); ++j) {
      if (sorted.times[j] == sorted.times[j - 1]) {
        ++n_dups;
        if (n_dups <= 5) {
          dups += "\n  subject " + subj.id + " at t=" + format_double(sorted.times[j]);
        }
      }
    }
    subj = std::move(sorted);
  }
  if (n_dups > 0) {
    throw InvalidInputError("ingest", std::to_string(n_dups) +
                                          " duplicate (subject, time) row(s)" + dups);
  }
  return data;
}

void write_dataset_csv(const std::filesystem::path& path,
                       const LongitudinalDataset& data) {
  auto out = open_out(path);
  out << "subject_id,time";
  for (int c = 1; c <= data.kind.ambient_dim; ++c) out << ",c" << c;
  out << "\n";
  for (const auto& subj : data.subjects) {
    for (int j = 0; j < subj.m(); ++j) {
      out << subj.id << ',' << format_double(subj.times[j]);
      for (int c = 0; c < data.kind.ambient_dim; ++c) {
        out << ',' << format_double(subj.points[j][c]);
      }
      out << "\n";
    }
  }
}

void emit_fit(const std::filesystem::path& dir, const FitResult& result,
              const LongitudinalDataset& data, const Manifold& manifold,
              const FitConfig& config) {
  std::filesystem::create_directories(dir);
  const int dim = manifold.ambient_dim();
  const Eigen::VectorXd& grid = result.mean.grid;

  json meta;
  meta["schema"] = "rpace-fit/1";
  meta["version"] = kVersion;
  meta["manifold"]["family"] = family_name(manifold.kind().family);
  meta["manifold"]["ambient_dim"] = dim;
  if (manifold.kind().family == ManifoldFamily::Rotation) {
    meta["manifold"]["metric_scale"] = static_cast<const So3&>(manifold).metric_scale();
  }
  meta["scheme"] = weight_scheme_name(config.scheme);
  meta["h_mu"] = result.h_mu;
  meta["h_gamma"] = result.h_gamma;
  meta["K"] = result.K;
  if (config.truncation.explicit_k) {
    meta["explicit_k"] = *config.truncation.explicit_k;
  } else {
    meta["fve_threshold"] = config.truncation.fve_threshold;
  }
  meta["sigma2"] = result.model.sigma2;
  meta["sigma2_floored"] = result.model.sigma2_floored;
  meta["tangent_projection"] = config.tangent_projection;
  meta["n_subjects"] = data.n();
  meta["n_components"] = result.model.n_components();
  meta["grid"] = std::vector<double>(grid.begin(), grid.end());
  meta["lambda"] =
      std::vector<double>(result.model.eigenvalues.begin(), result.model.eigenvalues.end());
  const Eigen::VectorXd fve = cumulative_fve(result.model.eigenvalues);
  meta["fve"] = std::vector<double>(fve.begin(), fve.end());
  int clamped_total = 0;
  for (const auto& c : result.clamped) clamped_total += static_cast<int>(c.size());
  meta["clamped_nodes"] = clamped_total;
  if (!result.gcv_candidates.empty()) {
    meta["gcv"]["candidates"] = result.gcv_candidates;
    meta["gcv"]["scores"] = result.gcv_scores;
  }
  open_out(dir / "metadata.json") << meta.dump(2) << "\n";

  {
    auto out = open_out(dir / "mean.csv");
    out << "t";
    for (int c = 1; c <= dim; ++c) out << ",c" << c;
    out << "\n";
    for (int a = 0; a < grid.size(); ++a) {
      out << format_double(grid[a]);
      for (int c = 0; c < dim; ++c) out << ',' << format_double(result.mean.points[a][c]);
      out << "\n";
    }
  }
  {
    auto out = open_out(dir / "eigenfunctions.csv");
    out << "k,t";
    for (int c = 1; c <= dim; ++c) out << ",c" << c;
    out << "\n";
    for (int k = 0; k < result.model.n_components(); ++k) {
      for (int a = 0; a < grid.size(); ++a) {
        out << (k + 1) << ',' << format_double(grid[a]);
        for (int c = 0; c < dim; ++c) {
          out << ',' << format_double(result.model.eigenfunctions[k](a, c));
        }
        out << "\n";
      }
    }
  }
  {
    auto out = open_out(dir / "covariance_diag.csv");
    out << "t";
    for (int r = 1; r <= dim; ++r) {
      for (int c = 1; c <= dim; ++c) out << ",g" << r << "_" << c;
    }
    out << "\n";
    for (int a = 0; a < grid.size(); ++a) {
      out << format_double(grid[a]);
      const Eigen::MatrixXd& block = result.model.surface.at(a, a);
      for (int r = 0; r < dim; ++r) {
        for (int c = 0; c < dim; ++c) out << ',' << format_double(block(r, c));
      }
      out << "\n";
    }
  }
  {
    auto out = open_out(dir / "lambda.csv");
    out << "k,lambda,fve\n";
    for (int k = 0; k < result.model.n_components(); ++k) {
      out << (k + 1) << ',' << format_double(result.model.eigenvalues[k]) << ','
          << format_double(fve[k]) << "\n";
    }
  }
  {
    auto out = open_out(dir / "scores.csv");
    out << "subject_id";
    for (int k = 1; k <= result.K; ++k) out << ",xi" << k;
    out << "\n";
    for (int i = 0; i < data.n(); ++i) {
      out << data.subjects[i].id;
      for (int k = 0; k < result.K; ++k) out << ',' << format_double(result.scores(i, k));
      out << "\n";
    }
  }
  std::vector<std::string> ids;
  ids.reserve(data.n());
  for (const auto& subj : data.subjects) ids.push_back(subj.id);
  write_trajectories(dir / "trajectories.csv", ids, result.paths, grid, result.clamped);
}

void reconstruct_from_emitted(const std::filesystem::path& model_dir,
                              const std::filesystem::path& out_path) {
  json meta = json::parse(open_in(model_dir / "metadata.json"));
  ManifoldKind kind;
  kind.family = family_from_name(meta["manifold"]["family"].get<std::string>());
  kind.ambient_dim = meta["manifold"]["ambient_dim"].get<int>();
  const double scale = meta["manifold"].value("metric_scale", 1.0);
  const auto manifold = make_manifold(kind, scale);
  const int dim = kind.ambient_dim;
  const int K = meta["K"].get<int>();
  const bool tangent_projection = meta["tangent_projection"].get<bool>();

  const std::vector<double> grid_values = meta["grid"].get<std::vector<double>>();
  const int g = static_cast<int>(grid_values.size());
  Eigen::VectorXd grid =
      Eigen::Map<const Eigen::VectorXd>(grid_values.data(), grid_values.size());

  MeanCurve curve;
  curve.grid = grid;
  curve.bandwidth = meta["h_mu"].get<double>();
  {
    auto in = open_in(model_dir / "mean.csv");
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      const auto fields = split_csv(trim_cr(line));
      if (fields.size() != static_cast<size_t>(dim) + 1) {
        throw IoError("reconstruct", "malformed mean.csv row");
      }
      Eigen::VectorXd p(dim);
      for (int c = 0; c < dim; ++c) p[c] = parse_double(fields[c + 1], "mean.csv");
      curve.points.push_back(std::move(p));
    }
    if (static_cast<int>(curve.points.size()) != g) {
      throw IoError("reconstruct", "mean.csv does not match the metadata grid");
    }
  }

  CovarianceModel model;
  model.grid = grid;
  model.quad_weights = trapezoid_weights(grid);
  model.surface = CovarianceSurface(grid, dim);
  model.sigma2 = meta["sigma2"].get<double>();
  const std::vector<double> lambda = meta["lambda"].get<std::vector<double>>();
  model.eigenvalues = Eigen::Map<const Eigen::VectorXd>(lambda.data(), lambda.size());
  model.eigenfunctions.assign(lambda.size(), Eigen::MatrixXd::Zero(g, dim));
  {
    auto in = open_in(model_dir / "eigenfunctions.csv");
    std::string line;
    std::getline(in, line);
    int row = 0;
    while (std::getline(in, line)) {
      const auto fields = split_csv(trim_cr(line));
      if (fields.size() != static_cast<size_t>(dim) + 2) {
        throw IoError("reconstruct", "malformed eigenfunctions.csv row");
      }
      const int k = static_cast<int>(parse_double(fields[0], "eigenfunctions.csv"));
      const int a = row % g;
      if (k < 1 || k > static_cast<int>(lambda.size())) {
        throw IoError("reconstruct", "eigenfunction index out of range");
      }
      for (int c = 0; c < dim; ++c) {
        model.eigenfunctions[k - 1](a, c) = parse_double(fields[c + 2], "eigenfunctions.csv");
      }
      ++row;
    }
    if (row != g * static_cast<int>(lambda.size())) {
      throw IoError("reconstruct", "eigenfunctions.csv row count mismatch");
    }
  }

  std::vector<std::string> ids;
  Eigen::MatrixXd scores;
  {
    auto in = open_in(model_dir / "scores.csv");
    std::string line;
    std::getline(in, line);
    std::vector<Eigen::VectorXd> rows;
    while (std::getline(in, line)) {
      const auto fields = split_csv(trim_cr(line));
      if (fields.size() != static_cast<size_t>(K) + 1) {
        throw IoError("reconstruct", "malformed scores.csv row");
      }
      ids.push_back(fields[0]);
      Eigen::VectorXd xi(K);
      for (int k = 0; k < K; ++k) xi[k] = parse_double(fields[k + 1], "scores.csv");
      rows.push_back(std::move(xi));
    }
    scores.resize(rows.size(), K);
    for (size_t i = 0; i < rows.size(); ++i) scores.row(i) = rows[i].transpose();
  }

  std::vector<Eigen::MatrixXd> paths(ids.size());
  std::vector<std::vector<int>> clamped(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) {
    auto [log_path, path] = reconstruct(*manifold, model, curve, scores.row(i).transpose(),
                                        K, tangent_projection, &clamped[i]);
    paths[i] = std::move(path);
  }
  write_trajectories(out_path, ids, paths, grid, clamped);
}

void write_study(const std::filesystem::path& dir, const StudyResult& result) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "study.csv");
    out << "method,manifold,scenario,K,rmise,mc_se,n_fail\n";
    for (const auto& row : result.rows) {
      out << row.method << ',' << row.manifold << ',' << row.scenario << ',' << row.K
          << ',' << format_double(row.rmise) << ',' << format_double(row.mc_se) << ','
          << row.n_fail << "\n";
    }
  }
  json meta;
  meta["schema"] = "rpace-study/1";
  meta["version"] = kVersion;
  meta["seed"] = result.config.seed;
  meta["manifold"] = family_name(result.config.manifold);
  meta["n"] = result.config.n;
  meta["m_max"] = result.config.m_max;
  meta["lambda_base"] = result.config.lambda_base;
  meta["lambda_exponent_scale"] = result.config.lambda_exponent_scale;
  meta["sigma2"] = result.config.sigma2;
  meta["n_components"] = result.config.n_components;
  meta["replicates"] = result.config.replicates;
  meta["grid_size"] = result.config.grid_size;
  meta["so3_metric_scale"] = result.config.so3_metric_scale;
  meta["k_max"] = result.options.k_max;
  meta["scenario"] = result.options.scenario_label;
  open_out(dir / "study_meta.json") << meta.dump(2) << "\n";
}

}  // namespace rpace
