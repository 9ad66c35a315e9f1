#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rpace/io.hpp"
#include "rpace/pace.hpp"
#include "rpace/simgen.hpp"
#include "rpace/transforms.hpp"
#include "rpace/version.hpp"

namespace {

using namespace rpace;

ManifoldKind parse_manifold(const std::string& spec) {
  if (spec == "so3") return ManifoldKind::rotation3();
  if (spec.size() >= 2 && spec[0] == 's' && std::isdigit(spec[1])) {
    return ManifoldKind::sphere(std::stoi(spec.substr(1)));
  }
  if (spec.size() >= 2 && spec[0] == 'e' && std::isdigit(spec[1])) {
    return ManifoldKind::euclidean(std::stoi(spec.substr(1)));
  }
  if (spec.rfind("sphere:", 0) == 0) return ManifoldKind::sphere(std::stoi(spec.substr(7)));
  if (spec.rfind("euclidean:", 0) == 0) {
    return ManifoldKind::euclidean(std::stoi(spec.substr(10)));
  }
  throw InvalidInputError("config", "cannot parse manifold '" + spec +
                                        "' (expected s<d>, so3, or e<D>)");
}

double parse_so3_metric(const std::string& name) {
  if (name == "frobenius") return 1.0;
  if (name == "angular") return M_SQRT1_2;
  throw InvalidInputError("config", "unknown SO(3) metric '" + name +
                                        "' (frobenius or angular)");
}

int run(int argc, char** argv) {
  CLI::App app{"RPACE: principal component analysis for sparse longitudinal data on "
               "Riemannian manifolds"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // ---- fit ----
  auto* fit_cmd = app.add_subcommand("fit", "fit the model to a longitudinal CSV");
  std::string fit_input, fit_output, fit_manifold = "s2", fit_scheme = "obs";
  std::string fit_so3_metric = "frobenius";
  double fve = 0.95, ingest_tol = 1e-6;
  int ncomp = 0, grid_size = 51, threads = 1;
  double hmu = 0.0, hgamma = 0.0;
  bool project_on_ingest = false, no_tangent_projection = false;
  fit_cmd->add_option("--input", fit_input, "input CSV (subject_id,time,c1..cD)")
      ->required();
  fit_cmd->add_option("--output", fit_output, "output directory")->required();
  fit_cmd->add_option("--manifold", fit_manifold, "s<d>, so3, or e<D>");
  fit_cmd->add_option("--so3-metric", fit_so3_metric, "frobenius (default) or angular");
  fit_cmd->add_option("--scheme", fit_scheme, "obs, subj, or intm");
  auto* fve_opt = fit_cmd->add_option("--fve", fve, "FVE threshold for K (default 0.95)");
  auto* k_opt = fit_cmd->add_option("--ncomp", ncomp, "explicit number of components");
  fve_opt->excludes(k_opt);
  k_opt->excludes(fve_opt);
  fit_cmd->add_option("--hmu", hmu, "mean bandwidth (default: GCV)");
  fit_cmd->add_option("--hgamma", hgamma, "covariance bandwidth (default: 2 h_mu)");
  fit_cmd->add_option("--grid-size", grid_size, "working grid size (default 51)");
  fit_cmd->add_flag("--project-on-ingest", project_on_ingest,
                    "project near-manifold rows instead of rejecting");
  fit_cmd->add_option("--ingest-tol", ingest_tol,
                      "max distance to the manifold when projecting (default 1e-6)");
  fit_cmd->add_flag("--no-tangent-projection", no_tangent_projection,
                    "keep eigenfunctions and reconstructions unprojected");
  fit_cmd->add_option("--threads", threads, "worker threads (default 1)");

  // ---- simulate ----
  auto* sim_cmd = app.add_subcommand("simulate", "run the Monte Carlo study");
  std::string sim_manifold = "s2", sim_output, sim_so3_metric = "angular";
  int scenario = 1, replicates = 50, kmax = 6, sim_n = 0, sim_mmax = 0, sim_grid = 51;
  std::uint64_t seed = 1;
  double sigma2 = 0.01, lambda_base = 0.05;
  bool emit_data = false, no_oracle = false, no_extrinsic = false;
  int sim_threads = 1;
  sim_cmd->add_option("--manifold", sim_manifold, "s2 or so3");
  sim_cmd->add_option("--scenario", scenario, "preset 1 (baseline), 2 (sparse), 3 (small n)");
  sim_cmd->add_option("--n", sim_n, "override subject count");
  sim_cmd->add_option("--mmax", sim_mmax, "override max observations per subject");
  sim_cmd->add_option("--replicates", replicates, "Monte Carlo replicates (default 50)");
  sim_cmd->add_option("--kmax", kmax, "largest truncation level (default 6)");
  sim_cmd->add_option("--seed", seed, "master seed");
  sim_cmd->add_option("--sigma2", sigma2, "noise variance per tangent direction");
  sim_cmd->add_option("--lambda-base", lambda_base, "eigenvalue decay base");
  sim_cmd->add_option("--grid-size", sim_grid, "evaluation grid size");
  sim_cmd->add_option("--so3-metric", sim_so3_metric,
                      "angular (default) or frobenius convention for SO(3)");
  sim_cmd->add_option("--output", sim_output, "output directory")->required();
  sim_cmd->add_flag("--emit-data", emit_data,
                    "write one generated dataset instead of running the study");
  sim_cmd->add_flag("--no-oracle", no_oracle, "skip the truncation-floor rows");
  sim_cmd->add_flag("--no-extrinsic", no_extrinsic, "skip the extrinsic baseline rows");
  sim_cmd->add_option("--threads", sim_threads, "worker threads (default 1)");

  // ---- transform ----
  auto* tr_cmd = app.add_subcommand("transform", "map raw rows onto the sphere");
  std::string tr_kind, tr_input, tr_output;
  tr_cmd->add_option("--kind", tr_kind, "compositional or preshape")->required();
  tr_cmd->add_option("--input", tr_input, "input CSV (subject_id,time,y1..yD)")
      ->required();
  tr_cmd->add_option("--output", tr_output, "output CSV")->required();

  // ---- reconstruct ----
  auto* rec_cmd = app.add_subcommand("reconstruct",
                                     "recompute trajectories from an emitted fit");
  std::string rec_model, rec_output;
  rec_cmd->add_option("--model", rec_model, "emitted fit directory")->required();
  rec_cmd->add_option("--output", rec_output, "output trajectories CSV")->required();

  CLI11_PARSE(app, argc, argv);

  if (*fit_cmd) {
    const ManifoldKind kind = parse_manifold(fit_manifold);
    const auto manifold = make_manifold(kind, parse_so3_metric(fit_so3_metric));
    IngestOptions ingest;
    ingest.project_on_ingest = project_on_ingest;
    ingest.tolerance = ingest_tol;
    const LongitudinalDataset data = ingest_csv(fit_input, kind, *manifold, ingest);
    FitConfig config;
    config.scheme = weight_scheme_from_name(fit_scheme);
    if (k_opt->count() > 0) {
      config.truncation.explicit_k = ncomp;
    } else {
      config.truncation.fve_threshold = fve;
    }
    if (hmu > 0.0) config.h_mu = hmu;
    if (hgamma > 0.0) config.h_gamma = hgamma;
    config.grid_size = grid_size;
    config.tangent_projection = !no_tangent_projection;
    config.threads = threads;
    const FitResult result = fit(*manifold, data, config);
    emit_fit(fit_output, result, data, *manifold, config);
    std::cout << "fit: n=" << data.n() << " K=" << result.K << " h_mu=" << result.h_mu
              << " h_gamma=" << result.h_gamma << " sigma2=" << result.model.sigma2
              << " -> " << fit_output << "\n";
    return 0;
  }

  if (*sim_cmd) {
    if (sim_manifold != "s2" && sim_manifold != "so3") {
      throw InvalidInputError("config", "simulate supports s2 and so3");
    }
    const ManifoldFamily family =
        sim_manifold == "s2" ? ManifoldFamily::Sphere : ManifoldFamily::Rotation;
    ScenarioConfig config = ScenarioConfig::preset(family, scenario);
    if (sim_n > 0) config.n = sim_n;
    if (sim_mmax > 0) config.m_max = sim_mmax;
    config.replicates = replicates;
    config.seed = seed;
    config.sigma2 = sigma2;
    config.lambda_base = lambda_base;
    config.grid_size = sim_grid;
    config.so3_metric_scale = parse_so3_metric(sim_so3_metric);

    std::filesystem::create_directories(sim_output);
    if (emit_data) {
      const SimData sim = generate(config, make_grid(0.0, 1.0, config.grid_size));
      write_dataset_csv(std::filesystem::path(sim_output) / "dataset.csv", sim.data);
      std::ofstream scores(std::filesystem::path(sim_output) / "true_scores.csv");
      scores << "subject_id";
      for (int k = 1; k <= config.n_components; ++k) scores << ",xi" << k;
      scores << "\n";
      for (int i = 0; i < sim.data.n(); ++i) {
        scores << sim.data.subjects[i].id;
        for (int k = 0; k < config.n_components; ++k) {
          scores << ',' << format_double(sim.true_scores(i, k));
        }
        scores << "\n";
      }
      std::cout << "simulate: wrote dataset with n=" << sim.data.n() << " to "
                << sim_output << "\n";
      return 0;
    }

    StudyOptions options;
    options.k_max = kmax;
    options.include_oracle = !no_oracle;
    options.include_extrinsic = !no_extrinsic;
    options.scenario_label = scenario;
    options.threads = sim_threads;
    const StudyResult result = run_study(config, options);
    write_study(sim_output, result);
    std::cout << "simulate: " << result.rows.size() << " table rows -> " << sim_output
              << "\n";
    return 0;
  }

  if (*tr_cmd) {
    std::ifstream in(tr_input);
    if (!in) throw IoError("transform", "cannot open " + tr_input);
    std::ofstream out(tr_output, std::ios::binary);
    if (!out) throw IoError("transform", "cannot open " + tr_output + " for writing");
    std::string line;
    if (!std::getline(in, line)) throw IoError("transform", tr_input + " is empty");
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    std::stringstream header(line);
    std::string field;
    int n_fields = 0;
    while (std::getline(header, field, ',')) ++n_fields;
    if (n_fields < 3) throw IoError("transform", "expected subject_id,time,y1..yD");
    const int dim = n_fields - 2;
    out << "subject_id,time";
    for (int c = 1; c <= dim; ++c) out << ",c" << c;
    out << "\n";
    long line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
      if (line.empty()) continue;
      std::stringstream row(line);
      std::vector<std::string> fields;
      while (std::getline(row, field, ',')) fields.push_back(field);
      if (static_cast<int>(fields.size()) != n_fields) {
        throw IoError("transform", "row with " + std::to_string(fields.size()) +
                                       " fields at line " + std::to_string(line_no));
      }
      Eigen::VectorXd y(dim);
      for (int c = 0; c < dim; ++c) {
        try {
          size_t used = 0;
          y[c] = std::stod(fields[c + 2], &used);
          if (used != fields[c + 2].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
          throw IoError("transform", "cannot parse '" + fields[c + 2] + "' at line " +
                                         std::to_string(line_no));
        }
      }
      Eigen::VectorXd x;
      try {
        x = tr_kind == "compositional" ? transform_compositional(y)
            : tr_kind == "preshape"
                ? transform_preshape(y)
                : throw InvalidInputError("transform", "unknown kind '" + tr_kind + "'");
      } catch (const InvalidInputError& err) {
        throw InvalidInputError("transform", std::string(err.what()) + " at line " +
                                                 std::to_string(line_no));
      }
      out << fields[0] << ',' << fields[1];
      for (int c = 0; c < dim; ++c) out << ',' << format_double(x[c]);
      out << "\n";
    }
    std::cout << "transform: wrote " << tr_output << "\n";
    return 0;
  }

  if (*rec_cmd) {
    reconstruct_from_emitted(rec_model, rec_output);
    std::cout << "reconstruct: wrote " << rec_output << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& err) {
    std::cerr << "error " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
}
