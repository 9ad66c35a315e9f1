#pragma once

#include <filesystem>
#include <string>

#include "rpace/pace.hpp"
#include "rpace/simgen.hpp"

namespace rpace {

struct IngestOptions {
  bool project_on_ingest = false;
  double tolerance = 1e-6;  // max ambient distance to the manifold when projecting
};

// Reads `subject_id,time,c1..cD` rows, groups by subject in first-appearance
// order, and sorts times within subject. Duplicate (subject, time) rows and
// invariant violations are rejected with row identification.
LongitudinalDataset ingest_csv(const std::filesystem::path& path,
                               const ManifoldKind& kind, const Manifold& manifold,
                               const IngestOptions& options = {});

// Writes the raw observations in the ingest schema.
void write_dataset_csv(const std::filesystem::path& path,
                       const LongitudinalDataset& data);

// Emits a fit as delimited tables plus one metadata document:
//   metadata.json, mean.csv, eigenfunctions.csv, covariance_diag.csv,
//   lambda.csv, scores.csv, trajectories.csv
// Numbers are written with round-trip precision; identical fits produce
// byte-identical files.
void emit_fit(const std::filesystem::path& dir, const FitResult& result,
              const LongitudinalDataset& data, const Manifold& manifold,
              const FitConfig& config);

// Recomputes trajectories.csv from an emitted model directory (metadata,
// mean, eigenfunctions, scores); byte-identical to the fit's own table.
void reconstruct_from_emitted(const std::filesystem::path& model_dir,
                              const std::filesystem::path& out_path);

void write_study(const std::filesystem::path& dir, const StudyResult& result);

// Round-trip exact formatting used by every table writer.
std::string format_double(double value);

}  // namespace rpace
