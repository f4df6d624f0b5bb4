#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ozcal/dataset.hpp"
#include "ozcal/inference.hpp"
#include "ozcal/predict.hpp"
#include "ozcal/rfm.hpp"
#include "ozcal/scoring.hpp"

namespace ozcal::io {

/// Shortest representation that parses back to the identical double.
std::string format_double(double v);

/// Runs writer against a temporary file in the target directory, then
/// renames over path; a failed write never leaves a partial file behind.
void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer);

// --- Core data files -------------------------------------------------------

// Sensitivity CSV: day,cell_id,x_km,y_km,c0,s1_1..s1_d,s2_11..s2_dd,
// s2_12,... (upper-triangle cross terms); one row per (day, cell), complete
// coverage required, d inferred from the header.
void save_sensitivity(const std::filesystem::path& path,
                      const rfm::SensitivityField& field);
rfm::SensitivityField load_sensitivity(const std::filesystem::path& path);

// Monitor CSV: day,site_id,x_km,y_km,cell_id,o3_ppb.
void save_monitors(const std::filesystem::path& path,
                   const MonitorDataset& data);
MonitorDataset load_monitors(const std::filesystem::path& path);

// --- Fit artifacts ----------------------------------------------------------

struct FitManifest {
  int n_inputs = 0;
  int n_sites = 0;
  inference::ModelSettings settings;
  int iterations = 0;
  int burn_in = 0;
  std::uint64_t seed = 1;
  double train_fraction = 1.0;
};

void save_manifest(const std::filesystem::path& path, const FitManifest& m);
FitManifest load_manifest(const std::filesystem::path& path);

void save_sites(const std::filesystem::path& path,
                const std::vector<MonitorSite>& sites);
std::vector<MonitorSite> load_sites(const std::filesystem::path& path);

/// Posterior draws: header row of layout column names, one row per draw.
void save_posterior(const std::filesystem::path& path,
                    const std::vector<std::string>& names,
                    const std::vector<double>& rows, std::size_t n_rows);

/// Loads draws and validates the header against the layout exactly.
inference::PosteriorDraws load_posterior(const std::filesystem::path& path,
                                         const inference::ParameterLayout& layout);

void save_diagnostics(const std::filesystem::path& path,
                      const std::vector<inference::BlockStats>& blocks);

void save_trace(const std::filesystem::path& path,
                const inference::ChainResult& chain, int burn_in);

void save_copula(const std::filesystem::path& path,
                 const inference::CopulaFit& fit);
inference::CopulaFit load_copula(const std::filesystem::path& path);

/// Truth file: layout columns, single row.
void save_state(const std::filesystem::path& path,
                const inference::ParameterLayout& layout,
                const inference::PosteriorState& state);
inference::PosteriorState load_state(const std::filesystem::path& path,
                                     const inference::ParameterLayout& layout);

// --- Prediction and scoring outputs ----------------------------------------

void save_scenario_summary(const std::filesystem::path& path,
                           const predict::ScenarioSummary& summary,
                           const rfm::SensitivityField& field);

/// Pairwise difference a - b per cell.
void save_scenario_diff(const std::filesystem::path& path,
                        const predict::ScenarioSummary& a,
                        const predict::ScenarioSummary& b,
                        const rfm::SensitivityField& field);

/// Raw retained order statistics (one row per replicate x cell).
void save_scenario_draws(const std::filesystem::path& path,
                         const predict::ScenarioSummary& summary);

/// Table layout: one row per metric/level, one column per model label.
void save_scores(const std::filesystem::path& path,
                 const std::vector<scoring::ScoreReport>& reports);

/// Consecutive-day residual pairs with their unit-Frechet transforms.
void save_residual_pairs(const std::filesystem::path& path,
                         const inference::CopulaFit& fit,
                         const std::vector<MonitorSite>& sites);

}  // namespace ozcal::io
