#pragma once

// Prediction bands, two-part network simulation and goodness-of-fit tables.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "netmix/graphmetrics.hpp"
#include "netmix/mixedfit.hpp"

namespace netmix {

// --- prediction ---------------------------------------------------------------

enum class Scale { probability, strength };

struct PredictionPoint {
  double grid = 0.0;  // raw (uncentered) covariate value
  int group = 0;
  double point = 0.0, lower = 0.0, upper = 0.0;
};

struct PredictionCurve {
  Scale scale = Scale::probability;
  Covariate vary = Covariate::k;
  std::vector<PredictionPoint> points;
  std::vector<std::string> warnings;
};

struct PredictOptions {
  double level = 0.95;
  /// Concrete dyad for the nodal random effects; otherwise each endpoint
  /// contributes the average nodal variance.
  std::optional<std::pair<int, int>> dyad;
};

/// Grid values are on the raw covariate scale. Every other continuous
/// covariate sits at its centered mean (0) and binary confounders at 0.
PredictionCurve predict_curve(const TwoPartFit& fit, Scale scale, Covariate vary, std::span<const double> grid,
                              std::span<const int> group_levels, const PredictOptions& opts = {});

void write_prediction_csv(const std::filesystem::path& path, const PredictionCurve& curve);
/// Static line plot of point predictions and bands, one color per group.
void write_prediction_svg(const std::filesystem::path& path, const PredictionCurve& curve);

// --- simulation ---------------------------------------------------------------

/// Centered covariates of one network's dyads, in dyad-table order.
struct CovariateRows {
  std::string label;
  Eigen::MatrixXd cov;  // n_dyads x kNumCovariates
  std::optional<std::size_t> subject;  // index into the fit's BLUP rows
};

std::vector<CovariateRows> subject_covariate_rows(const DyadTable& centered);
/// Dyad-wise mean covariates over the subjects at one level of the
/// covariate of interest (a group-representative network).
CovariateRows group_mean_rows(const DyadTable& centered, int group_level);

struct SimulationOptions {
  bool use_blups = false;  // reuse the fitted subject effects instead of drawing new ones
  bool compute_metrics = true;
  MetricOptions metrics;
};

struct SimulatedEnsemble {
  std::uint64_t seed = 0;
  bool use_blups = false;
  std::vector<std::string> source_labels;  // per network
  std::vector<SubjectNetwork> networks;
  std::vector<NetworkMetrics> metrics;  // empty unless computed
  std::size_t rejection_fallbacks = 0;
};

/// Network m uses sources[m % sources.size()] and an RNG stream derived from
/// (seed, m), so results do not depend on the worker count.
SimulatedEnsemble simulate_networks(const TwoPartFit& fit, std::span<const CovariateRows> sources, std::size_t n_sims,
                                    std::uint64_t seed, const SimulationOptions& opts = {});

/// networks/<name>.csv, manifest.csv and (when computed) network_metrics.csv.
void write_ensemble(const std::filesystem::path& dir, const SimulatedEnsemble& ensemble);

/// Seed of the RNG stream for item `index` of a run seeded with `seed`.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index);

// --- goodness of fit ----------------------------------------------------------

struct MeanSe {
  double mean = 0.0, se = 0.0;
};

struct GofRow {
  std::string condition;
  std::string metric;
  MeanSe observed, simulated;
};

struct GofTable {
  std::size_t n_observed = 0, n_simulated = 0;
  std::vector<GofRow> rows;
};

/// Metric labels in table order: C, E_glob, L, K, l, Q.
const std::vector<std::string>& gof_metric_labels();
std::vector<double> gof_metric_values(const NetworkMetrics& m);
MeanSe mean_se(std::span<const double> values);

GofTable gof_compare(std::span<const NetworkMetrics> observed, std::span<const NetworkMetrics> simulated,
                     const std::string& condition = "All");
std::vector<NetworkMetrics> observed_metrics(std::span<const SubjectNetwork> networks, const MetricOptions& opts = {});
std::string format_gof_table(const GofTable& table);

}  // namespace netmix
