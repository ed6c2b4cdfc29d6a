#pragma once

// Long-format dyad table and the fixed/random design matrices of the two-part
// model.

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "netmix/graphmetrics.hpp"
#include "netmix/netdata.hpp"

namespace netmix {

/// atanh(r); throws std::domain_error when |r| >= 1.
double fisher_z(double r);
double inv_fisher_z(double z);

enum class Covariate : int { C, Eglob, k, Q, l, coi, sex, educ, dist, dist2 };
inline constexpr int kNumCovariates = 10;
inline constexpr std::array<Covariate, 5> kNetCovariates{Covariate::C, Covariate::Eglob, Covariate::k,
                                                         Covariate::Q, Covariate::l};

std::string_view covariate_name(Covariate c);
std::optional<Covariate> covariate_from_name(std::string_view name);
/// Continuous covariates are centered; coi and sex are binary and left alone.
bool is_continuous(Covariate c);

using CovariateVector = std::array<double, kNumCovariates>;

struct DyadRow {
  int subject = 0;
  int node_j = 0, node_k = 0;  // node_j < node_k
  bool present = false;
  std::optional<double> strength;  // Fisher-Z of the weight, present rows only
  CovariateVector covariates{};
};

struct CenteringRecord {
  CovariateVector mean{};  // subtracted value; 0 for binary covariates
  CovariateVector min{}, max{};  // observed raw range
  std::size_t leverage_fallbacks = 0;  // dyads whose l had to be imputed

  /// Centered value of a raw covariate (dist^2 takes the raw distance).
  double center(Covariate c, double raw) const;
};

struct DyadTable {
  int n_nodes = 0;
  std::vector<SubjectCovariates> subjects;  // index = subject
  std::vector<int> subject, node_j, node_k;
  std::vector<std::uint8_t> present;
  std::vector<double> weight;
  std::vector<double> strength;  // NaN where absent
  Eigen::MatrixXd covariates;  // rows x kNumCovariates; l may be NaN before centering
  std::optional<CenteringRecord> centering;

  std::size_t size() const { return subject.size(); }
  DyadRow row(std::size_t i) const;
  /// Rows of subject s: [begin, end).
  std::pair<std::size_t, std::size_t> subject_range(int s) const;
};

/// One row per (subject, j<k). Nodal metrics are averaged over the dyad,
/// degree enters as |k_j - k_k|, and Q is the subject's whole-network value.
DyadTable build_dyad_table(const std::vector<SubjectNetwork>& networks, const std::vector<MetricSuite>& metrics,
                           const std::vector<SubjectCovariates>& covariates, const DistanceMatrix& dist);

/// Subtracts grand means from continuous covariates. dist^2 is recomputed from
/// the centered distance and then centered itself. Missing leverage becomes 0.
DyadTable center_covariates(DyadTable table);

enum class FixedTerm : int {
  intercept, C, Eglob, k, Q, l, coi, sex, educ, dist, dist2,
  coi_C, coi_Eglob, coi_k, coi_Q, coi_l, coi_sex
};
enum class RandomTerm : int { intercept, C, Eglob, k, Q, l, dist, dist2, nodes };
enum class NodeVariance { separate, shared };
enum class Response { presence, strength };

std::string_view fixed_term_key(FixedTerm t);   // "coi:C"
std::string_view random_term_key(RandomTerm t);  // "dist^2"
std::optional<FixedTerm> fixed_term_from_key(std::string_view key);
std::optional<RandomTerm> random_term_from_key(std::string_view key);
/// Interaction terms pair the covariate of interest with this covariate.
std::optional<Covariate> interaction_partner(FixedTerm t);

struct ModelSpec {
  std::vector<FixedTerm> fixed;
  std::vector<RandomTerm> random;
  NodeVariance node_variance = NodeVariance::separate;
  std::vector<int> dropped_nodes;  // nodal effects removed after a boundary fit
  std::string coi_label = "age";
  std::string grouping = "subject_id";
  Response response = Response::presence;

  /// Every term family: q = 1 + 5 + 2 + n_nodes.
  static ModelSpec full();
  void validate() const;
  bool has_random(RandomTerm t) const;
};

ModelSpec load_model_spec(const std::filesystem::path& path);
ModelSpec parse_model_spec(std::string_view json_text);
std::string model_spec_json(const ModelSpec& spec);

struct DesignMatrices {
  Eigen::MatrixXd X;
  std::vector<std::string> fixed_names;  // term keys, plus any appended columns
  Eigen::MatrixXd Z;  // per-subject random design, stacked
  std::vector<std::string> random_names;
  std::vector<int> component_of_column;
  std::vector<std::string> component_names;
  Eigen::VectorXd y;
  std::vector<std::size_t> group_offsets;  // n_groups + 1 entries
  std::vector<std::string> group_ids;
  std::vector<std::size_t> source_rows;  // index into the dyad table
  CenteringRecord centering;

  std::size_t n_rows() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t n_groups() const { return group_ids.size(); }
  int n_components() const { return static_cast<int>(component_names.size()); }
};

/// Realizes X and Z for the rows selected by spec.response (all rows for
/// presence, R = 1 rows for strength). Requires a centered table.
DesignMatrices build_design(const DyadTable& table, const ModelSpec& spec);

/// Design rows for a single dyad with the given (centered) covariates.
Eigen::VectorXd fixed_design_row(const ModelSpec& spec, const CovariateVector& cov);
Eigen::VectorXd random_design_row(const ModelSpec& spec, const CovariateVector& cov, int node_j, int node_k,
                                  int n_nodes);
/// Component layout shared by build_design and random_design_row.
void random_layout(const ModelSpec& spec, int n_nodes, std::vector<std::string>& column_names,
                   std::vector<int>& component_of_column, std::vector<std::string>& component_names);

/// Writes X/Z headers, the component map and the centering record as CSV.
void dump_design(const std::filesystem::path& dir, const DesignMatrices& design, std::string_view prefix);

}  // namespace netmix
