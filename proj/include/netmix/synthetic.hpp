#pragma once

// Synthetic studies with known two-part parameters. Dyad covariates come from
// per-subject template networks; the observed networks are simulated from the
// model given those covariates, so the generating design is known exactly.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "netmix/mixedfit.hpp"
#include "netmix/netdata.hpp"

namespace netmix {

struct SyntheticTruth {
  ModelSpec spec = ModelSpec::full();
  std::map<std::string, double> beta_r, beta_s;  // keyed by fixed-term key
  std::map<std::string, double> tau_r, tau_s;  // keyed by random-term key; "node" applies to every node
  double sigma2 = 0.01;

  Eigen::VectorXd beta(Response part) const;  // in spec.fixed order
  void validate() const;
};

SyntheticTruth default_truth();
SyntheticTruth parse_truth(std::string_view json_text);
SyntheticTruth load_truth(const std::filesystem::path& path);
std::string truth_json(const SyntheticTruth& truth);

struct SyntheticStudy {
  NodeAtlas atlas;
  DistanceMatrix dist;
  std::vector<SubjectCovariates> subjects;
  std::vector<SubjectNetwork> templates;  // covariate sources
  std::vector<SubjectNetwork> networks;  // simulated observations
  DyadTable table;  // centered template covariates with the simulated outcomes
  TwoPartFit truth_fit;  // the truth in fit form (zero estimation error)
};

/// Two-part "fit" holding the truth, laid out for a table with this centering.
TwoPartFit fit_from_truth(const SyntheticTruth& truth, int n_nodes, const CenteringRecord& centering,
                          std::size_t n_subjects);

SyntheticStudy generate_synthetic_study(int n_subjects, int n_nodes, const SyntheticTruth& truth, std::uint64_t seed);

/// networks/, templates/, atlas.csv, subjects.csv, truth.json, spec.json.
void write_synthetic_study(const std::filesystem::path& dir, const SyntheticStudy& study, const SyntheticTruth& truth);

/// Copy of a (centered) covariate table whose presence and strength columns
/// are replaced by the weights of `networks`, matched by position.
DyadTable dyad_table_with_outcomes(const DyadTable& covariate_table, const std::vector<SubjectNetwork>& networks);

}  // namespace netmix
