#pragma once

// Wald F tests, the parameter report, group-comparison classification and
// dyad-indicator thresholding.

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "netmix/mixedfit.hpp"
#include "netmix/netdata.hpp"

namespace netmix {

// --- Wald tests ---------------------------------------------------------------

struct TestResult {
  double estimate = 0.0;  // C beta for one-row contrasts, otherwise 0
  double se = 0.0;
  double f = 0.0;
  double df1 = 0.0, df2 = 0.0;  // df2 is the residual df N - p
  double p = 1.0;
};

/// F = (C b)' [C cov(b) C']^-1 (C b) / rank(C) against F(rank(C), N - p).
/// Contrast rows that are linear combinations of earlier rows are an error.
TestResult wald_f_test(const LmmFit& fit, const Eigen::MatrixXd& contrast);
/// Single-coefficient test.
TestResult wald_f_test(const LmmFit& fit, std::size_t coefficient);

// --- report -------------------------------------------------------------------

struct ReportRow {
  Response part = Response::presence;
  std::string key;  // fixed-term key, e.g. "coi:C"
  std::string name;  // display name, e.g. "β_r,age×C"
  double estimate = 0.0, se = 0.0, p = 1.0;  // p is NaN when the SE is 0
  std::string interpretation;
};

enum class GroupDifference { not_applicable, none, topological_only, overall_only, overall_and_topological };

std::string_view group_difference_label(GroupDifference g);

struct ComparisonReport {
  std::string coi_label;
  std::vector<ReportRow> rows;  // presence rows, then strength rows, in spec order
  std::vector<std::string> notes;
};

ComparisonReport explain_report(const TwoPartFit& fit);

/// Significance pattern of (coi, coi x sex, coi x metrics) for one part.
/// A significant coi x sex term counts as an overall difference.
GroupDifference classify_group_difference(const ComparisonReport& report, Response part, double alpha = 0.05);

/// "β_r,0", "β_s,age×Eglob", ...
std::string parameter_display_name(Response part, std::string_view key, std::string_view coi_label);

/// Estimates, SEs and p-values to four decimals; p below 1e-4 prints as "< 0.0001".
std::string format_p_value(double p);
/// Parameter,Estimate,SE,P-value
std::string format_report_csv(const ComparisonReport& report);
/// Interpretations, notes and the per-part classification as plain text.
std::string format_report_text(const ComparisonReport& report, double alpha);

// --- thresholding -------------------------------------------------------------

enum class Correction { fdr, bonferroni };
std::optional<Correction> correction_from_name(std::string_view name);

/// Benjamini-Hochberg step-up or Bonferroni adjusted p-values, in input order.
std::vector<double> adjust_p_values(std::span<const double> p, Correction correction);

struct ThresholdOptions {
  bool per_group = false;  // one indicator per dyad and coi level
  Correction correction = Correction::fdr;
  double alpha = 0.05;
  std::size_t batch_size = 50;  // indicator columns per refit
  RemlOptions reml;
};

struct DyadTest {
  int j = 0, k = 0;  // 0-based nodes, j < k
  std::optional<int> group;  // set when testing within one coi level
  std::size_t n_obs = 0;  // strength rows carrying the indicator
  bool testable = false;
  double estimate = 0.0, se = 0.0, p = 1.0, p_adjusted = 1.0;
  bool removal_candidate = false;
};

struct ThresholdReport {
  Correction correction = Correction::fdr;
  double alpha = 0.05;
  std::vector<DyadTest> rows;
};

/// Adds indicator columns for the requested dyads to the strength model,
/// refits in batches and tests each indicator. Dyads without strength rows
/// are reported as untestable.
ThresholdReport dyad_threshold_test(const DyadTable& centered, const ModelSpec& strength_spec,
                                    std::span<const std::pair<int, int>> dyads, const ThresholdOptions& opts = {});

std::string format_threshold_csv(const ThresholdReport& report);

/// Copies of the networks with removal-candidate dyads zeroed, but only in
/// subjects whose weight there is below `weak_cutoff` (and, for per-group
/// rows, only in subjects of that group). Returns the removal count.
std::size_t mask_weak_connections(std::vector<SubjectNetwork>& networks, const std::vector<SubjectCovariates>& subjects,
                                  const ThresholdReport& report, double weak_cutoff);

}  // namespace netmix
