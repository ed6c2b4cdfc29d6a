#pragma once

// Gaussian REML and logistic PQL fits of the per-subject mixed models.
//
// V_i = sigma2 * W_i^{-1} + Z_i diag(tau) Z_i', evaluated through the Woodbury
// identity on per-subject weighted cross-product matrices of [Z | X | y].

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "netmix/dyaddesign.hpp"

namespace netmix {

struct VarianceComponents {
  std::vector<std::string> names;
  Eigen::VectorXd tau;
  double sigma2 = 1.0;
  std::vector<bool> at_bound;
};

struct TraceEntry {
  int iteration = 0;
  double objective = 0.0;
  double grad_max = 0.0;
  std::string note;
};

struct ConvergenceTrace {
  std::vector<TraceEntry> entries;
  bool converged = false;
  std::string message;
  std::string tail(std::size_t n = 5) const;
};

struct LmmFit {
  std::vector<std::string> fixed_names;
  Eigen::VectorXd beta;
  Eigen::MatrixXd beta_cov;
  VarianceComponents vc;
  Eigen::MatrixXd blups;  // n_groups x q
  double reml_loglik = 0.0;
  std::size_t n_rows = 0;
  double residual_df = 0.0;
  ConvergenceTrace trace;

  Eigen::VectorXd se() const { return beta_cov.diagonal().cwiseSqrt(); }
};

struct GlmmFit : LmmFit {
  Eigen::VectorXd working_weights;
  Eigen::VectorXd fitted_prob;  // conditional on the BLUPs
  int pql_iterations = 0;
};

struct TwoPartFit {
  ModelSpec spec;  // full spec as requested
  ModelSpec presence_spec, strength_spec;  // specs each part was fitted with
  CenteringRecord centering;
  int n_nodes = 0;
  GlmmFit presence;
  LmmFit strength;
};

// --- REML -------------------------------------------------------------------

/// Sufficient statistics of one (weighted) REML problem.
struct RemlProblem {
  int p = 0, q = 0;
  std::vector<int> component_of_column;
  std::vector<std::string> component_names;
  std::vector<std::string> fixed_names;
  std::vector<Eigen::MatrixXd> gram;  // per group, (q+p+1)^2 over [Z X y], W-weighted
  std::vector<std::size_t> group_rows;
  std::size_t n_rows = 0;
  double sum_log_weights = 0.0;

  int n_components() const { return static_cast<int>(component_names.size()); }
};

/// `weights` empty means unit weights.
RemlProblem make_reml_problem(const DesignMatrices& design, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& weights = {});

struct RemlEvaluation {
  double objective = 0.0;  // -2 restricted log-likelihood
  bool finite = false;
  Eigen::VectorXd grad_tau;  // natural-scale d objective / d tau_c
  double grad_sigma2 = 0.0;
  Eigen::VectorXd beta;
  Eigen::MatrixXd xvx;  // X' V^-1 X
  double quad = 0.0;  // (y - X beta)' V^-1 (y - X beta)
};

RemlEvaluation reml_evaluate(const RemlProblem& problem, const Eigen::VectorXd& tau, double sigma2,
                             bool gradient);

/// Average-information approximation to the Hessian of the objective over
/// (tau_1 .. tau_c, sigma2), natural scale. Empty when V is not positive definite.
Eigen::MatrixXd reml_information(const RemlProblem& problem, const Eigen::VectorXd& tau, double sigma2);

/// theta = [log tau_1 .. log tau_c, log sigma2]. Non-finite values signal
/// overflow to the optimizer.
double reml_objective(const RemlProblem& problem, const Eigen::VectorXd& theta);
Eigen::VectorXd reml_gradient(const RemlProblem& problem, const Eigen::VectorXd& theta);

struct RemlStart {
  Eigen::VectorXd tau;
  double sigma2 = 1.0;
  std::vector<bool> pinned;
};

struct RemlOptions {
  int max_iterations = 200;
  double grad_tol = 1e-6;
  double rel_objective_tol = 1e-8;
  double pin_ratio = 1e-10;  // tau below pin_ratio * sigma2 is pinned at 0
  bool multi_start = true;
  std::optional<RemlStart> start;  // warm start; disables multi-start
};

LmmFit reml_fit(const RemlProblem& problem, const RemlOptions& opts = {});
LmmFit reml_fit(const DesignMatrices& design, const Eigen::VectorXd& weights = {}, const RemlOptions& opts = {});

/// Random effects of each group, d (Z' V^-1 (y - X beta)).
Eigen::MatrixXd compute_blups(const RemlProblem& problem, const Eigen::VectorXd& tau, double sigma2,
                              const Eigen::VectorXd& beta);

/// Throws SpecError naming the first fixed column that is a linear
/// combination of earlier ones.
void check_full_rank(const Eigen::MatrixXd& xwx, const std::vector<std::string>& names);

// --- PQL --------------------------------------------------------------------

struct PqlOptions {
  int max_outer = 50;
  double tol = 1e-6;
  RemlOptions reml;
};

/// Plain logistic regression by iteratively reweighted least squares.
Eigen::VectorXd irls_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int max_iter = 100,
                              double tol = 1e-12);

GlmmFit pql_fit(const DesignMatrices& design, const PqlOptions& opts = {});

// --- two-part ---------------------------------------------------------------

/// Spec with random terms whose variance components are pinned at 0 removed.
/// Separate nodal components drop individually; the shared one drops the term.
ModelSpec drop_zero_variance(const LmmFit& fit, const ModelSpec& spec);

struct TwoPartOptions {
  PqlOptions pql;
  RemlOptions reml;
};

TwoPartFit fit_two_part(const DyadTable& centered, const ModelSpec& spec, const TwoPartOptions& opts = {});

/// Refits each part with its zero-variance random terms removed.
TwoPartFit reduce_two_part(const DyadTable& centered, const TwoPartFit& full, const TwoPartOptions& opts = {});

}  // namespace netmix
