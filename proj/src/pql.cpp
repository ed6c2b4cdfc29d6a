#include <cmath>
#include <sstream>

#include "netmix/errors.hpp"
#include "netmix/mixedfit.hpp"

namespace netmix {

namespace {

double expit(double e) { return 1.0 / (1.0 + std::exp(-e)); }

void check_divergence(const Eigen::VectorXd& eta) {
  const auto wild = (eta.array().abs() > 30.0).count();
  if (static_cast<double>(wild) > 0.01 * static_cast<double>(eta.size()))
    throw SeparationError("quasi-separation: |linear predictor| > 30 on " + std::to_string(wild) + " of " +
                          std::to_string(eta.size()) + " rows");
}

double rel_change(const Eigen::VectorXd& now, const Eigen::VectorXd& before) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < now.size(); ++i)
    worst = std::max(worst, std::abs(now[i] - before[i]) / std::max(1.0, std::abs(before[i])));
  return worst;
}

}  // namespace

Eigen::VectorXd irls_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int max_iter, double tol) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd w(eta.size()), z(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double mu = expit(eta[i]);
      w[i] = std::max(mu * (1.0 - mu), 1e-12);
      z[i] = eta[i] + (y[i] - mu) / w[i];
    }
    const Eigen::MatrixXd xtwx = X.transpose() * w.asDiagonal() * X;
    const Eigen::VectorXd next = xtwx.ldlt().solve(X.transpose() * w.cwiseProduct(z));
    const double change = rel_change(next, beta);
    beta = next;
    if (change < tol) break;
  }
  return beta;
}

GlmmFit pql_fit(const DesignMatrices& d, const PqlOptions& opts) {
  const Eigen::VectorXd& y = d.y;
  const auto n = y.size();
  if (n == 0) throw DataError("presence model has no rows");
  for (Eigen::Index i = 0; i < n; ++i)
    if (y[i] != 0.0 && y[i] != 1.0) throw DataError("presence response must be 0 or 1");
  const double ones = y.sum();
  if (ones == 0.0 || ones == static_cast<double>(n)) throw SeparationError("presence response constant");

  const Eigen::VectorXd beta0 = irls_logistic(d.X, y, 50, 1e-10);
  Eigen::VectorXd eta = d.X * beta0;
  check_divergence(eta);

  GlmmFit out;
  ConvergenceTrace outer;
  std::optional<RemlStart> warm;
  Eigen::VectorXd prev_beta = beta0, prev_tau;
  Eigen::VectorXd w(n), ystar(n);

  for (int k = 1; k <= opts.max_outer; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = expit(eta[i]);
      w[i] = std::max(mu * (1.0 - mu), 1e-12);
      ystar[i] = eta[i] + (y[i] - mu) / w[i];
    }
    RemlOptions ro = opts.reml;
    if (warm) ro.start = warm;
    LmmFit fit = reml_fit(make_reml_problem(d, ystar, w), ro);

    eta = d.X * fit.beta;
    for (std::size_t g = 0; g < d.n_groups(); ++g) {
      const auto b = static_cast<Eigen::Index>(d.group_offsets[g]);
      const auto len = static_cast<Eigen::Index>(d.group_offsets[g + 1]) - b;
      if (len && d.Z.cols()) eta.segment(b, len) += d.Z.middleRows(b, len) * fit.blups.row(g).transpose();
    }
    check_divergence(eta);

    const double db = rel_change(fit.beta, prev_beta);
    const double dt = k > 1 ? rel_change(fit.vc.tau, prev_tau) : INFINITY;
    std::ostringstream msg;
    msg << "PQL step " << k << ": max rel change beta " << db << ", tau " << dt;
    outer.entries.push_back({k, -2.0 * fit.reml_loglik, fit.trace.entries.empty() ? 0.0 : fit.trace.entries.back().grad_max,
                             msg.str()});
    warm = RemlStart{fit.vc.tau, fit.vc.sigma2, fit.vc.at_bound};
    prev_beta = fit.beta;
    prev_tau = fit.vc.tau;

    if (db < opts.tol && dt < opts.tol) {
      static_cast<LmmFit&>(out) = std::move(fit);
      out.trace.entries.insert(out.trace.entries.begin(), outer.entries.begin(), outer.entries.end());
      out.trace.message = "PQL converged after " + std::to_string(k) + " outer iterations";
      out.pql_iterations = k;
      out.working_weights = w;
      out.fitted_prob = eta.unaryExpr([](double e) { return expit(e); });
      return out;
    }
  }
  throw ConvergenceError("PQL did not converge within " + std::to_string(opts.max_outer) + " outer iterations\n" +
                         outer.tail());
}

}  // namespace netmix
