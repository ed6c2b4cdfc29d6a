#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "netmix/errors.hpp"
#include "netmix/kernels.hpp"
#include "netmix/mixedfit.hpp"
#include "netmix/parallel.hpp"

namespace netmix {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Per-group pieces of [Z X y]' V^-1 [Z X y].
struct GroupStats {
  bool ok = false;
  double logdet_m = 0.0;  // log|I + g A g / s2|
  Eigen::MatrixXd sxy;  // (p+1)^2 block over [X y]
  Eigen::VectorXd szz_diag;  // q
  Eigen::MatrixXd szxy;  // q x (p+1)
  Eigen::MatrixXd s_full;  // m x m, only on request
};

GroupStats group_stats(const Eigen::MatrixXd& G, int q, int p, const Eigen::VectorXd& g, double s2, bool full,
                       bool whole = false) {
  GroupStats st;
  const int m = q + p + 1;
  const double s4 = s2 * s2;
  Eigen::MatrixXd M = (g.asDiagonal() * G.topLeftCorner(q, q) * g.asDiagonal()) / s2;
  M.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) return st;
  const auto L = llt.matrixL();
  for (int j = 0; j < q; ++j) st.logdet_m += 2.0 * std::log(llt.matrixLLT()(j, j));

  const int first = full ? 0 : q;
  Eigen::MatrixXd T = g.asDiagonal() * G.block(0, first, q, m - first);
  L.solveInPlace(T);
  const auto Txy = T.rightCols(p + 1);
  st.sxy = G.bottomRightCorner(p + 1, p + 1) / s2 - (Txy.transpose() * Txy) / s4;
  if (full) {
    const auto Tz = T.leftCols(q);
    st.szz_diag = G.topLeftCorner(q, q).diagonal() / s2 - Tz.colwise().squaredNorm().transpose() / s4;
    st.szxy = G.topRightCorner(q, p + 1) / s2 - (Tz.transpose() * Txy) / s4;
    if (whole) st.s_full = G / s2 - (T.transpose() * T) / s4;
  }
  st.ok = std::isfinite(st.logdet_m) && st.sxy.allFinite();
  return st;
}

Eigen::VectorXd column_sd(const RemlProblem& pr, const Eigen::VectorXd& tau) {
  Eigen::VectorXd g(pr.q);
  for (int j = 0; j < pr.q; ++j) g[j] = std::sqrt(tau[pr.component_of_column[j]]);
  return g;
}

std::vector<GroupStats> all_group_stats(const RemlProblem& pr, const Eigen::VectorXd& tau, double s2, bool full,
                                        bool whole = false) {
  const Eigen::VectorXd g = column_sd(pr, tau);
  std::vector<GroupStats> stats(pr.gram.size());
  parallel_for(pr.gram.size(),
               [&](std::size_t i) { stats[i] = group_stats(pr.gram[i], pr.q, pr.p, g, s2, full, whole); });
  return stats;
}

}  // namespace

std::string ConvergenceTrace::tail(std::size_t n) const {
  std::ostringstream out;
  const std::size_t start = entries.size() > n ? entries.size() - n : 0;
  for (std::size_t i = start; i < entries.size(); ++i) {
    const auto& e = entries[i];
    out << "[" << e.iteration << "] -2logL=" << e.objective << " |g|=" << e.grad_max;
    if (!e.note.empty()) out << " " << e.note;
    out << "\n";
  }
  return out.str();
}

// --- problem setup ------------------------------------------------------------

RemlProblem make_reml_problem(const DesignMatrices& d, const Eigen::VectorXd& y, const Eigen::VectorXd& weights) {
  RemlProblem pr;
  pr.p = static_cast<int>(d.X.cols());
  pr.q = static_cast<int>(d.Z.cols());
  pr.component_of_column = d.component_of_column;
  pr.component_names = d.component_names;
  pr.fixed_names = d.fixed_names;
  pr.n_rows = d.n_rows();
  if (static_cast<std::size_t>(y.size()) != pr.n_rows) throw DataError("response length does not match design");
  if (weights.size() != 0 && static_cast<std::size_t>(weights.size()) != pr.n_rows)
    throw DataError("weight vector length does not match design");
  if (!y.allFinite()) throw DataError("response contains non-finite values");

  const int m = pr.q + pr.p + 1;
  const std::size_t groups = d.n_groups();
  pr.gram.resize(groups);
  pr.group_rows.resize(groups);
  parallel_for(groups, [&](std::size_t gi) {
    const std::size_t b = d.group_offsets[gi], e = d.group_offsets[gi + 1], n = e - b;
    pr.group_rows[gi] = n;
    std::vector<double> rows(n * m), w(n, 1.0);
    for (std::size_t r = 0; r < n; ++r) {
      const auto row = static_cast<Eigen::Index>(b + r);
      double* dst = rows.data() + r * m;
      for (int c = 0; c < pr.q; ++c) dst[c] = d.Z(row, c);
      for (int c = 0; c < pr.p; ++c) dst[pr.q + c] = d.X(row, c);
      dst[m - 1] = y[row];
      if (weights.size()) w[r] = weights[row];
    }
    std::vector<double> upper(static_cast<std::size_t>(m) * m, 0.0);
    kernels::weighted_gram_upper(rows, n, m, m, w, upper);
    Eigen::MatrixXd G(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = i; j < m; ++j) G(i, j) = G(j, i) = upper[static_cast<std::size_t>(i) * m + j];
    pr.gram[gi] = std::move(G);
  });
  if (weights.size()) {
    if ((weights.array() <= 0.0).any() || !weights.allFinite()) throw DataError("weights must be positive");
    for (Eigen::Index i = 0; i < weights.size(); ++i) pr.sum_log_weights += std::log(weights[i]);
  }
  return pr;
}

void check_full_rank(const Eigen::MatrixXd& xwx, const std::vector<std::string>& names) {
  const Eigen::Index p = xwx.rows();
  // Column-by-column Cholesky on the correlation-scaled cross products: a
  // vanishing pivot means the column lies in the span of the earlier ones.
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd scale(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto label = j < static_cast<Eigen::Index>(names.size()) ? names[j] : std::to_string(j);
    if (!(xwx(j, j) > 0.0)) throw SpecError("fixed-effect column '" + label + "' is identically zero");
    scale[j] = 1.0 / std::sqrt(xwx(j, j));
    for (Eigen::Index i = 0; i < j; ++i) {
      double v = xwx(j, i) * scale[j] * scale[i];
      for (Eigen::Index k = 0; k < i; ++k) v -= L(j, k) * L(i, k);
      L(j, i) = v / L(i, i);
    }
    double d = 1.0;
    for (Eigen::Index k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
    if (d < 1e-10)
      throw SpecError("fixed-effect column '" + label + "' is aliased with earlier columns (rank-deficient X)");
    L(j, j) = std::sqrt(d);
  }
}

// --- objective ----------------------------------------------------------------

RemlEvaluation reml_evaluate(const RemlProblem& pr, const Eigen::VectorXd& tau, double sigma2, bool gradient) {
  RemlEvaluation ev;
  ev.objective = kInf;
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2) || !tau.allFinite() || (tau.array() < 0.0).any()) return ev;
  const int p = pr.p, q = pr.q;
  const auto stats = all_group_stats(pr, tau, sigma2, gradient);

  double logdet = 0.0;
  Eigen::MatrixXd sxy = Eigen::MatrixXd::Zero(p + 1, p + 1);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (!stats[i].ok) return ev;
    logdet += static_cast<double>(pr.group_rows[i]) * std::log(sigma2) + stats[i].logdet_m;
    sxy += stats[i].sxy;
  }
  logdet -= pr.sum_log_weights;

  ev.xvx = sxy.topLeftCorner(p, p);
  Eigen::LLT<Eigen::MatrixXd> pl(ev.xvx);
  if (pl.info() != Eigen::Success) return ev;
  double logdet_p = 0.0;
  for (int j = 0; j < p; ++j) logdet_p += 2.0 * std::log(pl.matrixLLT()(j, j));
  const Eigen::VectorXd xy = sxy.col(p).head(p);
  ev.beta = pl.solve(xy);
  ev.quad = sxy(p, p) - xy.dot(ev.beta);
  const double resid_df = static_cast<double>(pr.n_rows) - p;
  ev.objective = logdet + logdet_p + ev.quad + resid_df * std::log(2.0 * std::numbers::pi);
  ev.finite = std::isfinite(ev.objective);
  if (!ev.finite) {
    ev.objective = kInf;
    return ev;
  }
  if (!gradient) return ev;

  const Eigen::MatrixXd pinv = pl.solve(Eigen::MatrixXd::Identity(p, p));
  ev.grad_tau = Eigen::VectorXd::Zero(pr.n_components());
  for (const auto& st : stats) {
    const auto H = st.szxy.leftCols(p);
    const Eigen::VectorXd r = st.szxy.col(p) - H * ev.beta;
    const Eigen::VectorXd hph = (H * pinv).cwiseProduct(H).rowwise().sum();
    for (int j = 0; j < q; ++j)
      ev.grad_tau[pr.component_of_column[j]] += st.szz_diag[j] - hph[j] - r[j] * r[j];
  }
  ev.grad_sigma2 = (resid_df - ev.quad - tau.dot(ev.grad_tau)) / sigma2;
  return ev;
}

// Each working vector V_c P y is a per-group combination of the [Z X y]
// columns, so products through V^-1 reduce to the S blocks.
Eigen::MatrixXd reml_information(const RemlProblem& pr, const Eigen::VectorXd& tau, double sigma2) {
  const int p = pr.p, q = pr.q, nc = pr.n_components(), m = q + p + 1;
  const auto stats = all_group_stats(pr, tau, sigma2, true, true);
  Eigen::MatrixXd xvx = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xvy = Eigen::VectorXd::Zero(p);
  for (const auto& st : stats) {
    if (!st.ok) return {};
    xvx += st.sxy.topLeftCorner(p, p);
    xvy += st.sxy.col(p).head(p);
  }
  Eigen::LLT<Eigen::MatrixXd> pl(xvx);
  if (pl.info() != Eigen::Success) return {};
  const Eigen::VectorXd beta = pl.solve(xvy);

  std::vector<Eigen::MatrixXd> quad(stats.size()), cross(stats.size());
  parallel_for(stats.size(), [&](std::size_t i) {
    const auto& st = stats[i];
    const Eigen::VectorXd r = st.szxy.col(p) - st.szxy.leftCols(p) * beta;
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(m, nc + 1);
    for (int j = 0; j < q; ++j) {
      C(j, pr.component_of_column[j]) = r[j];
      C(j, nc) = -tau[pr.component_of_column[j]] * r[j] / sigma2;
    }
    C.col(nc).segment(q, p) = -beta / sigma2;
    C(m - 1, nc) = 1.0 / sigma2;
    const Eigen::MatrixXd Y = st.s_full * C;
    quad[i] = C.transpose() * Y;
    cross[i] = Y.middleRows(q, p);
  });
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(nc + 1, nc + 1), h = Eigen::MatrixXd::Zero(p, nc + 1);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    info += quad[i];
    h += cross[i];
  }
  info -= h.transpose() * pl.solve(h);
  return 0.5 * (info + info.transpose());
}

double reml_objective(const RemlProblem& pr, const Eigen::VectorXd& theta) {
  const int c = pr.n_components();
  return reml_evaluate(pr, theta.head(c).array().exp().matrix(), std::exp(theta[c]), false).objective;
}

Eigen::VectorXd reml_gradient(const RemlProblem& pr, const Eigen::VectorXd& theta) {
  const int c = pr.n_components();
  const Eigen::VectorXd tau = theta.head(c).array().exp().matrix();
  const double s2 = std::exp(theta[c]);
  const auto ev = reml_evaluate(pr, tau, s2, true);
  Eigen::VectorXd g(c + 1);
  g.head(c) = tau.cwiseProduct(ev.grad_tau);
  g[c] = s2 * ev.grad_sigma2;
  return g;
}

Eigen::MatrixXd compute_blups(const RemlProblem& pr, const Eigen::VectorXd& tau, double sigma2,
                              const Eigen::VectorXd& beta) {
  const auto stats = all_group_stats(pr, tau, sigma2, true);
  Eigen::VectorXd d(pr.q);
  for (int j = 0; j < pr.q; ++j) d[j] = tau[pr.component_of_column[j]];
  Eigen::MatrixXd b(static_cast<Eigen::Index>(stats.size()), pr.q);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (!stats[i].ok) throw ConvergenceError("BLUP evaluation failed at the fitted variance components");
    const Eigen::VectorXd r = stats[i].szxy.col(pr.p) - stats[i].szxy.leftCols(pr.p) * beta;
    b.row(static_cast<Eigen::Index>(i)) = d.cwiseProduct(r).transpose();
  }
  return b;
}

// --- optimizer ----------------------------------------------------------------

namespace {

struct OptState {
  Eigen::VectorXd tau;
  double sigma2 = 1.0;
  std::vector<bool> pinned;
  double f = kInf;
  double grad_max = kInf;
  bool converged = false;
};

class RemlOptimizer {
 public:
  RemlOptimizer(const RemlProblem& pr, const RemlOptions& opts, ConvergenceTrace& trace)
      : pr_(pr), opts_(opts), trace_(trace) {}

  OptState run(OptState st, const std::string& label) {
    for (int round = 0; round < 6; ++round) {
      ai_newton(st, label);
      if (!st.converged) bfgs(st, label + " (quasi-Newton)");
      if (!st.converged) return st;
      if (!boundary_pass(st, label)) return st;
    }
    return st;
  }

 private:
  std::vector<int> free_components(const OptState& st) const {
    std::vector<int> f;
    for (int c = 0; c < pr_.n_components(); ++c)
      if (!st.pinned[c]) f.push_back(c);
    return f;
  }

  void apply(OptState& st, const std::vector<int>& free, const Eigen::VectorXd& theta) const {
    for (std::size_t i = 0; i < free.size(); ++i) st.tau[free[i]] = std::exp(theta[static_cast<Eigen::Index>(i)]);
    st.sigma2 = std::exp(theta[theta.size() - 1]);
  }

  Eigen::VectorXd theta_of(const OptState& st, const std::vector<int>& free) const {
    Eigen::VectorXd theta(static_cast<Eigen::Index>(free.size()) + 1);
    for (std::size_t i = 0; i < free.size(); ++i) theta[static_cast<Eigen::Index>(i)] = std::log(st.tau[free[i]]);
    theta[theta.size() - 1] = std::log(st.sigma2);
    return theta;
  }

  // Objective and log-scale gradient over the free parameters.
  double eval(const OptState& st, const std::vector<int>& free, Eigen::VectorXd* grad) const {
    const auto ev = reml_evaluate(pr_, st.tau, st.sigma2, grad != nullptr);
    if (grad && ev.finite) {
      grad->resize(static_cast<Eigen::Index>(free.size()) + 1);
      for (std::size_t i = 0; i < free.size(); ++i)
        (*grad)[static_cast<Eigen::Index>(i)] = st.tau[free[i]] * ev.grad_tau[free[i]];
      (*grad)[grad->size() - 1] = st.sigma2 * ev.grad_sigma2;
    }
    return ev.finite ? ev.objective : kInf;
  }

  void note(int it, const OptState& st, std::string text) {
    trace_.entries.push_back({it, st.f, st.grad_max, std::move(text)});
  }

  double log_grad_max(const OptState& st, const RemlEvaluation& ev) const {
    double gm = std::abs(st.sigma2 * ev.grad_sigma2);
    for (int c = 0; c < pr_.n_components(); ++c)
      if (!st.pinned[c]) gm = std::max(gm, std::abs(st.tau[c] * ev.grad_tau[c]));
    return gm;
  }

  // Projected Newton steps with the average-information matrix on the natural
  // scale. Components pushed below zero are pinned there.
  void ai_newton(OptState& st, const std::string& label) {
    st.converged = false;
    int stall = 0;
    for (int it = 1; it <= opts_.max_iterations; ++it) {
      const auto ev = reml_evaluate(pr_, st.tau, st.sigma2, true);
      if (!ev.finite) return;
      st.f = ev.objective;
      st.grad_max = log_grad_max(st, ev);
      if (it == 1) note(0, st, label + " (average information)");
      if (st.grad_max <= opts_.grad_tol) {
        st.converged = true;
        note(it, st, "gradient tolerance met");
        return;
      }
      const Eigen::MatrixXd info = reml_information(pr_, st.tau, st.sigma2);
      if (info.size() == 0) return;
      const std::vector<int> free = free_components(st);
      const auto nf = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd A(nf + 1, nf + 1);
      Eigen::VectorXd g(nf + 1);
      const int nc = pr_.n_components();
      for (Eigen::Index a = 0; a <= nf; ++a) {
        const int ia = a < nf ? free[a] : nc;
        g[a] = a < nf ? ev.grad_tau[ia] : ev.grad_sigma2;
        for (Eigen::Index b = 0; b <= nf; ++b) A(a, b) = info(ia, b < nf ? free[b] : nc);
      }
      Eigen::LLT<Eigen::MatrixXd> llt(A);
      if (llt.info() != Eigen::Success) return;
      const Eigen::VectorXd dir = -llt.solve(g);
      const double slope = g.dot(dir);
      if (!(slope < 0.0)) return;

      bool accepted = false;
      OptState trial = st;
      double step = 1.0;
      for (int k = 0; k < 40 && !accepted; ++k, step *= 0.5) {
        trial = st;
        for (Eigen::Index a = 0; a < nf; ++a) trial.tau[free[a]] = std::max(0.0, st.tau[free[a]] + step * dir[a]);
        trial.sigma2 = st.sigma2 + step * dir[nf];
        if (!(trial.sigma2 > 0.0)) continue;
        for (int c : free) {
          if (trial.tau[c] < opts_.pin_ratio * trial.sigma2) {
            trial.tau[c] = 0.0;
            trial.pinned[c] = true;
          }
        }
        trial.f = reml_evaluate(pr_, trial.tau, trial.sigma2, false).objective;
        accepted = std::isfinite(trial.f) && trial.f <= st.f + 1e-4 * step * slope;
        // A projected step may not follow the Newton slope; plain decrease suffices.
        if (!accepted && trial.pinned != st.pinned) accepted = std::isfinite(trial.f) && trial.f < st.f;
      }
      if (!accepted) return;
      const double rel = std::abs(st.f - trial.f) / std::max(1.0, std::abs(st.f));
      const bool pinned_any = trial.pinned != st.pinned;
      st = trial;
      note(it, st, pinned_any ? "pinned component(s) at 0" : "");
      stall = !pinned_any && rel < opts_.rel_objective_tol ? stall + 1 : 0;
      if (stall >= 10) {
        st.converged = true;
        note(it, st, "relative objective change below tolerance");
        return;
      }
    }
  }

  void bfgs(OptState& st, const std::string& label) {
    std::vector<int> free = free_components(st);
    Eigen::VectorXd theta = theta_of(st, free), g;
    st.f = eval(st, free, &g);
    st.converged = false;
    if (!std::isfinite(st.f)) {
      st.grad_max = kInf;
      note(0, st, label + ": non-finite objective at start");
      return;
    }
    st.grad_max = g.cwiseAbs().maxCoeff();
    note(0, st, label);
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(theta.size(), theta.size());
    bool fresh = true;
    int stall = 0;

    for (int it = 1; it <= opts_.max_iterations; ++it) {
      if (st.grad_max <= opts_.grad_tol) {
        st.converged = true;
        note(it, st, "gradient tolerance met");
        return;
      }
      Eigen::VectorXd dir = -H * g;
      if (g.dot(dir) >= 0.0) {
        H.setIdentity();
        fresh = true;
        dir = -g;
      }
      const double big = dir.cwiseAbs().maxCoeff();
      if (big > 5.0) dir *= 5.0 / big;
      const double slope = g.dot(dir);

      double step = 1.0, f_new = kInf;
      OptState trial = st;
      bool accepted = false;
      for (int k = 0; k < 50; ++k) {
        apply(trial, free, theta + step * dir);
        f_new = eval(trial, free, nullptr);
        if (std::isfinite(f_new) && f_new <= st.f + 1e-4 * step * slope) {
          accepted = true;
          break;
        }
        step *= 0.5;  // also the response to a non-finite objective
      }
      if (!accepted) {
        if (!fresh) {
          H.setIdentity();
          fresh = true;
          note(it, st, "line search failed; reset curvature");
          continue;
        }
        st.converged = true;
        note(it, st, "no further decrease within machine precision");
        return;
      }

      Eigen::VectorXd g_new;
      f_new = eval(trial, free, &g_new);
      const Eigen::VectorXd s = step * dir, yv = g_new - g;
      const double sy = s.dot(yv);
      if (sy > 1e-12 * s.norm() * yv.norm()) {
        if (fresh) H *= sy / yv.squaredNorm();
        const Eigen::VectorXd hy = H * yv;
        const double yhy = yv.dot(hy);
        H += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) - (hy * s.transpose() + s * hy.transpose()) / sy;
        fresh = false;
      }
      const double rel = std::abs(st.f - f_new) / std::max(1.0, std::abs(st.f));
      st = trial;
      st.f = f_new;
      theta += s;
      g = g_new;
      st.grad_max = g.cwiseAbs().maxCoeff();
      note(it, st, "");

      // Components collapsing toward zero are pinned and the search restarts.
      bool pinned_any = false;
      for (int c : free) {
        if (st.tau[c] < opts_.pin_ratio * st.sigma2) {
          st.pinned[c] = true;
          st.tau[c] = 0.0;
          pinned_any = true;
        }
      }
      if (pinned_any) {
        free = free_components(st);
        theta = theta_of(st, free);
        st.f = eval(st, free, &g);
        st.grad_max = g.cwiseAbs().maxCoeff();
        H = Eigen::MatrixXd::Identity(theta.size(), theta.size());
        fresh = true;
        stall = 0;
        note(it, st, "pinned component(s) at 0");
        continue;
      }

      stall = rel < opts_.rel_objective_tol ? stall + 1 : 0;
      if (stall >= 10) {
        st.converged = true;
        note(it, st, "relative objective change below tolerance");
        return;
      }
    }
    note(opts_.max_iterations, st, "iteration limit reached");
  }

  // Pins components whose removal costs nothing and releases pinned ones
  // whose derivative at zero points inward. Returns whether anything changed.
  bool boundary_pass(OptState& st, const std::string& label) {
    bool changed = false;
    for (int c = 0; c < pr_.n_components(); ++c) {
      if (st.pinned[c]) continue;
      OptState probe = st;
      probe.tau[c] = 0.0;
      const double f0 = reml_evaluate(pr_, probe.tau, probe.sigma2, false).objective;
      if (std::isfinite(f0) && f0 - st.f <= 1e-6) {
        st.pinned[c] = true;
        st.tau[c] = 0.0;
        changed = true;
      }
    }
    if (changed) {
      note(0, st, label + ": boundary check pinned component(s)");
      return true;
    }
    const auto ev = reml_evaluate(pr_, st.tau, st.sigma2, true);
    if (!ev.finite) return false;
    for (int c = 0; c < pr_.n_components(); ++c) {
      if (st.pinned[c] && ev.grad_tau[c] * st.sigma2 < -1e-4) {
        st.pinned[c] = false;
        st.tau[c] = 1e-3 * st.sigma2;
        changed = true;
      }
    }
    if (changed) note(0, st, label + ": released component(s) from the boundary");
    return changed;
  }

  const RemlProblem& pr_;
  const RemlOptions& opts_;
  ConvergenceTrace& trace_;
};

// Weighted OLS residual variance split evenly between sigma2 and the components.
RemlStart moment_start(const RemlProblem& pr) {
  const int p = pr.p, q = pr.q, nc = pr.n_components();
  Eigen::MatrixXd tot = Eigen::MatrixXd::Zero(q + p + 1, q + p + 1);
  for (const auto& G : pr.gram) tot += G;
  const Eigen::MatrixXd xx = tot.block(q, q, p, p);
  const Eigen::VectorXd xy = tot.col(q + p).segment(q, p);
  const Eigen::VectorXd b = xx.ldlt().solve(xy);
  const double rss = tot(q + p, q + p) - xy.dot(b);
  const double n_rows = static_cast<double>(pr.n_rows);
  double s2 = rss / std::max(1.0, static_cast<double>(pr.n_rows) - p);
  if (!(s2 > 0.0) || !std::isfinite(s2)) s2 = 1.0;

  RemlStart st;
  st.sigma2 = 0.5 * s2;
  st.tau = Eigen::VectorXd::Zero(nc);
  st.pinned.assign(nc, false);
  Eigen::VectorXd zz = Eigen::VectorXd::Zero(nc);
  for (int j = 0; j < q; ++j) zz[pr.component_of_column[j]] += tot(j, j);
  int live = 0;
  for (int c = 0; c < nc; ++c) live += zz[c] > 0.0;
  for (int c = 0; c < nc; ++c) {
    if (zz[c] > 0.0) {
      st.tau[c] = 0.5 * s2 / (live * zz[c] / n_rows);
    } else {
      st.pinned[c] = true;  // no information about this component
    }
  }
  return st;
}

}  // namespace

LmmFit reml_fit(const RemlProblem& pr, const RemlOptions& opts) {
  const int p = pr.p, q = pr.q, nc = pr.n_components();
  if (static_cast<std::size_t>(p) > pr.n_rows) throw SpecError("more fixed effects than rows");
  {
    Eigen::MatrixXd xx = Eigen::MatrixXd::Zero(p, p);
    for (const auto& G : pr.gram) xx += G.block(q, q, p, p);
    check_full_rank(xx, pr.fixed_names);
  }

  std::vector<RemlStart> starts;
  if (opts.start) {
    starts.push_back(*opts.start);
  } else {
    const auto base = moment_start(pr);
    starts.push_back(base);
    if (opts.multi_start && nc > 0) {
      for (double f : {0.1, 10.0}) {
        auto s = base;
        s.tau *= f;
        starts.push_back(s);
      }
    }
  }

  LmmFit fit;
  RemlOptimizer optimizer(pr, opts, fit.trace);
  std::optional<OptState> best;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    OptState st;
    st.tau = starts[k].tau;
    st.sigma2 = starts[k].sigma2;
    st.pinned = starts[k].pinned;
    st.pinned.resize(nc, false);
    for (int c = 0; c < nc; ++c)
      if (st.pinned[c]) st.tau[c] = 0.0;
    st = optimizer.run(st, "start " + std::to_string(k + 1));
    if (st.converged && std::isfinite(st.f) && (!best || st.f < best->f)) best = st;
  }
  if (!best) {
    fit.trace.converged = false;
    fit.trace.message = "REML did not converge within " + std::to_string(opts.max_iterations) + " iterations";
    throw ConvergenceError(fit.trace.message + "\n" + fit.trace.tail());
  }

  const auto ev = reml_evaluate(pr, best->tau, best->sigma2, true);
  fit.fixed_names = pr.fixed_names;
  fit.beta = ev.beta;
  Eigen::MatrixXd cov = ev.xvx.llt().solve(Eigen::MatrixXd::Identity(p, p));
  fit.beta_cov = 0.5 * (cov + cov.transpose());
  fit.vc.names = pr.component_names;
  fit.vc.tau = best->tau;
  fit.vc.sigma2 = best->sigma2;
  fit.vc.at_bound = best->pinned;
  fit.blups = compute_blups(pr, best->tau, best->sigma2, ev.beta);
  fit.reml_loglik = -0.5 * ev.objective;
  fit.n_rows = pr.n_rows;
  fit.residual_df = static_cast<double>(pr.n_rows) - p;
  fit.trace.converged = true;
  fit.trace.message = "converged";
  return fit;
}

LmmFit reml_fit(const DesignMatrices& design, const Eigen::VectorXd& weights, const RemlOptions& opts) {
  return reml_fit(make_reml_problem(design, design.y, weights), opts);
}

}  // namespace netmix
