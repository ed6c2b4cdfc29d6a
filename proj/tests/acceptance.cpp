// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "model_oracles.hpp"
#include "netmix/cli.hpp"
#include "netmix/errors.hpp"
#include "netmix/graphmetrics.hpp"
#include "netmix/inference.hpp"
#include "netmix/parallel.hpp"
#include "netmix/predictsim.hpp"
#include "netmix/synthetic.hpp"
#include "oracles.hpp"

using namespace netmix;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... v) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, v...);
  return buf;
}

double expit(double e) { return 1.0 / (1.0 + std::exp(-e)); }

// --- 1: metrics ---------------------------------------------------------------

Outcome metric_oracles() {
  Stopwatch sw;
  std::mt19937_64 rng(20240601);
  int graphs = 0;
  double worst = 0.0;
  while (graphs < 240) {
    const int n = 2 + static_cast<int>(rng() % 4);
    const auto w = oracle::random_weighted_graph(n, rng, 0.75);
    if (!oracle::connected(w)) continue;
    ++graphs;
    const SubjectNetwork net{"g", w};
    const auto paths = shortest_path_lengths(net);
    const auto suite = metric_suite(net);
    double eff = 0.0, clu = 0.0, deg = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e = oracle::efficiency(w, i), c = oracle::onnela(w, i), d = oracle::row_sum(w, i);
      worst = std::max(worst, std::abs(weighted_degree(net, i) - d));
      worst = std::max(worst, std::abs(weighted_clustering(net, i) - c));
      worst = std::max(worst, std::abs(nodal_efficiency(paths, i) - e));
      worst = std::max(worst, std::abs(*leverage_centrality(net, i) - oracle::leverage(w, i)));
      for (int j = 0; j < n; ++j) worst = std::max(worst, std::abs(paths(i, j) - oracle::path_length(w, i, j)));
      worst = std::max(worst, std::abs(suite.nodal.clustering[i] - c));
      eff += e;
      clu += c;
      deg += d;
    }
    worst = std::max(worst, std::abs(characteristic_path_length(paths).mean - oracle::mean_path_length(w)));
    worst = std::max(worst, std::abs(suite.network.global_efficiency - eff / n));
    worst = std::max(worst, std::abs(suite.network.clustering - clu / n));
    worst = std::max(worst, std::abs(suite.network.mean_degree - deg / n));
    const auto p = modularity(net, 1);
    worst = std::max(worst, std::abs(p.q - oracle::modularity_q(w, p.community)));
    if (p.q > oracle::best_modularity(w) + 1e-10) worst = std::max(worst, 1.0);
  }
  const double secs = sw.seconds();
  return {worst <= 1e-10 && secs < 10.0,
          fmt("%d graphs, max abs error %.2e (limit 1e-10), %.2f s (limit 10 s)", graphs, worst, secs)};
}

// --- 2-3: REML ------------------------------------------------------------------

DesignMatrices one_way(const Eigen::VectorXd& y, int groups, int per) {
  const auto n = static_cast<Eigen::Index>(groups * per);
  std::vector<std::size_t> off;
  for (int g = 0; g <= groups; ++g) off.push_back(static_cast<std::size_t>(g * per));
  return oracle::toy_design(Eigen::MatrixXd::Ones(n, 1), Eigen::MatrixXd::Ones(n, 1), y, off);
}

Outcome reml_closed_form() {
  Stopwatch sw;
  double worst = 0.0;
  int boundary = 0;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(5000 + seed);
    std::normal_distribution<double> nd;
    const double tau = seed % 5 == 4 ? 0.02 : 0.5;
    Eigen::VectorXd y(100);
    for (int g = 0; g < 10; ++g) {
      const double b = std::sqrt(tau) * nd(rng);
      for (int i = 0; i < 10; ++i) y[g * 10 + i] = 1.0 + b + nd(rng);
    }
    const auto fit = reml_fit(one_way(y, 10, 10));
    const auto ref = oracle::anova_reml(y, 10, 10);
    boundary += ref.tau == 0.0;
    worst = std::max({worst, std::abs(fit.vc.tau[0] - ref.tau), std::abs(fit.vc.sigma2 - ref.sigma2)});
  }
  const double secs = sw.seconds();
  return {worst <= 1e-6 && secs < 5.0, fmt("20 seeds (%d at the boundary), max deviation %.2e (limit 1e-6), %.2f s",
                                           boundary, worst, secs)};
}

DesignMatrices mixed_toy(std::mt19937_64& rng, int groups, int min_rows, int max_rows) {
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> sz(min_rows, max_rows);
  std::bernoulli_distribution coin(0.5);
  std::vector<std::size_t> off{0};
  for (int g = 0; g < groups; ++g) off.push_back(off.back() + sz(rng));
  const auto n = static_cast<Eigen::Index>(off.back());
  Eigen::MatrixXd X(n, 3), Z = Eigen::MatrixXd::Zero(n, 4);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = nd(rng);
    X(i, 2) = coin(rng);
    Z(i, 0) = 1.0;
    Z(i, 1) = X(i, 1);
    Z(i, coin(rng) ? 2 : 3) = 1.0;
    y[i] = 0.3 - 0.4 * X(i, 1) + nd(rng);
  }
  for (std::size_t g = 0; g + 1 < off.size(); ++g) {
    const double bump = nd(rng);
    for (auto i = off[g]; i < off[g + 1]; ++i) y[static_cast<Eigen::Index>(i)] += bump;
  }
  return oracle::toy_design(X, Z, y, off, {0, 1, 2, 2});
}

Outcome reml_oracle() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-3.0, 1.5);
  double worst_obj = 0.0;
  std::size_t max_rows = 0;
  for (int rep = 0; rep < 30; ++rep) {
    auto d = mixed_toy(rng, 1 + rep % 7, 3, 28);
    max_rows = std::max(max_rows, d.n_rows());
    Eigen::VectorXd w;
    if (rep % 2) {
      w.resize(static_cast<Eigen::Index>(d.n_rows()));
      for (auto& v : w) v = std::exp(u(rng));
    }
    const auto pr = make_reml_problem(d, d.y, w);
    Eigen::VectorXd tau(3);
    for (auto& t : tau) t = std::exp(u(rng));
    if (rep % 4 == 0) tau[2] = 0.0;
    const double s2 = std::exp(u(rng));
    worst_obj = std::max(worst_obj, std::abs(reml_evaluate(pr, tau, s2, false).objective -
                                             oracle::dense_reml(d, d.y, w, tau, s2)));
  }
  auto d = mixed_toy(rng, 6, 8, 25);
  Eigen::VectorXd w(static_cast<Eigen::Index>(d.n_rows()));
  for (auto& v : w) v = std::exp(0.5 * u(rng));
  const auto pr = make_reml_problem(d, d.y, w);
  double worst_grad = 0.0;
  for (int pt = 0; pt < 20; ++pt) {
    Eigen::VectorXd theta(4);
    for (auto& t : theta) t = std::uniform_real_distribution<double>(-2.0, 1.0)(rng);
    const Eigen::VectorXd g = reml_gradient(pr, theta);
    for (int k = 0; k < 4; ++k) {
      const double h = 1e-5;
      Eigen::VectorXd a = theta, b = theta;
      a[k] += h;
      b[k] -= h;
      const double fd = (reml_objective(pr, a) - reml_objective(pr, b)) / (2 * h);
      worst_grad = std::max(worst_grad, std::abs(g[k] - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return {worst_obj <= 1e-8 && worst_grad <= 1e-5 && max_rows <= 200,
          fmt("objective max |diff| %.2e (limit 1e-8, <= %zu rows), gradient max rel. error %.2e at 20 points "
              "(limit 1e-5)",
              worst_obj, max_rows, worst_grad)};
}

// --- 4: PQL ---------------------------------------------------------------------

DesignMatrices binary_toy(std::uint64_t seed, int groups, int per, double tau, bool with_random) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const int n = groups * per;
  Eigen::MatrixXd X(n, 2), Z = Eigen::MatrixXd::Ones(n, with_random ? 1 : 0);
  Eigen::VectorXd y(n);
  std::vector<std::size_t> off{0};
  for (int g = 0; g < groups; ++g) {
    const double b = std::sqrt(tau) * nd(rng);
    for (int i = 0; i < per; ++i) {
      const int r = g * per + i;
      X(r, 0) = 1.0;
      X(r, 1) = nd(rng);
      y[r] = std::bernoulli_distribution(expit(-0.3 + 0.9 * X(r, 1) + b))(rng) ? 1.0 : 0.0;
    }
    off.push_back(static_cast<std::size_t>((g + 1) * per));
  }
  return oracle::toy_design(X, Z, y, off);
}

// Restricted pseudo-likelihood maximized by dense grid and pattern search.
std::pair<Eigen::VectorXd, double> brute_force_pql(const DesignMatrices& d) {
  const Eigen::Index n = d.X.rows();
  Eigen::VectorXd eta = d.X * oracle::logistic_newton(d.X, d.y), beta_prev;
  double tau_prev = -1.0;
  for (int outer = 0; outer < 200; ++outer) {
    Eigen::VectorXd w(n), ys(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = expit(eta[i]);
      w[i] = mu * (1 - mu);
      ys[i] = eta[i] + (d.y[i] - mu) / w[i];
    }
    auto f = [&](double lt, double ls) {
      return oracle::dense_reml(d, ys, w, Eigen::VectorXd::Constant(1, std::exp(lt)), std::exp(ls));
    };
    double bt = 0, bs = 0, best = INFINITY;
    for (double lt = -6; lt <= 3; lt += 0.25)
      for (double ls = -2; ls <= 2; ls += 0.25)
        if (double v = f(lt, ls); v < best) best = v, bt = lt, bs = ls;
    for (double h = 0.125; h > 1e-10; h *= 0.5) {
      for (bool moved = true; moved;) {
        moved = false;
        for (auto [dt, ds] : {std::pair{h, 0.0}, {-h, 0.0}, {0.0, h}, {0.0, -h}, {h, h}, {-h, -h}, {h, -h}, {-h, h}})
          if (double v = f(bt + dt, bs + ds); v < best) best = v, bt += dt, bs += ds, moved = true;
      }
    }
    const Eigen::VectorXd tau = Eigen::VectorXd::Constant(1, std::exp(bt));
    const Eigen::MatrixXd Vi = oracle::dense_v(d, w, tau, std::exp(bs)).inverse();
    const Eigen::VectorXd beta = (d.X.transpose() * Vi * d.X).ldlt().solve(d.X.transpose() * Vi * ys);
    eta = d.X * beta + oracle::dense_v(d, w, tau, 0.0) * Vi * (ys - d.X * beta);
    const bool done = outer > 0 && (beta - beta_prev).cwiseAbs().maxCoeff() < 1e-10 && std::abs(tau[0] - tau_prev) < 1e-10;
    beta_prev = beta;
    tau_prev = tau[0];
    if (done) break;
  }
  return {beta_prev, tau_prev};
}

Outcome pql_reductions() {
  Stopwatch sw;
  double worst_irls = 0.0;
  for (std::uint64_t seed : {21, 22, 23, 24, 25}) {
    const auto d = binary_toy(seed, 5, 40, 0.0, false);
    worst_irls = std::max(worst_irls, (pql_fit(d).beta - oracle::logistic_newton(d.X, d.y)).cwiseAbs().maxCoeff());
  }
  double worst_toy = 0.0;
  int compared = 0;
  for (std::uint64_t seed = 10; seed < 60 && compared < 3; ++seed) {
    const auto d = binary_toy(seed, 3, 10, 2.0, true);
    GlmmFit fit;
    try {
      fit = pql_fit(d);
    } catch (const ConvergenceError&) {
      continue;
    }
    if (fit.vc.at_bound[0]) continue;
    const auto [beta, tau] = brute_force_pql(d);
    worst_toy = std::max({worst_toy, (fit.beta - beta).cwiseAbs().maxCoeff(), std::abs(fit.vc.tau[0] - tau)});
    ++compared;
  }
  const double secs = sw.seconds();
  return {worst_irls <= 1e-6 && compared == 3 && worst_toy <= 1e-4 && secs < 30.0,
          fmt("no-random-part vs IRLS %.2e (limit 1e-6); 3-subject q=1 toy vs brute force %.2e over %d toys "
              "(limit 1e-4); %.1f s",
              worst_irls, worst_toy, compared, secs)};
}

// --- 5: recovery ----------------------------------------------------------------

struct Replicate {
  SyntheticStudy study;
  TwoPartFit fit;
  double seconds = 0.0;
};

std::vector<Replicate>& replicates() {
  static std::vector<Replicate> reps;
  if (reps.empty()) {
    const auto truth = default_truth();
    for (int r = 0; r < 20; ++r) {
      Replicate rep;
      rep.study = generate_synthetic_study(20, 30, truth, 9000 + r);
      Stopwatch sw;
      rep.fit = fit_two_part(rep.study.table, truth.spec);
      rep.seconds = sw.seconds();
      reps.push_back(std::move(rep));
    }
  }
  return reps;
}

int within_two_se(const LmmFit& fit, const Eigen::VectorXd& reference, int& total) {
  const Eigen::VectorXd se = fit.se();
  int hits = 0;
  for (Eigen::Index i = 0; i < reference.size(); ++i) {
    hits += std::abs(fit.beta[i] - reference[i]) <= 2.0 * se[i];
    ++total;
  }
  return hits;
}

Outcome recovery() {
  const auto truth = default_truth();
  auto& reps = replicates();
  int hits = 0, total = 0, hits_r = 0, total_r = 0;
  double slowest = 0.0;
  for (const auto& rep : reps) {
    if (rep.fit.presence.fixed_names.size() != truth.spec.fixed.size()) return {false, "unexpected fixed layout"};
    hits_r += within_two_se(rep.fit.presence, truth.beta(Response::presence), total_r);
    hits += within_two_se(rep.fit.strength, truth.beta(Response::strength), total);
    slowest = std::max(slowest, rep.seconds);
  }
  const double rate = double(hits + hits_r) / (total + total_r);

  Stopwatch sw;
  const auto big = generate_synthetic_study(39, 90, truth, 4242);
  const double gen = sw.seconds();
  Stopwatch fit_sw;
  const auto big_fit = fit_two_part(big.table, truth.spec);
  const double big_secs = fit_sw.seconds();
  return {rate >= 0.90 && slowest < 60.0 && big_secs < 600.0 && big_fit.strength.trace.converged,
          fmt("%.1f%% of %d fixed-effect truths within 2 SE (presence %.1f%%, strength %.1f%%; need >= 90%%); "
              "slowest 20x30 fit %.1f s (limit 60 s); 39x90 fit %.1f s (limit 600 s, generation %.1f s)",
              100 * rate, total + total_r, 100.0 * hits_r / total_r, 100.0 * hits / total, slowest, big_secs, gen)};
}

// --- 6: Wald size ---------------------------------------------------------------

Outcome wald_size() {
  std::mt19937_64 rng(606);
  std::normal_distribution<double> nd;
  const int reps = 500, groups = 20, per = 15, n = groups * per;
  int reject = 0;
  for (int r = 0; r < reps; ++r) {
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd y(n);
    std::vector<std::size_t> off{0};
    for (int g = 0; g < groups; ++g) {
      const double b = 0.8 * nd(rng);
      for (int i = 0; i < per; ++i) {
        const int row = g * per + i;
        X(row, 0) = 1.0;
        X(row, 1) = nd(rng);  // covariate with a real effect
        X(row, 2) = nd(rng);  // null covariate
        y[row] = 0.5 + 0.4 * X(row, 1) + b + nd(rng);
      }
      off.push_back(static_cast<std::size_t>((g + 1) * per));
    }
    const auto fit = reml_fit(oracle::toy_design(X, Eigen::MatrixXd::Ones(n, 1), y, off));
    reject += wald_f_test(fit, Eigen::RowVector3d::Unit(2).eval()).p < 0.05;
  }
  const double rate = double(reject) / reps;
  return {std::abs(rate - 0.05) <= 0.02, fmt("rejection rate %.3f over %d null replicates (target 0.05 +/- 0.02)", rate, reps)};
}

// --- 7: prediction intervals ---------------------------------------------------

Outcome interval_coverage() {
  const auto truth = default_truth();
  auto& reps = replicates();
  std::mt19937_64 rng(707);
  std::normal_distribution<double> nd;
  int draws = 0, cover_p = 0, cover_s = 0;
  for (const auto& rep : reps) {
    const auto& rec = *rep.study.table.centering;
    const auto tfit = fit_from_truth(truth, 30, rec, rep.study.subjects.size());
    const int vk = static_cast<int>(Covariate::k);
    std::uniform_real_distribution<double> grid(rec.min[vk], rec.max[vk]);
    std::uniform_int_distribution<int> node(0, 29);
    for (int i = 0; i < 100; ++i, ++draws) {
      const std::array<double, 1> g{grid(rng)};
      const std::array<int, 1> level{static_cast<int>(rng() % 2)};
      int j = node(rng), k = node(rng);
      while (k == j) k = node(rng);
      PredictOptions po;
      po.dyad = std::pair{std::min(j, k), std::max(j, k)};
      for (Scale sc : {Scale::probability, Scale::strength}) {
        // Truth as a degenerate "fit": its band gives the outcome's mean and spread.
        const auto t = predict_curve(tfit, sc, Covariate::k, g, level, po).points[0];
        const auto e = predict_curve(rep.fit, sc, Covariate::k, g, level, po).points[0];
        const bool prob = sc == Scale::probability;
        const double mean = prob ? std::log(t.point / (1 - t.point)) : std::atanh(t.point);
        const double hi = prob ? std::log(t.upper / (1 - t.upper)) : std::atanh(t.upper);
        const double sd = (hi - mean) / 1.959963984540054;
        const double z = mean + sd * nd(rng);
        const double outcome = prob ? expit(z) : std::tanh(z);
        (prob ? cover_p : cover_s) += e.lower <= outcome && outcome <= e.upper;
      }
    }
  }
  const double cp = double(cover_p) / draws, cs = double(cover_s) / draws;
  return {std::abs(cp - 0.95) <= 0.03 && std::abs(cs - 0.95) <= 0.03,
          fmt("coverage over %d draws: probability %.3f, strength %.3f (target 0.95 +/- 0.03)", draws, cp, cs)};
}

// --- 8: simulation round trip --------------------------------------------------

DyadTable replicate_table(const DyadTable& t, std::size_t copies) {
  DyadTable out;
  out.n_nodes = t.n_nodes;
  out.centering = t.centering;
  const auto n_sub = t.subjects.size();
  out.covariates.resize(static_cast<Eigen::Index>(t.size() * copies), t.covariates.cols());
  std::size_t row = 0;
  for (std::size_t c = 0; c < copies; ++c) {
    for (std::size_t s = 0; s < n_sub; ++s) {
      auto sub = t.subjects[s];
      sub.subject_id = fmt("sim_%04zu", c * n_sub + s + 1);
      out.subjects.push_back(sub);
      const auto [b, e] = t.subject_range(static_cast<int>(s));
      for (std::size_t i = b; i < e; ++i, ++row) {
        out.subject.push_back(static_cast<int>(c * n_sub + s));
        out.node_j.push_back(t.node_j[i]);
        out.node_k.push_back(t.node_k[i]);
        out.present.push_back(t.present[i]);
        out.weight.push_back(t.weight[i]);
        out.strength.push_back(t.strength[i]);
        out.covariates.row(static_cast<Eigen::Index>(row)) = t.covariates.row(static_cast<Eigen::Index>(i));
      }
    }
  }
  return out;
}

Outcome round_trip() {
  const auto& rep = replicates().front();
  const auto& table = rep.study.table;
  const auto sources = subject_covariate_rows(table);
  SimulationOptions so;
  so.compute_metrics = false;
  const auto ens = simulate_networks(rep.fit, sources, 100, 808, so);
  const auto sim_table = dyad_table_with_outcomes(replicate_table(table, 100 / sources.size()), ens.networks);
  const auto refit = fit_two_part(sim_table, rep.fit.spec);
  int total = 0;
  int hits = within_two_se(refit.presence, rep.fit.presence.beta, total);
  hits += within_two_se(refit.strength, rep.fit.strength.beta, total);
  const double rate = double(hits) / total;

  // Ten-dyad toy: presence frequencies at 10000 simulations.
  SyntheticTruth toy;
  for (auto f : toy.spec.fixed) {
    toy.beta_r[std::string(fixed_term_key(f))] = 0.0;
    toy.beta_s[std::string(fixed_term_key(f))] = 0.0;
  }
  toy.beta_r["intercept"] = -0.2;
  toy.beta_r["dist"] = 2.0;
  toy.beta_s["intercept"] = 0.4;
  CenteringRecord unit;
  for (int c = 0; c < kNumCovariates; ++c) unit.min[c] = -1.0, unit.max[c] = 1.0;
  const auto toy_fit = fit_from_truth(toy, 5, unit, 1);
  CovariateRows rows{"toy", Eigen::MatrixXd::Zero(10, kNumCovariates), std::nullopt};
  for (int r = 0; r < 10; ++r) rows.cov(r, static_cast<int>(Covariate::dist)) = -0.9 + 0.2 * r;
  const std::size_t n_sims = 10000;
  const auto toy_ens = simulate_networks(toy_fit, std::span(&rows, 1), n_sims, 8080, so);
  double worst_z = 0.0;
  for (int j = 0, r = 0; j < 5; ++j) {
    for (int k = j + 1; k < 5; ++k, ++r) {
      const double p = expit(-0.2 + 2.0 * rows.cov(r, static_cast<int>(Covariate::dist)));
      double count = 0;
      for (const auto& n : toy_ens.networks) count += n.weights(j, k) > 0.0;
      worst_z = std::max(worst_z, std::abs(count / n_sims - p) / std::sqrt(p * (1 - p) / n_sims));
    }
  }
  return {rate >= 0.90 && worst_z <= 3.0,
          fmt("refit on 100 simulated networks: %d/%d fixed effects within 2 SE of the original (%.1f%%, need >= "
              "90%%); toy presence frequencies max |z| %.2f (limit 3)",
              hits, total, 100 * rate, worst_z)};
}

// --- 9: GOF ---------------------------------------------------------------------

Outcome gof_fidelity() {
  const auto truth = default_truth();
  const auto& rep = replicates().front();
  const auto sources = subject_covariate_rows(rep.study.table);
  const auto& gen = rep.study.truth_fit;
  const auto self = simulate_networks(gen, sources, 200, 909);
  const auto reference = simulate_networks(gen, sources, 2000, 9090);
  const auto table = gof_compare(reference.metrics, self.metrics, "All");
  double worst = 0.0;
  for (const auto& r : table.rows) {
    const double se = std::hypot(r.observed.se, r.simulated.se);
    worst = std::max(worst, std::abs(r.simulated.mean - r.observed.mean) / se);
  }

  const std::string text = format_gof_table(gof_compare(rep.study.networks.empty() ? reference.metrics
                                                                                     : observed_metrics(rep.study.networks),
                                                        self.metrics, "All"));
  std::istringstream in(text);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  bool layout = lines.size() == 8 && lines[0] == "Condition,Metric,Observed (N=20),Simulated (N=200)" &&
                lines[1] == ",,Mean (SE),Mean (SE)";
  const std::vector<std::string> names{"Clustering coefficient (C)",     "Global Efficiency (E_glob)",
                                       "Characteristic path length (L)", "Mean Nodal Degree (K)",
                                       "Leverage Centrality (l)",        "Modularity (Q)"};
  const std::regex cell(R"(-?\d+\.\d{3} \(\d+\.\d{3}\))");
  for (std::size_t i = 0; layout && i < names.size(); ++i) {
    const auto& l = lines[i + 2];
    const std::string prefix = (i == 0 ? "All," : ",") + names[i] + ",";
    if (!l.starts_with(prefix)) {
      layout = false;
      break;
    }
    const auto rest = l.substr(prefix.size());
    const auto comma = rest.find(',');
    layout = comma != std::string::npos && std::regex_match(rest.substr(0, comma), cell) &&
             std::regex_match(rest.substr(comma + 1), cell);
  }
  return {worst <= 3.0 && layout,
          fmt("self-simulated ensemble (N=200) vs generator reference (N=2000): max |diff|/SE %.2f over 6 metrics "
              "(limit 3); table layout %s",
              worst, layout ? "exact" : "MISMATCH")};
}

// --- 10: thresholding -----------------------------------------------------------

Outcome thresholding() {
  const auto truth = default_truth();
  const int reps = 200, n_nodes = 12;
  std::vector<std::pair<int, int>> all;
  for (int j = 0; j < n_nodes; ++j)
    for (int k = j + 1; k < n_nodes; ++k) all.emplace_back(j, k);
  double fdp_sum = 0.0;
  int planted_kept = 0, planted_total = 0, noise_flagged = 0, noise_total = 0, untestable = 0, redrawn = 0;
  Stopwatch sw;
  for (int r = 0; r < reps; ++r) {
    std::mt19937_64 rng(stream_seed(1010, r));
    auto dyads = all;
    std::shuffle(dyads.begin(), dyads.end(), rng);
    dyads.resize(20);
    std::set<std::pair<int, int>> planted(dyads.begin(), dyads.begin() + 4);
    std::sort(dyads.begin(), dyads.end());
    ThresholdReport rep;
    // Small random studies occasionally confound group and sex; such designs are redrawn.
    for (std::uint64_t attempt = 0;; ++attempt) {
      const auto st = generate_synthetic_study(20, n_nodes, truth, stream_seed(1011 + attempt, r));
      auto nets = st.networks;
      for (auto& n : nets)
        for (const auto& [j, k] : planted)
          if (double w = n.weights(j, k); w > 0.0) n.weights(j, k) = n.weights(k, j) = std::tanh(std::atanh(w) + 0.5);
      try {
        rep = dyad_threshold_test(dyad_table_with_outcomes(st.table, nets), truth.spec, dyads, {});
        break;
      } catch (const SpecError&) {
        ++redrawn;
      }
    }
    int retained = 0, false_retained = 0;
    for (const auto& t : rep.rows) {
      if (!t.testable) {
        ++untestable;
        continue;
      }
      const bool is_planted = planted.count({t.j, t.k}) > 0;
      if (is_planted) {
        ++planted_total;
        planted_kept += !t.removal_candidate;
      } else {
        ++noise_total;
        noise_flagged += t.removal_candidate;
      }
      if (!t.removal_candidate) {
        ++retained;
        false_retained += !is_planted;
      }
    }
    fdp_sum += retained ? double(false_retained) / retained : 0.0;
  }
  const double fdr = fdp_sum / reps, kept = double(planted_kept) / planted_total;
  return {std::abs(fdr - 0.05) <= 0.03 && kept >= 0.95,
          fmt("%d replicates, 4 planted + 16 noise dyads each: realized FDR %.3f (nominal 0.05 +/- 0.03), planted "
              "retained %.3f, noise flagged %.3f, %d untestable, %d aliased designs redrawn; %.0f s",
              reps, fdr, kept, double(noise_flagged) / noise_total, untestable, redrawn, sw.seconds())};
}

// --- 11: determinism ------------------------------------------------------------

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return out;
}

Outcome determinism() {
  const auto root = fs::temp_directory_path() / "netmix_acceptance_determinism";
  fs::remove_all(root);
  std::vector<std::map<std::string, std::string>> trees;
  for (const char* threads : {"1", "4", "1"}) {
    const auto out = root / fmt("run%zu_threads%s", trees.size(), threads);
    std::ostringstream o, e;
    if (run_command({"demo", "--seed", "1111", "--threads", threads, "--out", out.string()}, o, e) != 0)
      return {false, "demo failed: " + e.str()};
    trees.push_back(tree(out));
  }
  std::size_t differing = 0;
  for (const auto& [name, bytes] : trees[0])
    differing += trees[1].count(name) == 0 || trees[1].at(name) != bytes || trees[2].count(name) == 0 ||
                 trees[2].at(name) != bytes;
  const bool same_sets = trees[0].size() == trees[1].size() && trees[0].size() == trees[2].size();
  fs::remove_all(root);
  return {differing == 0 && same_sets,
          fmt("demo pipeline rerun and with --threads 1/4/1: %zu files (fit archives, reports, ensemble, GOF table), "
              "%zu differ",
              trees[0].size(), differing)};
}

}  // namespace

int main(int argc, char** argv) {
  set_max_threads(static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"metric oracles", metric_oracles},      {"REML closed form", reml_closed_form},
      {"REML oracle", reml_oracle},            {"PQL reductions", pql_reductions},
      {"two-part recovery", recovery},         {"Wald size", wald_size},
      {"prediction-interval coverage", interval_coverage}, {"simulation round trip", round_trip},
      {"GOF fidelity", gof_fidelity},          {"thresholding", thresholding},
      {"determinism", determinism}};
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criterion(s) failed" : "acceptance: all passed")
            << std::endl;
  return failed ? 1 : 0;
}
