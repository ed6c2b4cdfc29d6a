#include "netmix/graphmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "netmix/errors.hpp"
#include "netmix/kernels.hpp"

namespace netmix {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::span<const double> col(const Eigen::MatrixXd& m, Eigen::Index c) {
  return {m.data() + c * m.rows(), static_cast<std::size_t>(m.rows())};
}
std::span<double> col(Eigen::MatrixXd& m, Eigen::Index c) {
  return {m.data() + c * m.rows(), static_cast<std::size_t>(m.rows())};
}

// One level of Louvain local moving. `a` is symmetric with self-loops on the
// diagonal (internal weight counted twice), so sum(a) = 2m at every level.
bool local_moving(const Eigen::MatrixXd& a, std::span<const int> order, std::vector<int>& comm) {
  const int n = static_cast<int>(a.rows());
  const double two_m = a.sum();
  const Eigen::VectorXd k = a.rowwise().sum();
  Eigen::VectorXd tot = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) tot[comm[i]] += k[i];

  std::vector<double> link(n, 0.0);
  std::vector<int> touched;
  bool any_move = false;
  for (int pass = 0; pass < 1000; ++pass) {
    bool moved = false;
    for (int i : order) {
      const int own = comm[i];
      touched.clear();
      for (int j = 0; j < n; ++j) {
        if (j == i || a(i, j) == 0.0) continue;
        const int c = comm[j];
        if (link[c] == 0.0 && std::find(touched.begin(), touched.end(), c) == touched.end()) touched.push_back(c);
        link[c] += a(i, j);
      }
      tot[own] -= k[i];
      int best = own;
      double best_score = link[own] - tot[own] * k[i] / two_m;
      std::sort(touched.begin(), touched.end());
      for (int c : touched) {
        const double score = link[c] - tot[c] * k[i] / two_m;
        if (score > best_score + 1e-14 * std::abs(best_score)) {
          best_score = score;
          best = c;
        }
      }
      tot[best] += k[i];
      if (best != own) {
        comm[i] = best;
        moved = true;
        any_move = true;
      }
      for (int c : touched) link[c] = 0.0;
      link[own] = 0.0;
    }
    if (!moved) break;
  }
  return any_move;
}

}  // namespace

int Partition::n_communities() const {
  return community.empty() ? 0 : *std::max_element(community.begin(), community.end()) + 1;
}

double weighted_degree(const SubjectNetwork& net, int node) { return net.weights.row(node).sum(); }

Eigen::VectorXd weighted_degrees(const SubjectNetwork& net) {
  Eigen::VectorXd k(net.n());
  for (int i = 0; i < net.n(); ++i) k[i] = weighted_degree(net, i);
  return k;
}

Eigen::VectorXd weighted_clustering_all(const SubjectNetwork& net) {
  const int n = net.n();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  const double wmax = net.weights.maxCoeff();
  if (n == 0 || wmax <= 0.0) return out;
  const Eigen::MatrixXd cube = (net.weights / wmax).unaryExpr([](double v) { return std::cbrt(v); });
  Eigen::VectorXd u(n);
  for (int i = 0; i < n; ++i) {
    int kbin = 0;
    for (int j = 0; j < n; ++j)
      if (net.weights(i, j) > 0.0) ++kbin;
    if (kbin < 2) continue;
    u.setZero();
    std::span<double> us(u.data(), n);
    for (int j = 0; j < n; ++j)
      if (cube(i, j) != 0.0) kernels::axpy(cube(i, j), col(cube, j), us);
    double t = 0.0;
    for (int h = 0; h < n; ++h) t += cube(i, h) * u[h];
    out[i] = t / (static_cast<double>(kbin) * (kbin - 1));
  }
  return out;
}

double weighted_clustering(const SubjectNetwork& net, int node) { return weighted_clustering_all(net)[node]; }

Eigen::MatrixXd shortest_path_lengths(const SubjectNetwork& net) {
  const int n = net.n();
  Eigen::MatrixXd d(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) d(i, j) = i == j ? 0.0 : (net.weights(i, j) > 0.0 ? 1.0 / net.weights(i, j) : kInf);
  for (int k = 0; k < n; ++k) {
    const std::span<const double> via = col(d, k);
    for (int j = 0; j < n; ++j) {
      if (j == k || d(k, j) == kInf) continue;
      kernels::min_plus_relax(col(d, j), via, d(k, j));
    }
  }
  return d;
}

double nodal_efficiency(const Eigen::MatrixXd& paths, int node) {
  const auto n = paths.rows();
  if (n < 2) return 0.0;
  double s = 0.0;
  for (Eigen::Index j = 0; j < n; ++j)
    if (j != node && paths(node, j) != kInf) s += 1.0 / paths(node, j);
  return s / static_cast<double>(n - 1);
}

std::optional<double> leverage_centrality(const SubjectNetwork& net, int node, bool binary_degree) {
  const int n = net.n();
  auto degree = [&](int i) {
    if (!binary_degree) return net.weights.row(i).sum();
    return static_cast<double>((net.weights.row(i).array() > 0.0).count());
  };
  const double ki = degree(node);
  if (ki <= 0.0) return std::nullopt;
  double s = 0.0;
  int neighbors = 0;
  for (int j = 0; j < n; ++j) {
    if (j == node || net.weights(node, j) <= 0.0) continue;
    const double kj = degree(j);
    s += (ki - kj) / (ki + kj);
    ++neighbors;
  }
  return s / neighbors;
}

double modularity_of(const Eigen::MatrixXd& weights, std::span<const int> community) {
  const auto n = weights.rows();
  const double two_m = weights.sum();
  if (two_m <= 0.0) throw DataError("no edges");
  const int nc = community.empty() ? 0 : *std::max_element(community.begin(), community.end()) + 1;
  Eigen::VectorXd in = Eigen::VectorXd::Zero(nc), tot = Eigen::VectorXd::Zero(nc);
  for (Eigen::Index i = 0; i < n; ++i) {
    tot[community[i]] += weights.row(i).sum();
    for (Eigen::Index j = 0; j < n; ++j)
      if (community[i] == community[j]) in[community[i]] += weights(i, j);
  }
  double q = 0.0;
  for (int c = 0; c < nc; ++c) q += in[c] / two_m - (tot[c] / two_m) * (tot[c] / two_m);
  return q;
}

std::vector<int> louvain_order(int n, std::uint64_t seed) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // explicit Fisher-Yates; std::shuffle's sequence is library-specific
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  return order;
}

Partition modularity(const SubjectNetwork& net, std::uint64_t seed) {
  const auto order = louvain_order(net.n(), seed);
  return modularity_with_order(net, order);
}

Partition modularity_with_order(const SubjectNetwork& net, std::span<const int> order) {
  const int n = net.n();
  if (n == 0 || !(net.weights.sum() > 0.0)) throw DataError("no edges");

  // membership of each original node in the current level's super-nodes
  std::vector<int> member(n);
  std::iota(member.begin(), member.end(), 0);
  Eigen::MatrixXd a = net.weights;
  std::vector<int> level_order(order.begin(), order.end());

  for (int level = 0; level < 64; ++level) {
    const int m = static_cast<int>(a.rows());
    std::vector<int> comm(m);
    std::iota(comm.begin(), comm.end(), 0);
    if (!local_moving(a, level_order, comm)) break;

    // relabel communities by first appearance along the visiting order
    std::vector<int> relabel(m, -1);
    int next = 0;
    for (int i : level_order)
      if (relabel[comm[i]] < 0) relabel[comm[i]] = next++;
    for (int& c : comm) c = relabel[c];

    Eigen::MatrixXd agg = Eigen::MatrixXd::Zero(next, next);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) agg(comm[i], comm[j]) += a(i, j);
    for (int& x : member) x = comm[x];
    a = std::move(agg);
    level_order.resize(next);
    std::iota(level_order.begin(), level_order.end(), 0);
    if (next == 1) break;
  }

  Partition p;
  std::vector<int> relabel(n, -1);
  int next = 0;
  p.community.resize(n);
  for (int i = 0; i < n; ++i) {
    if (relabel[member[i]] < 0) relabel[member[i]] = next++;
    p.community[i] = relabel[member[i]];
  }
  p.q = modularity_of(net.weights, p.community);
  return p;
}

PathLengthSummary characteristic_path_length(const Eigen::MatrixXd& paths) {
  const auto n = paths.rows();
  double s = 0.0;
  std::size_t finite = 0, excluded = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (paths(i, j) == kInf) {
        ++excluded;
      } else {
        s += paths(i, j);
        ++finite;
      }
    }
  if (finite == 0) throw DataError("characteristic path length undefined: all node pairs are disconnected");
  return {s / static_cast<double>(finite), excluded};
}

MetricSuite metric_suite(const SubjectNetwork& net, const MetricOptions& opts) {
  const int n = net.n();
  MetricSuite out;
  const Partition part = modularity(net, opts.louvain_seed);
  const Eigen::MatrixXd paths = shortest_path_lengths(net);

  auto& nodal = out.nodal;
  nodal.degree = weighted_degrees(net);
  nodal.clustering = weighted_clustering_all(net);
  nodal.efficiency.resize(n);
  nodal.leverage.resize(n);
  for (int i = 0; i < n; ++i) {
    nodal.efficiency[i] = nodal_efficiency(paths, i);
    nodal.leverage[i] = leverage_centrality(net, i, opts.binary_leverage);
  }

  auto& g = out.network;
  g.clustering = nodal.clustering.mean();
  g.global_efficiency = nodal.efficiency.mean();
  const auto cpl = characteristic_path_length(paths);
  g.path_length = cpl.mean;
  g.disconnected_pairs = cpl.excluded_pairs;
  g.mean_degree = nodal.degree.mean();
  double ls = 0.0;
  int lc = 0;
  for (const auto& l : nodal.leverage)
    if (l) {
      ls += *l;
      ++lc;
    }
  g.mean_leverage = ls / lc;
  g.modularity = part.q;
  g.partition = part.community;
  return out;
}

}  // namespace netmix
