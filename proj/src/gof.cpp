#include <cmath>
#include <cstdio>

#include "netmix/errors.hpp"
#include "netmix/parallel.hpp"
#include "netmix/predictsim.hpp"

namespace netmix {

const std::vector<std::string>& gof_metric_labels() {
  static const std::vector<std::string> labels{
      "Clustering coefficient (C)", "Global Efficiency (E_glob)", "Characteristic path length (L)",
      "Mean Nodal Degree (K)",      "Leverage Centrality (l)",    "Modularity (Q)"};
  return labels;
}

std::vector<double> gof_metric_values(const NetworkMetrics& m) {
  return {m.clustering, m.global_efficiency, m.path_length, m.mean_degree, m.mean_leverage, m.modularity};
}

MeanSe mean_se(std::span<const double> v) {
  MeanSe out;
  if (v.empty()) return out;
  double sum = 0.0;
  for (double x : v) sum += x;
  out.mean = sum / static_cast<double>(v.size());
  if (v.size() < 2) return out;
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return out;
}

std::vector<NetworkMetrics> observed_metrics(std::span<const SubjectNetwork> networks, const MetricOptions& opts) {
  std::vector<NetworkMetrics> out(networks.size());
  parallel_for(networks.size(), [&](std::size_t i) { out[i] = metric_suite(networks[i], opts).network; });
  return out;
}

GofTable gof_compare(std::span<const NetworkMetrics> observed, std::span<const NetworkMetrics> simulated,
                     const std::string& condition) {
  if (observed.empty()) throw DataError("observed arm is empty");
  if (simulated.empty()) throw DataError("simulated arm is empty");
  GofTable t;
  t.n_observed = observed.size();
  t.n_simulated = simulated.size();
  const auto& labels = gof_metric_labels();
  for (std::size_t k = 0; k < labels.size(); ++k) {
    std::vector<double> a, b;
    for (const auto& m : observed) a.push_back(gof_metric_values(m)[k]);
    for (const auto& m : simulated) b.push_back(gof_metric_values(m)[k]);
    t.rows.push_back({condition, labels[k], mean_se(a), mean_se(b)});
  }
  return t;
}

std::string format_gof_table(const GofTable& t) {
  auto cell = [](const MeanSe& v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f (%.3f)", v.mean, v.se);
    return std::string(buf);
  };
  std::string out = "Condition,Metric,Observed (N=" + std::to_string(t.n_observed) + "),Simulated (N=" +
                    std::to_string(t.n_simulated) + ")\n,,Mean (SE),Mean (SE)\n";
  std::string last;
  for (const auto& r : t.rows) {
    out += (r.condition == last ? std::string() : r.condition) + "," + r.metric + "," + cell(r.observed) + "," +
           cell(r.simulated) + "\n";
    last = r.condition;
  }
  return out;
}

}  // namespace netmix
