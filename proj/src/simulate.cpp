#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "netmix/csv.hpp"
#include "netmix/errors.hpp"
#include "netmix/parallel.hpp"
#include "netmix/predictsim.hpp"

namespace netmix {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  std::uint64_t z = x + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double expit(double e) { return 1.0 / (1.0 + std::exp(-e)); }

Eigen::VectorXd draw_effects(const LmmFit& part, const ModelSpec& spec, int n_nodes, std::mt19937_64& rng) {
  std::vector<std::string> cols, names;
  std::vector<int> comp;
  random_layout(spec, n_nodes, cols, comp, names);
  std::normal_distribution<double> nd;
  Eigen::VectorXd b(static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) b[static_cast<Eigen::Index>(c)] = std::sqrt(part.vc.tau[comp[c]]) * nd(rng);
  return b;
}

std::string network_name(std::size_t m, std::size_t total) {
  std::string digits = std::to_string(m + 1);
  const std::size_t width = std::max<std::size_t>(4, std::to_string(total).size());
  return "sim_" + std::string(width - std::min(width, digits.size()), '0') + digits;
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) { return splitmix64(seed ^ splitmix64(index)); }

std::vector<CovariateRows> subject_covariate_rows(const DyadTable& t) {
  std::vector<CovariateRows> out;
  for (std::size_t s = 0; s < t.subjects.size(); ++s) {
    const auto [b, e] = t.subject_range(static_cast<int>(s));
    out.push_back({t.subjects[s].subject_id,
                   t.covariates.middleRows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(e - b)), s});
  }
  return out;
}

CovariateRows group_mean_rows(const DyadTable& t, int level) {
  const std::size_t nd = static_cast<std::size_t>(t.n_nodes) * (t.n_nodes - 1) / 2;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nd), kNumCovariates);
  int count = 0;
  for (std::size_t s = 0; s < t.subjects.size(); ++s) {
    if (t.subjects[s].group != level) continue;
    const auto [b, e] = t.subject_range(static_cast<int>(s));
    sum += t.covariates.middleRows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(e - b));
    ++count;
  }
  if (count == 0) throw DataError("no subjects at group level " + std::to_string(level));
  return {"group" + std::to_string(level) + "_mean", sum / count, std::nullopt};
}

SimulatedEnsemble simulate_networks(const TwoPartFit& fit, std::span<const CovariateRows> sources, std::size_t n_sims,
                                    std::uint64_t seed, const SimulationOptions& opts) {
  if (sources.empty()) throw DataError("no covariate rows to simulate from");
  const int n = fit.n_nodes;
  const std::size_t nd = static_cast<std::size_t>(n) * (n - 1) / 2;
  for (const auto& s : sources) {
    if (static_cast<std::size_t>(s.cov.rows()) != nd || s.cov.cols() != kNumCovariates)
      throw DataError("covariate rows for '" + s.label + "' do not match a " + std::to_string(n) + "-node network");
    if (opts.use_blups && !s.subject) throw SpecError("--use-blups needs per-subject covariate rows");
  }

  SimulatedEnsemble ens;
  ens.seed = seed;
  ens.use_blups = opts.use_blups;
  ens.networks.resize(n_sims);
  ens.source_labels.resize(n_sims);
  std::vector<std::size_t> fallbacks(n_sims, 0);
  const double sd = std::sqrt(fit.strength.vc.sigma2);
  const double below_one = std::nextafter(1.0, 0.0);

  parallel_for(n_sims, [&](std::size_t m) {
    const CovariateRows& src = sources[m % sources.size()];
    std::mt19937_64 rng(stream_seed(seed, m));
    Eigen::VectorXd br, bs;
    if (opts.use_blups) {
      br = fit.presence.blups.row(static_cast<Eigen::Index>(*src.subject)).transpose();
      bs = fit.strength.blups.row(static_cast<Eigen::Index>(*src.subject)).transpose();
    } else {
      br = draw_effects(fit.presence, fit.presence_spec, n, rng);
      bs = draw_effects(fit.strength, fit.strength_spec, n, rng);
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    CovariateVector cov{};
    std::size_t row = 0;
    for (int j = 0; j < n; ++j) {
      for (int k = j + 1; k < n; ++k, ++row) {
        for (int c = 0; c < kNumCovariates; ++c) cov[c] = src.cov(static_cast<Eigen::Index>(row), c);
        const double eta = fixed_design_row(fit.presence_spec, cov).dot(fit.presence.beta) +
                           random_design_row(fit.presence_spec, cov, j, k, n).dot(br);
        if (!(unif(rng) < expit(eta))) continue;
        const double mu = fixed_design_row(fit.strength_spec, cov).dot(fit.strength.beta) +
                          random_design_row(fit.strength_spec, cov, j, k, n).dot(bs);
        double weight = 0.0;
        for (int attempt = 0; attempt < 1000; ++attempt) {
          const double r = inv_fisher_z(mu + sd * normal(rng));
          if (r > 0.0) {
            weight = std::min(r, below_one);
            break;
          }
        }
        if (weight == 0.0) {
          weight = std::numeric_limits<double>::min();
          ++fallbacks[m];
        }
        w(j, k) = w(k, j) = weight;
      }
    }
    ens.networks[m] = SubjectNetwork{network_name(m, n_sims), std::move(w)};
    ens.source_labels[m] = src.label;
  });
  for (auto f : fallbacks) ens.rejection_fallbacks += f;

  if (opts.compute_metrics) {
    ens.metrics.resize(n_sims);
    parallel_for(n_sims, [&](std::size_t m) {
      try {
        ens.metrics[m] = metric_suite(ens.networks[m], opts.metrics).network;
      } catch (const DataError& e) {
        throw DataError("simulated network " + ens.networks[m].subject_id + ": " + e.what());
      }
    });
  }
  return ens;
}

void write_ensemble(const std::filesystem::path& dir, const SimulatedEnsemble& ens) {
  std::filesystem::create_directories(dir / "networks");
  for (const auto& net : ens.networks) write_connection_matrix(dir / "networks" / (net.subject_id + ".csv"), net);
  std::ofstream man(dir / "manifest.csv", std::ios::binary);
  if (!man) throw DataError("cannot write ensemble manifest in '" + dir.string() + "'");
  man << "network,file,source,stream_seed,use_blups\n";
  for (std::size_t m = 0; m < ens.networks.size(); ++m)
    man << ens.networks[m].subject_id << "," << "networks/" << ens.networks[m].subject_id << ".csv," << ens.source_labels[m] << ","
        << stream_seed(ens.seed, m) << "," << (ens.use_blups ? 1 : 0) << "\n";
  man << "# seed," << ens.seed << "\n# rejection_fallbacks," << ens.rejection_fallbacks << "\n";
  if (ens.metrics.empty()) return;
  std::ofstream met(dir / "network_metrics.csv", std::ios::binary);
  met << "network";
  for (const char* h : {"C", "E_glob", "L", "K", "l", "Q"}) met << "," << h;
  met << "\n";
  for (std::size_t m = 0; m < ens.metrics.size(); ++m) {
    met << ens.networks[m].subject_id;
    for (double v : gof_metric_values(ens.metrics[m])) met << "," << csv::format_double(v);
    met << "\n";
  }
}

}  // namespace netmix
