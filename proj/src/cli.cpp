#include "netmix/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "netmix/archive.hpp"
#include "netmix/csv.hpp"
#include "netmix/errors.hpp"
#include "netmix/graphmetrics.hpp"
#include "netmix/inference.hpp"
#include "netmix/kernels.hpp"
#include "netmix/parallel.hpp"
#include "netmix/predictsim.hpp"
#include "netmix/synthetic.hpp"

namespace netmix {

namespace fs = std::filesystem;

namespace {

struct Config {
  fs::path networks_dir, atlas, subjects, spec, out = "netmix_out", fit, covariate_networks, ensemble, truth;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  double alpha = 0.05;
  std::string correction = "fdr";
  std::size_t n_sims = 100;
  std::string grid, vary = "k", group_levels, dyads, dyad, condition = "All", simd = "auto";
  std::optional<double> weak_cutoff, min_weight;
  double level = 0.95;
  bool dump_design = false, use_blups = false, per_group = false, binary_leverage = false, no_reduce = false;
  int n_subjects = 20, n_nodes = 30;
};

class Usage : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Study {
  std::vector<SubjectNetwork> networks;
  std::vector<SubjectCovariates> subjects;
  NodeAtlas atlas;
  DistanceMatrix dist;
  std::vector<MetricSuite> metrics;  // of the covariate networks
  DyadTable table;  // centered
};

// --- helpers ------------------------------------------------------------------

void require(const fs::path& p, const char* flag) {
  if (p.empty()) throw Usage(std::string(flag) + " is required");
  if (!fs::exists(p)) throw DataError(std::string(flag) + " path '" + p.string() + "' does not exist");
}

MetricOptions metric_options(const Config& c) {
  MetricOptions m;
  m.binary_leverage = c.binary_leverage;
  return m;
}

std::vector<MetricSuite> compute_metrics(const std::vector<SubjectNetwork>& nets, const MetricOptions& opts) {
  std::vector<MetricSuite> out(nets.size());
  parallel_for(nets.size(), [&](std::size_t i) {
    try {
      out[i] = metric_suite(nets[i], opts);
    } catch (const DataError& e) {
      throw DataError("network '" + nets[i].subject_id + "': " + e.what());
    }
  });
  return out;
}

std::vector<SubjectNetwork> load_networks(const Config& c, const fs::path& dir) {
  LoadOptions lo;
  lo.min_weight = c.min_weight;
  auto nets = load_networks_dir(dir, lo);
  if (nets.empty()) throw DataError("no network files (*.csv) in '" + dir.string() + "'");
  return nets;
}

Study load_study(const Config& c, bool with_table) {
  require(c.networks_dir, "--networks-dir");
  Study st;
  st.networks = load_networks(c, c.networks_dir);
  if (!with_table) return st;
  require(c.atlas, "--atlas");
  require(c.subjects, "--subjects");
  st.atlas = load_atlas(c.atlas);
  st.subjects = load_subjects(c.subjects);
  st.dist = compute_distances(st.atlas);
  if (!c.covariate_networks.empty()) {
    require(c.covariate_networks, "--covariate-networks");
    const auto cov_nets = load_networks(c, c.covariate_networks);
    if (cov_nets.size() != st.networks.size())
      throw DataError("--covariate-networks holds " + std::to_string(cov_nets.size()) + " networks, --networks-dir " +
                      std::to_string(st.networks.size()));
    for (std::size_t i = 0; i < cov_nets.size(); ++i)
      if (cov_nets[i].subject_id != st.networks[i].subject_id)
        throw DataError("covariate network '" + cov_nets[i].subject_id + "' does not match outcome network '" +
                        st.networks[i].subject_id + "'");
    st.metrics = compute_metrics(cov_nets, metric_options(c));
    const auto table = center_covariates(build_dyad_table(cov_nets, st.metrics, st.subjects, st.dist));
    st.table = dyad_table_with_outcomes(table, st.networks);
  } else {
    st.metrics = compute_metrics(st.networks, metric_options(c));
    st.table = center_covariates(build_dyad_table(st.networks, st.metrics, st.subjects, st.dist));
  }
  return st;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

fs::path fit_path(const Config& c, bool prefer_reduced) {
  if (!c.fit.empty()) {
    require(c.fit, "--fit");
    return c.fit;
  }
  if (prefer_reduced && fs::exists(c.out / "fit_reduced.json")) return c.out / "fit_reduced.json";
  if (fs::exists(c.out / "fit.json")) return c.out / "fit.json";
  throw Usage("--fit is required (no fit.json under --out)");
}

std::vector<int> parse_levels(const std::string& text) {
  std::vector<int> out;
  for (const auto& f : csv::split_line(text)) {
    if (f.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(f, &used));
      if (used != f.size()) throw std::invalid_argument(f);
    } catch (const std::exception&) {
      throw Usage("--group-levels expects comma-separated integers, got '" + text + "'");
    }
  }
  if (out.empty()) throw Usage("--group-levels is empty");
  return out;
}

double parse_number(const std::string& s, const char* flag) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Usage(std::string(flag) + ": '" + s + "' is not a number");
}

// "a:b:n" or "v1,v2,...".
std::vector<double> parse_grid(const std::string& text, double lo, double hi) {
  std::vector<double> g;
  if (text.empty()) {
    for (int i = 0; i < 25; ++i) g.push_back(lo + (hi - lo) * i / 24.0);
    return g;
  }
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw Usage("--grid expects start:stop:count");
    const double a = parse_number(parts[0], "--grid"), b = parse_number(parts[1], "--grid");
    const double n = parse_number(parts[2], "--grid");
    if (n < 2 || n != std::floor(n)) throw Usage("--grid count must be an integer >= 2");
    for (int i = 0; i < static_cast<int>(n); ++i) g.push_back(a + (b - a) * i / (n - 1));
    return g;
  }
  for (const auto& f : csv::split_line(text)) g.push_back(parse_number(f, "--grid"));
  return g;
}

std::vector<std::pair<int, int>> parse_dyads(const std::string& text, int n_nodes) {
  std::vector<std::pair<int, int>> out;
  if (text == "all") {
    for (int j = 0; j < n_nodes; ++j)
      for (int k = j + 1; k < n_nodes; ++k) out.emplace_back(j, k);
    return out;
  }
  for (const auto& f : csv::split_line(text)) {
    const auto dash = f.find('-');
    if (dash == std::string::npos) throw Usage("--dyads expects pairs like 1-2,3-7 or 'all'");
    int j = static_cast<int>(parse_number(f.substr(0, dash), "--dyads"));
    int k = static_cast<int>(parse_number(f.substr(dash + 1), "--dyads"));
    if (j > k) std::swap(j, k);
    if (j < 1 || k > n_nodes || j == k) throw Usage("dyad '" + f + "' is outside 1.." + std::to_string(n_nodes));
    out.emplace_back(j - 1, k - 1);
  }
  return out;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << v;
  return s.str();
}

std::size_t count_true(const std::vector<bool>& v) { return static_cast<std::size_t>(std::count(v.begin(), v.end(), true)); }

// --- subcommands --------------------------------------------------------------

void cmd_metrics(const Config& c, std::ostream& out) {
  const auto st = load_study(c, false);
  const auto metrics = compute_metrics(st.networks, metric_options(c));
  std::string net = "subject,C,E_glob,L,K,l,Q,disconnected_pairs,n_communities\n";
  std::string nodal = "subject,node,clustering,efficiency,degree,leverage\n";
  for (std::size_t s = 0; s < metrics.size(); ++s) {
    const auto& m = metrics[s];
    net += st.networks[s].subject_id;
    for (double v : gof_metric_values(m.network)) net += "," + csv::format_double(v);
    int nc = 0;
    for (int lbl : m.network.partition) nc = std::max(nc, lbl + 1);
    net += "," + std::to_string(m.network.disconnected_pairs) + "," + std::to_string(nc) + "\n";
    for (Eigen::Index i = 0; i < m.nodal.clustering.size(); ++i) {
      const auto& lev = m.nodal.leverage[static_cast<std::size_t>(i)];
      nodal += st.networks[s].subject_id + "," + std::to_string(i + 1) + "," +
               csv::format_double(m.nodal.clustering[i]) + "," + csv::format_double(m.nodal.efficiency[i]) + "," +
               csv::format_double(m.nodal.degree[i]) + "," + (lev ? csv::format_double(*lev) : "NA") + "\n";
    }
  }
  write_text(c.out / "network_metrics.csv", net);
  write_text(c.out / "nodal_metrics.csv", nodal);
  out << "metrics: " << metrics.size() << " networks, " << st.networks.front().n() << " nodes\n";
  const auto obs = observed_metrics(st.networks, metric_options(c));
  GofTable t = gof_compare(obs, obs);
  const auto& labels = gof_metric_labels();
  for (std::size_t k = 0; k < labels.size(); ++k)
    out << "  " << std::left << std::setw(34) << labels[k] << fmt(t.rows[k].observed.mean, 3) << " ("
        << fmt(t.rows[k].observed.se, 3) << ")\n";
  out << "wrote " << (c.out / "network_metrics.csv").string() << ", " << (c.out / "nodal_metrics.csv").string()
      << "\n";
}

void print_part(std::ostream& out, const char* name, const LmmFit& f, bool strength) {
  out << "  " << name << ": " << f.n_rows << " rows, -2 REML log-lik " << fmt(-2.0 * f.reml_loglik, 3) << ", "
      << count_true(f.vc.at_bound) << "/" << f.vc.names.size() << " variance components at 0";
  if (strength) out << ", sigma2 " << fmt(f.vc.sigma2, 5);
  out << "\n";
}

void cmd_fit(const Config& c, std::ostream& out) {
  if (c.spec.empty()) throw Usage("--spec is required");
  require(c.spec, "--spec");
  const ModelSpec spec = load_model_spec(c.spec);
  const auto st = load_study(c, true);
  const auto t0 = std::chrono::steady_clock::now();
  const TwoPartFit fit = fit_two_part(st.table, spec);
  save_fit_archive(c.out / "fit.json", fit);
  out << "fit: " << st.table.subjects.size() << " subjects, " << st.table.n_nodes << " nodes, " << st.table.size()
      << " dyad rows\n";
  print_part(out, "presence", fit.presence, false);
  out << "    PQL iterations " << fit.presence.pql_iterations << "\n";
  print_part(out, "strength", fit.strength, true);
  if (st.table.centering && st.table.centering->leverage_fallbacks > 0)
    out << "  note: " << st.table.centering->leverage_fallbacks
        << " dyad rows had undefined leverage (isolated node) and were set to the mean\n";
  if (c.dump_design) {
    dump_design(c.out, build_design(st.table, fit.presence_spec), "presence");
    dump_design(c.out, build_design(st.table, fit.strength_spec), "strength");
  }
  out << "wrote " << (c.out / "fit.json").string();
  if (!c.no_reduce) {
    const TwoPartFit reduced = reduce_two_part(st.table, fit);
    save_fit_archive(c.out / "fit_reduced.json", reduced);
    out << ", " << (c.out / "fit_reduced.json").string() << " (" << reduced.presence.fixed_names.size() << "+"
        << reduced.strength.fixed_names.size() << " fixed, " << reduced.presence.vc.names.size() << "+"
        << reduced.strength.vc.names.size() << " variance components)";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out << "\n  elapsed " << fmt(secs, 1) << " s\n";
}

void cmd_report(const Config& c, std::ostream& out) {
  const auto path = fit_path(c, true);
  const auto fit = load_fit_archive(path);
  const auto rep = explain_report(fit);
  write_text(c.out / "report.csv", format_report_csv(rep));
  write_text(c.out / "report.txt", format_report_text(rep, c.alpha));
  out << "report for " << path.string() << "\n";
  out << std::left << std::setw(18) << "Parameter" << std::right << std::setw(11) << "Estimate" << std::setw(10)
      << "SE" << std::setw(11) << "P-value" << "\n";
  for (const auto& r : rep.rows) {
    // Display names carry multi-byte characters; pad by code points.
    std::size_t glyphs = 0;
    for (unsigned char ch : r.name) glyphs += (ch & 0xC0) != 0x80;
    out << r.name << std::string(glyphs < 18 ? 18 - glyphs : 1, ' ') << std::right << std::setw(11)
        << fmt(r.estimate) << std::setw(10) << fmt(r.se) << std::setw(11) << format_p_value(r.p) << "\n";
  }
  out << "presence: " << group_difference_label(classify_group_difference(rep, Response::presence, c.alpha)) << "\n";
  out << "strength: " << group_difference_label(classify_group_difference(rep, Response::strength, c.alpha)) << "\n";
  for (const auto& n : rep.notes) out << "note: " << n << "\n";
  out << "wrote " << (c.out / "report.csv").string() << ", " << (c.out / "report.txt").string() << "\n";
}

void cmd_predict(const Config& c, std::ostream& out) {
  const auto path = fit_path(c, false);
  const auto fit = load_fit_archive(path);
  const auto vary = covariate_from_name(c.vary);
  if (!vary) throw Usage("--vary: unknown covariate '" + c.vary + "'");
  const int vi = static_cast<int>(*vary);
  const auto grid = parse_grid(c.grid, fit.centering.min[vi], fit.centering.max[vi]);
  const auto levels = parse_levels(c.group_levels.empty() ? "0,1" : c.group_levels);
  PredictOptions po;
  po.level = c.level;
  if (!c.dyad.empty()) {
    const auto d = parse_dyads(c.dyad, fit.n_nodes);
    if (d.size() != 1) throw Usage("--dyad expects a single pair like 3-7");
    po.dyad = d.front();
  }
  for (Scale scale : {Scale::probability, Scale::strength}) {
    const auto curve = predict_curve(fit, scale, *vary, grid, levels, po);
    const std::string stem = std::string("prediction_") + (scale == Scale::probability ? "probability_" : "strength_") +
                             (c.vary == "dist^2" ? "dist2" : c.vary);
    write_prediction_csv(c.out / (stem + ".csv"), curve);
    write_prediction_svg(c.out / (stem + ".svg"), curve);
    out << (scale == Scale::probability ? "connection probability" : "connection strength") << " vs " << c.vary
        << " (" << grid.size() << " grid points, groups";
    for (int l : levels) out << " " << l;
    out << "): wrote " << (c.out / (stem + ".csv")).string() << "\n";
    for (const auto& w : curve.warnings) out << "  warning: " << w << "\n";
  }
}

std::vector<CovariateRows> simulation_sources(const Config& c, const Study& st) {
  if (c.group_levels.empty()) return subject_covariate_rows(st.table);
  std::vector<CovariateRows> src;
  for (int l : parse_levels(c.group_levels)) src.push_back(group_mean_rows(st.table, l));
  return src;
}

void check_layout(const TwoPartFit& fit, const Study& st) {
  if (fit.n_nodes != st.table.n_nodes)
    throw DataError("fit has " + std::to_string(fit.n_nodes) + " nodes, the data " + std::to_string(st.table.n_nodes));
}

SimulatedEnsemble run_simulation(const Config& c, const TwoPartFit& fit, const Study& st) {
  if (!c.seed) throw Usage("--seed is required for simulation");
  if (c.n_sims == 0) throw Usage("--n-sims must be positive");
  SimulationOptions so;
  so.use_blups = c.use_blups;
  so.metrics = metric_options(c);
  if (c.use_blups && static_cast<std::size_t>(fit.presence.blups.rows()) != st.table.subjects.size())
    throw DataError("--use-blups: the fit has BLUPs for " + std::to_string(fit.presence.blups.rows()) +
                    " subjects, the data " + std::to_string(st.table.subjects.size()));
  return simulate_networks(fit, simulation_sources(c, st), c.n_sims, *c.seed, so);
}

void cmd_simulate(const Config& c, std::ostream& out) {
  const auto fit = load_fit_archive(fit_path(c, false));
  const auto st = load_study(c, true);
  check_layout(fit, st);
  const auto ens = run_simulation(c, fit, st);
  const fs::path dir = c.out / "simulated";
  write_ensemble(dir, ens);
  std::size_t edges = 0;
  for (const auto& n : ens.networks) edges += n.n_present();
  out << "simulate: " << ens.networks.size() << " networks (seed " << ens.seed << ", "
      << (ens.use_blups ? "fitted subject effects" : "new random effects") << "), mean density "
      << fmt(static_cast<double>(edges) / (ens.networks.size() * ens.networks.front().n_dyads()), 3) << "\n";
  if (ens.rejection_fallbacks)
    out << "  note: " << ens.rejection_fallbacks << " strength draws hit the rejection limit\n";
  out << "wrote " << dir.string() << "\n";
}

void cmd_gof(const Config& c, std::ostream& out) {
  const auto st = load_study(c, c.ensemble.empty());
  const auto observed = observed_metrics(st.networks, metric_options(c));
  std::vector<NetworkMetrics> simulated;
  if (!c.ensemble.empty()) {
    require(c.ensemble, "--ensemble");
    const fs::path dir = fs::exists(c.ensemble / "networks") ? c.ensemble / "networks" : c.ensemble;
    simulated = observed_metrics(load_networks(c, dir), metric_options(c));
  } else {
    const auto fit = load_fit_archive(fit_path(c, false));
    check_layout(fit, st);
    simulated = run_simulation(c, fit, st).metrics;
  }
  const auto table = gof_compare(observed, simulated, c.condition);
  const std::string text = format_gof_table(table);
  write_text(c.out / "gof.csv", text);
  out << text << "wrote " << (c.out / "gof.csv").string() << "\n";
}

void cmd_threshold(const Config& c, std::ostream& out) {
  const auto st = load_study(c, true);
  ModelSpec spec;
  if (!c.spec.empty()) {
    require(c.spec, "--spec");
    spec = load_model_spec(c.spec);
  } else if (!c.fit.empty() || fs::exists(c.out / "fit.json")) {
    spec = load_fit_archive(fit_path(c, true)).strength_spec;
  } else {
    throw Usage("--spec or --fit is required");
  }
  if (c.dyads.empty()) throw Usage("--dyads is required (pairs like 1-2,3-7 or 'all')");
  const auto dyads = parse_dyads(c.dyads, st.table.n_nodes);
  ThresholdOptions to;
  to.per_group = c.per_group;
  to.alpha = c.alpha;
  const auto corr = correction_from_name(c.correction);
  if (!corr) throw Usage("--correction must be 'fdr' or 'bonferroni'");
  to.correction = *corr;
  const auto rep = dyad_threshold_test(st.table, spec, dyads, to);
  write_text(c.out / "threshold.csv", format_threshold_csv(rep));
  std::size_t testable = 0, candidates = 0;
  for (const auto& t : rep.rows) {
    testable += t.testable;
    candidates += t.testable && t.removal_candidate;
  }
  out << "threshold: " << rep.rows.size() << " tests (" << testable << " testable), " << candidates
      << " removal candidates at " << c.correction << " " << c.alpha << "\n";
  if (c.weak_cutoff) {
    auto nets = st.networks;
    const auto removed = mask_weak_connections(nets, st.subjects, rep, *c.weak_cutoff);
    const fs::path dir = c.out / "masked";
    fs::create_directories(dir);
    for (const auto& n : nets) write_connection_matrix(dir / (n.subject_id + ".csv"), n);
    out << "  removed " << removed << " weak connections (weight < " << *c.weak_cutoff << "); wrote " << dir.string()
        << "\n";
  }
  out << "wrote " << (c.out / "threshold.csv").string() << "\n";
}

void cmd_demo(Config c, std::ostream& out) {
  if (!c.seed) c.seed = 1;
  const SyntheticTruth truth = c.truth.empty() ? default_truth() : load_truth(c.truth);
  const auto study = generate_synthetic_study(c.n_subjects, c.n_nodes, truth, *c.seed);
  const fs::path sdir = c.out / "study";
  write_synthetic_study(sdir, study, truth);
  out << "demo: synthetic study with " << c.n_subjects << " subjects x " << c.n_nodes << " nodes (seed " << *c.seed
      << ") in " << sdir.string() << "\n\n";

  Config d = c;
  d.networks_dir = sdir / "networks";
  d.covariate_networks = sdir / "templates";
  d.atlas = sdir / "atlas.csv";
  d.subjects = sdir / "subjects.csv";
  d.spec = sdir / "spec.json";
  d.fit.clear();
  cmd_fit(d, out);
  out << "\n";
  cmd_report(d, out);
  out << "\n";
  cmd_predict(d, out);
  out << "\n";
  d.seed = *c.seed + 1;
  cmd_simulate(d, out);
  out << "\n";
  d.ensemble = d.out / "simulated";
  cmd_gof(d, out);
  out << "\n";
  if (d.dyads.empty()) d.dyads = "1-2,1-3,2-3,3-4,4-5,5-6,1-6,2-7,3-8,4-9";
  d.spec.clear();
  cmd_threshold(d, out);
}

}  // namespace

// --- entry point ----------------------------------------------------------------

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Config c;
  CLI::App app{"Two-part mixed models for weighted brain networks"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  auto data_opts = [&](CLI::App* s) {
    s->add_option("--networks-dir", c.networks_dir, "Directory of per-subject connection matrices (*.csv)");
    s->add_option("--atlas", c.atlas, "Node atlas CSV (node,label,x_mm,y_mm,z_mm)");
    s->add_option("--subjects", c.subjects, "Subject covariates CSV (subject_id,group,sex,education_years)");
    s->add_option("--covariate-networks", c.covariate_networks,
                  "Networks whose metrics supply the dyad covariates (default: the outcome networks)");
    s->add_option("--min-weight", c.min_weight, "Treat weights below this value as absent");
    s->add_flag("--binary-leverage", c.binary_leverage, "Leverage centrality from neighbor counts");
  };
  auto common = [&](CLI::App* s) {
    s->add_option("--out", c.out, "Output directory")->capture_default_str();
    s->add_option("--threads", c.threads, "Upper bound on worker threads (0 = all cores)");
    s->add_option("--simd", c.simd, "Kernel backend: auto, scalar, avx2 or neon")->capture_default_str();
  };
  auto fit_opt = [&](CLI::App* s) { s->add_option("--fit", c.fit, "Fit archive (default: <out>/fit.json)"); };
  auto sim_opts = [&](CLI::App* s) {
    s->add_option("--seed", c.seed, "Random seed");
    s->add_option("--n-sims", c.n_sims, "Number of simulated networks")->capture_default_str();
    s->add_flag("--use-blups", c.use_blups, "Reuse fitted subject effects instead of drawing new ones");
  };

  auto* metrics = app.add_subcommand("metrics", "Network and nodal metrics per subject");
  data_opts(metrics);
  common(metrics);

  auto* fit = app.add_subcommand("fit", "Fit the two-part mixed model");
  data_opts(fit);
  common(fit);
  fit->add_option("--spec", c.spec, "Model specification (JSON)");
  fit->add_flag("--dump-design", c.dump_design, "Write design column and centering tables");
  fit->add_flag("--no-reduce", c.no_reduce, "Skip the refit without zero-variance random terms");

  auto* report = app.add_subcommand("report", "Parameter table, interpretations and group comparison");
  common(report);
  fit_opt(report);
  report->add_option("--alpha", c.alpha, "Significance level")->capture_default_str();

  auto* predict = app.add_subcommand("predict", "Prediction curves with prediction intervals");
  common(predict);
  fit_opt(predict);
  predict->add_option("--vary", c.vary, "Covariate on the grid (C, Eglob, k, Q, l, educ, dist)")->capture_default_str();
  predict->add_option("--grid", c.grid, "start:stop:count or a comma list (raw units; default: observed range)");
  predict->add_option("--group-levels", c.group_levels, "Covariate-of-interest levels (default 0,1)");
  predict->add_option("--level", c.level, "Interval level")->capture_default_str();
  predict->add_option("--dyad", c.dyad, "Concrete dyad j-k (1-based) for the nodal effects");

  auto* simulate = app.add_subcommand("simulate", "Simulate networks from a fit");
  data_opts(simulate);
  common(simulate);
  fit_opt(simulate);
  sim_opts(simulate);
  simulate->add_option("--group-levels", c.group_levels, "Simulate group-representative networks for these levels");

  auto* gof = app.add_subcommand("gof", "Compare observed and simulated network metrics");
  data_opts(gof);
  common(gof);
  fit_opt(gof);
  sim_opts(gof);
  gof->add_option("--ensemble", c.ensemble, "Existing simulated ensemble directory");
  gof->add_option("--condition", c.condition, "Condition label for the table")->capture_default_str();

  auto* threshold = app.add_subcommand("threshold", "Dyad-indicator tests in the strength model");
  data_opts(threshold);
  common(threshold);
  fit_opt(threshold);
  threshold->add_option("--spec", c.spec, "Strength model specification (default: from the fit)");
  threshold->add_option("--dyads", c.dyads, "Dyads to test: 1-2,3-7,... or 'all'");
  threshold->add_option("--alpha", c.alpha, "Significance level")->capture_default_str();
  threshold->add_option("--correction", c.correction, "fdr or bonferroni")->capture_default_str();
  threshold->add_flag("--per-group", c.per_group, "Test each dyad within each covariate-of-interest level");
  threshold->add_option("--weak-cutoff", c.weak_cutoff, "Weight below which a candidate dyad is removed");

  auto* demo = app.add_subcommand("demo", "Generate a synthetic study and run the whole pipeline");
  common(demo);
  demo->add_option("--seed", c.seed, "Random seed (default 1)");
  demo->add_option("--n-subjects", c.n_subjects, "Subjects")->capture_default_str();
  demo->add_option("--n-nodes", c.n_nodes, "Nodes")->capture_default_str();
  demo->add_option("--truth", c.truth, "Truth file (JSON) for the generator");
  demo->add_option("--n-sims", c.n_sims, "Networks in the GOF ensemble")->capture_default_str();
  demo->add_option("--alpha", c.alpha, "Significance level")->capture_default_str();
  demo->add_option("--weak-cutoff", c.weak_cutoff, "Weight cutoff for the thresholding step");
  demo->add_option("--dyads", c.dyads, "Dyads for the thresholding step");

  std::vector<std::string> argv_store{"netmix"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << "run 'netmix --help' for the list of subcommands\n";
    return kExitUsage;
  }

  try {
    set_max_threads(c.threads > 0 ? c.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
    try {
      kernels::select_backend(c.simd);
    } catch (const std::invalid_argument& e) {
      throw Usage(std::string("--simd: ") + e.what());
    }
    if (metrics->parsed()) cmd_metrics(c, out);
    if (fit->parsed()) cmd_fit(c, out);
    if (report->parsed()) cmd_report(c, out);
    if (predict->parsed()) cmd_predict(c, out);
    if (simulate->parsed()) cmd_simulate(c, out);
    if (gof->parsed()) cmd_gof(c, out);
    if (threshold->parsed()) cmd_threshold(c, out);
    if (demo->parsed()) cmd_demo(c, out);
  } catch (const Usage& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const SpecError& e) {
    err << "specification error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ConvergenceError& e) {
    err << "convergence error: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace netmix
