#include "netmix/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>

#include "netmix/errors.hpp"
#include "netmix/graphmetrics.hpp"
#include "netmix/parallel.hpp"
#include "netmix/predictsim.hpp"

namespace netmix {

using json = nlohmann::json;

// --- truth ----------------------------------------------------------------------

Eigen::VectorXd SyntheticTruth::beta(Response part) const {
  const auto& m = part == Response::presence ? beta_r : beta_s;
  Eigen::VectorXd b(static_cast<Eigen::Index>(spec.fixed.size()));
  for (std::size_t i = 0; i < spec.fixed.size(); ++i) {
    const std::string key(fixed_term_key(spec.fixed[i]));
    auto it = m.find(key);
    if (it == m.end()) throw SpecError("truth lacks a coefficient for '" + key + "'");
    b[static_cast<Eigen::Index>(i)] = it->second;
  }
  return b;
}

void SyntheticTruth::validate() const {
  spec.validate();
  beta(Response::presence);
  beta(Response::strength);
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw SpecError("infeasible truth: sigma2 must be >= 0");
  for (const auto* m : {&tau_r, &tau_s}) {
    for (const auto& [k, v] : *m) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw SpecError("infeasible truth: variance '" + k + "' must be >= 0");
      if (k != "node" && !random_term_from_key(k)) throw SpecError("truth names unknown random term '" + k + "'");
    }
  }
}

SyntheticTruth default_truth() {
  SyntheticTruth t;
  t.beta_r = {{"intercept", 0.2}, {"C", 1.5},      {"Eglob", 3.0},  {"k", -0.4},    {"Q", -1.0},  {"l", 0.8},
              {"coi", -0.3},      {"sex", 0.1},    {"educ", 0.03},  {"dist", -1.5}, {"dist^2", 1.0},
              {"coi:C", 0.5},     {"coi:Eglob", -1.0}, {"coi:k", 0.2}, {"coi:Q", 1.0}, {"coi:l", -0.3},
              {"coi:sex", 0.2}};
  t.beta_s = {{"intercept", 0.4}, {"C", 0.3},      {"Eglob", 0.5},  {"k", -0.05},    {"Q", -0.2}, {"l", 0.05},
              {"coi", -0.03},     {"sex", 0.01},   {"educ", 0.002}, {"dist", -0.15}, {"dist^2", 0.1},
              {"coi:C", 0.1},     {"coi:Eglob", 0.1}, {"coi:k", 0.01}, {"coi:Q", 0.2}, {"coi:l", 0.02},
              {"coi:sex", 0.01}};
  t.tau_r = {{"intercept", 0.1}, {"C", 0.5}, {"Eglob", 0.5},  {"k", 0.02},    {"Q", 0.5},
             {"l", 0.05},        {"dist", 0.05}, {"dist^2", 0.02}, {"node", 0.05}};
  t.tau_s = {{"intercept", 0.002}, {"C", 0.01},     {"Eglob", 0.01},    {"k", 0.0005},  {"Q", 0.01},
             {"l", 0.001},         {"dist", 0.001}, {"dist^2", 0.0005}, {"node", 0.002}};
  t.sigma2 = 0.01;
  return t;
}

SyntheticTruth parse_truth(std::string_view text) {
  SyntheticTruth t;
  try {
    const json j = json::parse(text);
    if (j.contains("spec")) t.spec = parse_model_spec(j.at("spec").dump());
    t.beta_r = j.at("beta_r").get<std::map<std::string, double>>();
    t.beta_s = j.at("beta_s").get<std::map<std::string, double>>();
    if (j.contains("tau_r")) t.tau_r = j.at("tau_r").get<std::map<std::string, double>>();
    if (j.contains("tau_s")) t.tau_s = j.at("tau_s").get<std::map<std::string, double>>();
    t.sigma2 = j.at("sigma2").get<double>();
  } catch (const json::exception& e) {
    throw SpecError(std::string("malformed truth file: ") + e.what());
  }
  t.validate();
  return t;
}

SyntheticTruth load_truth(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError("cannot read truth file '" + path.string() + "'");
  return parse_truth(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
}

std::string truth_json(const SyntheticTruth& t) {
  json j;
  j["spec"] = json::parse(model_spec_json(t.spec));
  j["beta_r"] = t.beta_r;
  j["beta_s"] = t.beta_s;
  j["tau_r"] = t.tau_r;
  j["tau_s"] = t.tau_s;
  j["sigma2"] = t.sigma2;
  return j.dump(2);
}

// --- truth as a fit -----------------------------------------------------------

namespace {

void fill_part(LmmFit& part, const ModelSpec& spec, const Eigen::VectorXd& beta, const std::map<std::string, double>& tau,
               double sigma2, int n_nodes, std::size_t n_subjects) {
  std::vector<std::string> cols;
  std::vector<int> comp;
  random_layout(spec, n_nodes, cols, comp, part.vc.names);
  part.fixed_names.clear();
  for (auto f : spec.fixed) part.fixed_names.emplace_back(fixed_term_key(f));
  part.beta = beta;
  part.beta_cov = Eigen::MatrixXd::Zero(beta.size(), beta.size());
  part.vc.tau.resize(static_cast<Eigen::Index>(part.vc.names.size()));
  for (std::size_t c = 0; c < part.vc.names.size(); ++c) {
    const std::string key = part.vc.names[c].starts_with("node") ? "node" : part.vc.names[c];
    auto it = tau.find(key);
    part.vc.tau[static_cast<Eigen::Index>(c)] = it == tau.end() ? 0.0 : it->second;
  }
  part.vc.at_bound.assign(part.vc.names.size(), false);
  part.vc.sigma2 = sigma2;
  part.blups = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_subjects), static_cast<Eigen::Index>(cols.size()));
  part.residual_df = 1e6;
  part.trace.converged = true;
  part.trace.message = "truth";
}

}  // namespace

TwoPartFit fit_from_truth(const SyntheticTruth& truth, int n_nodes, const CenteringRecord& centering,
                          std::size_t n_subjects) {
  truth.validate();
  TwoPartFit f;
  f.spec = truth.spec;
  f.presence_spec = truth.spec;
  f.presence_spec.response = Response::presence;
  f.strength_spec = truth.spec;
  f.strength_spec.response = Response::strength;
  f.centering = centering;
  f.n_nodes = n_nodes;
  fill_part(f.presence, f.presence_spec, truth.beta(Response::presence), truth.tau_r, 1.0, n_nodes, n_subjects);
  fill_part(f.strength, f.strength_spec, truth.beta(Response::strength), truth.tau_s, truth.sigma2, n_nodes,
            n_subjects);
  return f;
}

// --- generator ----------------------------------------------------------------

namespace {

NodeAtlas synthetic_atlas(int n, std::mt19937_64& rng) {
  // Points inside a brain-sized ellipsoid, in millimeters.
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  NodeAtlas a;
  a.coords_mm.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    double x, y, z;
    do {
      x = u(rng), y = u(rng), z = u(rng);
    } while (x * x + y * y + z * z > 1.0);
    a.coords_mm.row(i) << 70.0 * x, 100.0 * y, 60.0 * z;
    a.labels.push_back("R" + std::to_string(i + 1));
  }
  return a;
}

// Distance-decaying network with spatial modules and subject-level jitter.
SubjectNetwork template_network(const std::string& id, const NodeAtlas& atlas, const DistanceMatrix& dist,
                                const Eigen::VectorXd& node_pull, std::mt19937_64& rng) {
  const int n = atlas.n();
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double shift = 0.3 * nd(rng), module_gain = 0.8 + 0.3 * nd(rng);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    for (int k = j + 1; k < n; ++k) {
      const bool same = (atlas.coords_mm(j, 1) > 0) == (atlas.coords_mm(k, 1) > 0) &&
                        (atlas.coords_mm(j, 0) > 0) == (atlas.coords_mm(k, 0) > 0);
      const double d = dist.dm(j, k);
      const double eta = 0.8 - 1.5 * d + node_pull[j] + node_pull[k] + shift + (same ? module_gain : 0.0);
      if (unif(rng) >= 1.0 / (1.0 + std::exp(-eta))) continue;
      const double z = std::abs(0.35 + (same ? 0.15 : 0.0) - 0.1 * d + 0.12 * nd(rng));
      w(j, k) = w(k, j) = std::min(std::tanh(z), 0.99);
    }
  }
  return network_from_matrix(w, id);
}

}  // namespace

DyadTable dyad_table_with_outcomes(const DyadTable& covariate_table, const std::vector<SubjectNetwork>& networks) {
  if (networks.size() != covariate_table.subjects.size())
    throw DataError("outcome networks (" + std::to_string(networks.size()) + ") do not match covariate subjects (" +
                    std::to_string(covariate_table.subjects.size()) + ")");
  DyadTable t = covariate_table;
  for (std::size_t r = 0; r < t.size(); ++r) {
    const auto& net = networks[static_cast<std::size_t>(t.subject[r])];
    if (net.n() != t.n_nodes) throw DataError("outcome network '" + net.subject_id + "' has the wrong node count");
    const double w = net.weights(t.node_j[r], t.node_k[r]);
    t.weight[r] = w;
    t.present[r] = w > 0.0;
    t.strength[r] = w > 0.0 ? fisher_z(w) : std::numeric_limits<double>::quiet_NaN();
  }
  return t;
}

SyntheticStudy generate_synthetic_study(int n_subjects, int n_nodes, const SyntheticTruth& truth, std::uint64_t seed) {
  truth.validate();
  if (n_subjects < 1 || n_nodes < 2) throw SpecError("synthetic study needs >= 1 subject and >= 2 nodes");
  SyntheticStudy st;
  std::mt19937_64 rng(stream_seed(seed, 0));
  st.atlas = synthetic_atlas(n_nodes, rng);
  st.dist = compute_distances(st.atlas);
  std::normal_distribution<double> nd;
  std::bernoulli_distribution coin(0.5);
  Eigen::VectorXd pull(n_nodes);
  for (auto& v : pull) v = 0.4 * nd(rng);
  for (int s = 0; s < n_subjects; ++s) {
    SubjectCovariates c;
    c.subject_id = "sub" + std::string(s + 1 < 10 ? "0" : "") + std::to_string(s + 1);
    c.group = s % 2;
    c.sex = coin(rng) ? 1 : 0;
    c.education_years = std::round(14.0 + 2.5 * nd(rng));
    st.subjects.push_back(c);
  }

  st.templates.resize(static_cast<std::size_t>(n_subjects));
  std::vector<MetricSuite> metrics(static_cast<std::size_t>(n_subjects));
  parallel_for(st.templates.size(), [&](std::size_t s) {
    std::mt19937_64 r(stream_seed(seed, 1000 + s));
    SubjectNetwork net;
    do {
      net = template_network(st.subjects[s].subject_id, st.atlas, st.dist, pull, r);
    } while (net.n_present() == 0);
    st.templates[s] = std::move(net);
    metrics[s] = metric_suite(st.templates[s]);
  });

  DyadTable covs = center_covariates(build_dyad_table(st.templates, metrics, st.subjects, st.dist));
  st.truth_fit = fit_from_truth(truth, n_nodes, *covs.centering, st.subjects.size());
  const auto sources = subject_covariate_rows(covs);
  SimulationOptions so;
  so.compute_metrics = false;
  auto ens = simulate_networks(st.truth_fit, sources, sources.size(), stream_seed(seed, 1), so);
  for (std::size_t s = 0; s < ens.networks.size(); ++s) {
    ens.networks[s].subject_id = st.subjects[s].subject_id;
    st.networks.push_back(std::move(ens.networks[s]));
  }
  st.table = dyad_table_with_outcomes(covs, st.networks);
  return st;
}

void write_synthetic_study(const std::filesystem::path& dir, const SyntheticStudy& st, const SyntheticTruth& truth) {
  std::filesystem::create_directories(dir / "networks");
  std::filesystem::create_directories(dir / "templates");
  for (const auto& n : st.networks) write_connection_matrix(dir / "networks" / (n.subject_id + ".csv"), n);
  for (const auto& n : st.templates) write_connection_matrix(dir / "templates" / (n.subject_id + ".csv"), n);
  write_atlas(dir / "atlas.csv", st.atlas);
  write_subjects(dir / "subjects.csv", st.subjects);
  std::ofstream(dir / "truth.json", std::ios::binary) << truth_json(truth) << "\n";
  std::ofstream(dir / "spec.json", std::ios::binary) << model_spec_json(truth.spec) << "\n";
}

}  // namespace netmix
