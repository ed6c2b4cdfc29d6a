#include "netmix/dyaddesign.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <json.hpp>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "netmix/csv.hpp"
#include "netmix/errors.hpp"

namespace netmix {

using json = nlohmann::json;

double fisher_z(double r) {
  if (!(std::abs(r) < 1.0)) throw std::domain_error("fisher_z: |r| >= 1");
  return std::atanh(r);
}

double inv_fisher_z(double z) { return std::tanh(z); }

// --- covariates -------------------------------------------------------------

namespace {

constexpr std::array<std::string_view, kNumCovariates> kCovariateNames{
    "C", "Eglob", "k", "Q", "l", "coi", "sex", "educ", "dist", "dist^2"};

int idx(Covariate c) { return static_cast<int>(c); }

}  // namespace

std::string_view covariate_name(Covariate c) { return kCovariateNames[idx(c)]; }

std::optional<Covariate> covariate_from_name(std::string_view name) {
  for (int i = 0; i < kNumCovariates; ++i)
    if (kCovariateNames[i] == name) return static_cast<Covariate>(i);
  return std::nullopt;
}

bool is_continuous(Covariate c) { return c != Covariate::coi && c != Covariate::sex; }

double CenteringRecord::center(Covariate c, double raw) const {
  if (c == Covariate::dist2) {
    const double d = raw - mean[idx(Covariate::dist)];
    return d * d - mean[idx(Covariate::dist2)];
  }
  return raw - mean[idx(c)];
}

DyadRow DyadTable::row(std::size_t i) const {
  DyadRow r;
  r.subject = subject[i];
  r.node_j = node_j[i];
  r.node_k = node_k[i];
  r.present = present[i] != 0;
  if (r.present) r.strength = strength[i];
  for (int c = 0; c < kNumCovariates; ++c) r.covariates[c] = covariates(static_cast<Eigen::Index>(i), c);
  return r;
}

std::pair<std::size_t, std::size_t> DyadTable::subject_range(int s) const {
  const std::size_t nd = static_cast<std::size_t>(n_nodes) * (n_nodes - 1) / 2;
  return {nd * s, nd * (s + 1)};
}

// --- table construction ----------------------------------------------------

DyadTable build_dyad_table(const std::vector<SubjectNetwork>& networks, const std::vector<MetricSuite>& metrics,
                           const std::vector<SubjectCovariates>& covariates, const DistanceMatrix& dist) {
  if (networks.empty()) throw DataError("no networks");
  if (metrics.size() != networks.size())
    throw DataError("metric list has " + std::to_string(metrics.size()) + " entries for " +
                    std::to_string(networks.size()) + " networks");
  const int n = networks.front().n();
  if (dist.dm.rows() != n || dist.dm.cols() != n)
    throw DataError("distance matrix is " + std::to_string(dist.dm.rows()) + "x" + std::to_string(dist.dm.cols()) +
                    ", networks have " + std::to_string(n) + " nodes");

  std::unordered_map<std::string, const SubjectCovariates*> by_id;
  for (const auto& c : covariates) by_id.emplace(c.subject_id, &c);

  DyadTable t;
  t.n_nodes = n;
  const std::size_t nd = static_cast<std::size_t>(n) * (n - 1) / 2;
  const std::size_t rows = nd * networks.size();
  t.subject.resize(rows);
  t.node_j.resize(rows);
  t.node_k.resize(rows);
  t.present.resize(rows);
  t.weight.resize(rows);
  t.strength.resize(rows);
  t.covariates.resize(static_cast<Eigen::Index>(rows), kNumCovariates);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::size_t r = 0;
  for (std::size_t s = 0; s < networks.size(); ++s) {
    const auto& net = networks[s];
    if (net.n() != n)
      throw DataError("network '" + net.subject_id + "' has " + std::to_string(net.n()) + " nodes, expected " +
                      std::to_string(n));
    auto it = by_id.find(net.subject_id);
    if (it == by_id.end()) throw DataError("missing covariates for subject '" + net.subject_id + "'");
    const SubjectCovariates& cov = *it->second;
    t.subjects.push_back(cov);
    const auto& nodal = metrics[s].nodal;
    if (nodal.clustering.size() != n) throw DataError("nodal metrics for '" + net.subject_id + "' have wrong size");
    const double q = metrics[s].network.modularity;

    for (int j = 0; j < n; ++j) {
      for (int k = j + 1; k < n; ++k, ++r) {
        const double w = net.weights(j, k);
        t.subject[r] = static_cast<int>(s);
        t.node_j[r] = j;
        t.node_k[r] = k;
        t.present[r] = w > 0.0;
        t.weight[r] = w;
        t.strength[r] = w > 0.0 ? fisher_z(w) : nan;
        const auto row = static_cast<Eigen::Index>(r);
        t.covariates(row, idx(Covariate::C)) = 0.5 * (nodal.clustering[j] + nodal.clustering[k]);
        t.covariates(row, idx(Covariate::Eglob)) = 0.5 * (nodal.efficiency[j] + nodal.efficiency[k]);
        t.covariates(row, idx(Covariate::k)) = std::abs(nodal.degree[j] - nodal.degree[k]);
        t.covariates(row, idx(Covariate::Q)) = q;
        const auto& lj = nodal.leverage[j];
        const auto& lk = nodal.leverage[k];
        t.covariates(row, idx(Covariate::l)) = (lj && lk) ? 0.5 * (*lj + *lk) : nan;
        t.covariates(row, idx(Covariate::coi)) = cov.group;
        t.covariates(row, idx(Covariate::sex)) = cov.sex;
        t.covariates(row, idx(Covariate::educ)) = cov.education_years;
        const double d = dist.dm(j, k);
        t.covariates(row, idx(Covariate::dist)) = d;
        t.covariates(row, idx(Covariate::dist2)) = d * d;
      }
    }
  }
  return t;
}

DyadTable center_covariates(DyadTable table) {
  CenteringRecord rec;
  const bool first = !table.centering.has_value();
  if (!first) rec = *table.centering;
  const Eigen::Index rows = table.covariates.rows();

  for (int c = 0; c < kNumCovariates; ++c) {
    const auto cov = static_cast<Covariate>(c);
    if (!is_continuous(cov) || cov == Covariate::dist2) continue;
    auto col = table.covariates.col(c);
    // Mean accumulated as deviations from a pivot, so constants center to exactly 0.
    double pivot = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i)
      if (!std::isnan(col[i])) {
        pivot = col[i];
        break;
      }
    double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::size_t count = 0;
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double v = col[i];
      if (std::isnan(v)) continue;
      sum += v - pivot;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      ++count;
    }
    const double m = count ? pivot + sum / static_cast<double>(count) : 0.0;
    if (first) {
      rec.min[c] = count ? lo : 0.0;
      rec.max[c] = count ? hi : 0.0;
    }
    rec.mean[c] += m;
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (std::isnan(col[i])) {
        col[i] = 0.0;
        ++rec.leverage_fallbacks;
      } else {
        col[i] -= m;
      }
    }
  }

  const int d2 = idx(Covariate::dist2);
  auto dcol = table.covariates.col(idx(Covariate::dist));
  auto d2col = table.covariates.col(d2);
  if (first && rows > 0) {
    rec.min[d2] = d2col.minCoeff();
    rec.max[d2] = d2col.maxCoeff();
  }
  d2col = dcol.array().square().matrix();
  const double m2 = rows ? d2col.sum() / static_cast<double>(rows) : 0.0;
  d2col.array() -= m2;
  rec.mean[d2] = m2;

  table.centering = rec;
  return table;
}

// --- model specification ---------------------------------------------------

namespace {

constexpr std::array<std::string_view, 17> kFixedKeys{
    "intercept", "C", "Eglob", "k", "Q", "l", "coi", "sex", "educ", "dist", "dist^2",
    "coi:C", "coi:Eglob", "coi:k", "coi:Q", "coi:l", "coi:sex"};
constexpr std::array<std::string_view, 9> kRandomKeys{"intercept", "C", "Eglob", "k", "Q", "l",
                                                      "dist", "dist^2", "nodes"};

std::string node_name(int node) { return "node" + std::to_string(node + 1); }

}  // namespace

std::string_view fixed_term_key(FixedTerm t) { return kFixedKeys[static_cast<int>(t)]; }
std::string_view random_term_key(RandomTerm t) { return kRandomKeys[static_cast<int>(t)]; }

std::optional<FixedTerm> fixed_term_from_key(std::string_view key) {
  for (std::size_t i = 0; i < kFixedKeys.size(); ++i)
    if (kFixedKeys[i] == key) return static_cast<FixedTerm>(i);
  return std::nullopt;
}

std::optional<RandomTerm> random_term_from_key(std::string_view key) {
  for (std::size_t i = 0; i < kRandomKeys.size(); ++i)
    if (kRandomKeys[i] == key) return static_cast<RandomTerm>(i);
  return std::nullopt;
}

std::optional<Covariate> interaction_partner(FixedTerm t) {
  switch (t) {
    case FixedTerm::coi_C: return Covariate::C;
    case FixedTerm::coi_Eglob: return Covariate::Eglob;
    case FixedTerm::coi_k: return Covariate::k;
    case FixedTerm::coi_Q: return Covariate::Q;
    case FixedTerm::coi_l: return Covariate::l;
    case FixedTerm::coi_sex: return Covariate::sex;
    default: return std::nullopt;
  }
}

ModelSpec ModelSpec::full() {
  ModelSpec s;
  for (std::size_t i = 0; i < kFixedKeys.size(); ++i) s.fixed.push_back(static_cast<FixedTerm>(i));
  for (std::size_t i = 0; i < kRandomKeys.size(); ++i) s.random.push_back(static_cast<RandomTerm>(i));
  return s;
}

bool ModelSpec::has_random(RandomTerm t) const { return std::find(random.begin(), random.end(), t) != random.end(); }

void ModelSpec::validate() const {
  if (fixed.empty()) throw SpecError("model needs at least one fixed term");
  std::set<FixedTerm> f(fixed.begin(), fixed.end());
  if (f.size() != fixed.size()) throw SpecError("duplicate fixed term");
  std::set<RandomTerm> r(random.begin(), random.end());
  if (r.size() != random.size()) throw SpecError("duplicate random term");
  if (grouping != "subject_id") throw SpecError("unsupported grouping column '" + grouping + "'");
  for (int node : dropped_nodes)
    if (node < 0) throw SpecError("negative node index in dropped_nodes");
}

ModelSpec parse_model_spec(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SpecError(std::string("model spec is not valid JSON: ") + e.what());
  }
  ModelSpec s;
  try {
    if (j.contains("coi_label")) s.coi_label = j.at("coi_label").get<std::string>();
    const std::string coi_prefix = s.coi_label + ":";
    for (const auto& item : j.at("fixed")) {
      std::string key = item.get<std::string>();
      if (key == "0") key = "intercept";
      if (key == s.coi_label) key = "coi";
      if (key.starts_with(coi_prefix)) key = "coi:" + key.substr(coi_prefix.size());
      auto t = fixed_term_from_key(key);
      if (!t) throw SpecError("unknown covariate '" + item.get<std::string>() + "' in fixed terms");
      s.fixed.push_back(*t);
    }
    if (j.contains("random")) {
      for (const auto& item : j.at("random")) {
        auto t = random_term_from_key(item.get<std::string>());
        if (!t) throw SpecError("unknown covariate '" + item.get<std::string>() + "' in random terms");
        s.random.push_back(*t);
      }
    }
    if (j.contains("node_variance")) {
      const auto nv = j.at("node_variance").get<std::string>();
      if (nv == "separate") s.node_variance = NodeVariance::separate;
      else if (nv == "shared") s.node_variance = NodeVariance::shared;
      else throw SpecError("node_variance must be 'separate' or 'shared'");
    }
    if (j.contains("grouping")) s.grouping = j.at("grouping").get<std::string>();
    if (j.contains("response")) {
      const auto r = j.at("response").get<std::string>();
      if (r == "presence") s.response = Response::presence;
      else if (r == "strength") s.response = Response::strength;
      else throw SpecError("response must be 'presence' or 'strength'");
    }
    if (j.contains("dropped_nodes")) {
      for (const auto& item : j.at("dropped_nodes")) {
        const auto name = item.get<std::string>();
        if (!name.starts_with("node")) throw SpecError("bad node name '" + name + "'");
        s.dropped_nodes.push_back(std::stoi(name.substr(4)) - 1);
      }
    }
  } catch (const json::exception& e) {
    throw SpecError(std::string("malformed model spec: ") + e.what());
  }
  s.validate();
  return s;
}

ModelSpec load_model_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError("cannot read model spec '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_model_spec(text);
}

std::string model_spec_json(const ModelSpec& spec) {
  json j;
  j["fixed"] = json::array();
  for (auto t : spec.fixed) j["fixed"].push_back(std::string(fixed_term_key(t)));
  j["random"] = json::array();
  for (auto t : spec.random) j["random"].push_back(std::string(random_term_key(t)));
  j["node_variance"] = spec.node_variance == NodeVariance::shared ? "shared" : "separate";
  j["dropped_nodes"] = json::array();
  for (int node : spec.dropped_nodes) j["dropped_nodes"].push_back(node_name(node));
  j["grouping"] = spec.grouping;
  j["coi_label"] = spec.coi_label;
  j["response"] = spec.response == Response::strength ? "strength" : "presence";
  return j.dump(2);
}

// --- design realization ----------------------------------------------------

Eigen::VectorXd fixed_design_row(const ModelSpec& spec, const CovariateVector& cov) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(spec.fixed.size()));
  for (std::size_t i = 0; i < spec.fixed.size(); ++i) {
    const FixedTerm t = spec.fixed[i];
    double v;
    if (t == FixedTerm::intercept) {
      v = 1.0;
    } else if (auto partner = interaction_partner(t)) {
      v = cov[idx(Covariate::coi)] * cov[idx(*partner)];
    } else {
      // Main-effect keys coincide with covariate names (coi, dist^2, ...).
      v = cov[idx(*covariate_from_name(fixed_term_key(t)))];
    }
    x[static_cast<Eigen::Index>(i)] = v;
  }
  return x;
}

void random_layout(const ModelSpec& spec, int n_nodes, std::vector<std::string>& column_names,
                   std::vector<int>& component_of_column, std::vector<std::string>& component_names) {
  column_names.clear();
  component_of_column.clear();
  component_names.clear();
  for (std::size_t i = 0; i + 1 < kRandomKeys.size(); ++i) {
    const auto t = static_cast<RandomTerm>(i);
    if (!spec.has_random(t)) continue;
    component_of_column.push_back(static_cast<int>(component_names.size()));
    component_names.emplace_back(random_term_key(t));
    column_names.emplace_back(random_term_key(t));
  }
  if (!spec.has_random(RandomTerm::nodes)) return;
  std::set<int> dropped(spec.dropped_nodes.begin(), spec.dropped_nodes.end());
  const int shared = static_cast<int>(component_names.size());
  bool any = false;
  for (int node = 0; node < n_nodes; ++node) {
    if (dropped.count(node)) continue;
    column_names.push_back(node_name(node));
    if (spec.node_variance == NodeVariance::shared) {
      component_of_column.push_back(shared);
      any = true;
    } else {
      component_of_column.push_back(static_cast<int>(component_names.size()));
      component_names.push_back(node_name(node));
    }
  }
  if (any) component_names.emplace_back("node");
}

Eigen::VectorXd random_design_row(const ModelSpec& spec, const CovariateVector& cov, int node_j, int node_k,
                                  int n_nodes) {
  std::vector<double> z;
  for (std::size_t i = 0; i + 1 < kRandomKeys.size(); ++i) {
    const auto t = static_cast<RandomTerm>(i);
    if (!spec.has_random(t)) continue;
    z.push_back(t == RandomTerm::intercept ? 1.0 : cov[idx(*covariate_from_name(random_term_key(t)))]);
  }
  if (spec.has_random(RandomTerm::nodes)) {
    std::set<int> dropped(spec.dropped_nodes.begin(), spec.dropped_nodes.end());
    for (int node = 0; node < n_nodes; ++node)
      if (!dropped.count(node)) z.push_back(node == node_j || node == node_k ? 1.0 : 0.0);
  }
  return Eigen::Map<Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
}

DesignMatrices build_design(const DyadTable& table, const ModelSpec& spec) {
  spec.validate();
  if (!table.centering) throw SpecError("dyad table must be centered before building the design");
  for (int node : spec.dropped_nodes)
    if (node >= table.n_nodes) throw SpecError("dropped node " + node_name(node) + " outside the atlas");

  DesignMatrices d;
  d.centering = *table.centering;
  for (auto t : spec.fixed) d.fixed_names.emplace_back(fixed_term_key(t));
  random_layout(spec, table.n_nodes, d.random_names, d.component_of_column, d.component_names);

  const bool strength = spec.response == Response::strength;
  const std::size_t n_subj = table.subjects.size();
  d.group_offsets.push_back(0);
  for (std::size_t s = 0; s < n_subj; ++s) {
    d.group_ids.push_back(table.subjects[s].subject_id);
    const auto [b, e] = table.subject_range(static_cast<int>(s));
    for (std::size_t r = b; r < e; ++r)
      if (!strength || table.present[r]) d.source_rows.push_back(r);
    d.group_offsets.push_back(d.source_rows.size());
  }

  const auto n = static_cast<Eigen::Index>(d.source_rows.size());
  const auto p = static_cast<Eigen::Index>(spec.fixed.size());
  const auto q = static_cast<Eigen::Index>(d.random_names.size());
  d.X.resize(n, p);
  d.Z.setZero(n, q);
  d.y.resize(n);

  // Column positions of the non-nodal random slopes and of each node.
  std::vector<std::pair<Eigen::Index, int>> slope_cols;  // (column, covariate or -1 for intercept)
  std::vector<Eigen::Index> node_col(static_cast<std::size_t>(table.n_nodes), -1);
  for (Eigen::Index c = 0; c < q; ++c) {
    const auto& name = d.random_names[static_cast<std::size_t>(c)];
    if (name == "intercept") slope_cols.emplace_back(c, -1);
    else if (auto cv = covariate_from_name(name)) slope_cols.emplace_back(c, idx(*cv));
    else node_col[static_cast<std::size_t>(std::stoi(name.substr(4)) - 1)] = c;
  }

  CovariateVector cov{};
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t r = d.source_rows[static_cast<std::size_t>(i)];
    for (int c = 0; c < kNumCovariates; ++c) cov[c] = table.covariates(static_cast<Eigen::Index>(r), c);
    d.X.row(i) = fixed_design_row(spec, cov).transpose();
    for (auto [col, cv] : slope_cols) d.Z(i, col) = cv < 0 ? 1.0 : cov[cv];
    if (auto c = node_col[static_cast<std::size_t>(table.node_j[r])]; c >= 0) d.Z(i, c) = 1.0;
    if (auto c = node_col[static_cast<std::size_t>(table.node_k[r])]; c >= 0) d.Z(i, c) = 1.0;
    d.y[i] = strength ? table.strength[r] : static_cast<double>(table.present[r]);
  }
  return d;
}

void dump_design(const std::filesystem::path& dir, const DesignMatrices& design, std::string_view prefix) {
  std::filesystem::create_directories(dir);
  const auto path = dir / (std::string(prefix) + "_design_columns.csv");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "matrix,column,name,component\n";
  for (std::size_t i = 0; i < design.fixed_names.size(); ++i) out << "X," << i << "," << design.fixed_names[i] << ",\n";
  for (std::size_t i = 0; i < design.random_names.size(); ++i)
    out << "Z," << i << "," << design.random_names[i] << ","
        << design.component_names[static_cast<std::size_t>(design.component_of_column[i])] << "\n";

  const auto cpath = dir / (std::string(prefix) + "_centering.csv");
  std::ofstream cen(cpath, std::ios::binary);
  if (!cen) throw DataError("cannot write '" + cpath.string() + "'");
  cen << "covariate,subtracted_mean,raw_min,raw_max\n";
  for (int c = 0; c < kNumCovariates; ++c)
    cen << kCovariateNames[c] << "," << csv::format_double(design.centering.mean[c]) << ","
         << csv::format_double(design.centering.min[c]) << "," << csv::format_double(design.centering.max[c]) << "\n";
  cen << "# leverage_fallbacks," << design.centering.leverage_fallbacks << ",,\n";
}

}  // namespace netmix
