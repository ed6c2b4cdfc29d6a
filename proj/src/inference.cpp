#include "netmix/inference.hpp"

#include <algorithm>
#include <boost/math/distributions/fisher_f.hpp>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "netmix/csv.hpp"
#include "netmix/errors.hpp"

namespace netmix {

// --- Wald tests ---------------------------------------------------------------

TestResult wald_f_test(const LmmFit& fit, const Eigen::MatrixXd& C) {
  const Eigen::Index p = fit.beta.size();
  if (C.cols() != p || C.rows() == 0)
    throw SpecError("contrast has " + std::to_string(C.cols()) + " columns; the model has " + std::to_string(p) +
                    " fixed effects");
  if (!fit.trace.converged) throw ConvergenceError("Wald test requested on a fit that did not converge");
  const Eigen::VectorXd cb = C * fit.beta;
  const Eigen::MatrixXd V = C * fit.beta_cov * C.transpose();

  // Sequential pivots on the correlation scale expose redundant rows.
  const Eigen::Index r = C.rows();
  std::vector<Eigen::Index> redundant;
  {
    Eigen::VectorXd s(r);
    for (Eigen::Index i = 0; i < r; ++i) s[i] = V(i, i) > 0.0 ? 1.0 / std::sqrt(V(i, i)) : 0.0;
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(r, r);
    std::vector<bool> kept(static_cast<std::size_t>(r), false);
    for (Eigen::Index i = 0; i < r; ++i) {
      if (s[i] == 0.0) {
        redundant.push_back(i);
        continue;
      }
      double d = 1.0;
      for (Eigen::Index j = 0; j < i; ++j) {
        if (!kept[static_cast<std::size_t>(j)]) continue;
        double v = V(i, j) * s[i] * s[j];
        for (Eigen::Index k = 0; k < j; ++k) v -= L(i, k) * L(j, k);
        L(i, j) = v / L(j, j);
        d -= L(i, j) * L(i, j);
      }
      if (d < 1e-10) {
        redundant.push_back(i);
      } else {
        L(i, i) = std::sqrt(d);
        kept[static_cast<std::size_t>(i)] = true;
      }
    }
  }
  if (!redundant.empty()) {
    std::string rows;
    for (auto i : redundant) rows += (rows.empty() ? "" : ", ") + std::to_string(i + 1);
    throw SpecError("singular contrast covariance: contrast row(s) " + rows +
                    " are linear combinations of earlier rows or have zero variance");
  }

  TestResult t;
  t.df1 = static_cast<double>(r);
  t.df2 = fit.residual_df;
  if (r == 1) {
    t.estimate = cb[0];
    t.se = std::sqrt(V(0, 0));
    const double z = t.estimate / t.se;
    t.f = z * z;
  } else {
    t.f = cb.dot(V.ldlt().solve(cb)) / t.df1;
  }
  t.f = std::max(t.f, 0.0);
  t.p = std::isfinite(t.f) ? boost::math::cdf(boost::math::complement(boost::math::fisher_f(t.df1, t.df2), t.f)) : 0.0;
  t.p = std::clamp(t.p, 0.0, 1.0);
  return t;
}

TestResult wald_f_test(const LmmFit& fit, std::size_t coefficient) {
  if (coefficient >= static_cast<std::size_t>(fit.beta.size())) throw SpecError("coefficient index out of range");
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(1, fit.beta.size());
  C(0, static_cast<Eigen::Index>(coefficient)) = 1.0;
  return wald_f_test(fit, C);
}

// --- report -------------------------------------------------------------------

namespace {

std::string scale_phrase(Response part) {
  return part == Response::presence ? "log odds of an edge existing" : "mean Fisher-Z strength of an existing edge";
}

std::string metric_phrase(std::string_view key) {
  if (key == "C") return "clustering (C)";
  if (key == "Eglob") return "global efficiency (Eglob)";
  if (key == "k") return "degree difference (k)";
  if (key == "Q") return "modularity (Q)";
  if (key == "l") return "leverage centrality (l)";
  if (key == "sex") return "sex";
  return std::string(key);
}

std::string interpretation(Response part, std::string_view key, std::string_view coi) {
  const std::string s = scale_phrase(part), c(coi);
  if (key == "intercept")
    return "The " + s + " for dyads with average network metrics and distance, in the reference " + c +
           " group with sex = 0 and average education.";
  if (key == "coi")
    return "The change in the " + s + " for the non-reference " + c + " group with sex = 0 and average metrics.";
  if (key == "sex") return "The change in the " + s + " for sex = 1 in the reference " + c + " group.";
  if (key == "educ") return "The change in the " + s + " per additional year of education.";
  if (key == "dist") return "The linear term of the change in the " + s + " with node distance (dm).";
  if (key == "dist^2") return "The quadratic term of the change in the " + s + " with node distance (dm).";
  if (key == "coi:sex")
    return "The additional change (relative to the sex effect) in the " + s + " for sex = 1 in the non-reference " +
           c + " group.";
  if (key.starts_with("coi:")) {
    const std::string m = metric_phrase(key.substr(4));
    return "The additional change (relative to the " + m + " slope) in the " + s + " per unit increase in " + m +
           " for the non-reference " + c + " group.";
  }
  return "The change in the " + s + " per unit increase in " + metric_phrase(key) + " in the reference " + c +
         " group.";
}

std::string format4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  std::string out(buf);
  if (out == "-0.0000") out = "0.0000";
  return out;
}

bool is_metric_interaction(std::string_view key) { return key.starts_with("coi:") && key != "coi:sex"; }

}  // namespace

std::string parameter_display_name(Response part, std::string_view key, std::string_view coi_label) {
  std::string out = part == Response::presence ? "β_r," : "β_s,";
  if (key == "intercept") return out + "0";
  if (key == "coi") return out + std::string(coi_label);
  if (key.starts_with("coi:")) return out + std::string(coi_label) + "×" + std::string(key.substr(4));
  return out + std::string(key);
}

std::string_view group_difference_label(GroupDifference g) {
  switch (g) {
    case GroupDifference::not_applicable: return "not assessed (no covariate-of-interest terms)";
    case GroupDifference::none: return "no overall or topological differences";
    case GroupDifference::topological_only: return "differences vary by the values of the network metrics";
    case GroupDifference::overall_only: return "overall differences, no topological differences";
    case GroupDifference::overall_and_topological:
      return "overall differences that also vary by the values of the network metrics";
  }
  return "";
}

ComparisonReport explain_report(const TwoPartFit& fit) {
  ComparisonReport rep;
  rep.coi_label = fit.spec.coi_label;
  for (Response part : {Response::presence, Response::strength}) {
    const LmmFit& f = part == Response::presence ? static_cast<const LmmFit&>(fit.presence) : fit.strength;
    const Eigen::VectorXd se = f.se();
    bool any_interaction = false, has_coi = false;
    for (std::size_t i = 0; i < f.fixed_names.size(); ++i) {
      ReportRow row;
      row.part = part;
      row.key = f.fixed_names[i];
      row.name = parameter_display_name(part, row.key, rep.coi_label);
      row.estimate = f.beta[static_cast<Eigen::Index>(i)];
      row.se = se[static_cast<Eigen::Index>(i)];
      row.p = f.trace.converged && row.se > 0.0 ? wald_f_test(f, i).p : std::numeric_limits<double>::quiet_NaN();
      row.interpretation = interpretation(part, row.key, rep.coi_label);
      any_interaction = any_interaction || row.key.starts_with("coi:");
      has_coi = has_coi || row.key == "coi";
      rep.rows.push_back(std::move(row));
    }
    const std::string pname = part == Response::presence ? "presence" : "strength";
    if (!any_interaction)
      rep.notes.push_back("the " + pname + " model has no " + rep.coi_label +
                          " interaction terms; topological differences are not assessed");
    if (!has_coi) rep.notes.push_back("the " + pname + " model has no main " + rep.coi_label + " term");
  }
  return rep;
}

GroupDifference classify_group_difference(const ComparisonReport& report, Response part, double alpha) {
  bool seen = false, overall = false, topological = false;
  for (const auto& r : report.rows) {
    if (r.part != part || !(r.key == "coi" || r.key.starts_with("coi:"))) continue;
    seen = true;
    const bool sig = r.p < alpha;
    if (is_metric_interaction(r.key)) {
      topological = topological || sig;
    } else {
      overall = overall || sig;
    }
  }
  if (!seen) return GroupDifference::not_applicable;
  if (overall) return topological ? GroupDifference::overall_and_topological : GroupDifference::overall_only;
  return topological ? GroupDifference::topological_only : GroupDifference::none;
}

std::string format_p_value(double p) {
  if (std::isnan(p)) return "NA";
  return p < 1e-4 ? "< 0.0001" : format4(p);
}

std::string format_report_csv(const ComparisonReport& rep) {
  std::string out = "Parameter,Estimate,SE,P-value\n";
  for (const auto& r : rep.rows)
    out += "\"" + r.name + "\"," + format4(r.estimate) + "," + format4(r.se) + "," + format_p_value(r.p) + "\n";
  return out;
}

std::string format_report_text(const ComparisonReport& rep, double alpha) {
  std::ostringstream out;
  for (const auto& r : rep.rows) out << r.name << ": " << r.interpretation << "\n";
  out << "\n";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", alpha);
  out << "Comparison of " << rep.coi_label << " groups at alpha = " << buf << "\n";
  out << "Presence: " << group_difference_label(classify_group_difference(rep, Response::presence, alpha)) << "\n";
  out << "Strength: " << group_difference_label(classify_group_difference(rep, Response::strength, alpha)) << "\n";
  for (const auto& n : rep.notes) out << "Note: " << n << "\n";
  return out.str();
}

// --- thresholding -------------------------------------------------------------

std::optional<Correction> correction_from_name(std::string_view name) {
  if (name == "fdr" || name == "bh") return Correction::fdr;
  if (name == "bonferroni") return Correction::bonferroni;
  return std::nullopt;
}

std::vector<double> adjust_p_values(std::span<const double> p, Correction correction) {
  const std::size_t m = p.size();
  std::vector<double> adj(m);
  if (m == 0) return adj;
  if (correction == Correction::bonferroni) {
    for (std::size_t i = 0; i < m; ++i) adj[i] = std::min(1.0, p[i] * static_cast<double>(m));
    return adj;
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const std::size_t i = order[r];
    running = std::min(running, p[i] * static_cast<double>(m) / static_cast<double>(r + 1));
    adj[i] = std::max(running, p[i]);
  }
  return adj;
}

ThresholdReport dyad_threshold_test(const DyadTable& table, const ModelSpec& spec_in,
                                    std::span<const std::pair<int, int>> dyads, const ThresholdOptions& opts) {
  ThresholdReport rep;
  rep.correction = opts.correction;
  rep.alpha = opts.alpha;
  if (dyads.empty()) return rep;
  for (const auto& [j, k] : dyads)
    if (j < 0 || k >= table.n_nodes || j >= k)
      throw SpecError("dyad (" + std::to_string(j + 1) + "," + std::to_string(k + 1) + ") is not a valid node pair");

  ModelSpec spec = spec_in;
  spec.response = Response::strength;
  const DesignMatrices base = build_design(table, spec);

  std::set<int> level_set;
  for (const auto& s : table.subjects) level_set.insert(s.group);
  std::vector<std::optional<int>> levels;
  if (opts.per_group) {
    for (int l : level_set) levels.emplace_back(l);
  } else {
    levels.emplace_back(std::nullopt);
  }

  // Row membership per requested test.
  const std::size_t nd = static_cast<std::size_t>(table.n_nodes) * (table.n_nodes - 1) / 2;
  auto dyad_index = [&](int j, int k) {
    return static_cast<std::size_t>(j) * table.n_nodes - static_cast<std::size_t>(j) * (j + 1) / 2 + (k - j - 1);
  };
  std::map<std::pair<std::size_t, int>, std::size_t> slot;  // (dyad index, level) -> test
  for (const auto& [j, k] : dyads) {
    for (const auto& lv : levels) {
      const auto key = std::make_pair(dyad_index(j, k), lv ? *lv : -1);
      if (slot.count(key)) continue;
      slot[key] = rep.rows.size();
      DyadTest t;
      t.j = j;
      t.k = k;
      t.group = lv;
      rep.rows.push_back(t);
    }
  }
  std::vector<std::vector<Eigen::Index>> rows_of(rep.rows.size());
  for (std::size_t r = 0; r < base.n_rows(); ++r) {
    const std::size_t src = base.source_rows[r];
    const int s = table.subject[src];
    const auto key = std::make_pair(src % nd, opts.per_group ? table.subjects[static_cast<std::size_t>(s)].group : -1);
    auto it = slot.find(key);
    if (it != slot.end()) rows_of[it->second].push_back(static_cast<Eigen::Index>(r));
  }
  std::vector<std::size_t> testable;
  for (std::size_t t = 0; t < rep.rows.size(); ++t) {
    rep.rows[t].n_obs = rows_of[t].size();
    rep.rows[t].testable = !rows_of[t].empty();
    if (rep.rows[t].testable) testable.push_back(t);
  }

  RemlOptions ro = opts.reml;
  if (!ro.start && !testable.empty()) {
    const LmmFit fit0 = reml_fit(base, {}, ro);
    ro.start = RemlStart{fit0.vc.tau, fit0.vc.sigma2, fit0.vc.at_bound};
  }
  const std::size_t batch = std::max<std::size_t>(1, opts.batch_size);
  for (std::size_t b0 = 0; b0 < testable.size(); b0 += batch) {
    const std::size_t nb = std::min(batch, testable.size() - b0);
    DesignMatrices d = base;
    const Eigen::Index p0 = d.X.cols();
    d.X.conservativeResize(Eigen::NoChange, p0 + static_cast<Eigen::Index>(nb));
    d.X.rightCols(static_cast<Eigen::Index>(nb)).setZero();
    for (std::size_t i = 0; i < nb; ++i) {
      const auto& t = rep.rows[testable[b0 + i]];
      for (auto r : rows_of[testable[b0 + i]]) d.X(r, p0 + static_cast<Eigen::Index>(i)) = 1.0;
      d.fixed_names.push_back("dyad(" + std::to_string(t.j + 1) + "," + std::to_string(t.k + 1) + ")" +
                              (t.group ? "@" + std::to_string(*t.group) : ""));
    }
    const LmmFit fit = reml_fit(d, {}, ro);
    for (std::size_t i = 0; i < nb; ++i) {
      auto& t = rep.rows[testable[b0 + i]];
      const auto res = wald_f_test(fit, static_cast<std::size_t>(p0) + i);
      t.estimate = res.estimate;
      t.se = res.se;
      t.p = res.p;
    }
  }

  std::vector<double> raw;
  for (auto t : testable) raw.push_back(rep.rows[t].p);
  const auto adj = adjust_p_values(raw, opts.correction);
  for (std::size_t i = 0; i < testable.size(); ++i) {
    auto& t = rep.rows[testable[i]];
    t.p_adjusted = adj[i];
    t.removal_candidate = adj[i] >= opts.alpha;
  }
  return rep;
}

std::string format_threshold_csv(const ThresholdReport& rep) {
  std::string out = "node_j,node_k,group,n_obs,estimate,se,p,p_adjusted,removal_candidate\n";
  for (const auto& t : rep.rows) {
    out += std::to_string(t.j + 1) + "," + std::to_string(t.k + 1) + "," + (t.group ? std::to_string(*t.group) : "all") +
           "," + std::to_string(t.n_obs) + ",";
    if (!t.testable) {
      out += "NA,NA,NA,NA,untestable\n";
      continue;
    }
    out += csv::format_double(t.estimate) + "," + csv::format_double(t.se) + "," + csv::format_double(t.p) + "," +
           csv::format_double(t.p_adjusted) + "," + (t.removal_candidate ? "1" : "0") + "\n";
  }
  return out;
}

std::size_t mask_weak_connections(std::vector<SubjectNetwork>& networks, const std::vector<SubjectCovariates>& subjects,
                                  const ThresholdReport& rep, double weak_cutoff) {
  if (!(weak_cutoff >= 0.0)) throw SpecError("--weak-cutoff must be a nonnegative weight");
  std::map<std::string, int> group_of;
  for (const auto& s : subjects) group_of[s.subject_id] = s.group;
  std::size_t removed = 0;
  for (auto& net : networks) {
    auto it = group_of.find(net.subject_id);
    if (it == group_of.end()) throw DataError("network '" + net.subject_id + "' has no covariate row");
    for (const auto& t : rep.rows) {
      if (!t.testable || !t.removal_candidate) continue;
      if (t.group && *t.group != it->second) continue;
      if (t.k >= net.n()) throw DataError("tested dyad lies outside network '" + net.subject_id + "'");
      double& w = net.weights(t.j, t.k);
      if (w > 0.0 && w < weak_cutoff) {
        w = 0.0;
        net.weights(t.k, t.j) = 0.0;
        ++removed;
      }
    }
  }
  return removed;
}

}  // namespace netmix
