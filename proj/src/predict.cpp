#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <fstream>
#include <sstream>

#include "netmix/csv.hpp"
#include "netmix/errors.hpp"
#include "netmix/predictsim.hpp"

namespace netmix {

namespace {

double expit(double e) { return 1.0 / (1.0 + std::exp(-e)); }

// z' D z for a generic or a concrete dyad.
double random_variance(const ModelSpec& spec, const LmmFit& part, const CovariateVector& cov, int n_nodes,
                       const std::optional<std::pair<int, int>>& dyad) {
  std::vector<std::string> cols, comp_names;
  std::vector<int> comp;
  random_layout(spec, n_nodes, cols, comp, comp_names);
  double var = 0.0, node_sum = 0.0;
  int node_cols = 0;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const double tau = part.vc.tau[comp[c]];
    if (cols[c] == "intercept") {
      var += tau;
    } else if (auto cv = covariate_from_name(cols[c])) {
      const double z = cov[static_cast<int>(*cv)];
      var += z * z * tau;
    } else {
      const int node = std::stoi(cols[c].substr(4)) - 1;
      node_sum += tau;
      ++node_cols;
      if (dyad && (node == dyad->first || node == dyad->second)) var += tau;
    }
  }
  if (!dyad && node_cols > 0) var += 2.0 * node_sum / node_cols;
  return var;
}

}  // namespace

PredictionCurve predict_curve(const TwoPartFit& fit, Scale scale, Covariate vary, std::span<const double> grid,
                              std::span<const int> group_levels, const PredictOptions& opts) {
  if (vary == Covariate::dist2) throw SpecError("vary 'dist' instead of 'dist^2'; the square follows automatically");
  const bool prob = scale == Scale::probability;
  const LmmFit& part = prob ? static_cast<const LmmFit&>(fit.presence) : fit.strength;
  const ModelSpec& spec = prob ? fit.presence_spec : fit.strength_spec;
  const auto& rec = fit.centering;
  if (opts.dyad && (opts.dyad->first < 0 || opts.dyad->second >= fit.n_nodes || opts.dyad->first >= opts.dyad->second))
    throw SpecError("prediction dyad must satisfy 0 <= j < k < n_nodes");

  PredictionCurve curve;
  curve.scale = scale;
  curve.vary = vary;
  const double tq = boost::math::quantile(boost::math::students_t(part.residual_df), 0.5 + 0.5 * opts.level);
  const int vi = static_cast<int>(vary);
  const double lo = rec.min[vi], hi = rec.max[vi], span = hi - lo;

  for (double g : grid) {
    if (g < lo - 3.0 * span || g > hi + 3.0 * span) {
      std::ostringstream w;
      w << "grid value " << g << " for " << covariate_name(vary) << " is far outside the observed range [" << lo
        << ", " << hi << "]";
      curve.warnings.push_back(w.str());
    }
  }
  for (int level : group_levels) {
    for (double g : grid) {
      CovariateVector cov{};
      cov[static_cast<int>(Covariate::coi)] = level;
      cov[vi] = rec.center(vary, g);
      if (vary == Covariate::dist) cov[static_cast<int>(Covariate::dist2)] = rec.center(Covariate::dist2, g);
      const Eigen::VectorXd x = fixed_design_row(spec, cov);
      const double eta = x.dot(part.beta);
      double var = x.dot(part.beta_cov * x) + random_variance(spec, part, cov, fit.n_nodes, opts.dyad);
      if (!prob) var += part.vc.sigma2;
      const double half = tq * std::sqrt(std::max(var, 0.0));
      PredictionPoint pt{g, level, 0.0, 0.0, 0.0};
      if (prob) {
        pt.point = expit(eta);
        pt.lower = expit(eta - half);
        pt.upper = expit(eta + half);
      } else {
        pt.point = inv_fisher_z(eta);
        pt.lower = inv_fisher_z(eta - half);
        pt.upper = inv_fisher_z(eta + half);
      }
      curve.points.push_back(pt);
    }
  }
  return curve;
}

void write_prediction_csv(const std::filesystem::path& path, const PredictionCurve& curve) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "group,grid,point,lo,hi\n";
  for (const auto& p : curve.points)
    out << p.group << "," << csv::format_double(p.grid) << "," << csv::format_double(p.point) << ","
        << csv::format_double(p.lower) << "," << csv::format_double(p.upper) << "\n";
  for (const auto& w : curve.warnings) out << "# warning: " << w << "\n";
}

void write_prediction_svg(const std::filesystem::path& path, const PredictionCurve& curve) {
  if (curve.points.empty()) return;
  constexpr double W = 640, H = 400, M = 50;
  double x0 = curve.points.front().grid, x1 = x0, y0 = curve.points.front().lower, y1 = curve.points.front().upper;
  for (const auto& p : curve.points) {
    x0 = std::min(x0, p.grid);
    x1 = std::max(x1, p.grid);
    y0 = std::min(y0, p.lower);
    y1 = std::max(y1, p.upper);
  }
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) y1 = y0 + 1.0;
  auto sx = [&](double v) { return M + (v - x0) / (x1 - x0) * (W - 2 * M); };
  auto sy = [&](double v) { return H - M - (v - y0) / (y1 - y0) * (H - 2 * M); };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M << "\" y2=\"" << H - M
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << M << "\" y1=\"" << M << "\" x2=\"" << M << "\" y2=\"" << H - M << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << covariate_name(curve.vary)
      << "</text>\n";
  out << "<text x=\"14\" y=\"" << H / 2 << "\" transform=\"rotate(-90 14 " << H / 2 << ")\" text-anchor=\"middle\">"
      << (curve.scale == Scale::probability ? "connection probability" : "connection strength") << "</text>\n";
  out << "<text x=\"" << M << "\" y=\"" << H - M + 16 << "\" font-size=\"10\">" << x0 << "</text>\n";
  out << "<text x=\"" << W - M << "\" y=\"" << H - M + 16 << "\" font-size=\"10\" text-anchor=\"end\">" << x1
      << "</text>\n";
  out << "<text x=\"" << M - 4 << "\" y=\"" << H - M << "\" font-size=\"10\" text-anchor=\"end\">" << y0 << "</text>\n";
  out << "<text x=\"" << M - 4 << "\" y=\"" << M + 4 << "\" font-size=\"10\" text-anchor=\"end\">" << y1 << "</text>\n";

  std::vector<int> groups;
  for (const auto& p : curve.points)
    if (std::find(groups.begin(), groups.end(), p.group) == groups.end()) groups.push_back(p.group);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const char* color = colors[gi % 4];
    std::ostringstream band, line;
    std::vector<const PredictionPoint*> pts;
    for (const auto& p : curve.points)
      if (p.group == groups[gi]) pts.push_back(&p);
    for (const auto* p : pts) band << sx(p->grid) << "," << sy(p->upper) << " ";
    for (auto it = pts.rbegin(); it != pts.rend(); ++it) band << sx((*it)->grid) << "," << sy((*it)->lower) << " ";
    for (const auto* p : pts) line << sx(p->grid) << "," << sy(p->point) << " ";
    out << "<polygon points=\"" << band.str() << "\" fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    out << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << W - M - 60 << "\" y=\"" << M + 16 * gi << "\" fill=\"" << color << "\">group "
        << groups[gi] << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace netmix
