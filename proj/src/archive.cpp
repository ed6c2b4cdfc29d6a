#include "netmix/archive.hpp"

#include <fstream>
#include <json.hpp>

#include "netmix/errors.hpp"

namespace netmix {

using json = nlohmann::ordered_json;

namespace {

constexpr int kVersion = 1;

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json mat(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec(m.row(i).transpose()));
  return rows;
}

Eigen::VectorXd to_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd to_mat(const json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto r = to_vec(j[i]);
    if (r.size() != cols) throw DataError("fit archive: ragged matrix");
    m.row(static_cast<Eigen::Index>(i)) = r.transpose();
  }
  return m;
}

json part_json(const LmmFit& f) {
  json j;
  j["fixed_names"] = f.fixed_names;
  j["beta"] = vec(f.beta);
  j["beta_cov"] = mat(f.beta_cov);
  j["variance_components"] = {{"names", f.vc.names},
                              {"tau", vec(f.vc.tau)},
                              {"sigma2", f.vc.sigma2},
                              {"at_bound", f.vc.at_bound}};
  j["blup_columns"] = f.blups.cols();
  j["blups"] = mat(f.blups);
  j["reml_loglik"] = f.reml_loglik;
  j["n_rows"] = f.n_rows;
  j["residual_df"] = f.residual_df;
  json trace = json::array();
  for (const auto& e : f.trace.entries) trace.push_back({e.iteration, e.objective, e.grad_max, e.note});
  j["convergence"] = {{"converged", f.trace.converged}, {"message", f.trace.message}, {"trace", trace}};
  return j;
}

void read_part(const json& j, LmmFit& f) {
  f.fixed_names = j.at("fixed_names").get<std::vector<std::string>>();
  f.beta = to_vec(j.at("beta"));
  f.beta_cov = to_mat(j.at("beta_cov"), f.beta.size());
  const auto& vc = j.at("variance_components");
  f.vc.names = vc.at("names").get<std::vector<std::string>>();
  f.vc.tau = to_vec(vc.at("tau"));
  f.vc.sigma2 = vc.at("sigma2").get<double>();
  f.vc.at_bound = vc.at("at_bound").get<std::vector<bool>>();
  f.blups = to_mat(j.at("blups"), j.at("blup_columns").get<Eigen::Index>());
  f.reml_loglik = j.at("reml_loglik").get<double>();
  f.n_rows = j.at("n_rows").get<std::size_t>();
  f.residual_df = j.at("residual_df").get<double>();
  const auto& c = j.at("convergence");
  f.trace.converged = c.at("converged").get<bool>();
  f.trace.message = c.at("message").get<std::string>();
  for (const auto& e : c.at("trace"))
    f.trace.entries.push_back({e.at(0).get<int>(), e.at(1).get<double>(), e.at(2).get<double>(), e.at(3).get<std::string>()});
  if (static_cast<std::size_t>(f.beta.size()) != f.fixed_names.size() ||
      static_cast<std::size_t>(f.vc.tau.size()) != f.vc.names.size())
    throw DataError("fit archive: inconsistent part dimensions");
}

json covariate_map(const CovariateVector& v) {
  json j = json::object();
  for (int c = 0; c < kNumCovariates; ++c) j[std::string(covariate_name(static_cast<Covariate>(c)))] = v[c];
  return j;
}

CovariateVector read_covariate_map(const json& j) {
  CovariateVector v{};
  for (int c = 0; c < kNumCovariates; ++c) v[c] = j.at(std::string(covariate_name(static_cast<Covariate>(c)))).get<double>();
  return v;
}

}  // namespace

std::string fit_archive_json(const TwoPartFit& fit) {
  json j;
  j["format"] = "netmix-two-part-fit";
  j["version"] = kVersion;
  j["n_nodes"] = fit.n_nodes;
  j["spec"] = json::parse(model_spec_json(fit.spec));
  j["presence_spec"] = json::parse(model_spec_json(fit.presence_spec));
  j["strength_spec"] = json::parse(model_spec_json(fit.strength_spec));
  j["centering"] = {{"mean", covariate_map(fit.centering.mean)},
                    {"min", covariate_map(fit.centering.min)},
                    {"max", covariate_map(fit.centering.max)},
                    {"leverage_fallbacks", fit.centering.leverage_fallbacks}};
  j["presence"] = part_json(fit.presence);
  j["presence"]["pql_iterations"] = fit.presence.pql_iterations;
  j["strength"] = part_json(fit.strength);
  return j.dump(1) + "\n";
}

TwoPartFit parse_fit_archive(std::string_view text) {
  TwoPartFit fit;
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != "netmix-two-part-fit") throw DataError("not a two-part fit archive");
    if (j.at("version").get<int>() != kVersion) throw DataError("unsupported fit archive version");
    fit.n_nodes = j.at("n_nodes").get<int>();
    fit.spec = parse_model_spec(j.at("spec").dump());
    fit.presence_spec = parse_model_spec(j.at("presence_spec").dump());
    fit.strength_spec = parse_model_spec(j.at("strength_spec").dump());
    const auto& c = j.at("centering");
    fit.centering.mean = read_covariate_map(c.at("mean"));
    fit.centering.min = read_covariate_map(c.at("min"));
    fit.centering.max = read_covariate_map(c.at("max"));
    fit.centering.leverage_fallbacks = c.at("leverage_fallbacks").get<std::size_t>();
    read_part(j.at("presence"), fit.presence);
    fit.presence.pql_iterations = j.at("presence").at("pql_iterations").get<int>();
    read_part(j.at("strength"), fit.strength);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed fit archive: ") + e.what());
  }
  return fit;
}

void save_fit_archive(const std::filesystem::path& path, const TwoPartFit& fit) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << fit_archive_json(fit);
}

TwoPartFit load_fit_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read fit archive '" + path.string() + "'");
  return parse_fit_archive(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
}

}  // namespace netmix
