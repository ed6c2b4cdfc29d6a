#include "netmix/netdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "netmix/csv.hpp"
#include "netmix/errors.hpp"

namespace netmix {

namespace {

std::string location(Eigen::Index r, Eigen::Index c) {
  return "(" + std::to_string(r) + "," + std::to_string(c) + ")";
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

std::size_t SubjectNetwork::n_present() const {
  std::size_t count = 0;
  for (int j = 0; j < n(); ++j)
    for (int k = j + 1; k < n(); ++k)
      if (weights(j, k) > 0.0) ++count;
  return count;
}

SubjectNetwork clamp_negative_weights(const Eigen::MatrixXd& raw, std::string subject_id) {
  SubjectNetwork net{std::move(subject_id), raw};
  net.weights = net.weights.cwiseMax(0.0);
  return net;
}

SubjectNetwork network_from_matrix(const Eigen::MatrixXd& raw, std::string subject_id,
                                   const LoadOptions& opts) {
  if (raw.rows() != raw.cols())
    throw DataError("connection matrix for '" + subject_id + "' is not square (" +
                    std::to_string(raw.rows()) + "x" + std::to_string(raw.cols()) + ")");
  const Eigen::Index n = raw.rows();
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      const double v = raw(r, c);
      if (r == c) continue;
      if (std::isnan(v)) throw DataError("weight is NaN at " + location(r, c));
      if (v >= 1.0) throw DataError("weight ≥ 1 at " + location(r, c));
      if (v <= -1.0) throw DataError("weight ≤ -1 at " + location(r, c));
    }
  }
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = r + 1; c < n; ++c)
      if (std::abs(raw(r, c) - raw(c, r)) > opts.asymmetry_tolerance)
        throw DataError("matrix asymmetric beyond tolerance at " + location(r, c));

  Eigen::MatrixXd sym = 0.5 * (raw + raw.transpose());
  sym.diagonal().setZero();
  SubjectNetwork net = clamp_negative_weights(sym, std::move(subject_id));
  if (opts.min_weight) {
    const double cut = *opts.min_weight;
    net.weights = net.weights.unaryExpr([cut](double w) { return w < cut ? 0.0 : w; });
  }
  return net;
}

SubjectNetwork load_connection_matrix(const std::filesystem::path& path, std::string subject_id,
                                      const LoadOptions& opts) {
  auto rows = csv::read_file(path);
  if (!rows.empty() && !std::all_of(rows.front().begin(), rows.front().end(),
                                    [](const std::string& s) { return csv::looks_numeric(s); }))
    rows.erase(rows.begin());
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd raw(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (static_cast<Eigen::Index>(rows[r].size()) != n)
      throw DataError("'" + path.string() + "' is not square: row " + std::to_string(r) + " has " +
                      std::to_string(rows[r].size()) + " fields, expected " + std::to_string(n));
    for (Eigen::Index c = 0; c < n; ++c)
      raw(r, c) = csv::parse_double(rows[r][c], path.string() + " at " + location(r, c));
  }
  return network_from_matrix(raw, std::move(subject_id), opts);
}

std::vector<SubjectNetwork> load_networks_dir(const std::filesystem::path& dir, const LoadOptions& opts) {
  if (!std::filesystem::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .csv matrices in '" + dir.string() + "'");
  std::vector<SubjectNetwork> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_connection_matrix(f, f.stem().string(), opts));
  const int n = out.front().n();
  for (const auto& net : out)
    if (net.n() != n)
      throw DataError("network '" + net.subject_id + "' has " + std::to_string(net.n()) +
                      " nodes, expected " + std::to_string(n));
  return out;
}

void write_connection_matrix(const std::filesystem::path& path, const SubjectNetwork& net) {
  auto out = open_out(path);
  for (int r = 0; r < net.n(); ++r) {
    for (int c = 0; c < net.n(); ++c) {
      if (c) out << ',';
      out << csv::format_double(net.weights(r, c));
    }
    out << '\n';
  }
}

NodeAtlas load_atlas(const std::filesystem::path& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty()) throw DataError("atlas '" + path.string() + "' is empty");
  const auto& h = rows.front();
  const std::size_t i_node = csv::column_index(h, "node", path);
  const std::size_t i_label = csv::column_index(h, "label", path);
  const std::size_t i_x = csv::column_index(h, "x_mm", path);
  const std::size_t i_y = csv::column_index(h, "y_mm", path);
  const std::size_t i_z = csv::column_index(h, "z_mm", path);
  const auto n = static_cast<Eigen::Index>(rows.size() - 1);
  NodeAtlas atlas;
  atlas.labels.resize(n);
  atlas.coords_mm.resize(n, 3);
  std::vector<bool> seen(n, false);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = rows[r + 1];
    if (row.size() < h.size()) throw DataError("atlas row " + std::to_string(r + 1) + " is short");
    const double node = csv::parse_double(row[i_node], "atlas node column");
    const auto idx = static_cast<Eigen::Index>(node);
    if (node != static_cast<double>(idx) || idx < 0 || idx >= n || seen[idx])
      throw DataError("atlas node index '" + row[i_node] + "' must be a unique integer in [0," +
                      std::to_string(n) + ")");
    seen[idx] = true;
    atlas.labels[idx] = row[i_label];
    atlas.coords_mm(idx, 0) = csv::parse_double(row[i_x], "atlas x_mm");
    atlas.coords_mm(idx, 1) = csv::parse_double(row[i_y], "atlas y_mm");
    atlas.coords_mm(idx, 2) = csv::parse_double(row[i_z], "atlas z_mm");
  }
  return atlas;
}

void write_atlas(const std::filesystem::path& path, const NodeAtlas& atlas) {
  auto out = open_out(path);
  out << "node,label,x_mm,y_mm,z_mm\n";
  for (int i = 0; i < atlas.n(); ++i)
    out << i << ',' << atlas.labels[i] << ',' << csv::format_double(atlas.coords_mm(i, 0)) << ','
        << csv::format_double(atlas.coords_mm(i, 1)) << ',' << csv::format_double(atlas.coords_mm(i, 2))
        << '\n';
}

std::vector<SubjectCovariates> load_subjects(const std::filesystem::path& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty()) throw DataError("subject table '" + path.string() + "' is empty");
  const auto& h = rows.front();
  const std::size_t i_id = csv::column_index(h, "subject_id", path);
  const std::size_t i_group = csv::column_index(h, "group", path);
  const std::size_t i_sex = csv::column_index(h, "sex", path);
  const std::size_t i_educ = csv::column_index(h, "education_years", path);
  std::vector<SubjectCovariates> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() < h.size()) throw DataError("subject row " + std::to_string(r) + " is short");
    SubjectCovariates s;
    s.subject_id = row[i_id];
    const double g = csv::parse_double(row[i_group], "group of " + s.subject_id);
    const double x = csv::parse_double(row[i_sex], "sex of " + s.subject_id);
    if ((g != 0.0 && g != 1.0) || (x != 0.0 && x != 1.0))
      throw DataError("group and sex must be 0/1 for subject '" + s.subject_id + "'");
    s.group = static_cast<int>(g);
    s.sex = static_cast<int>(x);
    s.education_years = csv::parse_double(row[i_educ], "education_years of " + s.subject_id);
    if (!std::isfinite(s.education_years)) throw DataError("non-finite education for '" + s.subject_id + "'");
    out.push_back(std::move(s));
  }
  return out;
}

void write_subjects(const std::filesystem::path& path, const std::vector<SubjectCovariates>& subjects) {
  auto out = open_out(path);
  out << "subject_id,group,sex,education_years\n";
  for (const auto& s : subjects)
    out << s.subject_id << ',' << s.group << ',' << s.sex << ',' << csv::format_double(s.education_years) << '\n';
}

DistanceMatrix compute_distances(const NodeAtlas& atlas) {
  if (!atlas.coords_mm.allFinite()) {
    for (int i = 0; i < atlas.n(); ++i)
      if (!atlas.coords_mm.row(i).allFinite())
        throw DataError("non-finite coordinate for node " + std::to_string(i));
  }
  const int n = atlas.n();
  DistanceMatrix d{Eigen::MatrixXd::Zero(n, n)};
  for (int j = 0; j < n; ++j)
    for (int k = j + 1; k < n; ++k) {
      const double mm = (atlas.coords_mm.row(j) - atlas.coords_mm.row(k)).norm();
      d.dm(j, k) = d.dm(k, j) = mm / 100.0;
    }
  return d;
}

}  // namespace netmix
