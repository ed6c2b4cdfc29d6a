#pragma once

// Connection matrices, node atlases and subject covariate tables.

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace netmix {

/// One participant's weighted network: symmetric, zero diagonal, weights in [0, 1).
struct SubjectNetwork {
  std::string subject_id;
  Eigen::MatrixXd weights;

  int n() const { return static_cast<int>(weights.rows()); }
  std::size_t n_dyads() const { return static_cast<std::size_t>(n()) * (n() - 1) / 2; }
  std::size_t n_present() const;
};

struct SubjectCovariates {
  std::string subject_id;
  int group = 0;  // covariate of interest, 0 = reference level
  int sex = 0;
  double education_years = 0.0;
};

struct NodeAtlas {
  std::vector<std::string> labels;
  Eigen::MatrixX3d coords_mm;

  int n() const { return static_cast<int>(coords_mm.rows()); }
};

/// Euclidean inter-node distances in decimeters.
struct DistanceMatrix {
  Eigen::MatrixXd dm;
};

struct LoadOptions {
  double asymmetry_tolerance = 1e-8;
  /// Optional absolute cutoff: weights below it are treated as absent.
  std::optional<double> min_weight;
};

/// Reads a dense comma-separated n x n matrix (an optional non-numeric header
/// line is skipped). Asymmetry up to the tolerance is averaged away, the
/// diagonal is zeroed and negative weights are clamped to 0.
SubjectNetwork load_connection_matrix(const std::filesystem::path& path, std::string subject_id,
                                      const LoadOptions& opts = {});

/// Same validation as load_connection_matrix, applied to an in-memory matrix.
SubjectNetwork network_from_matrix(const Eigen::MatrixXd& raw, std::string subject_id,
                                   const LoadOptions& opts = {});

/// Replaces negative entries with exactly 0; nonnegative entries are untouched.
SubjectNetwork clamp_negative_weights(const Eigen::MatrixXd& raw, std::string subject_id = {});

/// Every *.csv file of a directory, in lexicographic file-name order; the
/// subject id is the file stem.
std::vector<SubjectNetwork> load_networks_dir(const std::filesystem::path& dir, const LoadOptions& opts = {});

void write_connection_matrix(const std::filesystem::path& path, const SubjectNetwork& net);

/// Columns node,label,x_mm,y_mm,z_mm.
NodeAtlas load_atlas(const std::filesystem::path& path);
void write_atlas(const std::filesystem::path& path, const NodeAtlas& atlas);

/// Columns subject_id,group,sex,education_years.
std::vector<SubjectCovariates> load_subjects(const std::filesystem::path& path);
void write_subjects(const std::filesystem::path& path, const std::vector<SubjectCovariates>& subjects);

DistanceMatrix compute_distances(const NodeAtlas& atlas);

}  // namespace netmix
