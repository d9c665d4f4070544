#pragma once

// Density-based epistemic scores over hidden-state embeddings: Mahalanobis
// distance, its background-relative variant, robust density estimation
// (PCA + minimum covariance determinant), and the rank-based hybrid with an
// information score.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lmue {

using Embeddings = std::vector<std::vector<double>>;

struct GaussianFit {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;      // empirical covariance (population) + reg * I
  Eigen::MatrixXd sigma_inv;
  int dim = 0;
  bool degenerate = false;    // empirical covariance had zero trace
};

struct RdeFit {
  Eigen::VectorXd mean;          // PCA centering
  Eigen::MatrixXd projection;    // dim x target_dim, orthonormal columns
  GaussianFit reduced_fit;       // MCD fit in the reduced space
  double explained_variance = 1.0;
};

// Rank-quantile interpolation between a density score and an information
// score.
struct HuqConfig {
  double alpha = 0.5;
  std::vector<double> calibration_density;
  std::vector<double> calibration_info;
  std::string density_estimator = "mahalanobis";
  std::string info_estimator = "msp";
};

struct McdOptions {
  double support_fraction = 0.75;
  int restarts = 50;
  int max_csteps = 20;
  std::uint64_t seed = 0;
};

/// `reg` defaults to 1e-6 * trace(cov) / dim (1e-6 when the trace is zero).
/// Throws InsufficientData for N < 2, Numeric when the regularized
/// covariance cannot be inverted.
GaussianFit fit_gaussian(const Embeddings& embeddings, std::optional<double> reg = std::nullopt);

/// Builds a fit from given moments; throws Numeric if sigma is singular.
GaussianFit gaussian_from_moments(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma);

/// Squared form (h - mu)^T Sigma^{-1} (h - mu).
double mahalanobis(const GaussianFit& fit, const Eigen::VectorXd& h);
double mahalanobis(const GaussianFit& fit, const std::vector<double>& h);

double relative_mahalanobis(const GaussianFit& fit, const GaussianFit& background,
                            const std::vector<double>& h);

/// PCA to `target_dim` components, then FastMCD in the reduced space:
/// random h-subsets (h = ceil(support_fraction * N)) refined by concentration
/// steps until the covariance determinant stops decreasing. support_fraction
/// of 1 reduces to the plain empirical fit.
RdeFit fit_rde(const Embeddings& embeddings, int target_dim, const McdOptions& options = {},
               std::optional<double> reg = std::nullopt);

/// FastMCD location/scatter on already-reduced points (rows of `points`).
GaussianFit fit_mcd(const Eigen::MatrixXd& points, const McdOptions& options,
                    std::optional<double> reg = std::nullopt);

Eigen::VectorXd rde_project(const RdeFit& fit, const std::vector<double>& h);
double rde_score(const RdeFit& fit, const std::vector<double>& h);

/// Fraction of calibration values <= score.
double quantile_rank(const std::vector<double>& calibration, double score);

/// alpha * rank(density) + (1 - alpha) * rank(info). Throws Input when the
/// calibration lists are empty, unequal, or shorter than 10.
double huq_combine(const HuqConfig& cfg, double density_score, double info_score);

// Fitted artifacts for the density estimators, persisted together.
//
// File layout (all integers little-endian, reals IEEE-754 binary64 LE):
//   magic  "LMUEDENS" (8 bytes), u32 version (=1), u32 section_count
//   section: u32 tag, u64 payload_bytes, payload
//     tag 1 main Gaussian, tag 2 background Gaussian, tag 3 RDE, tag 4 HUQ
//   Gaussian: u64 dim, u8 degenerate, mu[dim], sigma[dim*dim], sigma_inv[dim*dim]
//   RDE:      u64 dim, u64 target_dim, f64 explained_variance, mean[dim],
//             projection[dim*target_dim], Gaussian
//   HUQ:      f64 alpha, u64 n, density[n], info[n], str density_estimator,
//             str info_estimator  (str = u32 length + bytes)
// Matrices are row-major.
struct DensityModel {
  std::optional<GaussianFit> gaussian;
  std::optional<GaussianFit> background;
  std::optional<RdeFit> rde;
  std::optional<HuqConfig> huq;
};

void save_density_model(const DensityModel& model, const std::filesystem::path& path);
DensityModel load_density_model(const std::filesystem::path& path);

}  // namespace lmue
