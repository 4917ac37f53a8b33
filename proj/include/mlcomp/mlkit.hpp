#pragma once

// Preprocessing transforms, regressors and accuracy metrics.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace mlcomp::mlkit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Preprocessing

enum class PreprocessorKind { MeanStd, MinMax, MaxAbs, Robust, Pca };

std::string_view preprocessor_name(PreprocessorKind k);
PreprocessorKind preprocessor_from_name(std::string_view name);

struct PreprocessorSpec {
  PreprocessorKind kind = PreprocessorKind::MeanStd;
  /// PCA only: fixed output dimension instead of the MLE rule.
  std::optional<std::size_t> n_components;
};

/// Which rule chose the PCA output dimension.
enum class PcaRule { None, Mle, VarianceFallback, Fixed };

std::string_view pca_rule_name(PcaRule r);

class Preprocessor {
 public:
  /// Requires at least two rows. Constant columns map to 0 (scalers) or are
  /// left out of the decomposition (PCA).
  static Preprocessor fit(const PreprocessorSpec& spec, const Matrix& X);

  Matrix transform(const Matrix& X) const;
  Matrix inverse_transform(const Matrix& Z) const;

  PreprocessorKind kind() const { return kind_; }
  std::size_t input_dim() const { return static_cast<std::size_t>(offset_.size()); }
  std::size_t output_dim() const;
  PcaRule pca_rule() const { return rule_; }
  /// PCA components as columns (non-constant input columns × d).
  const Matrix& components() const { return components_; }
  /// PCA eigenvalues of the retained spectrum, descending.
  const Vector& spectrum() const { return spectrum_; }

  nlohmann::json to_json() const;
  static Preprocessor from_json(const nlohmann::json& j);

 private:
  PreprocessorKind kind_ = PreprocessorKind::MeanStd;
  Vector offset_;  // subtracted per column (mean, min, median, or 0)
  Vector scale_;   // divided per column
  std::vector<bool> constant_;
  // PCA
  std::vector<std::size_t> active_;  // non-constant columns fed to the decomposition
  Matrix components_;
  Vector spectrum_;
  PcaRule rule_ = PcaRule::None;
};

/// Minka's Laplace-approximated log-likelihood of keeping `rank` components of
/// an eigenvalue spectrum (descending) estimated from n samples.
double pca_log_likelihood(const Vector& spectrum, std::size_t rank, std::size_t n_samples);

// ---------------------------------------------------------------------------
// Regression

enum class RegressorKind { Ols, Ridge, Knn, Tree, Forest };

std::string_view regressor_name(RegressorKind k);
RegressorKind regressor_from_name(std::string_view name);

struct RegressorSpec {
  RegressorKind kind = RegressorKind::Ols;
  double lambda = 1.0;           // ridge
  std::size_t k = 1;             // knn
  std::size_t max_depth = 8;     // tree, forest
  std::size_t min_leaf = 1;      // tree, forest
  std::size_t n_trees = 16;      // forest
  double feature_subsample = 1;  // forest: share of features tried per split
  std::uint64_t seed = 0;        // forest
};

nlohmann::json spec_to_json(const RegressorSpec& s);
RegressorSpec spec_from_json(const nlohmann::json& j);

class Regressor {
 public:
  static Regressor fit(const RegressorSpec& spec, const Matrix& X, const Vector& y);

  Vector predict(const Matrix& X) const;
  const RegressorSpec& spec() const { return spec_; }
  /// True when ols hit singular normal equations and used a tiny ridge.
  bool used_ridge_fallback() const { return ridge_fallback_; }

  nlohmann::json to_json() const;
  static Regressor from_json(const nlohmann::json& j);

  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };

 private:
  RegressorSpec spec_;
  bool ridge_fallback_ = false;
  // linear
  Vector weights_;
  double intercept_ = 0.0;
  // knn
  Matrix train_x_;
  Vector train_y_;
  // trees (one for a tree, many for a forest)
  std::vector<std::vector<Node>> trees_;
};

inline constexpr double kOlsFallbackLambda = 1e-8;

// ---------------------------------------------------------------------------
// Metrics

struct RegressionMetrics {
  double mape = 0.0;
  double max_ape = 0.0;
  double r2 = 0.0;
  std::size_t zeros_excluded = 0;
};

/// Percentage errors skip entries with y_true == 0; throws when all are zero.
RegressionMetrics regression_metrics(const Vector& y_true, const Vector& y_pred);

}  // namespace mlcomp::mlkit
