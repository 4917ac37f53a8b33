#pragma once

// Performance estimator: model search over preprocessor x regressor pairs
// that predicts dynamic metrics from static code features.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "mlcomp/dataset.hpp"
#include "mlcomp/kv.hpp"
#include "mlcomp/mlkit.hpp"

namespace mlcomp::pe {

inline constexpr int kBundleVersion = 1;
inline constexpr std::size_t kNumMetrics = 4;
/// static features followed by per-kind static instruction counts.
inline constexpr std::size_t kInputDim = features::kNumFeatures + tir::kNumOpcodes;

/// Estimated metrics, in this order.
const std::array<std::string, kNumMetrics>& metric_names();

std::vector<double> pe_input(const features::FeatureVector& f,
                             const std::array<std::uint64_t, tir::kNumOpcodes>& counts);
std::array<double, kNumMetrics> metric_values(const exec::DynamicFeatures& d);

struct Candidate {
  mlkit::PreprocessorKind preprocessor;
  mlkit::RegressorKind regressor;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct Range {
  double lo;
  double hi;
};

struct SearchRanges {
  Range ridge_lambda{1e-6, 10.0};  // log-uniform
  Range knn_k{1, 8};
  Range tree_max_depth{2, 16};
  Range tree_min_leaf{1, 4};
  Range forest_n_trees{8, 48};
  Range forest_max_depth{4, 16};
  Range forest_feature_subsample{0.3, 1.0};
};

struct PeSearchConfig {
  double accuracy_thr = 0.98;
  std::vector<Candidate> models = all_candidates();
  std::size_t trials_per_pair = 8;
  double split_fraction = 0.8;
  std::uint64_t seed = 0;
  SearchRanges ranges;

  static std::vector<Candidate> all_candidates();
  void validate() const;
};

/// Reads `accuracy_thr`, `trials_per_pair`, `split_fraction`, `seed`,
/// `models` (comma list of `preprocessor:regressor`) and `range.*` keys;
/// anything absent keeps its default.
PeSearchConfig search_config_from(const kv::Table& t, PeSearchConfig base = {});

struct TrialRecord {
  std::size_t trial = 0;
  std::size_t pair = 0;
  mlkit::PreprocessorKind preprocessor = mlkit::PreprocessorKind::MeanStd;
  mlkit::RegressorSpec regressor;
  bool failed = false;
  std::string error;
  double accuracy = 0.0;
  std::array<double, kNumMetrics> test_mape{};
};

struct PeBundle {
  std::string platform_name;
  int manifest_version = features::kManifestVersion;
  mlkit::Preprocessor preprocessor;
  std::array<mlkit::Regressor, kNumMetrics> regressors;
  std::array<mlkit::RegressionMetrics, kNumMetrics> test_metrics{};
  double accuracy = 0.0;
  std::size_t best_trial = 0;
  std::vector<TrialRecord> log;
  PeSearchConfig config;
  std::uint64_t split_seed = 0;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Deterministic shuffled split of n samples; requires n >= 5.
Split split_indices(std::size_t n, double fraction, std::uint64_t seed);
std::uint64_t split_seed_for(std::uint64_t search_seed);

PeBundle model_search(const dataset::Dataset& d, const PeSearchConfig& cfg);

/// Estimates of the four metrics, clamped at zero.
std::array<double, kNumMetrics> predict(const PeBundle& b, const features::FeatureVector& f,
                                        const std::array<std::uint64_t, tir::kNumOpcodes>& counts);

/// Estimated dynamics, with the exact code size supplied by the caller.
exec::DynamicFeatures predict_dynamics(const PeBundle& b, const features::FeatureVector& f,
                                       const std::array<std::uint64_t, tir::kNumOpcodes>& counts,
                                       std::uint64_t code_size_bytes);

std::string format_pe(const PeBundle& b);
PeBundle parse_pe(const std::string& text);
void save_pe(const PeBundle& b, const std::filesystem::path& path);
PeBundle load_pe(const std::filesystem::path& path);

}  // namespace mlcomp::pe
