#pragma once

// Static code features of a TIR module. The layout is fixed per manifest
// version; bump kManifestVersion on any change to order or meaning.

#include <array>
#include <string>
#include <vector>

#include "mlcomp/tir.hpp"

namespace mlcomp::features {

inline constexpr std::size_t kNumFeatures = 63;
inline constexpr int kManifestVersion = 1;

struct FeatureVector {
  std::array<double, kNumFeatures> values{};
  int manifest_version = kManifestVersion;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

struct FeatureInfo {
  std::size_t index;
  std::string name;
  std::string description;
};

const std::vector<FeatureInfo>& feature_manifest();

/// Layout: 22 per-kind instruction counts, 9 CFG metrics, 8 loop metrics,
/// 8 call metrics, 8 per-function distribution stats, 8 density ratios.
FeatureVector extract_features(const tir::Module& m);

}  // namespace mlcomp::features
