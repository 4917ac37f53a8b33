#include "mlcomp/pe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "mlcomp/error.hpp"
#include "mlcomp/rng.hpp"

namespace mlcomp::pe {

using mlkit::Matrix;
using mlkit::PreprocessorKind;
using mlkit::RegressorKind;
using mlkit::Vector;
using nlohmann::json;

const std::array<std::string, kNumMetrics>& metric_names() {
  static const std::array<std::string, kNumMetrics> names = {"exec_time_s", "energy_j",
                                                             "executed_instructions", "avg_power_w"};
  return names;
}

std::vector<double> pe_input(const features::FeatureVector& f,
                             const std::array<std::uint64_t, tir::kNumOpcodes>& counts) {
  std::vector<double> x(f.values.begin(), f.values.end());
  for (auto c : counts) x.push_back(static_cast<double>(c));
  return x;
}

std::array<double, kNumMetrics> metric_values(const exec::DynamicFeatures& d) {
  return {d.exec_time_s, d.energy_j, static_cast<double>(d.executed_instructions), d.avg_power_w};
}

std::vector<Candidate> PeSearchConfig::all_candidates() {
  std::vector<Candidate> out;
  for (auto p : {PreprocessorKind::MeanStd, PreprocessorKind::MinMax, PreprocessorKind::MaxAbs,
                 PreprocessorKind::Robust, PreprocessorKind::Pca}) {
    for (auto r : {RegressorKind::Ols, RegressorKind::Ridge, RegressorKind::Knn, RegressorKind::Tree,
                   RegressorKind::Forest}) {
      out.push_back({p, r});
    }
  }
  return out;
}

void PeSearchConfig::validate() const {
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw Error("pe: split_fraction must lie in (0, 1)");
  if (trials_per_pair < 1) throw Error("pe: trials_per_pair must be >= 1");
  if (models.empty()) throw Error("pe: model list is empty");
  auto check = [](const Range& r, double floor, const char* what) {
    if (!(r.lo >= floor && r.hi >= r.lo)) throw Error(std::string("pe: bad range for ") + what);
  };
  check(ranges.ridge_lambda, 1e-300, "ridge.lambda");
  check(ranges.knn_k, 1, "knn.k");
  check(ranges.tree_max_depth, 1, "tree.max_depth");
  check(ranges.tree_min_leaf, 1, "tree.min_leaf");
  check(ranges.forest_n_trees, 1, "forest.n_trees");
  check(ranges.forest_max_depth, 1, "forest.max_depth");
  check(ranges.forest_feature_subsample, 1e-9, "forest.feature_subsample");
  if (ranges.forest_feature_subsample.hi > 1.0) throw Error("pe: forest.feature_subsample must be <= 1");
}

namespace {

Range parse_range(const std::string& text, const std::string& key) {
  const auto v = kv::to_double_list(text, key);
  if (v.size() != 2) throw FormatError(key + ": expected 'lo, hi'");
  return {v[0], v[1]};
}

}  // namespace

PeSearchConfig search_config_from(const kv::Table& t, PeSearchConfig cfg) {
  if (auto v = t.find("accuracy_thr")) cfg.accuracy_thr = kv::to_double(*v, "accuracy_thr");
  if (auto v = t.find("trials_per_pair")) {
    const auto n = kv::to_int(*v, "trials_per_pair");
    if (n < 1) throw FormatError("trials_per_pair must be >= 1");
    cfg.trials_per_pair = static_cast<std::size_t>(n);
  }
  if (auto v = t.find("split_fraction")) cfg.split_fraction = kv::to_double(*v, "split_fraction");
  if (auto v = t.find("seed")) cfg.seed = static_cast<std::uint64_t>(kv::to_int(*v, "seed"));
  if (auto v = t.find("models")) {
    cfg.models.clear();
    std::string item;
    std::string text = *v + ",";
    for (char c : text) {
      if (c != ',') {
        if (!std::isspace(static_cast<unsigned char>(c))) item += c;
        continue;
      }
      if (item.empty()) continue;
      const auto colon = item.find(':');
      if (colon == std::string::npos) throw FormatError("models: expected 'preprocessor:regressor', got '" + item + "'");
      cfg.models.push_back({mlkit::preprocessor_from_name(item.substr(0, colon)),
                            mlkit::regressor_from_name(item.substr(colon + 1))});
      item.clear();
    }
  }
  auto& r = cfg.ranges;
  const std::pair<const char*, Range*> ranges[] = {
      {"range.ridge.lambda", &r.ridge_lambda},
      {"range.knn.k", &r.knn_k},
      {"range.tree.max_depth", &r.tree_max_depth},
      {"range.tree.min_leaf", &r.tree_min_leaf},
      {"range.forest.n_trees", &r.forest_n_trees},
      {"range.forest.max_depth", &r.forest_max_depth},
      {"range.forest.feature_subsample", &r.forest_feature_subsample}};
  for (const auto& [key, dst] : ranges) {
    if (auto v = t.find(key)) *dst = parse_range(*v, key);
  }
  cfg.validate();
  return cfg;
}

std::uint64_t split_seed_for(std::uint64_t search_seed) { return derive_seed(search_seed, {0x5b117}); }

Split split_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (n < 5) throw Error("pe: dataset too small (need at least 5 samples, have " + std::to_string(n) + ")");
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error("pe: split_fraction must lie in (0, 1)");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx.begin(), idx.end());
  auto n_train = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  n_train = std::min(n_train, n - 1);
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  return s;
}

namespace {

struct Design {
  Matrix X;
  std::array<Vector, kNumMetrics> y;
};

Design design_of(const dataset::Dataset& d, const std::vector<std::size_t>& rows) {
  Design out;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kInputDim));
  for (auto& y : out.y) y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = d.samples[rows[i]];
    const auto x = pe_input(s.static_features, s.instruction_counts);
    for (std::size_t j = 0; j < kInputDim; ++j) out.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x[j];
    const auto m = metric_values(s.dynamics);
    for (std::size_t k = 0; k < kNumMetrics; ++k) out.y[k][static_cast<Eigen::Index>(i)] = m[k];
  }
  return out;
}

bool has_hyperparameters(RegressorKind k) { return k != RegressorKind::Ols; }

std::int64_t draw_int(Rng& rng, const Range& r) {
  return rng.uniform_int(static_cast<std::int64_t>(std::llround(r.lo)), static_cast<std::int64_t>(std::llround(r.hi)));
}

mlkit::RegressorSpec draw_spec(RegressorKind kind, const SearchRanges& r, Rng& rng) {
  mlkit::RegressorSpec s;
  s.kind = kind;
  switch (kind) {
    case RegressorKind::Ols:
      break;
    case RegressorKind::Ridge:
      s.lambda = rng.log_uniform(r.ridge_lambda.lo, r.ridge_lambda.hi);
      break;
    case RegressorKind::Knn:
      s.k = static_cast<std::size_t>(draw_int(rng, r.knn_k));
      break;
    case RegressorKind::Tree:
      s.max_depth = static_cast<std::size_t>(draw_int(rng, r.tree_max_depth));
      s.min_leaf = static_cast<std::size_t>(draw_int(rng, r.tree_min_leaf));
      break;
    case RegressorKind::Forest:
      s.n_trees = static_cast<std::size_t>(draw_int(rng, r.forest_n_trees));
      s.max_depth = static_cast<std::size_t>(draw_int(rng, r.forest_max_depth));
      s.feature_subsample = rng.uniform(r.forest_feature_subsample.lo, r.forest_feature_subsample.hi);
      s.seed = rng.next();
      break;
  }
  return s;
}

struct Fitted {
  mlkit::Preprocessor preprocessor;
  std::array<mlkit::Regressor, kNumMetrics> regressors;
};

Fitted fit_all(PreprocessorKind pk, const mlkit::RegressorSpec& spec, const Design& train) {
  Fitted f;
  f.preprocessor = mlkit::Preprocessor::fit({pk, {}}, train.X);
  const Matrix Z = f.preprocessor.transform(train.X);
  for (std::size_t k = 0; k < kNumMetrics; ++k) f.regressors[k] = mlkit::Regressor::fit(spec, Z, train.y[k]);
  return f;
}

Vector clamped(Vector v) { return v.cwiseMax(0.0); }

}  // namespace

PeBundle model_search(const dataset::Dataset& d, const PeSearchConfig& cfg) {
  cfg.validate();
  PeBundle b;
  b.platform_name = d.platform;
  b.manifest_version = d.manifest_version;
  b.config = cfg;
  b.split_seed = split_seed_for(cfg.seed);
  const Split split = split_indices(d.samples.size(), cfg.split_fraction, b.split_seed);
  const Design train = design_of(d, split.train);
  const Design test = design_of(d, split.test);

  double best = -std::numeric_limits<double>::infinity();
  std::optional<std::size_t> best_index;
  std::size_t trial = 0;
  bool stop = false;
  for (std::size_t pair = 0; pair < cfg.models.size() && !stop; ++pair) {
    const Candidate& c = cfg.models[pair];
    const std::size_t trials = has_hyperparameters(c.regressor) ? cfg.trials_per_pair : 1;
    for (std::size_t t = 0; t < trials; ++t, ++trial) {
      Rng rng(derive_seed(cfg.seed, {pair, t}));
      TrialRecord rec;
      rec.trial = trial;
      rec.pair = pair;
      rec.preprocessor = c.preprocessor;
      rec.regressor = draw_spec(c.regressor, cfg.ranges, rng);
      try {
        const Fitted f = fit_all(c.preprocessor, rec.regressor, train);
        const Matrix Z = f.preprocessor.transform(test.X);
        double sum = 0.0;
        for (std::size_t k = 0; k < kNumMetrics; ++k) {
          const Vector pred = clamped(f.regressors[k].predict(Z));
          if (!pred.allFinite()) throw Error("non-finite prediction for " + metric_names()[k]);
          rec.test_mape[k] = mlkit::regression_metrics(test.y[k], pred).mape;
          sum += rec.test_mape[k];
        }
        rec.accuracy = 1.0 - sum / static_cast<double>(kNumMetrics);
      } catch (const std::exception& e) {
        rec.failed = true;
        rec.error = e.what();
        rec.accuracy = -std::numeric_limits<double>::infinity();
      }
      b.log.push_back(rec);
      if (!rec.failed && rec.accuracy > best) {
        best = rec.accuracy;
        best_index = b.log.size() - 1;
      }
      if (best > cfg.accuracy_thr) {
        stop = true;
        ++trial;
        break;
      }
    }
  }
  if (!best_index) throw Error("pe: every trial failed");

  const TrialRecord& win = b.log[*best_index];
  b.best_trial = win.trial;
  b.accuracy = win.accuracy;
  {
    // Metrics of the winner on the search split, reported alongside the refit.
    const Fitted f = fit_all(win.preprocessor, win.regressor, train);
    const Matrix Z = f.preprocessor.transform(test.X);
    for (std::size_t k = 0; k < kNumMetrics; ++k) {
      b.test_metrics[k] = mlkit::regression_metrics(test.y[k], clamped(f.regressors[k].predict(Z)));
    }
  }
  std::vector<std::size_t> all(d.samples.size());
  std::iota(all.begin(), all.end(), 0);
  Fitted full = fit_all(win.preprocessor, win.regressor, design_of(d, all));
  b.preprocessor = std::move(full.preprocessor);
  b.regressors = std::move(full.regressors);
  return b;
}

std::array<double, kNumMetrics> predict(const PeBundle& b, const features::FeatureVector& f,
                                        const std::array<std::uint64_t, tir::kNumOpcodes>& counts) {
  if (f.manifest_version != b.manifest_version) {
    throw VersionError("pe: feature manifest version " + std::to_string(f.manifest_version) +
                       " does not match bundle version " + std::to_string(b.manifest_version));
  }
  const auto x = pe_input(f, counts);
  const Matrix X = Eigen::Map<const Eigen::RowVectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  const Matrix Z = b.preprocessor.transform(X);
  std::array<double, kNumMetrics> out{};
  for (std::size_t k = 0; k < kNumMetrics; ++k) {
    const double v = b.regressors[k].predict(Z)[0];
    out[k] = std::isfinite(v) ? std::max(0.0, v) : 0.0;
  }
  return out;
}

exec::DynamicFeatures predict_dynamics(const PeBundle& b, const features::FeatureVector& f,
                                       const std::array<std::uint64_t, tir::kNumOpcodes>& counts,
                                       std::uint64_t code_size_bytes) {
  const auto m = predict(b, f, counts);
  exec::DynamicFeatures d;
  d.exec_time_s = m[0];
  d.energy_j = m[1];
  d.executed_instructions = static_cast<std::uint64_t>(std::llround(m[2]));
  d.avg_power_w = m[3];
  d.code_size_bytes = code_size_bytes;
  return d;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

json metrics_json(const mlkit::RegressionMetrics& m) {
  return {{"mape", m.mape}, {"max_ape", m.max_ape}, {"r2", m.r2}, {"zeros_excluded", m.zeros_excluded}};
}

mlkit::RegressionMetrics metrics_from(const json& j) {
  mlkit::RegressionMetrics m;
  m.mape = j.at("mape").get<double>();
  m.max_ape = j.at("max_ape").get<double>();
  m.r2 = j.at("r2").get<double>();
  m.zeros_excluded = j.at("zeros_excluded").get<std::size_t>();
  return m;
}

// JSON has no infinities; failed trials store null accuracy.
json accuracy_json(double a) { return std::isfinite(a) ? json(a) : json(nullptr); }
double accuracy_from(const json& j) { return j.is_null() ? -std::numeric_limits<double>::infinity() : j.get<double>(); }

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }
Range range_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json config_json(const PeSearchConfig& c) {
  json models = json::array();
  for (const auto& m : c.models) {
    models.push_back(std::string(mlkit::preprocessor_name(m.preprocessor)) + ":" +
                     std::string(mlkit::regressor_name(m.regressor)));
  }
  const auto& r = c.ranges;
  return {{"accuracy_thr", c.accuracy_thr},
          {"trials_per_pair", c.trials_per_pair},
          {"split_fraction", c.split_fraction},
          {"seed", c.seed},
          {"models", models},
          {"ranges",
           {{"ridge.lambda", range_json(r.ridge_lambda)},
            {"knn.k", range_json(r.knn_k)},
            {"tree.max_depth", range_json(r.tree_max_depth)},
            {"tree.min_leaf", range_json(r.tree_min_leaf)},
            {"forest.n_trees", range_json(r.forest_n_trees)},
            {"forest.max_depth", range_json(r.forest_max_depth)},
            {"forest.feature_subsample", range_json(r.forest_feature_subsample)}}}};
}

PeSearchConfig config_from(const json& j) {
  PeSearchConfig c;
  c.accuracy_thr = j.at("accuracy_thr").get<double>();
  c.trials_per_pair = j.at("trials_per_pair").get<std::size_t>();
  c.split_fraction = j.at("split_fraction").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.models.clear();
  for (const auto& m : j.at("models")) {
    const auto s = m.get<std::string>();
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw FormatError("pe bundle: bad model entry '" + s + "'");
    c.models.push_back({mlkit::preprocessor_from_name(s.substr(0, colon)), mlkit::regressor_from_name(s.substr(colon + 1))});
  }
  const json& r = j.at("ranges");
  c.ranges.ridge_lambda = range_from(r.at("ridge.lambda"));
  c.ranges.knn_k = range_from(r.at("knn.k"));
  c.ranges.tree_max_depth = range_from(r.at("tree.max_depth"));
  c.ranges.tree_min_leaf = range_from(r.at("tree.min_leaf"));
  c.ranges.forest_n_trees = range_from(r.at("forest.n_trees"));
  c.ranges.forest_max_depth = range_from(r.at("forest.max_depth"));
  c.ranges.forest_feature_subsample = range_from(r.at("forest.feature_subsample"));
  return c;
}

}  // namespace

std::string format_pe(const PeBundle& b) {
  json regressors = json::object();
  json metrics = json::object();
  for (std::size_t k = 0; k < kNumMetrics; ++k) {
    regressors[metric_names()[k]] = b.regressors[k].to_json();
    metrics[metric_names()[k]] = metrics_json(b.test_metrics[k]);
  }
  json log = json::array();
  for (const auto& t : b.log) {
    json mape = json::object();
    for (std::size_t k = 0; k < kNumMetrics; ++k) mape[metric_names()[k]] = t.test_mape[k];
    json rec{{"trial", t.trial},
             {"pair", t.pair},
             {"preprocessor", mlkit::preprocessor_name(t.preprocessor)},
             {"regressor", mlkit::spec_to_json(t.regressor)},
             {"accuracy", accuracy_json(t.accuracy)},
             {"test_mape", mape}};
    if (t.failed) rec["error"] = t.error;
    log.push_back(std::move(rec));
  }
  json doc{{"format", "mlcomp-pe-bundle"},
           {"version", kBundleVersion},
           {"platform", b.platform_name},
           {"manifest_version", b.manifest_version},
           {"input", "static_features[63] ++ platform_instruction_counts[22]"},
           {"accuracy", accuracy_json(b.accuracy)},
           {"best_trial", b.best_trial},
           {"split_seed", b.split_seed},
           {"test_metrics", metrics},
           {"preprocessor", b.preprocessor.to_json()},
           {"regressors", regressors},
           {"search", config_json(b.config)},
           {"log", log}};
  return doc.dump(1) + "\n";
}

PeBundle parse_pe(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.value("format", "") != "mlcomp-pe-bundle") throw FormatError("pe bundle: not a bundle file");
    const int version = doc.at("version").get<int>();
    if (version != kBundleVersion) {
      throw VersionError("pe bundle: version " + std::to_string(version) + " is not supported");
    }
    PeBundle b;
    b.platform_name = doc.at("platform").get<std::string>();
    b.manifest_version = doc.at("manifest_version").get<int>();
    if (b.manifest_version != features::kManifestVersion) {
      throw VersionError("pe bundle: feature manifest version " + std::to_string(b.manifest_version) +
                         " does not match current version " + std::to_string(features::kManifestVersion));
    }
    b.accuracy = accuracy_from(doc.at("accuracy"));
    b.best_trial = doc.at("best_trial").get<std::size_t>();
    b.split_seed = doc.at("split_seed").get<std::uint64_t>();
    b.preprocessor = mlkit::Preprocessor::from_json(doc.at("preprocessor"));
    if (b.preprocessor.input_dim() != kInputDim) throw FormatError("pe bundle: preprocessor input width mismatch");
    for (std::size_t k = 0; k < kNumMetrics; ++k) {
      b.regressors[k] = mlkit::Regressor::from_json(doc.at("regressors").at(metric_names()[k]));
      b.test_metrics[k] = metrics_from(doc.at("test_metrics").at(metric_names()[k]));
    }
    b.config = config_from(doc.at("search"));
    for (const auto& rec : doc.at("log")) {
      TrialRecord t;
      t.trial = rec.at("trial").get<std::size_t>();
      t.pair = rec.at("pair").get<std::size_t>();
      t.preprocessor = mlkit::preprocessor_from_name(rec.at("preprocessor").get<std::string>());
      t.regressor = mlkit::spec_from_json(rec.at("regressor"));
      t.accuracy = accuracy_from(rec.at("accuracy"));
      for (std::size_t k = 0; k < kNumMetrics; ++k) t.test_mape[k] = rec.at("test_mape").at(metric_names()[k]).get<double>();
      if (rec.contains("error")) {
        t.failed = true;
        t.error = rec.at("error").get<std::string>();
      }
      b.log.push_back(std::move(t));
    }
    return b;
  } catch (const json::exception& e) {
    throw FormatError(std::string("pe bundle: ") + e.what());
  }
}

void save_pe(const PeBundle& b, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << format_pe(b);
  if (!os) throw Error("write failed: " + path.string());
}

PeBundle load_pe(const std::filesystem::path& path) { return parse_pe(kv::read_file(path)); }

}  // namespace mlcomp::pe
