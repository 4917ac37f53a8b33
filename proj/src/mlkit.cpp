#include "mlcomp/mlkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "mlcomp/error.hpp"
#include "mlcomp/rng.hpp"

namespace mlcomp::mlkit {

using nlohmann::json;

namespace {

constexpr std::pair<PreprocessorKind, std::string_view> kPreprocessorNames[] = {
    {PreprocessorKind::MeanStd, "mean-std"}, {PreprocessorKind::MinMax, "min-max"},
    {PreprocessorKind::MaxAbs, "max-abs"},   {PreprocessorKind::Robust, "robust"},
    {PreprocessorKind::Pca, "pca"}};

constexpr std::pair<RegressorKind, std::string_view> kRegressorNames[] = {
    {RegressorKind::Ols, "ols"},   {RegressorKind::Ridge, "ridge"},
    {RegressorKind::Knn, "knn"},   {RegressorKind::Tree, "decision-tree"},
    {RegressorKind::Forest, "random-forest"}};

constexpr std::pair<PcaRule, std::string_view> kRuleNames[] = {
    {PcaRule::None, "none"},
    {PcaRule::Mle, "mle"},
    {PcaRule::VarianceFallback, "variance-95"},
    {PcaRule::Fixed, "fixed"}};

// numpy-style linear interpolation quantile of sorted values.
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  Matrix m(rows, cols);
  const json& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows) throw FormatError("matrix: row count mismatch");
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = data[static_cast<std::size_t>(r)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols) throw FormatError("matrix: column count mismatch");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

void check_columns(const Matrix& X, std::size_t expected, const char* what) {
  if (static_cast<std::size_t>(X.cols()) != expected) {
    throw Error(std::string(what) + ": expected " + std::to_string(expected) + " columns, got " +
                std::to_string(X.cols()));
  }
}

}  // namespace

std::string_view preprocessor_name(PreprocessorKind k) {
  for (const auto& [kind, name] : kPreprocessorNames) {
    if (kind == k) return name;
  }
  return "?";
}

PreprocessorKind preprocessor_from_name(std::string_view name) {
  for (const auto& [kind, n] : kPreprocessorNames) {
    if (n == name) return kind;
  }
  throw Error("unknown preprocessor '" + std::string(name) + "'");
}

std::string_view pca_rule_name(PcaRule r) {
  for (const auto& [rule, name] : kRuleNames) {
    if (rule == r) return name;
  }
  return "?";
}

std::string_view regressor_name(RegressorKind k) {
  for (const auto& [kind, name] : kRegressorNames) {
    if (kind == k) return name;
  }
  return "?";
}

RegressorKind regressor_from_name(std::string_view name) {
  for (const auto& [kind, n] : kRegressorNames) {
    if (n == name) return kind;
  }
  throw Error("unknown regressor '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Preprocessor

double pca_log_likelihood(const Vector& spectrum, std::size_t rank, std::size_t n_samples) {
  constexpr double eps = 1e-15;
  const auto p = static_cast<std::size_t>(spectrum.size());
  if (rank < 1 || rank >= p) throw Error("pca: rank must lie in [1, n_features - 1]");
  if (spectrum[static_cast<Eigen::Index>(rank - 1)] < eps) return -INFINITY;
  const double n = static_cast<double>(n_samples);
  const double pd = static_cast<double>(p);
  const double k = static_cast<double>(rank);

  double pu = -k * std::log(2.0);
  for (std::size_t i = 1; i <= rank; ++i) {
    const double a = (pd - static_cast<double>(i) + 1.0) / 2.0;
    pu += std::lgamma(a) - std::log(std::numbers::pi) * a;
  }
  double pl = 0.0;
  for (std::size_t i = 0; i < rank; ++i) pl += std::log(spectrum[static_cast<Eigen::Index>(i)]);
  pl = -pl * n / 2.0;
  double rest = 0.0;
  for (std::size_t i = rank; i < p; ++i) rest += spectrum[static_cast<Eigen::Index>(i)];
  const double v = std::max(eps, rest / (pd - k));
  const double pv = -std::log(v) * n * (pd - k) / 2.0;
  const double m = pd * k - k * (k + 1.0) / 2.0;
  const double pp = std::log(2.0 * std::numbers::pi) * (m + k) / 2.0;
  double pa = 0.0;
  for (std::size_t i = 0; i < rank; ++i) {
    const double si = spectrum[static_cast<Eigen::Index>(i)];
    for (std::size_t j = i + 1; j < p; ++j) {
      const double sj = spectrum[static_cast<Eigen::Index>(j)];
      const double sj_hat = j >= rank ? v : sj;
      const double arg = (si - sj) * (1.0 / sj_hat - 1.0 / si);
      if (!(arg > 0.0)) return -INFINITY;
      pa += std::log(arg) + std::log(n);
    }
  }
  const double ll = pu + pl + pv + pp - pa / 2.0 - k * std::log(n) / 2.0;
  return std::isfinite(ll) ? ll : -INFINITY;
}

namespace {

// Picks the PCA dimension by maximum likelihood; nullopt when the profile is
// degenerate or has more than one peak.
std::optional<std::size_t> mle_dimension(const Vector& spectrum, std::size_t n_samples) {
  const auto p = static_cast<std::size_t>(spectrum.size());
  if (p < 2) return std::nullopt;
  std::vector<double> ll;
  for (std::size_t r = 1; r < p; ++r) {
    const double v = pca_log_likelihood(spectrum, r, n_samples);
    if (!std::isfinite(v)) break;  // the spectrum is descending, so later ranks are also out
    ll.push_back(v);
  }
  if (ll.empty()) return std::nullopt;
  const auto best = static_cast<std::size_t>(std::max_element(ll.begin(), ll.end()) - ll.begin());
  for (std::size_t i = 1; i <= best; ++i) {
    if (ll[i] < ll[i - 1]) return std::nullopt;
  }
  for (std::size_t i = best + 1; i < ll.size(); ++i) {
    if (ll[i] > ll[i - 1]) return std::nullopt;
  }
  return best + 1;
}

std::size_t variance_dimension(const Vector& spectrum, double share) {
  const double total = spectrum.sum();
  if (!(total > 0.0)) return 0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < spectrum.size(); ++i) {
    acc += spectrum[i];
    if (acc >= share * total) return static_cast<std::size_t>(i + 1);
  }
  return static_cast<std::size_t>(spectrum.size());
}

}  // namespace

Preprocessor Preprocessor::fit(const PreprocessorSpec& spec, const Matrix& X) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (n < 2) throw Error("preprocessor: need at least 2 rows");
  if (!X.allFinite()) throw Error("preprocessor: non-finite input");
  Preprocessor pp;
  pp.kind_ = spec.kind;
  pp.offset_ = Vector::Zero(p);
  pp.scale_ = Vector::Ones(p);
  pp.constant_.assign(static_cast<std::size_t>(p), false);
  for (Eigen::Index j = 0; j < p; ++j) {
    pp.constant_[static_cast<std::size_t>(j)] = (X.col(j).array() == X(0, j)).all();
  }

  for (Eigen::Index j = 0; j < p; ++j) {
    const auto col = X.col(j);
    const bool constant = pp.constant_[static_cast<std::size_t>(j)];
    switch (spec.kind) {
      case PreprocessorKind::MeanStd: {
        const double mean = col.mean();
        pp.offset_[j] = mean;
        if (!constant) pp.scale_[j] = std::sqrt((col.array() - mean).square().mean());
        break;
      }
      case PreprocessorKind::MinMax:
        pp.offset_[j] = col.minCoeff();
        if (!constant) pp.scale_[j] = col.maxCoeff() - col.minCoeff();
        break;
      case PreprocessorKind::MaxAbs:
        if (!constant) pp.scale_[j] = col.cwiseAbs().maxCoeff();
        if (constant) pp.offset_[j] = X(0, j);
        break;
      case PreprocessorKind::Robust: {
        std::vector<double> v(col.data(), col.data() + n);
        std::sort(v.begin(), v.end());
        pp.offset_[j] = quantile(v, 0.5);
        const double iqr = quantile(v, 0.75) - quantile(v, 0.25);
        if (!constant && iqr > 0.0) pp.scale_[j] = iqr;
        break;
      }
      case PreprocessorKind::Pca:
        pp.offset_[j] = col.mean();
        break;
    }
    if (!(pp.scale_[j] > 0.0) || !std::isfinite(pp.scale_[j])) pp.scale_[j] = 1.0;
  }
  if (spec.kind != PreprocessorKind::Pca) return pp;

  for (Eigen::Index j = 0; j < p; ++j) {
    if (!pp.constant_[static_cast<std::size_t>(j)]) pp.active_.push_back(static_cast<std::size_t>(j));
  }
  const auto pa = static_cast<Eigen::Index>(pp.active_.size());
  if (pa == 0) {
    pp.components_ = Matrix::Zero(0, 0);
    pp.spectrum_ = Vector::Zero(0);
    pp.rule_ = spec.n_components ? PcaRule::Fixed : PcaRule::VarianceFallback;
    return pp;
  }
  Matrix centered(n, pa);
  for (Eigen::Index c = 0; c < pa; ++c) {
    const auto j = static_cast<Eigen::Index>(pp.active_[static_cast<std::size_t>(c)]);
    centered.col(c) = X.col(j).array() - pp.offset_[j];
  }
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw Error("pca: eigendecomposition failed");
  // Eigen returns ascending eigenvalues.
  Vector values = eig.eigenvalues().reverse();
  Matrix vectors = eig.eigenvectors().rowwise().reverse();
  const double top = std::max(values[0], 0.0);
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values[i] <= top * 1e-12) values[i] = 0.0;
  }
  const Eigen::Index m = std::min(n, pa);
  pp.spectrum_ = values.head(m);

  std::size_t d;
  if (spec.n_components) {
    d = std::min<std::size_t>(*spec.n_components, static_cast<std::size_t>(pa));
    pp.rule_ = PcaRule::Fixed;
  } else if (auto mle = mle_dimension(pp.spectrum_, static_cast<std::size_t>(n))) {
    d = *mle;
    pp.rule_ = PcaRule::Mle;
  } else {
    d = variance_dimension(pp.spectrum_, 0.95);
    pp.rule_ = PcaRule::VarianceFallback;
  }
  pp.components_ = vectors.leftCols(static_cast<Eigen::Index>(d));
  for (Eigen::Index c = 0; c < pp.components_.cols(); ++c) {
    Eigen::Index arg = 0;
    pp.components_.col(c).cwiseAbs().maxCoeff(&arg);
    if (pp.components_(arg, c) < 0) pp.components_.col(c) *= -1.0;
  }
  return pp;
}

std::size_t Preprocessor::output_dim() const {
  return kind_ == PreprocessorKind::Pca ? static_cast<std::size_t>(components_.cols()) : input_dim();
}

Matrix Preprocessor::transform(const Matrix& X) const {
  check_columns(X, input_dim(), "transform");
  if (kind_ == PreprocessorKind::Pca) {
    Matrix centered(X.rows(), static_cast<Eigen::Index>(active_.size()));
    for (std::size_t c = 0; c < active_.size(); ++c) {
      const auto j = static_cast<Eigen::Index>(active_[c]);
      centered.col(static_cast<Eigen::Index>(c)) = X.col(j).array() - offset_[j];
    }
    return centered * components_;
  }
  Matrix Z(X.rows(), X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (constant_[static_cast<std::size_t>(j)]) {
      Z.col(j).setZero();
    } else {
      Z.col(j) = (X.col(j).array() - offset_[j]) / scale_[j];
    }
  }
  return Z;
}

Matrix Preprocessor::inverse_transform(const Matrix& Z) const {
  check_columns(Z, output_dim(), "inverse_transform");
  Matrix X(Z.rows(), static_cast<Eigen::Index>(input_dim()));
  if (kind_ == PreprocessorKind::Pca) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) X.col(j).setConstant(offset_[j]);
    if (!active_.empty()) {
      const Matrix back = Z * components_.transpose();
      for (std::size_t c = 0; c < active_.size(); ++c) {
        const auto j = static_cast<Eigen::Index>(active_[c]);
        X.col(j) += back.col(static_cast<Eigen::Index>(c));
      }
    }
    return X;
  }
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (constant_[static_cast<std::size_t>(j)]) {
      X.col(j).setConstant(offset_[j]);
    } else {
      X.col(j) = Z.col(j).array() * scale_[j] + offset_[j];
    }
  }
  return X;
}

json Preprocessor::to_json() const {
  std::vector<int> constant(constant_.begin(), constant_.end());
  json j{{"kind", preprocessor_name(kind_)},
         {"offset", vector_to_json(offset_)},
         {"scale", vector_to_json(scale_)},
         {"constant", constant}};
  if (kind_ == PreprocessorKind::Pca) {
    j["active"] = active_;
    j["components"] = matrix_to_json(components_);
    j["spectrum"] = vector_to_json(spectrum_);
    j["rule"] = pca_rule_name(rule_);
  }
  return j;
}

Preprocessor Preprocessor::from_json(const json& j) {
  Preprocessor pp;
  pp.kind_ = preprocessor_from_name(j.at("kind").get<std::string>());
  pp.offset_ = vector_from_json(j.at("offset"));
  pp.scale_ = vector_from_json(j.at("scale"));
  for (int c : j.at("constant").get<std::vector<int>>()) pp.constant_.push_back(c != 0);
  if (pp.scale_.size() != pp.offset_.size() ||
      pp.constant_.size() != static_cast<std::size_t>(pp.offset_.size())) {
    throw FormatError("preprocessor: inconsistent column counts");
  }
  if (pp.kind_ == PreprocessorKind::Pca) {
    pp.active_ = j.at("active").get<std::vector<std::size_t>>();
    pp.components_ = matrix_from_json(j.at("components"));
    pp.spectrum_ = vector_from_json(j.at("spectrum"));
    const auto rule = j.at("rule").get<std::string>();
    for (const auto& [r, name] : kRuleNames) {
      if (name == rule) pp.rule_ = r;
    }
    for (auto a : pp.active_) {
      if (a >= pp.input_dim()) throw FormatError("preprocessor: active column out of range");
    }
    if (!pp.active_.empty() && static_cast<std::size_t>(pp.components_.rows()) != pp.active_.size()) {
      throw FormatError("preprocessor: component matrix does not match active columns");
    }
  }
  return pp;
}

// ---------------------------------------------------------------------------
// Regressors

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& X, const Vector& y, std::size_t max_depth, std::size_t min_leaf,
              double feature_share, Rng* rng)
      : X_(X), y_(y), max_depth_(max_depth), min_leaf_(std::max<std::size_t>(1, min_leaf)),
        feature_share_(feature_share), rng_(rng) {}

  std::vector<Regressor::Node> build(std::vector<std::size_t> rows) {
    nodes_.clear();
    grow(std::move(rows), 0);
    return std::move(nodes_);
  }

 private:
  std::vector<std::size_t> candidate_features() {
    const auto p = static_cast<std::size_t>(X_.cols());
    std::vector<std::size_t> all(p);
    std::iota(all.begin(), all.end(), 0);
    if (rng_ == nullptr || feature_share_ >= 1.0) return all;
    const auto m = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(feature_share_ * static_cast<double>(p))), 1, p);
    for (std::size_t i = 0; i < m; ++i) std::swap(all[i], all[i + rng_->index(p - i)]);
    all.resize(m);
    std::sort(all.begin(), all.end());
    return all;
  }

  int grow(std::vector<std::size_t> rows, std::size_t depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    double sum = 0.0;
    for (auto r : rows) sum += y_[static_cast<Eigen::Index>(r)];
    const double n = static_cast<double>(rows.size());
    nodes_[static_cast<std::size_t>(id)].value = sum / n;

    const bool pure = std::all_of(rows.begin(), rows.end(), [&](std::size_t r) {
      return y_[static_cast<Eigen::Index>(r)] == y_[static_cast<Eigen::Index>(rows[0])];
    });
    if (depth >= max_depth_ || rows.size() < 2 * min_leaf_ || pure) return id;

    // Maximising sum_l^2/n_l + sum_r^2/n_r minimises the children's squared error.
    const double parent_score = sum * sum / n;
    double best_score = parent_score;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::size_t> order = rows;
    for (std::size_t f : candidate_features()) {
      const auto col = static_cast<Eigen::Index>(f);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return X_(static_cast<Eigen::Index>(a), col) < X_(static_cast<Eigen::Index>(b), col);
      });
      double left = 0.0;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        left += y_[static_cast<Eigen::Index>(order[i])];
        const double a = X_(static_cast<Eigen::Index>(order[i]), col);
        const double b = X_(static_cast<Eigen::Index>(order[i + 1]), col);
        const std::size_t nl = i + 1, nr = order.size() - nl;
        if (a == b || nl < min_leaf_ || nr < min_leaf_) continue;
        const double right = sum - left;
        const double score = left * left / static_cast<double>(nl) + right * right / static_cast<double>(nr);
        if (score > best_score) {
          best_score = score;
          best_feature = static_cast<int>(f);
          const double mid = a + (b - a) / 2.0;
          best_threshold = mid < b ? mid : a;
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> lrows, rrows;
    for (auto r : rows) {
      (X_(static_cast<Eigen::Index>(r), best_feature) <= best_threshold ? lrows : rrows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(std::move(lrows), depth + 1);
    const int r = grow(std::move(rrows), depth + 1);
    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  const Matrix& X_;
  const Vector& y_;
  std::size_t max_depth_;
  std::size_t min_leaf_;
  double feature_share_;
  Rng* rng_;
  std::vector<Regressor::Node> nodes_;
};

double predict_tree(const std::vector<Regressor::Node>& nodes, const Matrix& X, Eigen::Index row) {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    i = static_cast<std::size_t>(X(row, nodes[i].feature) <= nodes[i].threshold ? nodes[i].left
                                                                                 : nodes[i].right);
  }
  return nodes[i].value;
}

}  // namespace

json spec_to_json(const RegressorSpec& s) {
  json j{{"kind", regressor_name(s.kind)}};
  switch (s.kind) {
    case RegressorKind::Ols:
      break;
    case RegressorKind::Ridge:
      j["lambda"] = s.lambda;
      break;
    case RegressorKind::Knn:
      j["k"] = s.k;
      break;
    case RegressorKind::Tree:
      j["max_depth"] = s.max_depth;
      j["min_leaf"] = s.min_leaf;
      break;
    case RegressorKind::Forest:
      j["n_trees"] = s.n_trees;
      j["max_depth"] = s.max_depth;
      j["min_leaf"] = s.min_leaf;
      j["feature_subsample"] = s.feature_subsample;
      j["seed"] = s.seed;
      break;
  }
  return j;
}

RegressorSpec spec_from_json(const json& j) {
  RegressorSpec s;
  s.kind = regressor_from_name(j.at("kind").get<std::string>());
  s.lambda = j.value("lambda", s.lambda);
  s.k = j.value("k", s.k);
  s.max_depth = j.value("max_depth", s.max_depth);
  s.min_leaf = j.value("min_leaf", s.min_leaf);
  s.n_trees = j.value("n_trees", s.n_trees);
  s.feature_subsample = j.value("feature_subsample", s.feature_subsample);
  s.seed = j.value("seed", s.seed);
  return s;
}

Regressor Regressor::fit(const RegressorSpec& spec, const Matrix& X, const Vector& y) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (n < 2) throw Error("regressor: need at least 2 rows");
  if (y.size() != n) throw Error("regressor: X and y row counts differ");
  if (!X.allFinite() || !y.allFinite()) throw Error("regressor: non-finite input");
  Regressor r;
  r.spec_ = spec;
  switch (spec.kind) {
    case RegressorKind::Ols:
    case RegressorKind::Ridge: {
      if (spec.kind == RegressorKind::Ridge && !(spec.lambda >= 0.0)) {
        throw Error("ridge: lambda must be >= 0");
      }
      const Vector xm = X.colwise().mean();
      const double ym = y.mean();
      r.weights_ = Vector::Zero(p);
      if (p > 0) {
        const Matrix Xc = X.rowwise() - xm.transpose();
        const Vector yc = y.array() - ym;
        Eigen::BDCSVD<Matrix> svd(Xc, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Vector& s = svd.singularValues();
        double lambda = spec.kind == RegressorKind::Ridge ? spec.lambda : 0.0;
        if (spec.kind == RegressorKind::Ols) {
          // Normal equations are singular when Xc has rank below p.
          const double tol = (s.size() > 0 ? s[0] : 0.0) * static_cast<double>(std::max(n, p)) *
                             std::numeric_limits<double>::epsilon();
          const bool singular = s.size() < p || (s.array() <= tol).any();
          if (singular) {
            lambda = kOlsFallbackLambda;
            r.ridge_fallback_ = true;
          }
        }
        Vector gain(s.size());
        for (Eigen::Index i = 0; i < s.size(); ++i) {
          const double den = s[i] * s[i] + lambda;
          gain[i] = den > 0.0 ? s[i] / den : 0.0;
        }
        r.weights_ = svd.matrixV() * (gain.asDiagonal() * (svd.matrixU().transpose() * yc));
      }
      r.intercept_ = ym - xm.dot(r.weights_);
      break;
    }
    case RegressorKind::Knn:
      if (spec.k < 1) throw Error("knn: k must be >= 1");
      r.train_x_ = X;
      r.train_y_ = y;
      break;
    case RegressorKind::Tree: {
      TreeBuilder b(X, y, spec.max_depth, spec.min_leaf, 1.0, nullptr);
      std::vector<std::size_t> rows(static_cast<std::size_t>(n));
      std::iota(rows.begin(), rows.end(), 0);
      r.trees_.push_back(b.build(std::move(rows)));
      break;
    }
    case RegressorKind::Forest: {
      if (spec.n_trees < 1) throw Error("random-forest: n_trees must be >= 1");
      if (!(spec.feature_subsample > 0.0 && spec.feature_subsample <= 1.0)) {
        throw Error("random-forest: feature_subsample must lie in (0, 1]");
      }
      for (std::size_t t = 0; t < spec.n_trees; ++t) {
        Rng rng(derive_seed(spec.seed, {t}));
        std::vector<std::size_t> rows(static_cast<std::size_t>(n));
        if (spec.n_trees == 1) {
          // A lone tree sees every row, so it reduces to a plain tree.
          std::iota(rows.begin(), rows.end(), 0);
        } else {
          for (auto& row : rows) row = rng.index(static_cast<std::size_t>(n));
          std::sort(rows.begin(), rows.end());
        }
        TreeBuilder b(X, y, spec.max_depth, spec.min_leaf, spec.feature_subsample, &rng);
        r.trees_.push_back(b.build(std::move(rows)));
      }
      break;
    }
  }
  return r;
}

Vector Regressor::predict(const Matrix& X) const {
  Vector out(X.rows());
  switch (spec_.kind) {
    case RegressorKind::Ols:
    case RegressorKind::Ridge:
      check_columns(X, static_cast<std::size_t>(weights_.size()), "predict");
      out = (X * weights_).array() + intercept_;
      break;
    case RegressorKind::Knn: {
      check_columns(X, static_cast<std::size_t>(train_x_.cols()), "predict");
      const auto n = static_cast<std::size_t>(train_x_.rows());
      const std::size_t k = std::min(spec_.k, n);
      std::vector<std::pair<double, std::size_t>> dist(n);
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (std::size_t t = 0; t < n; ++t) {
          dist[t] = {(train_x_.row(static_cast<Eigen::Index>(t)) - X.row(i)).squaredNorm(), t};
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        double s = 0.0;
        for (std::size_t t = 0; t < k; ++t) s += train_y_[static_cast<Eigen::Index>(dist[t].second)];
        out[i] = s / static_cast<double>(k);
      }
      break;
    }
    case RegressorKind::Tree:
    case RegressorKind::Forest: {
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double s = 0.0;
        for (const auto& tree : trees_) s += predict_tree(tree, X, i);
        out[i] = s / static_cast<double>(trees_.size());
      }
      break;
    }
  }
  return out;
}

json Regressor::to_json() const {
  json j{{"spec", spec_to_json(spec_)}};
  switch (spec_.kind) {
    case RegressorKind::Ols:
    case RegressorKind::Ridge:
      j["weights"] = vector_to_json(weights_);
      j["intercept"] = intercept_;
      j["ridge_fallback"] = ridge_fallback_;
      break;
    case RegressorKind::Knn:
      j["train_x"] = matrix_to_json(train_x_);
      j["train_y"] = vector_to_json(train_y_);
      break;
    case RegressorKind::Tree:
    case RegressorKind::Forest: {
      json trees = json::array();
      for (const auto& t : trees_) {
        json nodes = json::array();
        for (const auto& nd : t) nodes.push_back(json::array({nd.feature, nd.threshold, nd.left, nd.right, nd.value}));
        trees.push_back(std::move(nodes));
      }
      j["trees"] = std::move(trees);
      break;
    }
  }
  return j;
}

Regressor Regressor::from_json(const json& j) {
  Regressor r;
  r.spec_ = spec_from_json(j.at("spec"));
  switch (r.spec_.kind) {
    case RegressorKind::Ols:
    case RegressorKind::Ridge:
      r.weights_ = vector_from_json(j.at("weights"));
      r.intercept_ = j.at("intercept").get<double>();
      r.ridge_fallback_ = j.value("ridge_fallback", false);
      break;
    case RegressorKind::Knn:
      r.train_x_ = matrix_from_json(j.at("train_x"));
      r.train_y_ = vector_from_json(j.at("train_y"));
      if (r.train_x_.rows() != r.train_y_.size() || r.train_y_.size() == 0) {
        throw FormatError("knn: inconsistent training data");
      }
      break;
    case RegressorKind::Tree:
    case RegressorKind::Forest:
      for (const auto& t : j.at("trees")) {
        std::vector<Node> nodes;
        for (const auto& nd : t) {
          nodes.push_back({nd.at(0).get<int>(), nd.at(1).get<double>(), nd.at(2).get<int>(),
                           nd.at(3).get<int>(), nd.at(4).get<double>()});
        }
        const int count = static_cast<int>(nodes.size());
        if (count == 0) throw FormatError("tree: no nodes");
        for (const auto& nd : nodes) {
          if (nd.feature >= 0 && (nd.left <= 0 || nd.left >= count || nd.right <= 0 || nd.right >= count)) {
            throw FormatError("tree: child index out of range");
          }
        }
        r.trees_.push_back(std::move(nodes));
      }
      if (r.trees_.empty()) throw FormatError("tree: empty ensemble");
      break;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Metrics

RegressionMetrics regression_metrics(const Vector& y_true, const Vector& y_pred) {
  if (y_true.size() != y_pred.size() || y_true.size() == 0) {
    throw Error("metrics: inputs must be non-empty and of equal length");
  }
  RegressionMetrics m;
  double sum_ape = 0.0;
  std::size_t counted = 0;
  for (Eigen::Index i = 0; i < y_true.size(); ++i) {
    if (y_true[i] == 0.0) {
      ++m.zeros_excluded;
      continue;
    }
    const double ape = std::abs((y_pred[i] - y_true[i]) / y_true[i]);
    sum_ape += ape;
    m.max_ape = std::max(m.max_ape, ape);
    ++counted;
  }
  if (counted == 0) throw Error("metrics: y_true is all zero");
  m.mape = sum_ape / static_cast<double>(counted);
  const double mean = y_true.mean();
  const double ss_res = (y_true - y_pred).squaredNorm();
  const double ss_tot = (y_true.array() - mean).square().sum();
  m.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  return m;
}

}  // namespace mlcomp::mlkit
