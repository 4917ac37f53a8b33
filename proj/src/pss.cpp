#include "mlcomp/pss.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "mlcomp/error.hpp"

namespace mlcomp::pss {

using mlkit::Matrix;
using mlkit::Vector;
using nlohmann::json;

void PssTrainConfig::validate() const {
  if (num_episodes < 1 || batch_size < 1) throw Error("pss: episodes and batch size must be >= 1");
  if (max_inactive_len < 1) throw Error("pss: max_inactive_len must be >= 1");
  if (n_layers < 1 || hidden_size < 1) throw Error("pss: network needs at least one layer and one unit");
  if (!(learning_rate > 0.0)) throw Error("pss: learning rate must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw Error("pss: gamma must lie in (0, 1]");
  if (!(kappa >= 0.0)) throw Error("pss: kappa must be >= 0");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error("pss: objective weights must be >= 0");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("pss: objective weights must sum to 1");
}

PssTrainConfig train_config_from(const kv::Table& t, PssTrainConfig cfg) {
  auto count = [&](const char* key, std::size_t& dst) {
    if (auto v = t.find(key)) {
      const auto n = kv::to_int(*v, key);
      if (n < 0) throw FormatError(std::string(key) + " must be >= 0");
      dst = static_cast<std::size_t>(n);
    }
  };
  auto real = [&](const char* key, double& dst) {
    if (auto v = t.find(key)) dst = kv::to_double(*v, key);
  };
  count("episodes", cfg.num_episodes);
  count("batch", cfg.batch_size);
  count("max_len", cfg.max_sequence_len);
  count("max_inactive", cfg.max_inactive_len);
  count("layers", cfg.n_layers);
  count("hidden", cfg.hidden_size);
  real("lr", cfg.learning_rate);
  real("gamma", cfg.gamma);
  real("kappa", cfg.kappa);
  if (auto v = t.find("weights")) {
    const auto w = kv::to_double_list(*v, "weights");
    if (w.size() != 3) throw FormatError("weights: expected three values (time, energy, size)");
    cfg.weights = {w[0], w[1], w[2]};
  }
  if (auto v = t.find("seed")) cfg.seed = static_cast<std::uint64_t>(kv::to_int(*v, "seed"));
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Network

Network::Network(std::size_t in, std::size_t hidden, std::size_t out, std::size_t n_layers, Rng& rng) {
  std::vector<std::size_t> sizes{in};
  for (std::size_t l = 1; l < n_layers; ++l) sizes.push_back(hidden);
  sizes.push_back(out);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto rows = static_cast<Eigen::Index>(sizes[l + 1]);
    const auto cols = static_cast<Eigen::Index>(sizes[l]);
    const double bound = sizes[l] > 0 ? 1.0 / std::sqrt(static_cast<double>(sizes[l])) : 0.0;
    Layer layer{Matrix(rows, cols), Vector::Zero(rows)};
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) layer.weights(i, j) = rng.uniform(-bound, bound);
    }
    layers_.push_back(std::move(layer));
  }
}

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw Error("network: no layers");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].bias.size() != layers_[l].weights.rows()) throw Error("network: bias size mismatch");
    if (l > 0 && layers_[l].weights.cols() != layers_[l - 1].weights.rows()) {
      throw Error("network: layer sizes do not chain");
    }
  }
}

std::size_t Network::input_dim() const { return static_cast<std::size_t>(layers_.front().weights.cols()); }
std::size_t Network::output_dim() const { return static_cast<std::size_t>(layers_.back().weights.rows()); }

namespace {

Vector softmax(const Vector& logits) {
  const Vector e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace

Vector Network::forward(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != input_dim()) {
    throw Error("network: expected " + std::to_string(input_dim()) + " inputs, got " + std::to_string(x.size()));
  }
  Vector a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Vector z = layers_[l].weights * a + layers_[l].bias;
    a = l + 1 < layers_.size() ? Vector(z.array().tanh()) : z;
  }
  return softmax(a);
}

std::size_t Network::num_parameters() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

std::vector<double> Network::parameters() const {
  std::vector<double> p;
  p.reserve(num_parameters());
  for (const auto& l : layers_) {
    for (Eigen::Index i = 0; i < l.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weights.cols(); ++j) p.push_back(l.weights(i, j));
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) p.push_back(l.bias[i]);
  }
  return p;
}

void Network::set_parameters(const std::vector<double>& p) {
  if (p.size() != num_parameters()) throw Error("network: parameter count mismatch");
  std::size_t k = 0;
  for (auto& l : layers_) {
    for (Eigen::Index i = 0; i < l.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weights.cols(); ++j) l.weights(i, j) = p[k++];
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = p[k++];
  }
}

void Network::accumulate_log_prob_gradient(const Vector& x, std::size_t action, double scale,
                                           std::vector<double>& grad) const {
  if (grad.size() != num_parameters()) throw Error("network: gradient buffer size mismatch");
  // inputs[l] feeds layer l
  std::vector<Vector> inputs{x};
  Vector logits;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Vector z = layers_[l].weights * inputs.back() + layers_[l].bias;
    if (l + 1 < layers_.size()) {
      inputs.push_back(z.array().tanh());
    } else {
      logits = std::move(z);
    }
  }
  Vector delta = -softmax(logits);
  delta[static_cast<Eigen::Index>(action)] += 1.0;

  std::vector<std::size_t> offset(layers_.size());
  for (std::size_t l = 1; l < layers_.size(); ++l) {
    offset[l] = offset[l - 1] + static_cast<std::size_t>(layers_[l - 1].weights.size() + layers_[l - 1].bias.size());
  }
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Layer& layer = layers_[l];
    const Vector& in = inputs[l];
    std::size_t k = offset[l];
    for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) grad[k++] += scale * delta[i] * in[j];
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) grad[k++] += scale * delta[i];
    if (l > 0) delta = (layer.weights.transpose() * delta).array() * (1.0 - in.array().square());
  }
}

double surrogate_objective(const Network& net, const std::vector<Decision>& decisions) {
  double j = 0.0;
  for (const auto& d : decisions) {
    j += d.advantage * std::log(net.forward(d.input)[static_cast<Eigen::Index>(d.action)]);
  }
  return j;
}

std::vector<double> surrogate_gradient(const Network& net, const std::vector<Decision>& decisions) {
  std::vector<double> g(net.num_parameters(), 0.0);
  for (const auto& d : decisions) {
    if (d.advantage != 0.0) net.accumulate_log_prob_gradient(d.input, d.action, d.advantage, g);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Policy

PhasePolicy::PhasePolicy(mlkit::Preprocessor scaler, mlkit::Preprocessor pca, mlkit::Preprocessor whiten,
                         Network net, std::vector<std::string> phases)
    : scaler_(std::move(scaler)),
      pca_(std::move(pca)),
      whiten_(std::move(whiten)),
      net_(std::move(net)),
      phases_(std::move(phases)) {
  if (whiten_.input_dim() != pca_.output_dim()) throw Error("policy: whitening does not match the state PCA");
  if (whiten_.output_dim() != net_.input_dim()) throw Error("policy: state dimension does not match network input");
  if (phases_.size() != net_.output_dim()) throw Error("policy: action count does not match network output");
}

Vector PhasePolicy::state(const features::FeatureVector& f) const {
  if (f.manifest_version != features::kManifestVersion) {
    throw VersionError("policy: feature manifest version " + std::to_string(f.manifest_version) + " is not supported");
  }
  const Matrix X = Eigen::Map<const Eigen::RowVectorXd>(f.values.data(), static_cast<Eigen::Index>(f.values.size()));
  return whiten_.transform(pca_.transform(scaler_.transform(X))).row(0).transpose();
}

Vector PhasePolicy::forward(const features::FeatureVector& f) const { return net_.forward(state(f)); }

namespace {

std::vector<std::string> action_names(std::size_t n) {
  std::vector<std::string> names;
  if (n == passes::kNumPhases) {
    for (const auto& p : passes::list_phases()) names.push_back(p.name);
  } else {
    for (std::size_t i = 0; i < n; ++i) names.push_back("action" + std::to_string(i));
  }
  return names;
}

}  // namespace

PhasePolicy init_policy(const std::vector<features::FeatureVector>& starts, const PssTrainConfig& cfg, Rng& rng,
                        std::size_t n_actions) {
  if (starts.empty()) throw Error("pss: no programs to train on");
  // A single start state is repeated so every column reads as constant.
  const std::size_t rows = std::max<std::size_t>(starts.size(), 2);
  Matrix X(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(features::kNumFeatures));
  for (std::size_t i = 0; i < rows; ++i) {
    const auto& f = starts[std::min(i, starts.size() - 1)];
    for (std::size_t j = 0; j < features::kNumFeatures; ++j) {
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f.values[j];
    }
  }
  auto scaler = mlkit::Preprocessor::fit({mlkit::PreprocessorKind::MeanStd, {}}, X);
  auto pca = mlkit::Preprocessor::fit({mlkit::PreprocessorKind::Pca, {}}, scaler.transform(X));
  auto whiten = mlkit::Preprocessor::fit({mlkit::PreprocessorKind::MeanStd, {}}, pca.transform(scaler.transform(X)));
  Network net(whiten.output_dim(), cfg.hidden_size, n_actions, cfg.n_layers, rng);
  return PhasePolicy(std::move(scaler), std::move(pca), std::move(whiten), std::move(net), action_names(n_actions));
}

// ---------------------------------------------------------------------------
// Reward

double step_reward(const Objectives& prev, const Objectives& cur, const Objectives& start,
                   const std::array<double, 3>& weights, double kappa) {
  const std::array<double, 3> p{prev.exec_time, prev.energy, prev.code_size};
  const std::array<double, 3> c{cur.exec_time, cur.energy, cur.code_size};
  const std::array<double, 3> s{start.exec_time, start.energy, start.code_size};
  double gain = 0.0, loss = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    if (!(s[i] > 0.0)) throw Error("reward: episode-start objective must be positive");
    const double r = (p[i] - c[i]) / s[i];
    gain += weights[i] * r;
    loss += std::max(0.0, -r);
  }
  return gain - kappa * loss;
}

// ---------------------------------------------------------------------------
// Episodes

std::string_view terminal_name(Terminal t) {
  switch (t) {
    case Terminal::LengthCap:
      return "length-cap";
    case Terminal::InactiveCap:
      return "inactive-cap";
    case Terminal::FixedPoint:
      return "fixed-point";
  }
  return "?";
}

CompilerEnvironment::CompilerEnvironment(std::vector<dataset::Program> programs, const pe::PeBundle& pe,
                                         exec::PlatformModel platform, std::array<double, 3> weights, double kappa)
    : programs_(std::move(programs)), pe_(pe), platform_(std::move(platform)), weights_(weights), kappa_(kappa) {
  if (programs_.empty()) throw Error("pss: no programs to train on");
  if (pe_.platform_name != platform_.name) {
    throw Error("pss: estimator was trained for platform '" + pe_.platform_name + "', not '" + platform_.name + "'");
  }
}

Objectives CompilerEnvironment::estimate(const tir::Module& m, const features::FeatureVector& f) const {
  const auto est = pe::predict(pe_, f, exec::static_kind_counts(m));
  return {est[0], est[1], static_cast<double>(exec::code_size(m, platform_))};
}

features::FeatureVector CompilerEnvironment::reset(std::size_t program) {
  current_ = programs_.at(program).module;
  const auto f = features::extract_features(current_);
  start_ = prev_ = estimate(current_, f);
  return f;
}

StepOutcome CompilerEnvironment::step(std::size_t action) {
  auto res = passes::apply_phase(current_, action);
  StepOutcome out;
  out.changed = res.changed;
  if (!res.changed) {
    out.features = features::extract_features(current_);
    return out;
  }
  current_ = std::move(res.module);
  out.features = features::extract_features(current_);
  const Objectives cur = estimate(current_, out.features);
  out.reward = step_reward(prev_, cur, start_, weights_, kappa_);
  prev_ = cur;
  return out;
}

std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma) {
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + gamma * acc;
    g[t] = acc;
  }
  return g;
}

namespace {

std::size_t sample(const Vector& probs, Rng& rng) {
  const double u = rng.uniform01();
  double acc = 0.0;
  std::size_t last = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last = static_cast<std::size_t>(i);
    if (u < acc) return last;
  }
  return last;
}

}  // namespace

Episode run_episode(Environment& env, std::size_t program, const PhasePolicy& policy, const PssTrainConfig& cfg,
                    Rng& rng) {
  Episode ep;
  ep.program_id = env.program_id(program);
  features::FeatureVector state = env.reset(program);
  std::size_t changed = 0, inactive = 0;
  while (true) {
    if (changed >= cfg.max_sequence_len) {
      ep.terminal = Terminal::LengthCap;
      break;
    }
    if (inactive >= cfg.max_inactive_len) {
      ep.terminal = Terminal::InactiveCap;
      break;
    }
    const std::size_t action = sample(policy.forward(state), rng);
    StepOutcome out = env.step(action);
    ep.states.push_back(state);
    ep.actions.push_back(action);
    ep.rewards.push_back(out.reward);
    if (out.changed) {
      ++changed;
      inactive = 0;
    } else {
      ++inactive;
    }
    state = out.features;
  }
  ep.returns = discounted_returns(ep.rewards, cfg.gamma);
  return ep;
}

void reinforce_update(PhasePolicy& policy, const std::vector<Episode>& batch, double learning_rate) {
  if (batch.empty()) throw Error("pss: empty batch");
  double baseline = 0.0;
  for (const auto& ep : batch) baseline += ep.returns.empty() ? 0.0 : ep.returns[0];
  baseline /= static_cast<double>(batch.size());

  std::vector<Decision> decisions;
  double square_sum = 0.0;
  for (const auto& ep : batch) {
    for (std::size_t t = 0; t < ep.actions.size(); ++t) {
      const double a = ep.returns[t] - baseline;
      decisions.push_back({policy.state(ep.states[t]), ep.actions[t], a});
      square_sum += a * a;
    }
  }
  if (square_sum == 0.0) return;
  // Advantages are divided by their RMS, which makes the step independent of
  // the reward scale, and the objective is averaged over episodes.
  const double rms = std::sqrt(square_sum / static_cast<double>(decisions.size()));
  for (auto& d : decisions) d.advantage /= rms * static_cast<double>(batch.size());
  const auto grad = surrogate_gradient(policy.network(), decisions);
  auto params = policy.network().parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i] += learning_rate * grad[i];
  policy.network().set_parameters(params);
}

TrainResult train_policy(Environment& env, const PssTrainConfig& cfg) {
  cfg.validate();
  std::vector<features::FeatureVector> starts;
  for (std::size_t p = 0; p < env.num_programs(); ++p) starts.push_back(env.reset(p));
  Rng init(derive_seed(cfg.seed, {0}));
  TrainResult result;
  result.policy = init_policy(starts, cfg, init, env.num_actions());

  // The last batch is cut short so exactly num_episodes episodes run.
  for (std::size_t first = 0; first < cfg.num_episodes; first += cfg.batch_size) {
    const std::size_t n = std::min(cfg.batch_size, cfg.num_episodes - first);
    std::vector<Episode> batch;
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(derive_seed(cfg.seed, {1, first + i}));
      const std::size_t program = rng.index(env.num_programs());
      batch.push_back(run_episode(env, program, result.policy, cfg, rng));
      const Episode& ep = batch.back();
      result.log.push_back({ep.program_id, ep.actions.size(), ep.returns.empty() ? 0.0 : ep.returns[0], ep.terminal});
    }
    reinforce_update(result.policy, batch, cfg.learning_rate);
    ++result.updates;
  }
  return result;
}

TrainResult train_policy(const std::vector<dataset::Program>& programs, const pe::PeBundle& pe,
                         const exec::PlatformModel& platform, const PssTrainConfig& cfg) {
  cfg.validate();
  CompilerEnvironment env(programs, pe, platform, cfg.weights, cfg.kappa);
  return train_policy(env, cfg);
}

// ---------------------------------------------------------------------------
// Deployment

std::vector<std::size_t> rank_phases(const Vector& probs) {
  std::vector<std::size_t> order(static_cast<std::size_t>(probs.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return probs[static_cast<Eigen::Index>(a)] > probs[static_cast<Eigen::Index>(b)];
  });
  return order;
}

OptimizeResult optimize_program(const tir::Module& m, const PhasePolicy& policy, std::size_t max_sequence_len,
                                std::size_t max_inactive_len) {
  if (policy.phases().size() != passes::kNumPhases) throw Error("policy does not act on the phase registry");
  OptimizeResult r;
  r.module = m;
  auto ranking = rank_phases(policy.forward(features::extract_features(r.module)));
  std::size_t rank = 0, inactive = 0;
  while (true) {
    if (r.applied.size() >= max_sequence_len) {
      r.terminal = Terminal::LengthCap;
      break;
    }
    if (inactive >= max_inactive_len) {
      r.terminal = Terminal::InactiveCap;
      break;
    }
    if (rank >= ranking.size()) {
      r.terminal = Terminal::FixedPoint;
      break;
    }
    const auto& phase = passes::list_phases()[ranking[rank]];
    auto res = passes::apply_phase(r.module, phase);
    r.attempts.push_back({phase.name, res.changed});
    if (!res.changed) {
      ++inactive;
      ++rank;
      continue;
    }
    tir::verify(res.module);
    r.module = std::move(res.module);
    r.applied.push_back(phase.name);
    inactive = 0;
    rank = 0;
    ranking = rank_phases(policy.forward(features::extract_features(r.module)));
  }
  return r;
}

json optimize_report_json(const OptimizeResult& r, const std::string& program_id) {
  json attempts = json::array();
  for (const auto& a : r.attempts) attempts.push_back({{"phase", a.phase}, {"changed", a.changed}});
  return {{"program", program_id},
          {"applied", r.applied},
          {"changed_phases", r.applied.size()},
          {"attempts", attempts},
          {"terminal", terminal_name(r.terminal)}};
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector vector_from(const json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
  return v;
}

Matrix matrix_from(const json& j, std::size_t cols) {
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j.at(i).size() != cols) throw FormatError("policy: ragged weight matrix");
    for (std::size_t k = 0; k < cols; ++k) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j.at(i).at(k).get<double>();
    }
  }
  return m;
}

}  // namespace

std::string format_policy(const PhasePolicy& p, const TrainResult* training, const PssTrainConfig* cfg) {
  const Network& net = p.network();
  json sizes = json::array({net.input_dim()});
  json layers = json::array();
  for (const auto& l : net.layers()) {
    sizes.push_back(l.weights.rows());
    layers.push_back({{"weights", matrix_json(l.weights)}, {"bias", vector_json(l.bias)}});
  }
  json doc{{"format", "mlcomp-policy"},
           {"version", kPolicyVersion},
           {"manifest_version", features::kManifestVersion},
           {"feature_count", features::kNumFeatures},
           {"state_dim", p.state_dim()},
           {"n_phases", p.phases().size()},
           {"layer_sizes", sizes},
           {"activation", "tanh"},
           {"output", "softmax"},
           {"phases", p.phases()},
           {"scaler", p.scaler().to_json()},
           {"pca", p.pca().to_json()},
           {"whiten", p.whiten().to_json()},
           {"layers", layers}};
  if (cfg) {
    doc["training_config"] = {{"episodes", cfg->num_episodes},
                              {"batch", cfg->batch_size},
                              {"lr", cfg->learning_rate},
                              {"max_len", cfg->max_sequence_len},
                              {"max_inactive", cfg->max_inactive_len},
                              {"layers", cfg->n_layers},
                              {"hidden", cfg->hidden_size},
                              {"gamma", cfg->gamma},
                              {"weights", cfg->weights},
                              {"kappa", cfg->kappa},
                              {"seed", cfg->seed}};
  }
  if (training) {
    json episodes = json::array();
    for (const auto& e : training->log) {
      episodes.push_back({{"program", e.program_id},
                          {"length", e.length},
                          {"return", e.episode_return},
                          {"terminal", terminal_name(e.terminal)}});
    }
    doc["training_log"] = {{"updates", training->updates}, {"episodes", episodes}};
  }
  return doc.dump(1) + "\n";
}

PhasePolicy parse_policy(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.value("format", "") != "mlcomp-policy") throw FormatError("policy: not a policy file");
    if (doc.at("version").get<int>() != kPolicyVersion) throw VersionError("policy: unsupported file version");
    if (doc.at("manifest_version").get<int>() != features::kManifestVersion) {
      throw VersionError("policy: feature manifest version " + std::to_string(doc.at("manifest_version").get<int>()) +
                         " does not match current version " + std::to_string(features::kManifestVersion));
    }
    const auto phases = doc.at("phases").get<std::vector<std::string>>();
    std::vector<std::string> registry;
    for (const auto& ph : passes::list_phases()) registry.push_back(ph.name);
    if (phases != registry) {
      throw VersionError("policy: phase registry mismatch (file has " + std::to_string(phases.size()) +
                         " phases in a different order than this build)");
    }
    auto scaler = mlkit::Preprocessor::from_json(doc.at("scaler"));
    auto pca = mlkit::Preprocessor::from_json(doc.at("pca"));
    auto whiten = mlkit::Preprocessor::from_json(doc.at("whiten"));
    if (scaler.input_dim() != features::kNumFeatures || pca.input_dim() != features::kNumFeatures) {
      throw FormatError("policy: state transform does not take the feature vector");
    }
    std::vector<Network::Layer> layers;
    std::size_t in = doc.at("state_dim").get<std::size_t>();
    for (const auto& l : doc.at("layers")) {
      Network::Layer layer{matrix_from(l.at("weights"), in), vector_from(l.at("bias"))};
      in = static_cast<std::size_t>(layer.weights.rows());
      layers.push_back(std::move(layer));
    }
    Network net(std::move(layers));
    if (net.input_dim() != doc.at("state_dim").get<std::size_t>()) throw FormatError("policy: bad state_dim");
    return PhasePolicy(std::move(scaler), std::move(pca), std::move(whiten), std::move(net), phases);
  } catch (const json::exception& e) {
    throw FormatError(std::string("policy: ") + e.what());
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("policy: ") + e.what());
  }
}

void save_policy(const PhasePolicy& p, const std::filesystem::path& path, const TrainResult* training,
                 const PssTrainConfig* cfg) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << format_policy(p, training, cfg);
  if (!os) throw Error("write failed: " + path.string());
}

PhasePolicy load_policy(const std::filesystem::path& path) { return parse_policy(kv::read_file(path)); }

}  // namespace mlcomp::pss
