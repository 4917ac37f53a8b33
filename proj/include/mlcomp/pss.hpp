#pragma once

// Phase selection policy: a small softmax network over the phase registry,
// trained with REINFORCE on estimated dynamics and deployed greedily.

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mlcomp/dataset.hpp"
#include "mlcomp/kv.hpp"
#include "mlcomp/mlkit.hpp"
#include "mlcomp/pe.hpp"
#include "mlcomp/rng.hpp"

namespace mlcomp::pss {

inline constexpr int kPolicyVersion = 1;

struct PssTrainConfig {
  std::size_t num_episodes = 512;
  std::size_t batch_size = 6;
  double learning_rate = 0.1;
  std::size_t max_sequence_len = 128;
  std::size_t max_inactive_len = 8;
  std::size_t n_layers = 3;
  std::size_t hidden_size = 16;
  double gamma = 0.99;
  /// exec time, energy, code size
  std::array<double, 3> weights{0.4, 0.4, 0.2};
  double kappa = 2.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Keys: episodes, batch, lr, max_len, max_inactive, layers, hidden, gamma,
/// weights (three comma-separated values), kappa, seed.
PssTrainConfig train_config_from(const kv::Table& t, PssTrainConfig base = {});

// ---------------------------------------------------------------------------
// Network

/// Fully connected tanh network ending in a softmax.
class Network {
 public:
  struct Layer {
    mlkit::Matrix weights;  // out x in
    mlkit::Vector bias;
  };

  Network() = default;
  /// Layer sizes in -> hidden ... -> out with `n_layers` weight layers;
  /// weights uniform in +-1/sqrt(fan_in), biases zero.
  Network(std::size_t in, std::size_t hidden, std::size_t out, std::size_t n_layers, Rng& rng);
  explicit Network(std::vector<Layer> layers);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  const std::vector<Layer>& layers() const { return layers_; }

  mlkit::Vector forward(const mlkit::Vector& x) const;

  /// Flattened parameters, layer by layer, weights row-major then bias.
  std::vector<double> parameters() const;
  void set_parameters(const std::vector<double>& p);
  std::size_t num_parameters() const;

  /// Gradient of log pi(action | x) in parameters() order, added to `grad`
  /// after scaling by `scale`.
  void accumulate_log_prob_gradient(const mlkit::Vector& x, std::size_t action, double scale,
                                    std::vector<double>& grad) const;

 private:
  std::vector<Layer> layers_;
};

/// One (input, action, advantage) term of the policy-gradient objective.
struct Decision {
  mlkit::Vector input;
  std::size_t action = 0;
  double advantage = 0.0;
};

/// sum over decisions of advantage * log pi(action | input).
double surrogate_objective(const Network& net, const std::vector<Decision>& decisions);
std::vector<double> surrogate_gradient(const Network& net, const std::vector<Decision>& decisions);

// ---------------------------------------------------------------------------
// Policy

class PhasePolicy {
 public:
  PhasePolicy() = default;
  PhasePolicy(mlkit::Preprocessor scaler, mlkit::Preprocessor pca, mlkit::Preprocessor whiten, Network net,
              std::vector<std::string> phases);

  /// Standardises raw features, projects them onto the state PCA and scales
  /// each component to unit variance.
  mlkit::Vector state(const features::FeatureVector& f) const;
  /// Probability of each registry phase.
  mlkit::Vector forward(const features::FeatureVector& f) const;

  const Network& network() const { return net_; }
  Network& network() { return net_; }
  const std::vector<std::string>& phases() const { return phases_; }
  std::size_t state_dim() const { return whiten_.output_dim(); }
  const mlkit::Preprocessor& scaler() const { return scaler_; }
  const mlkit::Preprocessor& pca() const { return pca_; }
  const mlkit::Preprocessor& whiten() const { return whiten_; }

 private:
  mlkit::Preprocessor scaler_;
  mlkit::Preprocessor pca_;
  mlkit::Preprocessor whiten_;
  Network net_;
  std::vector<std::string> phases_;
};

/// Fits the state transform on `starts` and draws a fresh network.
PhasePolicy init_policy(const std::vector<features::FeatureVector>& starts, const PssTrainConfig& cfg,
                        Rng& rng, std::size_t n_actions = passes::kNumPhases);

// ---------------------------------------------------------------------------
// Reward

struct Objectives {
  double exec_time = 0.0;
  double energy = 0.0;
  double code_size = 0.0;
};

/// Relative improvement of each objective since the last step, weighted, with
/// kappa times the total relative degradation subtracted.
double step_reward(const Objectives& prev, const Objectives& cur, const Objectives& start,
                   const std::array<double, 3>& weights, double kappa);

// ---------------------------------------------------------------------------
// Episodes

enum class Terminal { LengthCap, InactiveCap, FixedPoint };
std::string_view terminal_name(Terminal t);

struct StepOutcome {
  features::FeatureVector features;
  bool changed = false;
  double reward = 0.0;
};

/// Episode dynamics seen by the trainer.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::size_t num_programs() const = 0;
  virtual std::size_t num_actions() const = 0;
  virtual std::string program_id(std::size_t program) const = 0;
  /// Starts an episode on `program` and returns its state.
  virtual features::FeatureVector reset(std::size_t program) = 0;
  virtual StepOutcome step(std::size_t action) = 0;
};

/// Applies registry phases to corpus programs; time and energy come from the
/// estimator, code size is computed exactly.
class CompilerEnvironment : public Environment {
 public:
  CompilerEnvironment(std::vector<dataset::Program> programs, const pe::PeBundle& pe,
                      exec::PlatformModel platform, std::array<double, 3> weights, double kappa);

  std::size_t num_programs() const override { return programs_.size(); }
  std::size_t num_actions() const override { return passes::kNumPhases; }
  std::string program_id(std::size_t program) const override { return programs_.at(program).id; }
  features::FeatureVector reset(std::size_t program) override;
  StepOutcome step(std::size_t action) override;

  const tir::Module& current() const { return current_; }

 private:
  Objectives estimate(const tir::Module& m, const features::FeatureVector& f) const;

  std::vector<dataset::Program> programs_;
  const pe::PeBundle& pe_;
  exec::PlatformModel platform_;
  std::array<double, 3> weights_;
  double kappa_;
  tir::Module current_;
  Objectives start_, prev_;
};

struct Episode {
  std::string program_id;
  std::vector<features::FeatureVector> states;
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  std::vector<double> returns;
  Terminal terminal = Terminal::LengthCap;
};

std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma);

/// Samples actions from the policy until the length or inactivity cap.
Episode run_episode(Environment& env, std::size_t program, const PhasePolicy& policy,
                    const PssTrainConfig& cfg, Rng& rng);

/// One gradient-ascent step on the batch. Advantages are G_t minus the mean
/// episode return, scaled to unit RMS; the objective is averaged over episodes.
void reinforce_update(PhasePolicy& policy, const std::vector<Episode>& batch, double learning_rate);

struct EpisodeLog {
  std::string program_id;
  std::size_t length = 0;
  double episode_return = 0.0;
  Terminal terminal = Terminal::LengthCap;
};

struct TrainResult {
  PhasePolicy policy;
  std::vector<EpisodeLog> log;
  std::size_t updates = 0;
};

TrainResult train_policy(Environment& env, const PssTrainConfig& cfg);
TrainResult train_policy(const std::vector<dataset::Program>& programs, const pe::PeBundle& pe,
                         const exec::PlatformModel& platform, const PssTrainConfig& cfg);

// ---------------------------------------------------------------------------
// Deployment

struct Attempt {
  std::string phase;
  bool changed = false;
};

struct OptimizeResult {
  tir::Module module;
  std::vector<std::string> applied;  // phases that changed the program, in order
  std::vector<Attempt> attempts;
  Terminal terminal = Terminal::LengthCap;
};

/// Phase indices by descending probability, ties to the lower index.
std::vector<std::size_t> rank_phases(const mlkit::Vector& probs);

/// Applies the most probable phase; when it leaves the program unchanged the
/// next one in the ranking is tried, and so on.
OptimizeResult optimize_program(const tir::Module& m, const PhasePolicy& policy,
                                std::size_t max_sequence_len = 128, std::size_t max_inactive_len = 8);

nlohmann::json optimize_report_json(const OptimizeResult& r, const std::string& program_id);

// ---------------------------------------------------------------------------
// Persistence

std::string format_policy(const PhasePolicy& p, const TrainResult* training = nullptr,
                          const PssTrainConfig* cfg = nullptr);
PhasePolicy parse_policy(const std::string& text);
void save_policy(const PhasePolicy& p, const std::filesystem::path& path,
                 const TrainResult* training = nullptr, const PssTrainConfig* cfg = nullptr);
PhasePolicy load_policy(const std::filesystem::path& path);

}  // namespace mlcomp::pss
