#pragma once

// Ground-truth evaluation of a trained policy against fixed and random
// baselines, all relative to the unoptimized program, plus run configuration
// shared by the command-line tool.

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mlcomp/dataset.hpp"
#include "mlcomp/exec.hpp"
#include "mlcomp/kv.hpp"
#include "mlcomp/pe.hpp"
#include "mlcomp/pss.hpp"

namespace mlcomp::report {

inline constexpr int kReportVersion = 1;
inline constexpr std::size_t kDefaultRandomPool = 30;

/// Hand-ordered cleanup pipeline used as the fixed baseline.
std::vector<passes::PhaseId> canonical_fixed_sequence();

inline constexpr std::size_t kNumVariants = 5;
/// unoptimized, fixed-O, random-best, random-median, policy
const std::array<std::string, kNumVariants>& variant_names();

struct EvalRow {
  std::string program_id;
  std::string variant;
  /// Empty unless profiling this variant (or the unoptimized reference) trapped.
  std::string error;
  exec::DynamicFeatures dynamics;
  double rel_time = 0.0;
  double rel_energy = 0.0;
  double rel_size = 0.0;
  /// Phases applied; empty for the random pool rows, which are per-metric
  /// order statistics rather than one sequence.
  std::vector<std::string> sequence;

  bool ok() const { return error.empty(); }
};

struct VariantSummary {
  std::string variant;
  std::size_t programs = 0;  // rows without error
  double geomean_time = 0.0;
  double geomean_energy = 0.0;
  double geomean_size = 0.0;
};

struct EvalSummary {
  std::vector<VariantSummary> variants;
  std::size_t programs = 0;
  /// Programs whose policy row is no worse than unoptimized on time, energy
  /// and code size.
  std::size_t policy_no_degradation = 0;
};

struct EvalOptions {
  std::size_t random_pool = kDefaultRandomPool;
  std::size_t random_max_len = dataset::kDefaultMaxLen;
  std::uint64_t seed = 0;
  std::uint64_t fuel = exec::kDefaultFuel;
  std::size_t max_sequence_len = 128;
  std::size_t max_inactive_len = 8;
};

struct EvalResult {
  std::string platform;
  EvalOptions options;
  std::vector<EvalRow> rows;  // program-major, variants in variant_names() order
  EvalSummary summary;
};

/// Profiles every variant of every program on the platform. The random pool
/// rows hold the per-metric minimum and lower median over the pool.
EvalResult evaluate_policy(const std::vector<dataset::Program>& corpus, const pss::PhasePolicy& policy,
                           const exec::PlatformModel& platform, const EvalOptions& opts = {});

EvalSummary summarize(const std::vector<EvalRow>& rows);

std::string format_csv(const std::vector<EvalRow>& rows);
/// Inverse of format_csv for the columns it writes (sequence is not stored).
std::vector<EvalRow> parse_csv(const std::string& text);
nlohmann::json report_json(const EvalResult& r);

/// Throws Error when there are no rows or a file cannot be written.
void emit_report(const EvalResult& r, const std::filesystem::path& csv_path,
                 const std::filesystem::path& json_path);

// ---------------------------------------------------------------------------
// Run configuration

/// Everything a pipeline run needs. Flat keys, as accepted in config files and
/// overridden by command-line flags:
///
///   corpus, platform, dataset, pe, policy, report_csv, report_json, output,
///   optimize_report, seed, samples, max_len, fuel, k_random,
///   pe.<key> (see pe::search_config_from), pss.<key> (see pss::train_config_from)
///
/// `seed` is the default for pe.seed and pss.seed. Estimator and policy keys
/// that do not clash with the names above may also be given unprefixed.
struct RunConfig {
  std::filesystem::path corpus = "corpus";
  std::filesystem::path platform;
  std::filesystem::path dataset = "dataset.jsonl";
  std::filesystem::path pe = "pe.json";
  std::filesystem::path policy = "policy.json";
  std::filesystem::path report_csv = "report.csv";
  std::filesystem::path report_json = "report.json";
  std::filesystem::path output;
  std::filesystem::path optimize_report;
  std::uint64_t seed = 0;
  std::size_t samples = 50;
  std::size_t max_len = dataset::kDefaultMaxLen;
  std::uint64_t fuel = exec::kDefaultFuel;
  std::size_t k_random = kDefaultRandomPool;
  pe::PeSearchConfig pe_search;
  pss::PssTrainConfig pss_train;

  EvalOptions eval_options() const;
};

/// Unknown keys are rejected with FormatError.
RunConfig run_config_from(const kv::Table& t, RunConfig base = {});

}  // namespace mlcomp::report
