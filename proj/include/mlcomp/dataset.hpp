#pragma once

// PE training data: random phase sequences applied to corpus programs, with
// static features and profiled dynamics of each result.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "mlcomp/exec.hpp"
#include "mlcomp/features.hpp"
#include "mlcomp/passes.hpp"
#include "mlcomp/rng.hpp"

namespace mlcomp::dataset {

inline constexpr std::size_t kDefaultMaxLen = 32;

struct Sample {
  std::string program_id;
  std::string platform_name;
  std::vector<std::string> phase_sequence;
  features::FeatureVector static_features;
  std::array<std::uint64_t, tir::kNumOpcodes> instruction_counts{};
  exec::DynamicFeatures dynamics;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  std::vector<Sample> samples;
  int manifest_version = features::kManifestVersion;
  std::string platform;
  std::uint64_t seed = 0;
  std::size_t requested = 0;
  std::size_t dropped = 0;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Length uniform in [0, max_len], phases drawn with replacement.
std::vector<passes::PhaseId> random_phase_sequence(Rng& rng, std::size_t max_len);
std::vector<passes::PhaseId> random_phase_sequence(std::uint64_t seed, std::size_t max_len);

struct Program {
  std::string id;
  tir::Module module;
};

/// Sorted `.tir` files of a directory, parsed and verified.
std::vector<Program> load_corpus(const std::filesystem::path& dir);
Program load_program(const std::filesystem::path& file);

/// Sample for one (program, sequence); throws ExecError on traps.
Sample make_sample(const Program& program, const exec::PlatformModel& platform,
                   const std::vector<passes::PhaseId>& sequence,
                   std::uint64_t fuel = exec::kDefaultFuel);

Dataset extract_dataset(const std::vector<Program>& corpus, const exec::PlatformModel& platform,
                        std::size_t per_program, std::size_t max_len, std::uint64_t seed,
                        std::uint64_t fuel = exec::kDefaultFuel);

/// Line-delimited JSON: a header record, then one record per sample.
void write_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);
std::string format_dataset(const Dataset& d);
Dataset parse_dataset(const std::string& text);

}  // namespace mlcomp::dataset
