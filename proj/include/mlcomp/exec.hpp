#pragma once

// Deterministic TIR interpreter and per-platform cost models.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mlcomp/error.hpp"
#include "mlcomp/tir.hpp"

namespace mlcomp::exec {

inline constexpr std::uint64_t kDefaultFuel = 10'000'000;

/// Cost tables of a target platform, indexed by tir::Opcode.
struct PlatformModel {
  std::string name;
  std::array<std::uint64_t, tir::kNumOpcodes> cycles{};
  std::array<double, tir::kNumOpcodes> energy_nj{};
  std::array<std::uint64_t, tir::kNumOpcodes> bytes{};
  std::uint64_t clock_hz = 1;
  double static_power_mw = 0.0;
};

/// Parses the flat key/value platform format:
///
///   name = ember
///   clock_hz = 16000000
///   static_power_mw = 0.05
///   cycles.add = 1
///   energy_nj.add = 0.6
///   bytes.add = 4
///
/// Every opcode needs all three cost entries.
PlatformModel parse_platform(std::string_view text);
PlatformModel load_platform(const std::filesystem::path& path);
std::string format_platform(const PlatformModel& p);

struct DynamicFeatures {
  double exec_time_s = 0.0;
  double energy_j = 0.0;
  std::uint64_t executed_instructions = 0;
  double avg_power_w = 0.0;
  std::uint64_t code_size_bytes = 0;

  friend bool operator==(const DynamicFeatures&, const DynamicFeatures&) = default;
};

struct ExecOutcome {
  std::int64_t exit_value = 0;
  std::vector<std::int64_t> print_trace;
  std::array<std::uint64_t, tir::kNumOpcodes> kind_counts{};
  std::uint64_t executed_instructions = 0;
};

class ExecError : public Error {
 public:
  enum class Kind { FuelExhausted, DivisionByZero, OutOfBounds };

  ExecError(Kind kind, const std::string& where);

  Kind kind() const { return kind_; }
  const std::string& where() const { return where_; }

 private:
  Kind kind_;
  std::string where_;
};

/// Runs @main with zero-initialised globals. Throws ExecError when more than
/// `fuel` instructions would execute or on a runtime trap.
ExecOutcome interpret(const tir::Module& m, std::uint64_t fuel = kDefaultFuel);

/// Total cycles of an execution on a platform.
std::uint64_t total_cycles(const ExecOutcome& outcome, const PlatformModel& p);

std::uint64_t code_size(const tir::Module& m, const PlatformModel& p);

DynamicFeatures dynamics_from(const ExecOutcome& outcome, const tir::Module& m,
                              const PlatformModel& p);

DynamicFeatures profile(const tir::Module& m, const PlatformModel& p,
                        std::uint64_t fuel = kDefaultFuel);

/// Static per-kind instruction counts.
std::array<std::uint64_t, tir::kNumOpcodes> static_kind_counts(const tir::Module& m);

}  // namespace mlcomp::exec
