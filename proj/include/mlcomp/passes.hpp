#pragma once

// Optimization phases over TIR modules. Phases are pure: they take a module by
// const reference and return a new one.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlcomp/tir.hpp"

namespace mlcomp::passes {

struct PhaseId {
  std::string name;
  std::size_t index = 0;

  friend bool operator==(const PhaseId&, const PhaseId&) = default;
};

struct PhaseResult {
  tir::Module module;
  bool changed = false;
};

inline constexpr std::size_t kNumPhases = 12;

/// Registry order is part of the persisted policy format; do not reorder.
const std::vector<PhaseId>& list_phases();

/// Throws mlcomp::Error for an unknown name.
PhaseId find_phase(std::string_view name);

PhaseResult apply_phase(const tir::Module& m, const PhaseId& phase);
PhaseResult apply_phase(const tir::Module& m, std::size_t phase_index);

struct SequenceResult {
  tir::Module module;
  std::vector<bool> changed;
};

SequenceResult run_sequence(const tir::Module& m, std::span<const PhaseId> seq);

/// Parses a comma-separated list of phase names.
std::vector<PhaseId> parse_phase_list(std::string_view csv);
std::string format_phase_list(std::span<const PhaseId> seq);

// Individual transformations. Each returns the rewritten module; callers that
// need the changed flag go through apply_phase.
tir::Module constfold(const tir::Module& m);
tir::Module constprop(const tir::Module& m);
tir::Module copyprop(const tir::Module& m);
tir::Module dce(const tir::Module& m);
tir::Module cse(const tir::Module& m);
tir::Module simplifycfg(const tir::Module& m);
tir::Module jumpthread(const tir::Module& m);
tir::Module licm(const tir::Module& m);
tir::Module loopunroll(const tir::Module& m);
tir::Module strengthred(const tir::Module& m);
tir::Module inline_calls(const tir::Module& m);
tir::Module deadstore(const tir::Module& m);

inline constexpr std::int64_t kMaxUnrollTripCount = 8;
inline constexpr std::size_t kMaxInlineInstructions = 12;

}  // namespace mlcomp::passes
