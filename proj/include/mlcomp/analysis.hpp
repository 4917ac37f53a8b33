#pragma once

// Control-flow analyses over a single TIR function. Blocks are identified by
// their index in Function::blocks; block 0 is the entry.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mlcomp/tir.hpp"

namespace mlcomp::tir {

struct Cfg {
  /// succs[b] follows terminator order; a `br` with equal targets yields two
  /// entries.
  std::vector<std::vector<std::size_t>> succs;
  std::vector<std::vector<std::size_t>> preds;
  std::vector<bool> reachable;

  std::size_t edge_count() const;
  std::size_t reachable_count() const;
};

Cfg compute_cfg(const Function& f);

/// dom[b] is the set of blocks dominating b (including b). Unreachable blocks
/// get an empty set.
using DominatorSets = std::vector<std::vector<bool>>;
DominatorSets compute_dominators(const Function& f, const Cfg& cfg);

struct Loop {
  std::size_t header = 0;
  std::vector<std::size_t> body;  // sorted, includes header
  int depth = 1;
  std::optional<std::size_t> preheader;

  bool contains(std::size_t block) const;
};

struct LoopInfo {
  /// Sorted by header index.
  std::vector<Loop> loops;

  int max_depth() const;
  /// True when no other loop's body is a proper subset of this one.
  bool is_innermost(std::size_t loop_index) const;
};

LoopInfo compute_loops(const Function& f);
LoopInfo compute_loops(const Function& f, const Cfg& cfg);

/// A loop in the shape
///
///   pre:    ... %i = const INIT ... jmp header
///   header: %c = lt %i, BOUND
///           br %c, body, exit
///   body:   ...                  (exactly one def of %i: %i = add %i, STEP)
///           jmp header
///
/// with literal INIT, BOUND and STEP > 0.
struct CountedLoop {
  std::size_t preheader = 0;
  std::size_t header = 0;
  std::size_t body = 0;
  std::size_t exit = 0;
  std::string counter;
  std::int64_t init = 0;
  std::int64_t bound = 0;
  std::int64_t step = 0;

  std::int64_t trip_count() const;
};

std::optional<CountedLoop> match_counted_loop(const Function& f, const Cfg& cfg, const Loop& loop);

/// Global register liveness.
struct Liveness {
  std::vector<std::set<std::string>> live_in;
  std::vector<std::set<std::string>> live_out;
};

Liveness compute_liveness(const Function& f, const Cfg& cfg);

/// Registers read by an instruction.
std::vector<std::string> used_registers(const Instruction& instr);

}  // namespace mlcomp::tir
