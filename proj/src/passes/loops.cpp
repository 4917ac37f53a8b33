// Loop-invariant code motion and full unrolling of short counted loops.

#include <algorithm>
#include <map>
#include <set>

#include "mlcomp/analysis.hpp"
#include "mlcomp/passes.hpp"
#include "pass_util.hpp"

namespace mlcomp::passes {

using tir::Block;
using tir::Function;
using tir::Instruction;
using tir::Module;
using tir::Opcode;

namespace {

struct Position {
  std::size_t block;
  std::size_t index;
  auto operator<=>(const Position&) const = default;
};

std::vector<Position> find_invariants(const Function& f, const tir::Cfg& cfg,
                                      const tir::Liveness& live, const tir::Loop& loop) {
  std::map<std::string, int> defs_in_loop;
  for (std::size_t b : loop.body) {
    for (const auto& in : f.blocks[b].instrs) {
      if (in.has_dest()) ++defs_in_loop[in.dest];
    }
  }
  std::set<std::string> exit_live;
  for (std::size_t b : loop.body) {
    for (std::size_t s : cfg.succs[b]) {
      if (!loop.contains(s)) exit_live.insert(live.live_in[s].begin(), live.live_in[s].end());
    }
  }
  std::vector<Position> hoisted;
  std::set<std::string> hoisted_regs;
  bool progress = true;
  while (progress) {
    progress = false;
    for (std::size_t b : loop.body) {
      const auto& instrs = f.blocks[b].instrs;
      for (std::size_t i = 0; i < instrs.size(); ++i) {
        const Instruction& in = instrs[i];
        const Position pos{b, i};
        if (!in.has_dest() || !detail::is_speculatable(in)) continue;
        if (std::find(hoisted.begin(), hoisted.end(), pos) != hoisted.end()) continue;
        if (defs_in_loop[in.dest] != 1) continue;
        if (live.live_in[loop.header].contains(in.dest) || exit_live.contains(in.dest)) continue;
        const bool invariant = std::all_of(in.args.begin(), in.args.end(), [&](const auto& a) {
          if (!a.is_reg()) return true;
          auto it = defs_in_loop.find(a.name);
          return it == defs_in_loop.end() || it->second == 0 || hoisted_regs.contains(a.name);
        });
        if (!invariant) continue;
        hoisted.push_back(pos);
        hoisted_regs.insert(in.dest);
        progress = true;
      }
    }
  }
  return hoisted;
}

// Returns the index of the (possibly new) preheader of the loop headed by
// `header`. Shifts block indices when a block is inserted.
std::size_t ensure_preheader(Function& f, const tir::Cfg& cfg, const tir::Loop& loop) {
  if (loop.preheader) return *loop.preheader;
  const std::string header_label = f.blocks[loop.header].label;
  const std::string label = detail::fresh_label(f, header_label + ".ph");
  for (std::size_t p = 0; p < f.blocks.size(); ++p) {
    if (loop.contains(p)) continue;
    if (std::find(cfg.succs[p].begin(), cfg.succs[p].end(), loop.header) == cfg.succs[p].end()) {
      continue;
    }
    for (auto& t : f.blocks[p].terminator().targets) {
      if (t == header_label) t = label;
    }
  }
  Block pre;
  pre.label = label;
  Instruction jmp;
  jmp.op = Opcode::Jmp;
  jmp.targets = {header_label};
  pre.instrs.push_back(std::move(jmp));
  f.blocks.insert(f.blocks.begin() + static_cast<std::ptrdiff_t>(loop.header), std::move(pre));
  return loop.header;
}

bool hoist_one_loop(Function& f, std::set<std::string>& done) {
  const tir::Cfg cfg = tir::compute_cfg(f);
  tir::LoopInfo info = tir::compute_loops(f, cfg);
  std::vector<const tir::Loop*> order;
  for (const auto& l : info.loops) {
    if (!done.contains(f.blocks[l.header].label)) order.push_back(&l);
  }
  if (order.empty()) return false;
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return a->depth > b->depth; });
  const tir::Loop& loop = *order.front();
  done.insert(f.blocks[loop.header].label);

  const tir::Liveness live = tir::compute_liveness(f, cfg);
  const std::vector<Position> hoisted = find_invariants(f, cfg, live, loop);
  if (hoisted.empty()) return true;

  std::vector<Instruction> moved;
  for (const auto& pos : hoisted) moved.push_back(f.blocks[pos.block].instrs[pos.index]);
  std::set<Position> erase(hoisted.begin(), hoisted.end());
  for (std::size_t b : loop.body) {
    auto& instrs = f.blocks[b].instrs;
    std::vector<Instruction> kept;
    for (std::size_t i = 0; i < instrs.size(); ++i) {
      if (!erase.contains(Position{b, i})) kept.push_back(std::move(instrs[i]));
    }
    instrs = std::move(kept);
  }
  const std::size_t pre = ensure_preheader(f, cfg, loop);
  auto& pre_instrs = f.blocks[pre].instrs;
  pre_instrs.insert(pre_instrs.end() - 1, moved.begin(), moved.end());
  return true;
}

}  // namespace

Module licm(const Module& m) {
  Module out = m;
  for (auto& f : out.functions) {
    std::set<std::string> done;
    while (hoist_one_loop(f, done)) {
    }
  }
  return out;
}

Module loopunroll(const Module& m) {
  Module out = m;
  for (auto& f : out.functions) {
    // Candidates are fixed up front so a loop exposed by unrolling its inner
    // loop waits for the next application.
    std::vector<std::string> headers;
    {
      const tir::Cfg cfg = tir::compute_cfg(f);
      const tir::LoopInfo info = tir::compute_loops(f, cfg);
      for (std::size_t i = 0; i < info.loops.size(); ++i) {
        if (!info.is_innermost(i)) continue;
        auto counted = tir::match_counted_loop(f, cfg, info.loops[i]);
        if (counted && counted->trip_count() <= kMaxUnrollTripCount) {
          headers.push_back(f.blocks[info.loops[i].header].label);
        }
      }
    }
    for (const auto& header_label : headers) {
      const tir::Cfg cfg = tir::compute_cfg(f);
      const tir::LoopInfo info = tir::compute_loops(f, cfg);
      std::optional<tir::CountedLoop> counted;
      for (const auto& l : info.loops) {
        if (f.blocks[l.header].label == header_label) counted = tir::match_counted_loop(f, cfg, l);
      }
      if (!counted || cfg.preds[counted->body].size() != 1) continue;
      const Block& header = f.blocks[counted->header];
      const Instruction cmp = header.instrs[0];
      const std::vector<Instruction> body(f.blocks[counted->body].instrs.begin(),
                                          f.blocks[counted->body].instrs.end() - 1);
      std::vector<Instruction> flat;
      for (std::int64_t k = 0; k < counted->trip_count(); ++k) {
        flat.push_back(cmp);
        flat.insert(flat.end(), body.begin(), body.end());
      }
      flat.push_back(cmp);
      Instruction jmp;
      jmp.op = Opcode::Jmp;
      jmp.targets = {f.blocks[counted->exit].label};
      flat.push_back(std::move(jmp));
      f.blocks[counted->header].instrs = std::move(flat);
      f.blocks.erase(f.blocks.begin() + static_cast<std::ptrdiff_t>(counted->body));
    }
  }
  return out;
}

}  // namespace mlcomp::passes
