// Passes driven by global liveness or CFG shape.

#include <algorithm>
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

bool dce_once(Function& f, const Module& m) {
  const tir::Cfg cfg = tir::compute_cfg(f);
  const tir::Liveness live = tir::compute_liveness(f, cfg);
  bool removed = false;
  for (std::size_t b = 0; b < f.blocks.size(); ++b) {
    auto& instrs = f.blocks[b].instrs;
    std::set<std::string> live_now = live.live_out[b];
    std::vector<bool> keep(instrs.size(), true);
    for (std::size_t i = instrs.size(); i-- > 0;) {
      const Instruction& in = instrs[i];
      if (in.has_dest() && !live_now.contains(in.dest) && detail::is_removable(in, m)) {
        keep[i] = false;
        removed = true;
        continue;
      }
      if (in.has_dest()) live_now.erase(in.dest);
      for (const auto& r : tir::used_registers(in)) live_now.insert(r);
    }
    std::vector<Instruction> kept;
    for (std::size_t i = 0; i < instrs.size(); ++i) {
      if (keep[i]) kept.push_back(std::move(instrs[i]));
    }
    instrs = std::move(kept);
  }
  return removed;
}

Instruction make_jmp(const std::string& target) {
  Instruction in;
  in.op = Opcode::Jmp;
  in.targets = {target};
  return in;
}

bool fold_branches(Function& f) {
  bool changed = false;
  for (auto& b : f.blocks) {
    Instruction& t = b.terminator();
    if (t.op != Opcode::Br) continue;
    if (t.args[0].is_imm()) {
      t = make_jmp(t.args[0].imm != 0 ? t.targets[0] : t.targets[1]);
      changed = true;
    } else if (t.targets[0] == t.targets[1]) {
      t = make_jmp(t.targets[0]);
      changed = true;
    }
  }
  return changed;
}

bool remove_unreachable(Function& f) {
  const tir::Cfg cfg = tir::compute_cfg(f);
  if (cfg.reachable_count() == f.blocks.size()) return false;
  std::vector<Block> kept;
  for (std::size_t b = 0; b < f.blocks.size(); ++b) {
    if (cfg.reachable[b]) kept.push_back(std::move(f.blocks[b]));
  }
  f.blocks = std::move(kept);
  return true;
}

bool merge_one(Function& f) {
  const tir::Cfg cfg = tir::compute_cfg(f);
  for (std::size_t p = 0; p < f.blocks.size(); ++p) {
    const Instruction& t = f.blocks[p].terminator();
    if (t.op != Opcode::Jmp) continue;
    const std::size_t s = cfg.succs[p][0];
    if (s == p || s == 0 || cfg.preds[s].size() != 1) continue;
    Block& pred = f.blocks[p];
    pred.instrs.pop_back();
    auto& tail = f.blocks[s].instrs;
    pred.instrs.insert(pred.instrs.end(), tail.begin(), tail.end());
    f.blocks.erase(f.blocks.begin() + static_cast<std::ptrdiff_t>(s));
    return true;
  }
  return false;
}

}  // namespace

Module dce(const Module& m) {
  Module out = m;
  for (auto& f : out.functions) {
    while (dce_once(f, out)) {
    }
  }
  return out;
}

Module simplifycfg(const Module& m) {
  Module out = m;
  for (auto& f : out.functions) {
    bool changed = true;
    while (changed) {
      changed = fold_branches(f);
      changed = remove_unreachable(f) || changed;
      while (merge_one(f)) changed = true;
    }
  }
  return out;
}

Module jumpthread(const Module& m) {
  Module out = m;
  for (auto& f : out.functions) {
    auto forward_target = [&](const std::string& label) -> std::optional<std::string> {
      const auto idx = f.find_block(label);
      const Block& b = f.blocks[*idx];
      if (b.instrs.size() == 1 && b.instrs[0].op == Opcode::Jmp) return b.instrs[0].targets[0];
      return std::nullopt;
    };
    auto resolve = [&](const std::string& label) {
      std::set<std::string> seen{label};
      std::string cur = label;
      while (auto next = forward_target(cur)) {
        if (!seen.insert(*next).second) return label;  // forwarding cycle
        cur = *next;
      }
      return cur;
    };
    std::vector<std::vector<std::string>> resolved;
    for (const auto& b : f.blocks) {
      std::vector<std::string> targets;
      for (const auto& t : b.terminator().targets) targets.push_back(resolve(t));
      resolved.push_back(std::move(targets));
    }
    for (std::size_t b = 0; b < f.blocks.size(); ++b) f.blocks[b].terminator().targets = resolved[b];
  }
  return out;
}

}  // namespace mlcomp::passes
