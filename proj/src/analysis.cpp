#include "mlcomp/analysis.hpp"

#include <algorithm>
#include <limits>

namespace mlcomp::tir {

std::size_t Cfg::edge_count() const {
  std::size_t n = 0;
  for (const auto& s : succs) n += s.size();
  return n;
}

std::size_t Cfg::reachable_count() const {
  return static_cast<std::size_t>(std::count(reachable.begin(), reachable.end(), true));
}

Cfg compute_cfg(const Function& f) {
  const std::size_t n = f.blocks.size();
  Cfg cfg;
  cfg.succs.resize(n);
  cfg.preds.resize(n);
  cfg.reachable.assign(n, false);
  for (std::size_t b = 0; b < n; ++b) {
    for (const auto& label : f.blocks[b].terminator().targets) {
      if (auto t = f.find_block(label)) {
        cfg.succs[b].push_back(*t);
        cfg.preds[*t].push_back(b);
      }
    }
  }
  if (n == 0) return cfg;
  std::vector<std::size_t> work{0};
  cfg.reachable[0] = true;
  while (!work.empty()) {
    const std::size_t b = work.back();
    work.pop_back();
    for (std::size_t s : cfg.succs[b]) {
      if (!cfg.reachable[s]) {
        cfg.reachable[s] = true;
        work.push_back(s);
      }
    }
  }
  return cfg;
}

DominatorSets compute_dominators(const Function& f, const Cfg& cfg) {
  const std::size_t n = f.blocks.size();
  DominatorSets dom(n);
  for (std::size_t b = 0; b < n; ++b) {
    if (cfg.reachable[b]) dom[b].assign(n, b != 0);
  }
  if (n == 0) return dom;
  dom[0][0] = true;
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t b = 1; b < n; ++b) {
      if (!cfg.reachable[b]) continue;
      std::vector<bool> next(n, true);
      for (std::size_t p : cfg.preds[b]) {
        if (!cfg.reachable[p]) continue;
        for (std::size_t k = 0; k < n; ++k) next[k] = next[k] && dom[p][k];
      }
      next[b] = true;
      if (next != dom[b]) {
        dom[b] = std::move(next);
        changed = true;
      }
    }
  }
  return dom;
}

bool Loop::contains(std::size_t block) const {
  return std::binary_search(body.begin(), body.end(), block);
}

int LoopInfo::max_depth() const {
  int d = 0;
  for (const auto& l : loops) d = std::max(d, l.depth);
  return d;
}

bool LoopInfo::is_innermost(std::size_t loop_index) const {
  const Loop& outer = loops[loop_index];
  for (std::size_t i = 0; i < loops.size(); ++i) {
    if (i == loop_index) continue;
    const Loop& inner = loops[i];
    if (inner.body.size() < outer.body.size() &&
        std::includes(outer.body.begin(), outer.body.end(), inner.body.begin(), inner.body.end())) {
      return false;
    }
  }
  return true;
}

LoopInfo compute_loops(const Function& f) { return compute_loops(f, compute_cfg(f)); }

LoopInfo compute_loops(const Function& f, const Cfg& cfg) {
  const std::size_t n = f.blocks.size();
  const DominatorSets dom = compute_dominators(f, cfg);
  // header -> body membership, merged over all back edges into the header
  std::vector<std::vector<bool>> bodies(n);
  for (std::size_t u = 0; u < n; ++u) {
    if (!cfg.reachable[u]) continue;
    for (std::size_t h : cfg.succs[u]) {
      if (!dom[u][h]) continue;
      auto& body = bodies[h];
      if (body.empty()) {
        body.assign(n, false);
        body[h] = true;
      }
      std::vector<std::size_t> work;
      if (!body[u]) {
        body[u] = true;
        work.push_back(u);
      }
      while (!work.empty()) {
        const std::size_t b = work.back();
        work.pop_back();
        for (std::size_t p : cfg.preds[b]) {
          if (cfg.reachable[p] && !body[p]) {
            body[p] = true;
            work.push_back(p);
          }
        }
      }
    }
  }
  LoopInfo info;
  for (std::size_t h = 0; h < n; ++h) {
    if (bodies[h].empty()) continue;
    Loop loop;
    loop.header = h;
    for (std::size_t b = 0; b < n; ++b) {
      if (bodies[h][b]) loop.body.push_back(b);
    }
    std::vector<std::size_t> outside;
    for (std::size_t p : cfg.preds[h]) {
      if (cfg.reachable[p] && !bodies[h][p] &&
          std::find(outside.begin(), outside.end(), p) == outside.end()) {
        outside.push_back(p);
      }
    }
    if (outside.size() == 1) {
      const auto& s = cfg.succs[outside[0]];
      if (std::all_of(s.begin(), s.end(), [h](std::size_t x) { return x == h; })) {
        loop.preheader = outside[0];
      }
    }
    info.loops.push_back(std::move(loop));
  }
  for (auto& inner : info.loops) {
    int enclosing = 0;
    for (const auto& outer : info.loops) {
      if (&outer == &inner) continue;
      if (outer.body.size() > inner.body.size() &&
          std::includes(outer.body.begin(), outer.body.end(), inner.body.begin(),
                        inner.body.end())) {
        ++enclosing;
      }
    }
    inner.depth = 1 + enclosing;
  }
  return info;
}

std::int64_t CountedLoop::trip_count() const {
  if (init >= bound) return 0;
  const __int128 span = static_cast<__int128>(bound) - init;
  return static_cast<std::int64_t>((span + step - 1) / step);
}

std::optional<CountedLoop> match_counted_loop(const Function& f, const Cfg& cfg, const Loop& loop) {
  if (loop.body.size() != 2 || !loop.preheader) return std::nullopt;
  const std::size_t h = loop.header;
  const std::size_t body = loop.body[0] == h ? loop.body[1] : loop.body[0];
  const Block& hb = f.blocks[h];
  if (hb.instrs.size() != 2) return std::nullopt;
  const Instruction& cmp = hb.instrs[0];
  const Instruction& br = hb.instrs[1];
  if (cmp.op != Opcode::Lt || !cmp.args[0].is_reg() || !cmp.args[1].is_imm()) return std::nullopt;
  const std::string& counter = cmp.args[0].name;
  if (cmp.dest == counter) return std::nullopt;
  if (br.op != Opcode::Br || !br.args[0].is_reg() || br.args[0].name != cmp.dest) return std::nullopt;
  if (cfg.succs[h].size() != 2 || cfg.succs[h][0] != body || loop.contains(cfg.succs[h][1])) {
    return std::nullopt;
  }
  const Block& bb = f.blocks[body];
  const Instruction& latch = bb.terminator();
  if (latch.op != Opcode::Jmp || latch.targets[0] != hb.label) return std::nullopt;
  std::optional<std::int64_t> step;
  for (std::size_t i = 0; i + 1 < bb.instrs.size(); ++i) {
    const Instruction& in = bb.instrs[i];
    if (in.dest != counter) continue;
    if (step || in.op != Opcode::Add) return std::nullopt;
    const Operand* lit = nullptr;
    if (in.args[0].is_reg() && in.args[0].name == counter && in.args[1].is_imm()) {
      lit = &in.args[1];
    } else if (in.args[1].is_reg() && in.args[1].name == counter && in.args[0].is_imm()) {
      lit = &in.args[0];
    } else {
      return std::nullopt;
    }
    if (lit->imm <= 0) return std::nullopt;
    step = lit->imm;
  }
  if (!step) return std::nullopt;

  const Block& pre = f.blocks[*loop.preheader];
  if (pre.terminator().op != Opcode::Jmp) return std::nullopt;
  std::optional<std::int64_t> init;
  for (auto it = pre.instrs.rbegin(); it != pre.instrs.rend(); ++it) {
    if (it->dest != counter) continue;
    if (it->op == Opcode::Const) init = it->args[0].imm;
    break;
  }
  if (!init) return std::nullopt;

  CountedLoop c;
  c.preheader = *loop.preheader;
  c.header = h;
  c.body = body;
  c.exit = cfg.succs[h][1];
  c.counter = counter;
  c.init = *init;
  c.bound = cmp.args[1].imm;
  c.step = *step;
  // Reject loops whose final increment would wrap around.
  const __int128 last = static_cast<__int128>(c.init) + static_cast<__int128>(c.trip_count()) * c.step;
  if (last > std::numeric_limits<std::int64_t>::max()) return std::nullopt;
  return c;
}

std::vector<std::string> used_registers(const Instruction& instr) {
  std::vector<std::string> out;
  for (const auto& a : instr.args) {
    if (a.is_reg()) out.push_back(a.name);
  }
  return out;
}

Liveness compute_liveness(const Function& f, const Cfg& cfg) {
  const std::size_t n = f.blocks.size();
  std::vector<std::set<std::string>> use(n), def(n);
  for (std::size_t b = 0; b < n; ++b) {
    for (const auto& in : f.blocks[b].instrs) {
      for (const auto& r : used_registers(in)) {
        if (!def[b].contains(r)) use[b].insert(r);
      }
      if (in.has_dest()) def[b].insert(in.dest);
    }
  }
  Liveness live;
  live.live_in.resize(n);
  live.live_out.resize(n);
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t k = n; k-- > 0;) {
      std::set<std::string> out;
      for (std::size_t s : cfg.succs[k]) out.insert(live.live_in[s].begin(), live.live_in[s].end());
      std::set<std::string> in = use[k];
      for (const auto& r : out) {
        if (!def[k].contains(r)) in.insert(r);
      }
      if (in != live.live_in[k] || out != live.live_out[k]) {
        live.live_in[k] = std::move(in);
        live.live_out[k] = std::move(out);
        changed = true;
      }
    }
  }
  return live;
}

}  // namespace mlcomp::tir
