#include "mlcomp/features.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "mlcomp/analysis.hpp"

namespace mlcomp::features {

using tir::Opcode;

namespace {

std::vector<FeatureInfo> build_manifest() {
  std::vector<std::pair<std::string, std::string>> rows;
  for (auto op : tir::all_opcodes()) {
    const std::string kind(tir::opcode_name(op));
    rows.emplace_back("count." + kind, "static number of '" + kind + "' instructions");
  }
  const std::pair<const char*, const char*> rest[] = {
      {"cfg.functions", "number of functions"},
      {"cfg.blocks", "number of basic blocks"},
      {"cfg.edges", "number of CFG successor edges"},
      {"cfg.unreachable_blocks", "blocks not reachable from their function's entry"},
      {"cfg.max_out_degree", "largest number of successors of a block"},
      {"cfg.cond_branches", "conditional branches"},
      {"cfg.uncond_jumps", "unconditional jumps"},
      {"cfg.returns", "return instructions"},
      {"cfg.mean_block_size", "instructions per block"},
      {"loop.count", "natural loops"},
      {"loop.max_depth", "deepest loop nesting"},
      {"loop.body_size_sum", "instructions in loop bodies, summed over loops"},
      {"loop.innermost", "loops containing no other loop"},
      {"loop.counted", "loops in counted form"},
      {"loop.preheaders", "loops with a dedicated preheader"},
      {"loop.mean_body_size", "instructions per loop body"},
      {"loop.max_trip_count", "largest trip count among counted loops"},
      {"call.sites", "call instructions"},
      {"call.distinct_callees", "functions called at least once"},
      {"call.leaf_functions", "functions without calls"},
      {"call.max_out_degree", "largest number of distinct callees of a function"},
      {"call.recursive_functions", "functions that can reach themselves in the call graph"},
      {"call.mean_callee_size", "instructions per called function"},
      {"call.max_callee_size", "instructions in the largest called function"},
      {"call.sites_in_loops", "call instructions inside loop bodies"},
      {"dist.fn_instrs_min", "fewest instructions in a function"},
      {"dist.fn_instrs_max", "most instructions in a function"},
      {"dist.fn_instrs_mean", "instructions per function"},
      {"dist.fn_blocks_min", "fewest blocks in a function"},
      {"dist.fn_blocks_max", "most blocks in a function"},
      {"dist.fn_blocks_mean", "blocks per function"},
      {"dist.params_total", "parameters over all functions"},
      {"dist.globals", "global arrays"},
      {"ratio.arith", "share of arithmetic, logic and comparison instructions"},
      {"ratio.memory", "share of loads and stores"},
      {"ratio.control", "share of branches, jumps and returns"},
      {"ratio.call", "share of calls"},
      {"ratio.const", "share of constants"},
      {"ratio.copy", "share of copies"},
      {"ratio.loop_body", "share of instructions inside some loop"},
      {"ratio.loop_functions", "share of instructions in functions that contain a loop"},
  };
  for (const auto& [n, d] : rest) rows.emplace_back(n, d);
  std::vector<FeatureInfo> out;
  for (std::size_t i = 0; i < rows.size(); ++i) out.push_back({i, rows[i].first, rows[i].second});
  return out;
}

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

std::set<std::string> recursive_functions(const std::map<std::string, std::set<std::string>>& calls) {
  std::set<std::string> out;
  for (const auto& [f, callees] : calls) {
    std::set<std::string> seen;
    std::vector<std::string> work(callees.begin(), callees.end());
    while (!work.empty()) {
      std::string g = work.back();
      work.pop_back();
      if (g == f) {
        out.insert(f);
        break;
      }
      if (!seen.insert(g).second) continue;
      if (auto it = calls.find(g); it != calls.end()) work.insert(work.end(), it->second.begin(), it->second.end());
    }
  }
  return out;
}

}  // namespace

const std::vector<FeatureInfo>& feature_manifest() {
  static const std::vector<FeatureInfo> manifest = build_manifest();
  return manifest;
}

FeatureVector extract_features(const tir::Module& m) {
  std::array<double, tir::kNumOpcodes> kinds{};
  double blocks = 0, edges = 0, unreachable = 0, max_out = 0;
  double loops = 0, max_depth = 0, body_sum = 0, innermost = 0, counted = 0, preheaders = 0,
         max_trip = 0;
  double call_sites = 0, leaves = 0, max_callees = 0, calls_in_loops = 0;
  double loop_instrs = 0, loop_fn_instrs = 0;
  std::map<std::string, std::set<std::string>> call_graph;
  std::vector<double> fn_instrs, fn_blocks;
  double params = 0;

  for (const auto& f : m.functions) {
    const tir::Cfg cfg = tir::compute_cfg(f);
    const tir::LoopInfo info = tir::compute_loops(f, cfg);
    blocks += static_cast<double>(f.blocks.size());
    edges += static_cast<double>(cfg.edge_count());
    unreachable += static_cast<double>(f.blocks.size() - cfg.reachable_count());
    for (const auto& s : cfg.succs) max_out = std::max(max_out, static_cast<double>(s.size()));

    std::vector<bool> in_loop(f.blocks.size(), false);
    for (std::size_t i = 0; i < info.loops.size(); ++i) {
      const tir::Loop& l = info.loops[i];
      ++loops;
      max_depth = std::max(max_depth, static_cast<double>(l.depth));
      for (std::size_t b : l.body) {
        body_sum += static_cast<double>(f.blocks[b].instrs.size());
        in_loop[b] = true;
      }
      if (info.is_innermost(i)) ++innermost;
      if (l.preheader) ++preheaders;
      if (auto c = tir::match_counted_loop(f, cfg, l)) {
        ++counted;
        max_trip = std::max(max_trip, static_cast<double>(c->trip_count()));
      }
    }

    auto& callees = call_graph[f.name];
    double own_sites = 0;
    for (std::size_t b = 0; b < f.blocks.size(); ++b) {
      for (const auto& in : f.blocks[b].instrs) {
        ++kinds[static_cast<std::size_t>(in.op)];
        if (in_loop[b]) ++loop_instrs;
        if (in.op != Opcode::Call) continue;
        ++own_sites;
        callees.insert(in.callee);
        if (in_loop[b]) ++calls_in_loops;
      }
    }
    call_sites += own_sites;
    if (own_sites == 0) ++leaves;
    max_callees = std::max(max_callees, static_cast<double>(callees.size()));
    const auto n = static_cast<double>(f.instruction_count());
    if (!info.loops.empty()) loop_fn_instrs += n;
    fn_instrs.push_back(n);
    fn_blocks.push_back(static_cast<double>(f.blocks.size()));
    params += static_cast<double>(f.params.size());
  }

  std::set<std::string> called;
  for (const auto& [_, cs] : call_graph) called.insert(cs.begin(), cs.end());
  double callee_sum = 0, callee_max = 0;
  for (const auto& name : called) {
    const auto* f = m.find_function(name);
    const double n = f != nullptr ? static_cast<double>(f->instruction_count()) : 0.0;
    callee_sum += n;
    callee_max = std::max(callee_max, n);
  }

  double total = 0;
  for (double k : kinds) total += k;
  auto kind = [&](Opcode op) { return kinds[static_cast<std::size_t>(op)]; };
  double arith = 0;
  for (auto op : tir::all_opcodes()) {
    if (tir::is_binary(op)) arith += kind(op);
  }
  auto stats = [](const std::vector<double>& v) {
    if (v.empty()) return std::array<double, 3>{0, 0, 0};
    double sum = 0;
    for (double x : v) sum += x;
    return std::array<double, 3>{*std::min_element(v.begin(), v.end()),
                                 *std::max_element(v.begin(), v.end()),
                                 sum / static_cast<double>(v.size())};
  };
  const auto fi = stats(fn_instrs);
  const auto fb = stats(fn_blocks);

  FeatureVector fv;
  std::size_t i = 0;
  for (double k : kinds) fv.values[i++] = k;
  for (double v : {static_cast<double>(m.functions.size()), blocks, edges, unreachable, max_out,
                   kind(Opcode::Br), kind(Opcode::Jmp), kind(Opcode::Ret), ratio(total, blocks),
                   loops, max_depth, body_sum, innermost, counted, preheaders,
                   ratio(body_sum, loops), max_trip,
                   call_sites, static_cast<double>(called.size()), leaves, max_callees,
                   static_cast<double>(recursive_functions(call_graph).size()),
                   ratio(callee_sum, static_cast<double>(called.size())), callee_max,
                   calls_in_loops,
                   fi[0], fi[1], fi[2], fb[0], fb[1], fb[2], params,
                   static_cast<double>(m.globals.size()),
                   ratio(arith, total), ratio(kind(Opcode::Load) + kind(Opcode::Store), total),
                   ratio(kind(Opcode::Br) + kind(Opcode::Jmp) + kind(Opcode::Ret), total),
                   ratio(kind(Opcode::Call), total), ratio(kind(Opcode::Const), total),
                   ratio(kind(Opcode::Copy), total), ratio(loop_instrs, total),
                   ratio(loop_fn_instrs, total)}) {
    fv.values[i++] = v;
  }
  return fv;
}

}  // namespace mlcomp::features
