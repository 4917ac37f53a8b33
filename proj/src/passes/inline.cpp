#include <algorithm>
#include <map>
#include <set>

#include "mlcomp/passes.hpp"
#include "pass_util.hpp"

namespace mlcomp::passes {

using tir::Block;
using tir::Function;
using tir::Instruction;
using tir::Module;
using tir::Opcode;
using tir::Operand;

namespace {

// Functions that can reach themselves through the call graph.
std::set<std::string> recursive_functions(const Module& m) {
  std::map<std::string, std::set<std::string>> calls;
  for (const auto& f : m.functions) {
    auto& out = calls[f.name];
    for (const auto& b : f.blocks) {
      for (const auto& in : b.instrs) {
        if (in.op == Opcode::Call) out.insert(in.callee);
      }
    }
  }
  std::set<std::string> result;
  for (const auto& f : m.functions) {
    std::set<std::string> seen;
    std::vector<std::string> work(calls[f.name].begin(), calls[f.name].end());
    while (!work.empty()) {
      std::string g = work.back();
      work.pop_back();
      if (g == f.name) {
        result.insert(f.name);
        break;
      }
      if (!seen.insert(g).second) continue;
      for (const auto& h : calls[g]) work.push_back(h);
    }
  }
  return result;
}

class Inliner {
 public:
  explicit Inliner(std::set<std::string> taken) : taken_(std::move(taken)) {}

  // Splits `block` at the call in position `k` and returns the blocks that
  // replace it: the head, the cloned callee blocks, and the continuation.
  std::vector<Block> expand(const Block& block, std::size_t k, const Function& callee) {
    const Instruction& call = block.instrs[k];
    std::string suffix;
    std::map<std::string, std::string> regs, labels;
    std::string cont;
    for (;; ++counter_) {
      suffix = ".i" + std::to_string(counter_);
      regs.clear();
      labels.clear();
      for (const auto& name : callee_registers(callee)) regs[name] = name + suffix;
      for (const auto& b : callee.blocks) labels[b.label] = b.label + suffix;
      cont = block.label + ".c" + std::to_string(counter_);
      bool clash = taken_.contains(cont);
      for (const auto& [_, n] : regs) clash = clash || taken_.contains(n);
      for (const auto& [_, n] : labels) clash = clash || taken_.contains(n);
      if (!clash) break;
    }
    ++counter_;
    for (const auto& [_, n] : regs) taken_.insert(n);
    for (const auto& [_, n] : labels) taken_.insert(n);
    taken_.insert(cont);

    std::vector<Block> out;
    Block head;
    head.label = block.label;
    head.instrs.assign(block.instrs.begin(), block.instrs.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::size_t p = 0; p < callee.params.size(); ++p) {
      Instruction copy;
      copy.op = Opcode::Copy;
      copy.dest = regs.at(callee.params[p]);
      copy.args = {call.args[p]};
      head.instrs.push_back(std::move(copy));
    }
    head.instrs.push_back(jump(labels.at(callee.blocks[0].label)));
    out.push_back(std::move(head));

    for (const auto& b : callee.blocks) {
      Block clone;
      clone.label = labels.at(b.label);
      for (const auto& in : b.instrs) {
        if (in.op == Opcode::Ret) {
          if (call.has_dest()) {
            Instruction copy;
            copy.op = Opcode::Copy;
            copy.dest = call.dest;
            copy.args = {rename(in.args[0], regs)};
            clone.instrs.push_back(std::move(copy));
          }
          clone.instrs.push_back(jump(cont));
          continue;
        }
        Instruction c = in;
        if (c.has_dest()) c.dest = regs.at(c.dest);
        for (auto& a : c.args) a = rename(a, regs);
        for (auto& t : c.targets) t = labels.at(t);
        clone.instrs.push_back(std::move(c));
      }
      out.push_back(std::move(clone));
    }

    Block tail;
    tail.label = cont;
    tail.instrs.assign(block.instrs.begin() + static_cast<std::ptrdiff_t>(k) + 1, block.instrs.end());
    out.push_back(std::move(tail));
    return out;
  }

 private:
  static std::set<std::string> callee_registers(const Function& f) {
    std::set<std::string> out(f.params.begin(), f.params.end());
    for (const auto& b : f.blocks) {
      for (const auto& in : b.instrs) {
        if (in.has_dest()) out.insert(in.dest);
        for (const auto& a : in.args) {
          if (a.is_reg()) out.insert(a.name);
        }
      }
    }
    return out;
  }

  static Operand rename(const Operand& o, const std::map<std::string, std::string>& regs) {
    if (!o.is_reg()) return o;
    return Operand::reg(regs.at(o.name));
  }

  static Instruction jump(const std::string& label) {
    Instruction j;
    j.op = Opcode::Jmp;
    j.targets = {label};
    return j;
  }

  std::set<std::string> taken_;
  int counter_ = 0;
};

}  // namespace

Module inline_calls(const Module& m) {
  const std::set<std::string> recursive = recursive_functions(m);
  auto eligible = [&](const std::string& callee) {
    const Function* f = m.find_function(callee);
    return f != nullptr && !recursive.contains(callee) &&
           f->instruction_count() <= kMaxInlineInstructions;
  };

  Module out = m;
  std::set<std::string> inlined;
  for (auto& f : out.functions) {
    Inliner inliner(detail::names_in(f));
    std::vector<Block> result;
    std::vector<Block> pending(f.blocks.rbegin(), f.blocks.rend());
    while (!pending.empty()) {
      Block b = std::move(pending.back());
      pending.pop_back();
      auto it = std::find_if(b.instrs.begin(), b.instrs.end(), [&](const Instruction& in) {
        return in.op == Opcode::Call && eligible(in.callee);
      });
      if (it == b.instrs.end()) {
        result.push_back(std::move(b));
        continue;
      }
      const auto k = static_cast<std::size_t>(it - b.instrs.begin());
      const Function& callee = *m.find_function(it->callee);
      inlined.insert(callee.name);
      std::vector<Block> pieces = inliner.expand(b, k, callee);
      // The continuation may hold further call sites.
      pending.push_back(std::move(pieces.back()));
      pieces.pop_back();
      for (auto& p : pieces) result.push_back(std::move(p));
    }
    f.blocks = std::move(result);
  }

  // Drop inlined callees that no longer have call sites.
  std::set<std::string> still_called;
  for (const auto& f : out.functions) {
    for (const auto& b : f.blocks) {
      for (const auto& in : b.instrs) {
        if (in.op == Opcode::Call) still_called.insert(in.callee);
      }
    }
  }
  std::erase_if(out.functions, [&](const Function& f) {
    return f.name != tir::kEntryFunction && inlined.contains(f.name) &&
           !still_called.contains(f.name);
  });
  return out;
}

}  // namespace mlcomp::passes
