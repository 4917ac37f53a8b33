// Block-local rewrites: folding, propagation, CSE, strength reduction and
// dead-store removal.

#include <algorithm>
#include <map>
#include <tuple>

#include "mlcomp/passes.hpp"
#include "pass_util.hpp"

namespace mlcomp::passes {

using tir::Block;
using tir::Instruction;
using tir::Module;
using tir::Opcode;
using tir::Operand;

namespace {

template <typename Fn>
Module for_each_block(const Module& m, Fn&& fn) {
  Module out = m;
  for (auto& f : out.functions) {
    for (auto& b : f.blocks) fn(b);
  }
  return out;
}

Instruction make_const(const std::string& dest, std::int64_t v) {
  Instruction in;
  in.op = Opcode::Const;
  in.dest = dest;
  in.args = {Operand::literal(v)};
  return in;
}

Instruction make_copy(const std::string& dest, Operand src) {
  Instruction in;
  in.op = Opcode::Copy;
  in.dest = dest;
  in.args = {std::move(src)};
  return in;
}

}  // namespace

Module constfold(const Module& m) {
  return for_each_block(m, [](Block& b) {
    std::map<std::string, std::int64_t> known;
    auto value = [&](const Operand& o) -> std::optional<std::int64_t> {
      if (o.is_imm()) return o.imm;
      if (o.is_reg()) {
        if (auto it = known.find(o.name); it != known.end()) return it->second;
      }
      return std::nullopt;
    };
    for (auto& in : b.instrs) {
      std::optional<std::int64_t> result;
      if (in.op == Opcode::Const) {
        result = in.args[0].imm;
      } else if (in.op == Opcode::Copy) {
        result = value(in.args[0]);
      } else if (tir::is_binary(in.op)) {
        auto lhs = value(in.args[0]);
        auto rhs = value(in.args[1]);
        if (lhs && rhs) result = tir::eval_binary(in.op, *lhs, *rhs);
      }
      if (!in.has_dest()) continue;
      if (result) {
        if (in.op != Opcode::Const) in = make_const(in.dest, *result);
        known[in.dest] = *result;
      } else {
        known.erase(in.dest);
      }
    }
  });
}

Module constprop(const Module& m) {
  return for_each_block(m, [](Block& b) {
    std::map<std::string, std::int64_t> consts;
    for (auto& in : b.instrs) {
      if (in.op != Opcode::Const) {
        for (std::size_t i : in.value_operand_indices()) {
          Operand& a = in.args[i];
          if (!a.is_reg()) continue;
          if (auto it = consts.find(a.name); it != consts.end()) a = Operand::literal(it->second);
        }
      }
      if (!in.has_dest()) continue;
      if (in.op == Opcode::Const) {
        consts[in.dest] = in.args[0].imm;
      } else {
        consts.erase(in.dest);
      }
    }
  });
}

Module copyprop(const Module& m) {
  return for_each_block(m, [](Block& b) {
    std::map<std::string, Operand> copies;
    for (auto& in : b.instrs) {
      for (std::size_t i : in.value_operand_indices()) {
        Operand& a = in.args[i];
        if (!a.is_reg()) continue;
        if (auto it = copies.find(a.name); it != copies.end()) a = it->second;
      }
      if (!in.has_dest()) continue;
      const std::string& d = in.dest;
      copies.erase(d);
      std::erase_if(copies, [&](const auto& kv) { return kv.second.is_reg() && kv.second.name == d; });
      if (in.op == Opcode::Copy && !(in.args[0].is_reg() && in.args[0].name == d)) {
        copies.emplace(d, in.args[0]);
      }
    }
  });
}

Module cse(const Module& m) {
  using Key = std::tuple<Opcode, Operand::Kind, std::string, std::int64_t, Operand::Kind,
                         std::string, std::int64_t>;
  auto operand_key = [](const Operand& o) { return std::tuple(o.kind, o.name, o.imm); };
  return for_each_block(m, [&](Block& b) {
    std::map<Key, std::string> available;
    for (auto& in : b.instrs) {
      if (!in.has_dest()) continue;
      const std::string d = in.dest;
      std::optional<Key> key;
      if (tir::is_binary(in.op)) {
        auto lhs = operand_key(in.args[0]);
        auto rhs = operand_key(in.args[1]);
        if (tir::is_commutative(in.op) && rhs < lhs) std::swap(lhs, rhs);
        key = std::tuple_cat(std::tuple(in.op), lhs, rhs);
        if (auto it = available.find(*key); it != available.end() && it->second != d) {
          in = make_copy(d, Operand::reg(it->second));
        }
      }
      std::erase_if(available, [&](const auto& kv) {
        const Key& k = kv.first;
        return kv.second == d || (std::get<1>(k) == Operand::Kind::Reg && std::get<2>(k) == d) ||
               (std::get<4>(k) == Operand::Kind::Reg && std::get<5>(k) == d);
      });
      if (key && tir::is_binary(in.op)) {
        const bool reads_dest = std::any_of(in.args.begin(), in.args.end(),
                                            [&](const Operand& a) { return a.is_reg() && a.name == d; });
        if (!reads_dest) available.emplace(*key, d);
      }
    }
  });
}

Module strengthred(const Module& m) {
  return for_each_block(m, [](Block& b) {
    for (auto& in : b.instrs) {
      if (in.op != Opcode::Mul && in.op != Opcode::Add) continue;
      // Prefer the right-hand literal when both operands are literals.
      for (std::size_t lit : {std::size_t{1}, std::size_t{0}}) {
        const Operand& c = in.args[lit];
        if (!c.is_imm()) continue;
        const Operand other = in.args[1 - lit];
        if (in.op == Opcode::Add) {
          if (c.imm == 0) in = make_copy(in.dest, other);
        } else if (c.imm == 1) {
          in = make_copy(in.dest, other);
        } else if (auto k = detail::power_of_two_exponent(c.imm); k && *k >= 1) {
          const std::string d = in.dest;
          in.op = Opcode::Shl;
          in.args = {other, Operand::literal(*k)};
          in.dest = d;
        } else {
          continue;
        }
        break;
      }
    }
  });
}

Module deadstore(const Module& m) {
  Module out = m;
  for (auto& f : out.functions) {
    for (auto& b : f.blocks) {
      std::vector<bool> dead(b.instrs.size(), false);
      for (std::size_t i = 0; i < b.instrs.size(); ++i) {
        const Instruction& s = b.instrs[i];
        if (s.op != Opcode::Store || !s.args[2].is_imm()) continue;
        const tir::Global* g = m.find_global(s.args[1].name);
        if (g == nullptr || s.args[2].imm < 0 || s.args[2].imm >= g->length) continue;
        for (std::size_t j = i + 1; j < b.instrs.size(); ++j) {
          const Instruction& t = b.instrs[j];
          if (t.op == Opcode::Load || t.op == Opcode::Call) break;
          if (t.op == Opcode::Store && t.args[1].name == s.args[1].name && t.args[2].is_imm() &&
              t.args[2].imm == s.args[2].imm) {
            dead[i] = true;
            break;
          }
        }
      }
      std::vector<Instruction> kept;
      for (std::size_t i = 0; i < b.instrs.size(); ++i) {
        if (!dead[i]) kept.push_back(std::move(b.instrs[i]));
      }
      b.instrs = std::move(kept);
    }
  }
  return out;
}

}  // namespace mlcomp::passes
