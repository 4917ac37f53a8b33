#include "pass_util.hpp"

namespace mlcomp::passes::detail {

using tir::Instruction;
using tir::Opcode;

bool is_speculatable(const Instruction& in) {
  switch (in.op) {
    case Opcode::Const:
    case Opcode::Copy:
      return true;
    case Opcode::Div:
    case Opcode::Rem:
      return in.args[1].is_imm() && in.args[1].imm != 0;
    default:
      return tir::is_binary(in.op);
  }
}

bool is_removable(const Instruction& in, const tir::Module& m) {
  if (in.op == Opcode::Load) {
    if (!in.args[1].is_imm()) return false;
    const tir::Global* g = m.find_global(in.args[0].name);
    return g != nullptr && in.args[1].imm >= 0 && in.args[1].imm < g->length;
  }
  return is_speculatable(in);
}

std::optional<std::int64_t> power_of_two_exponent(std::int64_t v) {
  if (v <= 0 || (v & (v - 1)) != 0) return std::nullopt;
  std::int64_t k = 0;
  while ((std::int64_t{1} << k) != v) ++k;
  return k;
}

std::set<std::string> names_in(const tir::Function& f) {
  std::set<std::string> out(f.params.begin(), f.params.end());
  for (const auto& b : f.blocks) {
    out.insert(b.label);
    for (const auto& in : b.instrs) {
      if (in.has_dest()) out.insert(in.dest);
      for (const auto& a : in.args) {
        if (a.is_reg()) out.insert(a.name);
      }
    }
  }
  return out;
}

std::string fresh_label(const tir::Function& f, const std::string& base) {
  if (!f.find_block(base)) return base;
  for (int n = 1;; ++n) {
    std::string candidate = base + std::to_string(n);
    if (!f.find_block(candidate)) return candidate;
  }
}

}  // namespace mlcomp::passes::detail
