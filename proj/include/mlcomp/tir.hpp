#pragma once

// Tiny IR: a register-based three-address IR over wrapping 64-bit integers.
//
//   global @buf[8]
//   func @main() {
//   bb0:
//     %r = const 7
//     ret %r
//   }
//
// Registers are not in SSA form; a register may be assigned many times.
// The entry function is always `@main`.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mlcomp::tir {

enum class Opcode : std::uint8_t {
  Const,
  Copy,
  Add,
  Sub,
  Mul,
  Div,
  Rem,
  Lt,
  Le,
  Eq,
  And,
  Or,
  Xor,
  Shl,
  Shr,
  Load,
  Store,
  Call,
  Ret,
  Br,
  Jmp,
  Print,
};

inline constexpr std::size_t kNumOpcodes = 22;

std::string_view opcode_name(Opcode op);
std::optional<Opcode> opcode_from_name(std::string_view name);
const std::array<Opcode, kNumOpcodes>& all_opcodes();

bool is_terminator(Opcode op);
bool is_binary(Opcode op);
bool is_commutative(Opcode op);

/// Evaluates a binary opcode with wrapping semantics. Returns nullopt on
/// division or remainder by zero.
std::optional<std::int64_t> eval_binary(Opcode op, std::int64_t lhs, std::int64_t rhs);

struct Operand {
  enum class Kind : std::uint8_t { Reg, Imm, Global };

  Kind kind = Kind::Imm;
  std::string name;  // Reg / Global (without sigil)
  std::int64_t imm = 0;

  static Operand reg(std::string n) { return {Kind::Reg, std::move(n), 0}; }
  static Operand literal(std::int64_t v) { return {Kind::Imm, {}, v}; }
  static Operand global(std::string n) { return {Kind::Global, std::move(n), 0}; }

  bool is_reg() const { return kind == Kind::Reg; }
  bool is_imm() const { return kind == Kind::Imm; }
  bool is_global() const { return kind == Kind::Global; }

  friend bool operator==(const Operand&, const Operand&) = default;
};

/// Operand layout per opcode:
///   const          dest, args = {imm}
///   copy           dest, args = {value}
///   binary ops     dest, args = {lhs, rhs}
///   load           dest, args = {@global, index}
///   store          args = {value, @global, index}
///   call           optional dest, callee, args = call arguments
///   ret / print    args = {value}
///   br             args = {cond}, targets = {taken, fallthrough}
///   jmp            targets = {target}
struct Instruction {
  Opcode op = Opcode::Const;
  std::string dest;  // empty when the instruction defines nothing
  std::vector<Operand> args;
  std::vector<std::string> targets;
  std::string callee;

  bool has_dest() const { return !dest.empty(); }

  /// Operand indices that are read as values (excludes the global of load/store).
  std::vector<std::size_t> value_operand_indices() const;

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

struct Block {
  std::string label;
  std::vector<Instruction> instrs;

  const Instruction& terminator() const { return instrs.back(); }
  Instruction& terminator() { return instrs.back(); }

  friend bool operator==(const Block&, const Block&) = default;
};

struct Function {
  std::string name;
  std::vector<std::string> params;
  std::vector<Block> blocks;

  std::size_t instruction_count() const;
  /// Index of the block with the given label, or nullopt.
  std::optional<std::size_t> find_block(std::string_view label) const;

  friend bool operator==(const Function&, const Function&) = default;
};

struct Global {
  std::string name;
  std::int64_t length = 0;

  friend bool operator==(const Global&, const Global&) = default;
};

inline constexpr std::string_view kEntryFunction = "main";

struct Module {
  std::vector<Global> globals;
  std::vector<Function> functions;

  const Function* find_function(std::string_view name) const;
  Function* find_function(std::string_view name);
  const Global* find_global(std::string_view name) const;
  std::size_t instruction_count() const;
};

/// Parses and verifies TIR text. Throws ParseError or VerifyError.
Module parse_module(std::string_view text);

/// Canonical text form. parse_module(print_module(m)) reproduces m.
std::string print_module(const Module& m);

/// Throws VerifyError describing the first violated invariant.
void verify(const Module& m);

/// True iff the canonical prints are byte-identical.
bool structurally_equal(const Module& a, const Module& b);

}  // namespace mlcomp::tir
