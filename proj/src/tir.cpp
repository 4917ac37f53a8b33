#include "mlcomp/tir.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "mlcomp/analysis.hpp"
#include "mlcomp/error.hpp"

namespace mlcomp::tir {

namespace {

constexpr std::array<std::string_view, kNumOpcodes> kOpcodeNames = {
    "const", "copy", "add", "sub", "mul", "div",  "rem",   "lt",  "le",  "eq",  "and",
    "or",    "xor",  "shl", "shr", "load", "store", "call", "ret", "br", "jmp", "print",
};

}  // namespace

std::string_view opcode_name(Opcode op) { return kOpcodeNames[static_cast<std::size_t>(op)]; }

std::optional<Opcode> opcode_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kOpcodeNames.size(); ++i) {
    if (kOpcodeNames[i] == name) return static_cast<Opcode>(i);
  }
  return std::nullopt;
}

const std::array<Opcode, kNumOpcodes>& all_opcodes() {
  static const std::array<Opcode, kNumOpcodes> ops = [] {
    std::array<Opcode, kNumOpcodes> a{};
    for (std::size_t i = 0; i < kNumOpcodes; ++i) a[i] = static_cast<Opcode>(i);
    return a;
  }();
  return ops;
}

bool is_terminator(Opcode op) { return op == Opcode::Ret || op == Opcode::Br || op == Opcode::Jmp; }

bool is_binary(Opcode op) { return op >= Opcode::Add && op <= Opcode::Shr; }

bool is_commutative(Opcode op) {
  switch (op) {
    case Opcode::Add:
    case Opcode::Mul:
    case Opcode::Eq:
    case Opcode::And:
    case Opcode::Or:
    case Opcode::Xor:
      return true;
    default:
      return false;
  }
}

std::optional<std::int64_t> eval_binary(Opcode op, std::int64_t lhs, std::int64_t rhs) {
  const auto ul = static_cast<std::uint64_t>(lhs);
  const auto ur = static_cast<std::uint64_t>(rhs);
  switch (op) {
    case Opcode::Add:
      return static_cast<std::int64_t>(ul + ur);
    case Opcode::Sub:
      return static_cast<std::int64_t>(ul - ur);
    case Opcode::Mul:
      return static_cast<std::int64_t>(ul * ur);
    case Opcode::Div:
      if (rhs == 0) return std::nullopt;
      if (lhs == std::numeric_limits<std::int64_t>::min() && rhs == -1) return lhs;
      return lhs / rhs;
    case Opcode::Rem:
      if (rhs == 0) return std::nullopt;
      if (lhs == std::numeric_limits<std::int64_t>::min() && rhs == -1) return 0;
      return lhs % rhs;
    case Opcode::Lt:
      return lhs < rhs ? 1 : 0;
    case Opcode::Le:
      return lhs <= rhs ? 1 : 0;
    case Opcode::Eq:
      return lhs == rhs ? 1 : 0;
    case Opcode::And:
      return static_cast<std::int64_t>(ul & ur);
    case Opcode::Or:
      return static_cast<std::int64_t>(ul | ur);
    case Opcode::Xor:
      return static_cast<std::int64_t>(ul ^ ur);
    case Opcode::Shl:
      return static_cast<std::int64_t>(ul << (ur & 63U));
    case Opcode::Shr:
      return lhs >> (ur & 63U);  // arithmetic
    default:
      return std::nullopt;
  }
}

std::vector<std::size_t> Instruction::value_operand_indices() const {
  switch (op) {
    case Opcode::Load:
      return {1};
    case Opcode::Store:
      return {0, 2};
    default: {
      std::vector<std::size_t> out(args.size());
      for (std::size_t i = 0; i < args.size(); ++i) out[i] = i;
      return out;
    }
  }
}

std::size_t Function::instruction_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.instrs.size();
  return n;
}

std::optional<std::size_t> Function::find_block(std::string_view label) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].label == label) return i;
  }
  return std::nullopt;
}

const Function* Module::find_function(std::string_view name) const {
  for (const auto& f : functions) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

Function* Module::find_function(std::string_view name) {
  for (auto& f : functions) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

const Global* Module::find_global(std::string_view name) const {
  for (const auto& g : globals) {
    if (g.name == name) return &g;
  }
  return nullptr;
}

std::size_t Module::instruction_count() const {
  std::size_t n = 0;
  for (const auto& f : functions) n += f.instruction_count();
  return n;
}

// ---------------------------------------------------------------------------
// Lexer / parser
// ---------------------------------------------------------------------------

namespace {

enum class Tok { Ident, Reg, Global, Int, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  std::int64_t value = 0;
  int line = 1;
  int column = 1;
};

bool is_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '.';
}

std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  int line = 1;
  int col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++i;
    }
  };
  while (i < src.size()) {
    const char c = src[i];
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c)) != 0) {
      advance(1);
      continue;
    }
    Token t;
    t.line = line;
    t.column = col;
    if (c == '%' || c == '@') {
      std::size_t j = i + 1;
      while (j < src.size() && is_name_char(src[j])) ++j;
      if (j == i + 1) throw ParseError("expected a name after '" + std::string(1, c) + "'", line, col);
      t.kind = c == '%' ? Tok::Reg : Tok::Global;
      t.text = std::string(src.substr(i + 1, j - i - 1));
      advance(j - i);
    } else if (c == '-' || std::isdigit(static_cast<unsigned char>(c)) != 0) {
      std::size_t j = i + (c == '-' ? 1 : 0);
      const std::size_t digits_start = j;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j])) != 0) ++j;
      if (j == digits_start) throw ParseError("expected digits after '-'", line, col);
      if (j < src.size() && is_name_char(src[j])) {
        throw ParseError("malformed integer literal", line, col);
      }
      const auto text = src.substr(i, j - i);
      std::int64_t v = 0;
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw ParseError("integer literal out of range: " + std::string(text), line, col);
      }
      t.kind = Tok::Int;
      t.text = std::string(text);
      t.value = v;
      advance(j - i);
    } else if (std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_') {
      std::size_t j = i;
      while (j < src.size() && is_name_char(src[j])) ++j;
      t.kind = Tok::Ident;
      t.text = std::string(src.substr(i, j - i));
      advance(j - i);
    } else if (std::string_view("(){}[],=:").find(c) != std::string_view::npos) {
      t.kind = Tok::Punct;
      t.text = std::string(1, c);
      advance(1);
    } else {
      throw ParseError(std::string("unexpected character '") + c + "'", line, col);
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.kind = Tok::End;
  end.line = line;
  end.column = col;
  out.push_back(end);
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  Module parse() {
    Module m;
    while (peek().kind != Tok::End) {
      const Token& t = peek();
      if (t.kind == Tok::Ident && t.text == "global") {
        m.globals.push_back(parse_global());
      } else if (t.kind == Tok::Ident && t.text == "func") {
        m.functions.push_back(parse_function());
      } else {
        fail("expected 'func' or 'global'", t);
      }
    }
    return m;
  }

 private:
  [[noreturn]] static void fail(const std::string& msg, const Token& t) {
    throw ParseError(msg + (t.kind == Tok::End ? " at end of input" : ", got '" + t.text + "'"),
                     t.line, t.column);
  }

  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  bool at_punct(char c) const { return peek().kind == Tok::Punct && peek().text[0] == c; }
  void expect_punct(char c) {
    if (!at_punct(c)) fail(std::string("expected '") + c + "'", peek());
    next();
  }
  const Token& expect(Tok kind, const char* what) {
    if (peek().kind != kind) fail(std::string("expected ") + what, peek());
    return next();
  }

  Global parse_global() {
    next();  // global
    Global g;
    g.name = expect(Tok::Global, "global name").text;
    expect_punct('[');
    const Token& len = expect(Tok::Int, "array length");
    if (len.value <= 0) fail("global length must be positive", len);
    g.length = len.value;
    expect_punct(']');
    return g;
  }

  Function parse_function() {
    next();  // func
    Function f;
    f.name = expect(Tok::Global, "function name").text;
    expect_punct('(');
    if (!at_punct(')')) {
      f.params.push_back(expect(Tok::Reg, "parameter register").text);
      while (at_punct(',')) {
        next();
        f.params.push_back(expect(Tok::Reg, "parameter register").text);
      }
    }
    expect_punct(')');
    expect_punct('{');
    while (!at_punct('}')) {
      if (peek().kind == Tok::End) fail("unterminated function body", peek());
      f.blocks.push_back(parse_block());
    }
    expect_punct('}');
    if (f.blocks.empty()) fail("function has no blocks", peek());
    return f;
  }

  bool at_label() const {
    return peek().kind == Tok::Ident && peek(1).kind == Tok::Punct && peek(1).text == ":";
  }

  Block parse_block() {
    if (!at_label()) fail("expected block label", peek());
    Block b;
    b.label = next().text;
    next();  // ':'
    while (!at_label() && !at_punct('}') && peek().kind != Tok::End) {
      b.instrs.push_back(parse_instruction());
    }
    return b;
  }

  Operand parse_value() {
    const Token& t = peek();
    if (t.kind == Tok::Reg) return Operand::reg(next().text);
    if (t.kind == Tok::Int) return Operand::literal(next().value);
    fail("expected register or integer operand", t);
  }

  void parse_call_tail(Instruction& in) {
    in.callee = expect(Tok::Global, "callee").text;
    while (at_punct(',')) {
      next();
      in.args.push_back(parse_value());
    }
  }

  Instruction parse_instruction() {
    Instruction in;
    const Token start = peek();
    if (start.kind == Tok::Reg) {
      in.dest = next().text;
      expect_punct('=');
      const Token& kw = expect(Tok::Ident, "instruction kind");
      auto op = opcode_from_name(kw.text);
      if (!op) fail("unknown instruction kind", kw);
      in.op = *op;
      switch (in.op) {
        case Opcode::Const: {
          const Token& v = expect(Tok::Int, "integer literal");
          in.args.push_back(Operand::literal(v.value));
          break;
        }
        case Opcode::Copy:
          in.args.push_back(parse_value());
          break;
        case Opcode::Load:
          in.args.push_back(Operand::global(expect(Tok::Global, "global").text));
          expect_punct(',');
          in.args.push_back(parse_value());
          break;
        case Opcode::Call:
          parse_call_tail(in);
          break;
        default:
          if (!is_binary(in.op)) fail("instruction kind does not define a register", kw);
          in.args.push_back(parse_value());
          expect_punct(',');
          in.args.push_back(parse_value());
          break;
      }
      return in;
    }
    if (start.kind != Tok::Ident) fail("expected instruction", start);
    auto op = opcode_from_name(start.text);
    if (!op) fail("unknown instruction kind", start);
    next();
    in.op = *op;
    switch (in.op) {
      case Opcode::Store:
        in.args.push_back(parse_value());
        expect_punct(',');
        in.args.push_back(Operand::global(expect(Tok::Global, "global").text));
        expect_punct(',');
        in.args.push_back(parse_value());
        break;
      case Opcode::Br:
        in.args.push_back(parse_value());
        expect_punct(',');
        in.targets.push_back(expect(Tok::Ident, "block label").text);
        expect_punct(',');
        in.targets.push_back(expect(Tok::Ident, "block label").text);
        break;
      case Opcode::Jmp:
        in.targets.push_back(expect(Tok::Ident, "block label").text);
        break;
      case Opcode::Ret:
      case Opcode::Print:
        in.args.push_back(parse_value());
        break;
      case Opcode::Call:
        parse_call_tail(in);
        break;
      default:
        fail("instruction kind requires a destination register", start);
    }
    return in;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

void print_operand(std::ostringstream& os, const Operand& o) {
  switch (o.kind) {
    case Operand::Kind::Reg:
      os << '%' << o.name;
      break;
    case Operand::Kind::Imm:
      os << o.imm;
      break;
    case Operand::Kind::Global:
      os << '@' << o.name;
      break;
  }
}

void print_instruction(std::ostringstream& os, const Instruction& in) {
  os << "  ";
  if (in.has_dest()) os << '%' << in.dest << " = ";
  os << opcode_name(in.op);
  bool first = true;
  auto sep = [&] {
    os << (first ? " " : ", ");
    first = false;
  };
  if (in.op == Opcode::Call) {
    sep();
    os << '@' << in.callee;
  }
  for (const auto& a : in.args) {
    sep();
    print_operand(os, a);
  }
  for (const auto& t : in.targets) {
    sep();
    os << t;
  }
  os << '\n';
}

// ---------------------------------------------------------------------------
// Verifier
// ---------------------------------------------------------------------------

[[noreturn]] void verify_fail(const Function& f, const std::string& where, const std::string& msg) {
  throw VerifyError("@" + f.name + (where.empty() ? "" : " " + where) + ": " + msg);
}

std::string at(const Block& b, std::size_t idx) {
  return "block " + b.label + ", instruction " + std::to_string(idx);
}

void verify_shape(const Module& m, const Function& f) {
  std::set<std::string> labels;
  for (const auto& b : f.blocks) {
    if (!labels.insert(b.label).second) verify_fail(f, "", "duplicate block label " + b.label);
  }
  std::set<std::string> params;
  for (const auto& p : f.params) {
    if (!params.insert(p).second) verify_fail(f, "", "duplicate parameter %" + p);
  }
  for (const auto& b : f.blocks) {
    if (b.instrs.empty()) verify_fail(f, "block " + b.label, "empty block");
    for (std::size_t i = 0; i < b.instrs.size(); ++i) {
      const Instruction& in = b.instrs[i];
      const bool last = i + 1 == b.instrs.size();
      if (is_terminator(in.op) != last) {
        verify_fail(f, at(b, i),
                    last ? "block does not end in a terminator" : "terminator in mid-block");
      }
      auto need = [&](bool ok, const std::string& what) {
        if (!ok) verify_fail(f, at(b, i), std::string(opcode_name(in.op)) + ": " + what);
      };
      auto is_value = [](const Operand& o) { return o.is_reg() || o.is_imm(); };
      need(in.op == Opcode::Br || in.op == Opcode::Jmp || in.targets.empty(), "unexpected labels");
      need(in.op == Opcode::Call || in.callee.empty(), "unexpected callee");
      switch (in.op) {
        case Opcode::Const:
          need(in.has_dest() && in.args.size() == 1 && in.args[0].is_imm(), "bad arity");
          break;
        case Opcode::Copy:
          need(in.has_dest() && in.args.size() == 1 && is_value(in.args[0]), "bad arity");
          break;
        case Opcode::Load:
          need(in.has_dest() && in.args.size() == 2 && in.args[0].is_global() &&
                   is_value(in.args[1]),
               "bad arity");
          need(m.find_global(in.args[0].name) != nullptr, "undefined global @" + in.args[0].name);
          break;
        case Opcode::Store:
          need(!in.has_dest() && in.args.size() == 3 && is_value(in.args[0]) &&
                   in.args[1].is_global() && is_value(in.args[2]),
               "bad arity");
          need(m.find_global(in.args[1].name) != nullptr, "undefined global @" + in.args[1].name);
          break;
        case Opcode::Call: {
          for (const auto& a : in.args) need(is_value(a), "bad argument");
          const Function* callee = m.find_function(in.callee);
          need(callee != nullptr, "undefined function @" + in.callee);
          need(callee->params.size() == in.args.size(), "bad arity for @" + in.callee);
          break;
        }
        case Opcode::Ret:
        case Opcode::Print:
          need(!in.has_dest() && in.args.size() == 1 && is_value(in.args[0]), "bad arity");
          break;
        case Opcode::Br:
          need(!in.has_dest() && in.args.size() == 1 && is_value(in.args[0]) &&
                   in.targets.size() == 2,
               "bad arity");
          break;
        case Opcode::Jmp:
          need(!in.has_dest() && in.args.empty() && in.targets.size() == 1, "bad arity");
          break;
        default:
          need(is_binary(in.op) && in.has_dest() && in.args.size() == 2 && is_value(in.args[0]) &&
                   is_value(in.args[1]),
               "bad arity");
          break;
      }
      for (const auto& t : in.targets) {
        if (!labels.contains(t)) verify_fail(f, at(b, i), "undefined block target " + t);
      }
    }
  }
}

// Forward must-analysis: a register is defined at a point if every path from
// entry defines it.
void verify_definitions(const Function& f) {
  const Cfg cfg = compute_cfg(f);
  const std::size_t n = f.blocks.size();
  std::vector<std::optional<std::set<std::string>>> out(n);  // nullopt == all registers
  auto block_in = [&](std::size_t b) {
    if (b == 0) return std::optional<std::set<std::string>>(
        std::set<std::string>(f.params.begin(), f.params.end()));
    std::optional<std::set<std::string>> acc;
    for (std::size_t p : cfg.preds[b]) {
      if (!cfg.reachable[p] || !out[p]) continue;
      if (!acc) {
        acc = *out[p];
      } else {
        std::set<std::string> meet;
        std::set_intersection(acc->begin(), acc->end(), out[p]->begin(), out[p]->end(),
                              std::inserter(meet, meet.end()));
        acc = std::move(meet);
      }
    }
    return acc;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t b = 0; b < n; ++b) {
      if (!cfg.reachable[b]) continue;
      auto in = block_in(b);
      if (!in) continue;
      for (const auto& instr : f.blocks[b].instrs) {
        if (instr.has_dest()) in->insert(instr.dest);
      }
      if (out[b] != in) {
        out[b] = std::move(in);
        changed = true;
      }
    }
  }
  for (std::size_t b = 0; b < n; ++b) {
    if (!cfg.reachable[b]) continue;
    auto defined = block_in(b);
    if (!defined) continue;
    const Block& blk = f.blocks[b];
    for (std::size_t i = 0; i < blk.instrs.size(); ++i) {
      for (const auto& r : used_registers(blk.instrs[i])) {
        if (!defined->contains(r)) {
          verify_fail(f, at(blk, i), "register %" + r + " may be used before definition");
        }
      }
      if (blk.instrs[i].has_dest()) defined->insert(blk.instrs[i].dest);
    }
  }
}

}  // namespace

Module parse_module(std::string_view text) {
  Parser p(tokenize(text));
  Module m = p.parse();
  verify(m);
  return m;
}

std::string print_module(const Module& m) {
  std::ostringstream os;
  for (const auto& g : m.globals) os << "global @" << g.name << '[' << g.length << "]\n";
  if (!m.globals.empty() && !m.functions.empty()) os << '\n';
  for (std::size_t i = 0; i < m.functions.size(); ++i) {
    const Function& f = m.functions[i];
    if (i > 0) os << '\n';
    os << "func @" << f.name << '(';
    for (std::size_t p = 0; p < f.params.size(); ++p) os << (p ? ", %" : "%") << f.params[p];
    os << ") {\n";
    for (const auto& b : f.blocks) {
      os << b.label << ":\n";
      for (const auto& in : b.instrs) print_instruction(os, in);
    }
    os << "}\n";
  }
  return os.str();
}

void verify(const Module& m) {
  std::set<std::string> names;
  for (const auto& g : m.globals) {
    if (!names.insert(g.name).second) throw VerifyError("duplicate global @" + g.name);
    if (g.length <= 0) throw VerifyError("global @" + g.name + " has non-positive length");
  }
  std::set<std::string> fnames;
  for (const auto& f : m.functions) {
    if (!fnames.insert(f.name).second) throw VerifyError("duplicate function @" + f.name);
    if (f.blocks.empty()) throw VerifyError("function @" + f.name + " has no blocks");
  }
  const Function* entry = m.find_function(kEntryFunction);
  if (entry == nullptr) throw VerifyError("missing entry function @main");
  if (!entry->params.empty()) throw VerifyError("entry function @main must take no parameters");
  for (const auto& f : m.functions) verify_shape(m, f);
  for (const auto& f : m.functions) verify_definitions(f);
}

bool structurally_equal(const Module& a, const Module& b) {
  return print_module(a) == print_module(b);
}

}  // namespace mlcomp::tir
