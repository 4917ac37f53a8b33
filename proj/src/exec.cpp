#include "mlcomp/exec.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "mlcomp/kv.hpp"

namespace mlcomp::exec {

using tir::Opcode;

namespace {

const char* kind_label(ExecError::Kind k) {
  switch (k) {
    case ExecError::Kind::FuelExhausted:
      return "fuel exhausted";
    case ExecError::Kind::DivisionByZero:
      return "division by zero";
    case ExecError::Kind::OutOfBounds:
      return "global index out of bounds";
  }
  return "trap";
}

// Interpreter-friendly form: registers become frame slots, labels become
// block indices, callees and globals become table indices.
struct Value {
  bool is_imm = true;
  std::int64_t imm = 0;
  std::uint32_t slot = 0;
};

struct Op {
  Opcode op = Opcode::Const;
  std::int32_t dest = -1;
  std::vector<Value> args;
  std::uint32_t global = 0;
  std::uint32_t callee = 0;
  std::uint32_t target0 = 0;
  std::uint32_t target1 = 0;
};

struct LoweredFunction {
  std::string name;
  std::uint32_t num_slots = 0;
  std::vector<std::uint32_t> param_slots;
  std::vector<std::vector<Op>> blocks;
  std::vector<std::string> labels;
};

struct Lowered {
  std::vector<LoweredFunction> functions;
  std::vector<std::int64_t> global_lengths;
  std::uint32_t entry = 0;
};

Lowered lower(const tir::Module& m) {
  Lowered out;
  std::unordered_map<std::string, std::uint32_t> fn_index, global_index;
  for (std::uint32_t i = 0; i < m.functions.size(); ++i) fn_index[m.functions[i].name] = i;
  for (std::uint32_t i = 0; i < m.globals.size(); ++i) {
    global_index[m.globals[i].name] = i;
    out.global_lengths.push_back(m.globals[i].length);
  }
  out.entry = fn_index.at(std::string(tir::kEntryFunction));
  for (const auto& f : m.functions) {
    LoweredFunction lf;
    lf.name = f.name;
    std::unordered_map<std::string, std::uint32_t> slots;
    auto slot = [&](const std::string& r) {
      auto [it, inserted] = slots.emplace(r, lf.num_slots);
      if (inserted) ++lf.num_slots;
      return it->second;
    };
    for (const auto& p : f.params) lf.param_slots.push_back(slot(p));
    std::unordered_map<std::string, std::uint32_t> block_index;
    for (std::uint32_t b = 0; b < f.blocks.size(); ++b) block_index[f.blocks[b].label] = b;
    for (const auto& b : f.blocks) {
      lf.labels.push_back(b.label);
      std::vector<Op> ops;
      for (const auto& in : b.instrs) {
        Op op;
        op.op = in.op;
        if (in.has_dest()) op.dest = static_cast<std::int32_t>(slot(in.dest));
        for (const auto& a : in.args) {
          if (a.is_global()) {
            op.global = global_index.at(a.name);
            continue;
          }
          Value v;
          v.is_imm = a.is_imm();
          if (a.is_imm()) {
            v.imm = a.imm;
          } else {
            v.slot = slot(a.name);
          }
          op.args.push_back(v);
        }
        if (in.op == Opcode::Call) op.callee = fn_index.at(in.callee);
        if (!in.targets.empty()) op.target0 = block_index.at(in.targets[0]);
        if (in.targets.size() > 1) op.target1 = block_index.at(in.targets[1]);
        ops.push_back(std::move(op));
      }
      lf.blocks.push_back(std::move(ops));
    }
    out.functions.push_back(std::move(lf));
  }
  return out;
}

struct Frame {
  std::uint32_t fn = 0;
  std::uint32_t block = 0;
  std::uint32_t ip = 0;
  std::int32_t ret_dest = -1;
  std::vector<std::int64_t> regs;
};

}  // namespace

ExecError::ExecError(Kind kind, const std::string& where)
    : Error(std::string(kind_label(kind)) + " at " + where), kind_(kind), where_(where) {}

ExecOutcome interpret(const tir::Module& m, std::uint64_t fuel) {
  const Lowered prog = lower(m);
  std::vector<std::vector<std::int64_t>> globals;
  for (auto len : prog.global_lengths) globals.emplace_back(static_cast<std::size_t>(len), 0);

  ExecOutcome out;
  std::vector<Frame> stack;
  stack.push_back(Frame{prog.entry, 0, 0, -1,
                        std::vector<std::int64_t>(prog.functions[prog.entry].num_slots, 0)});

  auto where = [&](const Frame& fr) {
    const auto& lf = prog.functions[fr.fn];
    return "@" + lf.name + " block " + lf.labels[fr.block] + ", instruction " +
           std::to_string(fr.ip);
  };

  while (true) {
    Frame& fr = stack.back();
    const Op& op = prog.functions[fr.fn].blocks[fr.block][fr.ip];
    if (out.executed_instructions >= fuel) throw ExecError(ExecError::Kind::FuelExhausted, where(fr));
    ++out.executed_instructions;
    ++out.kind_counts[static_cast<std::size_t>(op.op)];
    auto val = [&](std::size_t i) {
      const Value& v = op.args[i];
      return v.is_imm ? v.imm : fr.regs[v.slot];
    };
    auto index_into = [&](std::int64_t idx) -> std::int64_t& {
      auto& g = globals[op.global];
      if (idx < 0 || idx >= static_cast<std::int64_t>(g.size())) {
        throw ExecError(ExecError::Kind::OutOfBounds, where(fr));
      }
      return g[static_cast<std::size_t>(idx)];
    };
    switch (op.op) {
      case Opcode::Const:
      case Opcode::Copy:
        fr.regs[op.dest] = val(0);
        ++fr.ip;
        break;
      case Opcode::Load:
        fr.regs[op.dest] = index_into(val(0));
        ++fr.ip;
        break;
      case Opcode::Store:
        index_into(val(1)) = val(0);
        ++fr.ip;
        break;
      case Opcode::Print:
        out.print_trace.push_back(val(0));
        ++fr.ip;
        break;
      case Opcode::Jmp:
        fr.block = op.target0;
        fr.ip = 0;
        break;
      case Opcode::Br:
        fr.block = val(0) != 0 ? op.target0 : op.target1;
        fr.ip = 0;
        break;
      case Opcode::Call: {
        const auto& callee = prog.functions[op.callee];
        Frame next{op.callee, 0, 0, op.dest, std::vector<std::int64_t>(callee.num_slots, 0)};
        for (std::size_t i = 0; i < callee.param_slots.size(); ++i) {
          next.regs[callee.param_slots[i]] = val(i);
        }
        ++fr.ip;
        stack.push_back(std::move(next));
        break;
      }
      case Opcode::Ret: {
        const std::int64_t v = val(0);
        const std::int32_t dest = fr.ret_dest;
        stack.pop_back();
        if (stack.empty()) {
          out.exit_value = v;
          return out;
        }
        if (dest >= 0) stack.back().regs[dest] = v;
        break;
      }
      default: {
        auto r = tir::eval_binary(op.op, val(0), val(1));
        if (!r) throw ExecError(ExecError::Kind::DivisionByZero, where(fr));
        fr.regs[op.dest] = *r;
        ++fr.ip;
        break;
      }
    }
  }
}

std::uint64_t total_cycles(const ExecOutcome& outcome, const PlatformModel& p) {
  std::uint64_t c = 0;
  for (std::size_t k = 0; k < tir::kNumOpcodes; ++k) c += outcome.kind_counts[k] * p.cycles[k];
  return c;
}

std::array<std::uint64_t, tir::kNumOpcodes> static_kind_counts(const tir::Module& m) {
  std::array<std::uint64_t, tir::kNumOpcodes> counts{};
  for (const auto& f : m.functions) {
    for (const auto& b : f.blocks) {
      for (const auto& in : b.instrs) ++counts[static_cast<std::size_t>(in.op)];
    }
  }
  return counts;
}

std::uint64_t code_size(const tir::Module& m, const PlatformModel& p) {
  const auto counts = static_kind_counts(m);
  std::uint64_t bytes = 0;
  for (std::size_t k = 0; k < tir::kNumOpcodes; ++k) bytes += counts[k] * p.bytes[k];
  return bytes;
}

DynamicFeatures dynamics_from(const ExecOutcome& outcome, const tir::Module& m,
                              const PlatformModel& p) {
  DynamicFeatures d;
  d.executed_instructions = outcome.executed_instructions;
  d.exec_time_s = static_cast<double>(total_cycles(outcome, p)) / static_cast<double>(p.clock_hz);
  double dynamic_nj = 0.0;
  for (std::size_t k = 0; k < tir::kNumOpcodes; ++k) {
    dynamic_nj += static_cast<double>(outcome.kind_counts[k]) * p.energy_nj[k];
  }
  d.energy_j = dynamic_nj * 1e-9 + p.static_power_mw * 1e-3 * d.exec_time_s;
  d.avg_power_w = d.exec_time_s > 0.0 ? d.energy_j / d.exec_time_s : 0.0;
  d.code_size_bytes = code_size(m, p);
  return d;
}

DynamicFeatures profile(const tir::Module& m, const PlatformModel& p, std::uint64_t fuel) {
  return dynamics_from(interpret(m, fuel), m, p);
}

// ---------------------------------------------------------------------------
// Platform files
// ---------------------------------------------------------------------------

PlatformModel parse_platform(std::string_view text) {
  const kv::Table table = kv::parse(text);
  PlatformModel p;
  p.name = table.get_string("name");
  const std::int64_t clock = table.get_int("clock_hz");
  if (clock <= 0) throw FormatError("platform: clock_hz must be positive");
  p.clock_hz = static_cast<std::uint64_t>(clock);
  p.static_power_mw = table.get_double("static_power_mw");
  if (!(p.static_power_mw >= 0.0)) throw FormatError("platform: static_power_mw must be >= 0");
  for (auto op : tir::all_opcodes()) {
    const auto k = static_cast<std::size_t>(op);
    const std::string kind(tir::opcode_name(op));
    for (const char* prefix : {"cycles.", "energy_nj.", "bytes."}) {
      if (!table.contains(prefix + kind)) {
        throw FormatError("platform: missing " + std::string(prefix) + kind + " entry for '" +
                          kind + "'");
      }
    }
    const std::int64_t cyc = table.get_int("cycles." + kind);
    const double nj = table.get_double("energy_nj." + kind);
    const std::int64_t bytes = table.get_int("bytes." + kind);
    if (cyc < 0) throw FormatError("platform: cycles." + kind + " must be >= 0");
    if (!(nj >= 0.0)) throw FormatError("platform: energy_nj." + kind + " must be >= 0");
    if (bytes <= 0) throw FormatError("platform: bytes." + kind + " must be positive");
    p.cycles[k] = static_cast<std::uint64_t>(cyc);
    p.energy_nj[k] = nj;
    p.bytes[k] = static_cast<std::uint64_t>(bytes);
  }
  return p;
}

PlatformModel load_platform(const std::filesystem::path& path) {
  return parse_platform(kv::read_file(path));
}

std::string format_platform(const PlatformModel& p) {
  std::ostringstream os;
  os << "name = " << p.name << '\n';
  os << "clock_hz = " << p.clock_hz << '\n';
  os << "static_power_mw = " << kv::format_double(p.static_power_mw) << '\n';
  for (auto op : tir::all_opcodes()) {
    const auto k = static_cast<std::size_t>(op);
    const auto kind = tir::opcode_name(op);
    os << "cycles." << kind << " = " << p.cycles[k] << '\n';
    os << "energy_nj." << kind << " = " << kv::format_double(p.energy_nj[k]) << '\n';
    os << "bytes." << kind << " = " << p.bytes[k] << '\n';
  }
  return os.str();
}

}  // namespace mlcomp::exec
