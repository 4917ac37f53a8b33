#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "mlcomp/exec.hpp"
#include "mlcomp/kv.hpp"
#include "mlcomp/passes.hpp"
#include "test_support.hpp"

namespace mlcomp::exec {
namespace {

using mlcomp::testing::corpus_names;
using mlcomp::testing::load_program;
using mlcomp::testing::platform_path;

TEST(Interpret, KnownResults) {
  EXPECT_EQ(interpret(load_program("sum1to10")).exit_value, 55);

  std::int64_t dot = 0;
  for (std::int64_t i = 0; i < 8; ++i) dot += (2 * i + 1) * (9 - i);
  EXPECT_EQ(interpret(load_program("dotprod8")).exit_value, dot);

  std::int64_t a = 0, b = 1;
  for (int i = 0; i < 30; ++i) {
    const std::int64_t t = a + b;
    a = b;
    b = t;
  }
  EXPECT_EQ(interpret(load_program("fib-iter")).exit_value, a);
}

TEST(Interpret, WrappingArithmetic) {
  const auto m = tir::parse_module(
      "func @main() { e: %a = const 9223372036854775807 %b = add %a, 1 ret %b }");
  EXPECT_EQ(interpret(m).exit_value, std::numeric_limits<std::int64_t>::min());
}

TEST(Interpret, Traps) {
  const auto div0 = tir::parse_module("func @main() { e: %z = const 0 %r = div 5, %z ret %r }");
  try {
    interpret(div0);
    FAIL();
  } catch (const ExecError& e) {
    EXPECT_EQ(e.kind(), ExecError::Kind::DivisionByZero);
  }
  const auto spin = tir::parse_module("func @main() { e: jmp e }");
  try {
    interpret(spin, 1000);
    FAIL();
  } catch (const ExecError& e) {
    EXPECT_EQ(e.kind(), ExecError::Kind::FuelExhausted);
  }
  const auto oob = tir::parse_module("global @g[2] func @main() { e: %x = load @g, 2 ret %x }");
  try {
    interpret(oob);
    FAIL();
  } catch (const ExecError& e) {
    EXPECT_EQ(e.kind(), ExecError::Kind::OutOfBounds);
  }
}

TEST(Interpret, FuelBoundaryIsExact) {
  const auto m = load_program("sum1to10");
  const auto n = interpret(m).executed_instructions;
  EXPECT_NO_THROW(interpret(m, n));
  EXPECT_THROW(interpret(m, n - 1), ExecError);
}

TEST(Interpret, KindCountsSumToTotal) {
  for (const auto& name : corpus_names()) {
    const auto out = interpret(load_program(name));
    std::uint64_t total = 0;
    for (auto c : out.kind_counts) total += c;
    EXPECT_EQ(total, out.executed_instructions) << name;
  }
}

TEST(Platform, BundledFilesParse) {
  for (const char* name : {"ember", "vulcan"}) {
    const PlatformModel p = load_platform(platform_path(name));
    EXPECT_EQ(p.name, name);
    EXPECT_GT(p.clock_hz, 0u);
    for (std::size_t k = 0; k < tir::kNumOpcodes; ++k) EXPECT_GT(p.bytes[k], 0u);
    const PlatformModel again = parse_platform(format_platform(p));
    EXPECT_EQ(again.cycles, p.cycles);
    EXPECT_EQ(again.energy_nj, p.energy_nj);
    EXPECT_EQ(again.bytes, p.bytes);
  }
}

TEST(Platform, MissingKindIsNamed) {
  std::string text = kv::read_file(platform_path("ember"));
  const auto pos = text.find("cycles.mul");
  text.erase(pos, text.find('\n', pos) - pos);
  try {
    parse_platform(text);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("mul"), std::string::npos);
  }
}

TEST(Platform, ZeroClockRejected) {
  std::string text = kv::read_file(platform_path("ember"));
  const auto pos = text.find("clock_hz = ");
  text.replace(pos, text.find('\n', pos) - pos, "clock_hz = 0");
  EXPECT_THROW(parse_platform(text), FormatError);
}

TEST(Profile, SingleInstructionProgram) {
  const auto m = tir::parse_module("func @main() { e: ret 0 }");
  PlatformModel p;
  p.name = "unit";
  p.clock_hz = 1000;
  p.cycles.fill(1);
  p.energy_nj.fill(1.0);
  p.bytes.fill(4);
  p.static_power_mw = 0.0;
  const DynamicFeatures d = profile(m, p);
  EXPECT_EQ(d.executed_instructions, 1u);
  EXPECT_DOUBLE_EQ(d.exec_time_s, 1e-3);
  EXPECT_DOUBLE_EQ(d.energy_j, 1e-9);
  EXPECT_EQ(d.code_size_bytes, 4u);
}

// Independent oracle: walk the program with a second, naive stepper that
// charges costs per executed instruction.
struct OracleTotals {
  std::uint64_t cycles = 0;
  double energy_nj = 0.0;
  std::uint64_t steps = 0;
};

OracleTotals oracle_costs(const tir::Module& m, const PlatformModel& p) {
  OracleTotals t;
  std::map<std::string, std::vector<std::int64_t>> globals;
  for (const auto& g : m.globals) globals[g.name].assign(static_cast<std::size_t>(g.length), 0);
  struct Frame {
    const tir::Function* f;
    std::size_t block = 0, ip = 0;
    std::map<std::string, std::int64_t> regs;
    std::string ret_dest;
  };
  std::vector<Frame> stack{{m.find_function("main"), 0, 0, {}, {}}};
  while (true) {
    Frame& fr = stack.back();
    const tir::Instruction& in = fr.f->blocks[fr.block].instrs[fr.ip];
    const auto k = static_cast<std::size_t>(in.op);
    t.cycles += p.cycles[k];
    t.energy_nj += p.energy_nj[k];
    ++t.steps;
    auto v = [&](const tir::Operand& o) { return o.is_imm() ? o.imm : fr.regs.at(o.name); };
    auto goto_label = [&](const std::string& l) {
      fr.block = *fr.f->find_block(l);
      fr.ip = 0;
    };
    switch (in.op) {
      case tir::Opcode::Const:
      case tir::Opcode::Copy:
        fr.regs[in.dest] = v(in.args[0]);
        ++fr.ip;
        break;
      case tir::Opcode::Load:
        fr.regs[in.dest] = globals.at(in.args[0].name).at(static_cast<std::size_t>(v(in.args[1])));
        ++fr.ip;
        break;
      case tir::Opcode::Store:
        globals.at(in.args[1].name).at(static_cast<std::size_t>(v(in.args[2]))) = v(in.args[0]);
        ++fr.ip;
        break;
      case tir::Opcode::Print:
        ++fr.ip;
        break;
      case tir::Opcode::Jmp:
        goto_label(in.targets[0]);
        break;
      case tir::Opcode::Br:
        goto_label(v(in.args[0]) != 0 ? in.targets[0] : in.targets[1]);
        break;
      case tir::Opcode::Call: {
        Frame next{m.find_function(in.callee), 0, 0, {}, in.dest};
        for (std::size_t i = 0; i < next.f->params.size(); ++i) {
          next.regs[next.f->params[i]] = v(in.args[i]);
        }
        ++fr.ip;
        stack.push_back(std::move(next));
        break;
      }
      case tir::Opcode::Ret: {
        const std::int64_t r = v(in.args[0]);
        const std::string dest = fr.ret_dest;
        stack.pop_back();
        if (stack.empty()) return t;
        if (!dest.empty()) stack.back().regs[dest] = r;
        break;
      }
      default:
        fr.regs[in.dest] = *tir::eval_binary(in.op, v(in.args[0]), v(in.args[1]));
        ++fr.ip;
        break;
    }
  }
}

TEST(Profile, MatchesPerStepOracle) {
  const PlatformModel ember = load_platform(platform_path("ember"));
  const PlatformModel vulcan = load_platform(platform_path("vulcan"));
  std::mt19937_64 rng(5);
  std::size_t checked = 0;
  for (const auto& name : corpus_names()) {
    const auto base = load_program(name);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<passes::PhaseId> seq(rng() % 12);
      for (auto& p : seq) p = passes::list_phases()[rng() % passes::kNumPhases];
      const auto m = passes::run_sequence(base, seq).module;
      for (const auto* p : {&ember, &vulcan}) {
        const auto oracle = oracle_costs(m, *p);
        const auto outcome = interpret(m);
        ASSERT_EQ(outcome.executed_instructions, oracle.steps);
        EXPECT_EQ(total_cycles(outcome, *p), oracle.cycles);
        const DynamicFeatures d = dynamics_from(outcome, m, *p);
        const double time = static_cast<double>(oracle.cycles) / static_cast<double>(p->clock_hz);
        EXPECT_NEAR(d.exec_time_s, time, 1e-15 * time);
        const double energy = oracle.energy_nj * 1e-9 + p->static_power_mw * 1e-3 * time;
        EXPECT_NEAR(d.energy_j, energy, 1e-9 * energy);
        if (oracle.steps <= 50) ++checked;
      }
    }
  }
  EXPECT_GT(checked, 0u);
}

TEST(Profile, PowerTimesTimeIsEnergy) {
  for (const char* plat : {"ember", "vulcan"}) {
    const PlatformModel p = load_platform(platform_path(plat));
    for (const auto& name : corpus_names()) {
      const DynamicFeatures d = profile(load_program(name), p);
      EXPECT_NEAR(d.avg_power_w * d.exec_time_s, d.energy_j, 1e-12 * d.energy_j) << name;
    }
  }
}

TEST(Profile, CrossPlatformOutcomeIndependent) {
  const auto m = load_program("histogram");
  const auto a = interpret(m);
  const auto b = interpret(m);
  EXPECT_EQ(a.kind_counts, b.kind_counts);
  const auto pe = profile(m, load_platform(platform_path("ember")));
  const auto pv = profile(m, load_platform(platform_path("vulcan")));
  EXPECT_EQ(pe.executed_instructions, pv.executed_instructions);
  EXPECT_NE(pe.exec_time_s, pv.exec_time_s);
}

TEST(Profile, RemovingDeadCodeNeverIncreasesMetrics) {
  for (const char* plat : {"ember", "vulcan"}) {
    const PlatformModel p = load_platform(platform_path(plat));
    for (const auto& name : corpus_names()) {
      const auto m = load_program(name);
      const auto cleaned = passes::dce(m);
      const auto before = profile(m, p);
      const auto after = profile(cleaned, p);
      EXPECT_LE(after.exec_time_s, before.exec_time_s) << name;
      EXPECT_LE(after.energy_j, before.energy_j) << name;
      EXPECT_LE(after.executed_instructions, before.executed_instructions) << name;
      EXPECT_LE(after.code_size_bytes, before.code_size_bytes) << name;
    }
  }
}

// Average power is a ratio, so dropping a low-power instruction can raise it.
// What does hold is that it stays between the cheapest and dearest kind.
TEST(Profile, AveragePowerBoundedByPerKindPower) {
  for (const char* plat : {"ember", "vulcan"}) {
    const PlatformModel p = load_platform(platform_path(plat));
    double lo = INFINITY, hi = 0.0;
    for (std::size_t k = 0; k < tir::kNumOpcodes; ++k) {
      if (p.cycles[k] == 0) continue;
      const double w = p.energy_nj[k] * 1e-9 * static_cast<double>(p.clock_hz) /
                       static_cast<double>(p.cycles[k]);
      lo = std::min(lo, w);
      hi = std::max(hi, w);
    }
    const double leak = p.static_power_mw * 1e-3;
    for (const auto& name : corpus_names()) {
      const DynamicFeatures d = profile(passes::dce(load_program(name)), p);
      EXPECT_GE(d.avg_power_w, (lo + leak) * (1 - 1e-12)) << name;
      EXPECT_LE(d.avg_power_w, (hi + leak) * (1 + 1e-12)) << name;
    }
  }
}

}  // namespace
}  // namespace mlcomp::exec
