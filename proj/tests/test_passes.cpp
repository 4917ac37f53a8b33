#include <gtest/gtest.h>

#include <random>

#include "mlcomp/analysis.hpp"
#include "mlcomp/exec.hpp"
#include "mlcomp/passes.hpp"
#include "test_support.hpp"

namespace mlcomp::passes {
namespace {

using mlcomp::testing::corpus_names;
using mlcomp::testing::load_program;

struct Observed {
  std::int64_t exit_value;
  std::vector<std::int64_t> trace;
  friend bool operator==(const Observed&, const Observed&) = default;
};

Observed observe(const tir::Module& m) {
  auto out = exec::interpret(m);
  return {out.exit_value, out.print_trace};
}

std::vector<PhaseId> random_sequence(std::mt19937_64& rng, std::size_t max_len) {
  const auto& phases = list_phases();
  std::vector<PhaseId> seq(rng() % (max_len + 1));
  for (auto& p : seq) p = phases[rng() % phases.size()];
  return seq;
}

TEST(Registry, OrderAndLookup) {
  const auto& phases = list_phases();
  ASSERT_EQ(phases.size(), kNumPhases);
  const char* expected[] = {"constfold", "constprop",   "copyprop", "dce",
                            "cse",       "simplifycfg", "jumpthread", "licm",
                            "loopunroll", "strengthred", "inline",   "deadstore"};
  for (std::size_t i = 0; i < kNumPhases; ++i) {
    EXPECT_EQ(phases[i].name, expected[i]);
    EXPECT_EQ(phases[i].index, i);
    EXPECT_EQ(find_phase(expected[i]), phases[i]);
  }
  EXPECT_THROW(find_phase("vectorize"), Error);
  const auto seq = parse_phase_list("constprop,dce,inline");
  ASSERT_EQ(seq.size(), 3u);
  EXPECT_EQ(format_phase_list(seq), "constprop,dce,inline");
}

TEST(Constfold, FoldsLiteralAdd) {
  const auto m = tir::parse_module("func @main() { e: %t = add 2, 3 ret %t }");
  const auto r = apply_phase(m, find_phase("constfold"));
  EXPECT_TRUE(r.changed);
  EXPECT_EQ(r.module.functions[0].blocks[0].instrs[0].op, tir::Opcode::Const);
  EXPECT_EQ(r.module.functions[0].blocks[0].instrs[0].args[0].imm, 5);
}

TEST(Constfold, LeavesDivisionByZeroAlone) {
  const auto m = tir::parse_module("func @main() { e: %t = div 2, 0 ret %t }");
  EXPECT_FALSE(apply_phase(m, find_phase("constfold")).changed);
}

TEST(Dce, NoDeadCodeMeansUnchanged) {
  const auto m = tir::parse_module("func @main() { e: %t = const 4 print %t ret %t }");
  const auto r = apply_phase(m, find_phase("dce"));
  EXPECT_FALSE(r.changed);
  EXPECT_TRUE(tir::structurally_equal(r.module, m));
}

TEST(Dce, KeepsPotentiallyTrappingInstructions) {
  const auto m = tir::parse_module(
      "func @main() { e: %z = const 0 %t = div 1, %z %u = load @g, 5 ret 0 } global @g[2]");
  const auto r = apply_phase(m, find_phase("dce"));
  EXPECT_EQ(r.module.instruction_count(), m.instruction_count());
}

TEST(Loopunroll, Dotprod8BecomesLoopFree) {
  const auto m = load_program("dotprod8");
  const auto r = apply_phase(m, find_phase("loopunroll"));
  ASSERT_TRUE(r.changed);
  EXPECT_TRUE(tir::compute_loops(r.module.functions[0]).loops.empty());
  // Each of the two loops contributes 8 copies of its body.
  std::size_t stores = 0, muls = 0;
  for (const auto& b : r.module.functions[0].blocks) {
    for (const auto& in : b.instrs) {
      stores += in.op == tir::Opcode::Store;
      muls += in.op == tir::Opcode::Mul;
    }
  }
  EXPECT_EQ(stores, 16u);
  EXPECT_EQ(muls, 16u);
  EXPECT_EQ(observe(r.module), observe(m));
}

TEST(Loopunroll, RejectsLongLoops) {
  const auto m = load_program("sum1to10");  // trip count 10
  EXPECT_FALSE(apply_phase(m, find_phase("loopunroll")).changed);
}

TEST(Licm, HoistsInvariantFromDotprod) {
  const auto m = load_program("dotprod8");
  const auto r = apply_phase(m, find_phase("licm"));
  ASSERT_TRUE(r.changed);
  const auto& f = r.module.functions[0];
  const auto body = f.find_block("fill.body");
  ASSERT_TRUE(body.has_value());
  for (const auto& in : f.blocks[*body].instrs) EXPECT_NE(in.dest, "two");
  EXPECT_EQ(observe(r.module), observe(m));
}

TEST(Inline, InlinesSmallNonRecursiveCallee) {
  const auto m = load_program("polyeval");
  const auto r = apply_phase(m, find_phase("inline"));
  ASSERT_TRUE(r.changed);
  EXPECT_EQ(r.module.find_function("horner"), nullptr);
  for (const auto& b : r.module.functions[0].blocks) {
    for (const auto& in : b.instrs) EXPECT_NE(in.op, tir::Opcode::Call);
  }
  EXPECT_EQ(observe(r.module), observe(m));
}

TEST(Inline, SkipsRecursion) {
  const auto m = tir::parse_module(R"(
func @f(%n) {
e:
  %c = lt %n, 1
  br %c, base, rec
base:
  ret 0
rec:
  %m = sub %n, 1
  %r = call @f, %m
  %r = add %r, %n
  ret %r
}
func @main() {
e:
  %x = call @f, 5
  ret %x
})");
  EXPECT_FALSE(apply_phase(m, find_phase("inline")).changed);
  EXPECT_EQ(observe(m).exit_value, 15);
}

TEST(Strengthred, MulByPowerOfTwo) {
  const auto m = tir::parse_module("func @main() { e: %a = const 5 %b = mul %a, 8 ret %b }");
  const auto r = apply_phase(m, find_phase("strengthred"));
  ASSERT_TRUE(r.changed);
  EXPECT_EQ(r.module.functions[0].blocks[0].instrs[1].op, tir::Opcode::Shl);
  EXPECT_EQ(observe(r.module).exit_value, 40);
}

TEST(Deadstore, RemovesOverwrittenStore) {
  const auto m = tir::parse_module(
      "global @g[4] func @main() { e: store 1, @g, 2 store 7, @g, 2 %x = load @g, 2 ret %x }");
  const auto r = apply_phase(m, find_phase("deadstore"));
  ASSERT_TRUE(r.changed);
  EXPECT_EQ(r.module.instruction_count(), m.instruction_count() - 1);
  EXPECT_EQ(observe(r.module).exit_value, 7);
}

TEST(Cse, ReusesEarlierExpression) {
  const auto m = tir::parse_module(
      "func @main() { e: %a = const 3 %x = mul %a, %a %y = mul %a, %a %z = add %x, %y ret %z }");
  const auto r = apply_phase(m, find_phase("cse"));
  ASSERT_TRUE(r.changed);
  EXPECT_EQ(r.module.functions[0].blocks[0].instrs[2].op, tir::Opcode::Copy);
  EXPECT_EQ(observe(r.module).exit_value, 18);
}

TEST(Jumpthread, SkipsForwarders) {
  const auto m = tir::parse_module(
      "func @main() { e: jmp a a: jmp b b: jmp c c: ret 1 }");
  const auto r = apply_phase(m, find_phase("jumpthread"));
  ASSERT_TRUE(r.changed);
  EXPECT_EQ(r.module.functions[0].blocks[0].instrs[0].targets[0], "c");
}

TEST(Simplifycfg, FoldsConstantBranchAndMerges) {
  const auto m = tir::parse_module(
      "func @main() { e: br 1, a, b a: %x = const 1 jmp j b: %x = const 2 jmp j j: ret %x }");
  const auto r = apply_phase(m, find_phase("simplifycfg"));
  ASSERT_TRUE(r.changed);
  EXPECT_EQ(r.module.functions[0].blocks.size(), 1u);
  EXPECT_EQ(observe(r.module).exit_value, 1);
}

TEST(RunSequence, EmptyIsIdentity) {
  const auto m = load_program("matmul4");
  const auto r = run_sequence(m, {});
  EXPECT_TRUE(r.changed.empty());
  EXPECT_TRUE(tir::structurally_equal(r.module, m));
}

TEST(RunSequence, CombinedChainBeatsEverySinglePhase) {
  const auto m = tir::parse_module(R"(func @main() {
e:
  %a = const 4
  %b = add %a, 6
  %c = mul %b, %a
  %d = sub %c, 1
  print %d
  ret %d
})");
  const auto chain = parse_phase_list("constprop,constfold,dce");
  // Fold and propagate alternately until the chain is exhausted.
  std::vector<PhaseId> seq;
  for (int i = 0; i < 4; ++i) seq.insert(seq.end(), chain.begin(), chain.end());
  const std::size_t combined = run_sequence(m, seq).module.instruction_count();
  for (const auto& p : chain) {
    EXPECT_LT(combined, apply_phase(m, p).module.instruction_count()) << p.name;
  }
  EXPECT_LT(run_sequence(m, chain).module.instruction_count(), m.instruction_count());
}

TEST(RunSequence, Deterministic) {
  const auto m = load_program("checksum");
  std::mt19937_64 rng(7);
  const auto seq = random_sequence(rng, 32);
  EXPECT_EQ(tir::print_module(run_sequence(m, seq).module),
            tir::print_module(run_sequence(m, seq).module));
}

// Property suite over the whole corpus: semantics, verification, changed flags.
TEST(Properties, RandomSequencesPreserveSemanticsAndFlags) {
  for (const auto& name : corpus_names()) {
    SCOPED_TRACE(name);
    const auto m = load_program(name);
    const Observed expected = observe(m);
    std::mt19937_64 rng(1000 + name.size());
    for (int trial = 0; trial < 100; ++trial) {
      tir::Module cur = m;
      for (const auto& p : random_sequence(rng, 32)) {
        auto r = apply_phase(cur, p);
        ASSERT_EQ(r.changed, !tir::structurally_equal(cur, r.module)) << p.name;
        ASSERT_NO_THROW(tir::verify(r.module)) << p.name;
        ASSERT_TRUE(tir::structurally_equal(tir::parse_module(tir::print_module(r.module)), r.module));
        cur = std::move(r.module);
      }
      ASSERT_EQ(observe(cur), expected) << tir::print_module(cur);
    }
  }
}

TEST(Properties, IdempotentPhases) {
  std::mt19937_64 rng(99);
  for (const auto& name : corpus_names()) {
    const auto base = load_program(name);
    for (int trial = 0; trial < 10; ++trial) {
      const auto m = run_sequence(base, random_sequence(rng, 8)).module;
      for (const char* phase : {"dce", "simplifycfg", "jumpthread", "deadstore"}) {
        const auto once = apply_phase(m, find_phase(phase)).module;
        const auto twice = apply_phase(once, find_phase(phase));
        EXPECT_FALSE(twice.changed) << name << " " << phase;
      }
    }
  }
}

TEST(Properties, OrderSensitivityExists) {
  const auto forward = parse_phase_list("inline,constprop,constfold,dce");
  const auto backward = parse_phase_list("dce,constfold,constprop,inline");
  std::size_t witnesses = 0;
  for (const auto& name : corpus_names()) {
    const auto m = load_program(name);
    if (run_sequence(m, forward).module.instruction_count() <
        run_sequence(m, backward).module.instruction_count()) {
      ++witnesses;
    }
  }
  EXPECT_GE(witnesses, 1u);
}

}  // namespace
}  // namespace mlcomp::passes
