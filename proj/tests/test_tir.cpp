#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "mlcomp/analysis.hpp"
#include "mlcomp/error.hpp"
#include "mlcomp/tir.hpp"
#include "test_support.hpp"

namespace mlcomp::tir {
namespace {

using mlcomp::testing::corpus_names;
using mlcomp::testing::load_program;

TEST(Parse, SmallestProgram) {
  Module m = parse_module("func @main(){ bb0: %r = const 7  ret %r }");
  ASSERT_EQ(m.functions.size(), 1u);
  ASSERT_EQ(m.functions[0].blocks.size(), 1u);
  EXPECT_EQ(m.functions[0].blocks[0].instrs.size(), 2u);
  EXPECT_EQ(print_module(m), "func @main() {\nbb0:\n  %r = const 7\n  ret %r\n}\n");
}

TEST(Parse, UndefinedBranchTarget) {
  const char* src = R"(func @main() {
bb0:
  %c = const 1
  br %c, bb1, bbX
bb1:
  ret 0
})";
  try {
    parse_module(src);
    FAIL() << "expected VerifyError";
  } catch (const VerifyError& e) {
    EXPECT_NE(std::string(e.what()).find("undefined block target"), std::string::npos) << e.what();
  }
}

TEST(Parse, SyntaxErrorReportsPosition) {
  try {
    parse_module("func @main() {\nbb0:\n  %r = const\n  ret %r\n}");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4);
  }
  EXPECT_THROW(parse_module("func @main() { bb0: %r = frob 1, 2 ret %r }"), ParseError);
  EXPECT_THROW(parse_module("func @main() { bb0: ret $ }"), ParseError);
}

TEST(Verify, Rejections) {
  // duplicate label
  EXPECT_THROW(parse_module("func @main() { a: jmp a a: ret 0 }"), VerifyError);
  // terminator mid-block
  EXPECT_THROW(parse_module("func @main() { a: ret 0 ret 1 }"), VerifyError);
  // missing terminator
  EXPECT_THROW(parse_module("func @main() { a: %x = const 1 }"), VerifyError);
  // call arity
  EXPECT_THROW(parse_module("func @f(%a) { e: ret %a } func @main() { a: %x = call @f ret %x }"),
               VerifyError);
  // undefined callee and global
  EXPECT_THROW(parse_module("func @main() { a: %x = call @g ret %x }"), VerifyError);
  EXPECT_THROW(parse_module("func @main() { a: %x = load @g, 0 ret %x }"), VerifyError);
  // use on one path only
  EXPECT_THROW(parse_module(R"(func @main() {
e:
  %c = const 1
  br %c, l, r
l:
  %x = const 2
  jmp j
r:
  jmp j
j:
  ret %x
})"),
               VerifyError);
  // missing entry / entry with params
  EXPECT_THROW(parse_module("func @f() { a: ret 0 }"), VerifyError);
  EXPECT_THROW(parse_module("func @main(%p) { a: ret %p }"), VerifyError);
  // duplicate function and global
  EXPECT_THROW(parse_module("func @main() { a: ret 0 } func @main() { a: ret 0 }"), VerifyError);
  EXPECT_THROW(parse_module("global @g[1] global @g[2] func @main() { a: ret 0 }"), VerifyError);
}

TEST(Verify, DefinitionOnAllPathsIsAccepted) {
  EXPECT_NO_THROW(parse_module(R"(func @main() {
e:
  %c = const 1
  br %c, l, r
l:
  %x = const 2
  jmp j
r:
  %x = const 3
  jmp j
j:
  ret %x
})"));
}

TEST(Print, RoundTripIsFixedPointOverCorpus) {
  for (const auto& name : corpus_names()) {
    SCOPED_TRACE(name);
    const Module m = load_program(name);
    const std::string once = print_module(m);
    const std::string twice = print_module(parse_module(once));
    EXPECT_EQ(once, twice);
    EXPECT_EQ(once, print_module(m));
  }
}

TEST(StructuralEquality, Basics) {
  const Module m = load_program("sum1to10");
  EXPECT_TRUE(structurally_equal(m, m));
  Module changed = m;
  changed.functions[0].blocks[0].instrs[0].args[0].imm = 99;
  EXPECT_FALSE(structurally_equal(m, changed));
}

TEST(Cfg, SingleBlockAndDiamond) {
  const Module one = parse_module("func @main(){ bb0: %r = const 7  ret %r }");
  const Cfg c1 = compute_cfg(one.functions[0]);
  EXPECT_EQ(c1.edge_count(), 0u);
  EXPECT_EQ(c1.reachable_count(), 1u);

  const Module diamond = parse_module(R"(func @main() {
e:
  %c = const 1
  br %c, l, r
l:
  jmp x
r:
  jmp x
x:
  ret 0
})");
  const Cfg c2 = compute_cfg(diamond.functions[0]);
  EXPECT_EQ(c2.edge_count(), 4u);
  EXPECT_EQ(c2.reachable_count(), 4u);
  EXPECT_TRUE(compute_loops(diamond.functions[0]).loops.empty());
}

// Counts successor edges by scanning the printed text, independent of compute_cfg.
std::size_t edges_from_text(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t edges = 0;
  while (std::getline(is, line)) {
    if (line.rfind("  br ", 0) == 0) edges += 2;
    if (line.rfind("  jmp ", 0) == 0) edges += 1;
  }
  return edges;
}

TEST(Cfg, BubblesortEdgesMatchTextEnumeration) {
  const Module m = load_program("bubblesort");
  std::size_t total = 0;
  for (const auto& f : m.functions) total += compute_cfg(f).edge_count();
  EXPECT_EQ(total, edges_from_text(print_module(m)));
  EXPECT_EQ(total, 19u);  // counted by hand from the listing
}

// Brute force: d dominates b iff b is unreachable from entry once d is removed.
std::vector<std::vector<bool>> brute_force_dominators(const Function& f, const Cfg& cfg) {
  const std::size_t n = f.blocks.size();
  auto reach_without = [&](std::size_t removed) {
    std::vector<bool> seen(n, false);
    if (removed == 0) return seen;
    std::vector<std::size_t> work{0};
    seen[0] = true;
    while (!work.empty()) {
      auto b = work.back();
      work.pop_back();
      for (auto s : cfg.succs[b]) {
        if (s != removed && !seen[s]) {
          seen[s] = true;
          work.push_back(s);
        }
      }
    }
    return seen;
  };
  std::vector<std::vector<bool>> dom(n);
  for (std::size_t b = 0; b < n; ++b) {
    if (!cfg.reachable[b]) continue;
    dom[b].assign(n, false);
    for (std::size_t d = 0; d < n; ++d) {
      dom[b][d] = d == b || !reach_without(d)[b];
    }
  }
  return dom;
}

Function random_function(std::mt19937_64& rng, std::size_t n) {
  Function f;
  f.name = "main";
  f.params = {"c"};
  for (std::size_t b = 0; b < n; ++b) f.blocks.push_back({"b" + std::to_string(b), {}});
  for (std::size_t b = 0; b < n; ++b) {
    Instruction t;
    switch (rng() % 3) {
      case 0:
        t.op = Opcode::Ret;
        t.args = {Operand::literal(0)};
        break;
      case 1:
        t.op = Opcode::Jmp;
        t.targets = {"b" + std::to_string(rng() % n)};
        break;
      default:
        t.op = Opcode::Br;
        t.args = {Operand::reg("c")};
        t.targets = {"b" + std::to_string(rng() % n), "b" + std::to_string(rng() % n)};
        break;
    }
    f.blocks[b].instrs.push_back(t);
  }
  return f;
}

TEST(Dominators, MatchPathEnumerationOracle) {
  std::vector<Function> fns;
  for (const auto& name : corpus_names()) {
    for (const auto& f : load_program(name).functions) {
      if (f.blocks.size() <= 8) fns.push_back(f);
    }
  }
  std::mt19937_64 rng(42);
  for (int i = 0; i < 300; ++i) fns.push_back(random_function(rng, 1 + rng() % 8));
  for (const auto& f : fns) {
    const Cfg cfg = compute_cfg(f);
    EXPECT_EQ(compute_dominators(f, cfg), brute_force_dominators(f, cfg)) << f.name;
  }
}

TEST(Loops, SingleCountedLoop) {
  const Module m = load_program("sum1to10");
  const LoopInfo info = compute_loops(m.functions[0]);
  ASSERT_EQ(info.loops.size(), 1u);
  EXPECT_EQ(info.loops[0].depth, 1);
  EXPECT_TRUE(info.loops[0].preheader.has_value());
}

TEST(Loops, DoublyNested) {
  const Module m = parse_module(R"(func @main() {
entry:
  %i = const 0
  %s = const 0
  jmp outer
outer:
  %c = lt %i, 3
  br %c, init, done
init:
  %j = const 0
  jmp inner
inner:
  %d = lt %j, 3
  br %d, body, next
body:
  %s = add %s, %j
  %j = add %j, 1
  jmp inner
next:
  %i = add %i, 1
  jmp outer
done:
  ret %s
})");
  const Function& f = m.functions[0];
  const Cfg cfg = compute_cfg(f);
  const LoopInfo info = compute_loops(f, cfg);
  ASSERT_EQ(info.loops.size(), 2u);
  const Loop& outer = info.loops[0].depth == 1 ? info.loops[0] : info.loops[1];
  const Loop& inner = info.loops[0].depth == 2 ? info.loops[0] : info.loops[1];
  EXPECT_EQ(outer.depth, 1);
  EXPECT_EQ(inner.depth, 2);
  EXPECT_EQ(info.max_depth(), 2);
  EXPECT_TRUE(std::includes(outer.body.begin(), outer.body.end(), inner.body.begin(),
                            inner.body.end()));
  EXPECT_LT(inner.body.size(), outer.body.size());
  auto counted = match_counted_loop(f, cfg, inner);
  ASSERT_TRUE(counted.has_value());
  EXPECT_EQ(counted->trip_count(), 3);
  EXPECT_FALSE(match_counted_loop(f, cfg, outer).has_value());
}

TEST(Loops, Matmul4IsTriplyNested) {
  const Module m = load_program("matmul4");
  const LoopInfo info = compute_loops(*m.find_function("main"));
  EXPECT_EQ(info.loops.size(), 3u);
  EXPECT_EQ(info.max_depth(), 3);
}

TEST(Liveness, LoopCarriedRegisterIsLiveAtHeader) {
  const Module m = load_program("sum1to10");
  const Function& f = m.functions[0];
  const Cfg cfg = compute_cfg(f);
  const Liveness live = compute_liveness(f, cfg);
  const std::size_t loop = *f.find_block("loop");
  EXPECT_TRUE(live.live_in[loop].contains("sum"));
  EXPECT_TRUE(live.live_in[loop].contains("i"));
  EXPECT_FALSE(live.live_in[loop].contains("t"));
}

}  // namespace
}  // namespace mlcomp::tir
