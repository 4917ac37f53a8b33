#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mlcomp/dataset.hpp"
#include "mlcomp/error.hpp"
#include "mlcomp/kv.hpp"
#include "test_support.hpp"

namespace mlcomp::dataset {
namespace {

using mlcomp::testing::corpus_dir;
using mlcomp::testing::platform_path;

const exec::PlatformModel& ember() {
  static const auto p = exec::load_platform(platform_path("ember"));
  return p;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("mlcomp_test_" + name);
}

TEST(Sequence, EmptyWhenMaxLenZero) {
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_TRUE(random_phase_sequence(s, 0).empty());
}

TEST(Sequence, DeterministicPerSeed) {
  EXPECT_EQ(random_phase_sequence(123, 32), random_phase_sequence(123, 32));
  EXPECT_NE(random_phase_sequence(123, 32), random_phase_sequence(124, 32));
}

// Twelve independent 3-sigma checks fail together about 3% of the time for a
// fair sampler, so the chi-square test below carries the real weight.
TEST(Sequence, PhasesAndLengthsAreUniform) {
  std::vector<double> phase_hits(passes::kNumPhases, 0.0), length_hits(17, 0.0);
  double total = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto seq = random_phase_sequence(derive_seed(1, {static_cast<std::uint64_t>(i)}), 16);
    ASSERT_LE(seq.size(), 16u);
    length_hits[seq.size()] += 1;
    for (const auto& p : seq) {
      phase_hits[p.index] += 1;
      total += 1;
    }
  }
  const double p = 1.0 / passes::kNumPhases;
  const double sigma = std::sqrt(total * p * (1 - p));
  for (double h : phase_hits) EXPECT_NEAR(h, total * p, 3 * sigma);
  const double q = 1.0 / 17;
  const double sigma_len = std::sqrt(draws * q * (1 - q));
  for (double h : length_hits) EXPECT_NEAR(h, draws * q, 3.5 * sigma_len);
}

TEST(Sequence, ChiSquareOverManyDraws) {
  std::vector<double> hits(passes::kNumPhases, 0.0);
  double total = 0;
  Rng rng(2024);
  for (int i = 0; i < 100000; ++i) {
    for (const auto& p : random_phase_sequence(rng, 16)) {
      hits[p.index] += 1;
      total += 1;
    }
  }
  double chi2 = 0;
  const double expected = total / passes::kNumPhases;
  for (double h : hits) chi2 += (h - expected) * (h - expected) / expected;
  EXPECT_LT(chi2, 31.26);  // 0.999 quantile with 11 degrees of freedom
}

TEST(Corpus, LoadsSortedWithStemIds) {
  const auto corpus = load_corpus(corpus_dir());
  ASSERT_GE(corpus.size(), 12u);
  for (std::size_t i = 1; i < corpus.size(); ++i) EXPECT_LT(corpus[i - 1].id, corpus[i].id);
  EXPECT_THROW(load_corpus(corpus_dir() / "missing"), Error);
}

TEST(Extract, ZeroPerProgramIsEmpty) {
  const auto d = extract_dataset(load_corpus(corpus_dir()), ember(), 0, 8, 1);
  EXPECT_TRUE(d.samples.empty());
  EXPECT_EQ(d.requested, 0u);
  EXPECT_EQ(d.dropped, 0u);
}

TEST(Extract, CountsAndCoherence) {
  const auto corpus = load_corpus(corpus_dir());
  const auto d = extract_dataset(corpus, ember(), 3, 12, 77);
  EXPECT_EQ(d.samples.size() + d.dropped, d.requested);
  EXPECT_EQ(d.requested, corpus.size() * 3);
  for (const auto& s : d.samples) {
    EXPECT_EQ(s.platform_name, "ember");
    const auto& prog = *std::find_if(corpus.begin(), corpus.end(),
                                     [&](const Program& p) { return p.id == s.program_id; });
    std::vector<passes::PhaseId> seq;
    for (const auto& n : s.phase_sequence) seq.push_back(passes::find_phase(n));
    EXPECT_EQ(make_sample(prog, ember(), seq), s);
  }
  EXPECT_EQ(extract_dataset(corpus, ember(), 3, 12, 77), d);
}

TEST(Extract, TrapsAreDroppedAndCounted) {
  const auto corpus = load_corpus(corpus_dir());
  // Fuel far below any corpus program's needs: every sample traps.
  const auto none = extract_dataset(corpus, ember(), 2, 4, 5, 10);
  EXPECT_TRUE(none.samples.empty());
  EXPECT_EQ(none.dropped, none.requested);

  std::vector<Program> mixed = {
      {"ok", tir::parse_module("func @main() { e: ret 1 }")},
      {"bad", tir::parse_module("func @main() { e: %z = const 0 %r = div 1, %z ret %r }")}};
  const auto d = extract_dataset(mixed, ember(), 4, 3, 5);
  EXPECT_EQ(d.samples.size(), 4u);
  EXPECT_EQ(d.dropped, 4u);
}

TEST(Extract, DuplicateSequencesGiveIdenticalDynamics) {
  const auto corpus = load_corpus(corpus_dir());
  const auto seq = passes::parse_phase_list("licm,dce,inline");
  EXPECT_EQ(make_sample(corpus[0], ember(), seq).dynamics,
            make_sample(corpus[0], ember(), seq).dynamics);
}

TEST(Io, RoundTripIsExact) {
  const auto corpus = load_corpus(corpus_dir());
  auto d = extract_dataset({corpus[0], corpus[1], corpus[2]}, ember(), 1, 10, 3);
  ASSERT_EQ(d.samples.size(), 3u);
  d.samples[0].dynamics.exec_time_s = 0.1 + 0.2;  // not exactly representable in short form
  const auto path = temp_file("roundtrip.jsonl");
  write_dataset(d, path);
  EXPECT_EQ(read_dataset(path), d);
  std::filesystem::remove(path);
}

TEST(Io, OneRecordPerLine) {
  const auto corpus = load_corpus(corpus_dir());
  const auto d = extract_dataset(corpus, ember(), 2, 6, 11);
  const std::string text = format_dataset(d);
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')),
            d.samples.size() + 1);
}

TEST(Io, VersionMismatchIsExplicit) {
  Dataset d;
  d.platform = "ember";
  std::string text = format_dataset(d);
  const std::string key = "\"manifest_version\":" + std::to_string(features::kManifestVersion);
  text.replace(text.find(key), key.size(), "\"manifest_version\":999");
  EXPECT_THROW(parse_dataset(text), VersionError);
  EXPECT_THROW(parse_dataset(""), FormatError);
  EXPECT_THROW(parse_dataset("{\"record\":\"header\"}\n"), FormatError);
}

}  // namespace
}  // namespace mlcomp::dataset
