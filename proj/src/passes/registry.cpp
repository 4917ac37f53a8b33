#include <sstream>

#include "mlcomp/error.hpp"
#include "mlcomp/passes.hpp"

namespace mlcomp::passes {

namespace {

using Transform = tir::Module (*)(const tir::Module&);

struct Entry {
  const char* name;
  Transform fn;
};

constexpr Entry kRegistry[kNumPhases] = {
    {"constfold", constfold},     {"constprop", constprop},   {"copyprop", copyprop},
    {"dce", dce},                 {"cse", cse},               {"simplifycfg", simplifycfg},
    {"jumpthread", jumpthread},   {"licm", licm},             {"loopunroll", loopunroll},
    {"strengthred", strengthred}, {"inline", inline_calls},   {"deadstore", deadstore},
};

}  // namespace

const std::vector<PhaseId>& list_phases() {
  static const std::vector<PhaseId> phases = [] {
    std::vector<PhaseId> v;
    for (std::size_t i = 0; i < kNumPhases; ++i) v.push_back({kRegistry[i].name, i});
    return v;
  }();
  return phases;
}

PhaseId find_phase(std::string_view name) {
  for (const auto& p : list_phases()) {
    if (p.name == name) return p;
  }
  throw Error("unknown phase '" + std::string(name) + "'");
}

PhaseResult apply_phase(const tir::Module& m, std::size_t phase_index) {
  if (phase_index >= kNumPhases) throw Error("phase index out of range");
  PhaseResult r{kRegistry[phase_index].fn(m), false};
  r.changed = !tir::structurally_equal(m, r.module);
  return r;
}

PhaseResult apply_phase(const tir::Module& m, const PhaseId& phase) {
  const PhaseId resolved = find_phase(phase.name);
  return apply_phase(m, resolved.index);
}

SequenceResult run_sequence(const tir::Module& m, std::span<const PhaseId> seq) {
  SequenceResult r{m, {}};
  for (const auto& p : seq) {
    PhaseResult step = apply_phase(r.module, p);
    r.module = std::move(step.module);
    r.changed.push_back(step.changed);
  }
  return r;
}

std::vector<PhaseId> parse_phase_list(std::string_view csv) {
  std::vector<PhaseId> out;
  std::string item;
  std::istringstream is{std::string(csv)};
  while (std::getline(is, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(find_phase(item.substr(b, e - b + 1)));
  }
  return out;
}

std::string format_phase_list(std::span<const PhaseId> seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ',';
    out += seq[i].name;
  }
  return out;
}

}  // namespace mlcomp::passes
