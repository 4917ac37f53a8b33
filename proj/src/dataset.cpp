#include "mlcomp/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mlcomp/error.hpp"
#include "mlcomp/kv.hpp"

namespace mlcomp::dataset {

using nlohmann::json;

std::vector<passes::PhaseId> random_phase_sequence(Rng& rng, std::size_t max_len) {
  const auto& phases = passes::list_phases();
  const auto len = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(max_len)));
  std::vector<passes::PhaseId> seq;
  seq.reserve(len);
  for (std::size_t i = 0; i < len; ++i) seq.push_back(phases[rng.index(phases.size())]);
  return seq;
}

std::vector<passes::PhaseId> random_phase_sequence(std::uint64_t seed, std::size_t max_len) {
  Rng rng(seed);
  return random_phase_sequence(rng, max_len);
}

Program load_program(const std::filesystem::path& file) {
  return {file.stem().string(), tir::parse_module(kv::read_file(file))};
}

std::vector<Program> load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("corpus directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".tir") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Program> out;
  for (const auto& f : files) {
    try {
      out.push_back(load_program(f));
    } catch (const Error& e) {
      throw Error(f.string() + ": " + e.what());
    }
  }
  return out;
}

Sample make_sample(const Program& program, const exec::PlatformModel& platform,
                   const std::vector<passes::PhaseId>& sequence, std::uint64_t fuel) {
  const tir::Module m = passes::run_sequence(program.module, sequence).module;
  Sample s;
  s.program_id = program.id;
  s.platform_name = platform.name;
  for (const auto& p : sequence) s.phase_sequence.push_back(p.name);
  s.dynamics = exec::profile(m, platform, fuel);
  s.static_features = features::extract_features(m);
  s.instruction_counts = exec::static_kind_counts(m);
  return s;
}

Dataset extract_dataset(const std::vector<Program>& corpus, const exec::PlatformModel& platform,
                        std::size_t per_program, std::size_t max_len, std::uint64_t seed,
                        std::uint64_t fuel) {
  Dataset d;
  d.platform = platform.name;
  d.seed = seed;
  d.requested = corpus.size() * per_program;
  for (std::size_t p = 0; p < corpus.size(); ++p) {
    for (std::size_t s = 0; s < per_program; ++s) {
      Rng rng(derive_seed(seed, {p, s}));
      const auto seq = random_phase_sequence(rng, max_len);
      try {
        d.samples.push_back(make_sample(corpus[p], platform, seq, fuel));
      } catch (const exec::ExecError&) {
        ++d.dropped;
      }
    }
  }
  return d;
}

namespace {

json sample_to_json(const Sample& s) {
  const auto& d = s.dynamics;
  return json{
      {"program_id", s.program_id},
      {"platform_name", s.platform_name},
      {"phase_sequence", s.phase_sequence},
      {"static_features", s.static_features.values},
      {"platform_instruction_counts", s.instruction_counts},
      {"dynamics",
       {{"exec_time_s", d.exec_time_s},
        {"energy_j", d.energy_j},
        {"executed_instructions", d.executed_instructions},
        {"avg_power_w", d.avg_power_w},
        {"code_size_bytes", d.code_size_bytes}}},
  };
}

Sample sample_from_json(const json& j) {
  Sample s;
  s.program_id = j.at("program_id").get<std::string>();
  s.platform_name = j.at("platform_name").get<std::string>();
  s.phase_sequence = j.at("phase_sequence").get<std::vector<std::string>>();
  const auto fv = j.at("static_features").get<std::vector<double>>();
  if (fv.size() != features::kNumFeatures) throw FormatError("dataset: wrong feature count");
  std::copy(fv.begin(), fv.end(), s.static_features.values.begin());
  const auto counts = j.at("platform_instruction_counts").get<std::vector<std::uint64_t>>();
  if (counts.size() != tir::kNumOpcodes) throw FormatError("dataset: wrong instruction count arity");
  std::copy(counts.begin(), counts.end(), s.instruction_counts.begin());
  const json& d = j.at("dynamics");
  s.dynamics.exec_time_s = d.at("exec_time_s").get<double>();
  s.dynamics.energy_j = d.at("energy_j").get<double>();
  s.dynamics.executed_instructions = d.at("executed_instructions").get<std::uint64_t>();
  s.dynamics.avg_power_w = d.at("avg_power_w").get<double>();
  s.dynamics.code_size_bytes = d.at("code_size_bytes").get<std::uint64_t>();
  return s;
}

}  // namespace

std::string format_dataset(const Dataset& d) {
  std::string out;
  out += json{{"record", "header"},
              {"manifest_version", d.manifest_version},
              {"platform", d.platform},
              {"seed", d.seed},
              {"requested", d.requested},
              {"dropped", d.dropped},
              {"count", d.samples.size()}}
             .dump();
  out += '\n';
  for (const auto& s : d.samples) {
    out += sample_to_json(s).dump();
    out += '\n';
  }
  return out;
}

Dataset parse_dataset(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw FormatError("dataset: empty file");
  Dataset d;
  try {
    const json h = json::parse(line);
    if (h.value("record", "") != "header") throw FormatError("dataset: missing header record");
    d.manifest_version = h.at("manifest_version").get<int>();
    if (d.manifest_version != features::kManifestVersion) {
      throw VersionError("dataset: manifest_version " + std::to_string(d.manifest_version) +
                         " does not match current version " +
                         std::to_string(features::kManifestVersion));
    }
    d.platform = h.at("platform").get<std::string>();
    d.seed = h.at("seed").get<std::uint64_t>();
    d.requested = h.at("requested").get<std::size_t>();
    d.dropped = h.at("dropped").get<std::size_t>();
    const auto count = h.at("count").get<std::size_t>();
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      d.samples.push_back(sample_from_json(json::parse(line)));
      if (d.samples.back().platform_name != d.platform) {
        throw FormatError("dataset: sample platform differs from header");
      }
    }
    if (d.samples.size() != count) throw FormatError("dataset: sample count mismatch");
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset: ") + e.what());
  }
  return d;
}

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << format_dataset(d);
  if (!os) throw Error("write failed: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) { return parse_dataset(kv::read_file(path)); }

}  // namespace mlcomp::dataset
