#include "mlcomp/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace mlcomp::report {

using nlohmann::json;

std::vector<passes::PhaseId> canonical_fixed_sequence() {
  return passes::parse_phase_list(
      "inline,simplifycfg,constprop,constfold,copyprop,cse,strengthred,licm,loopunroll,jumpthread,"
      "simplifycfg,deadstore,dce");
}

const std::array<std::string, kNumVariants>& variant_names() {
  static const std::array<std::string, kNumVariants> names{"unoptimized", "fixed-O", "random-best",
                                                           "random-median", "policy"};
  return names;
}

namespace {

enum Variant { kUnopt, kFixed, kRandomBest, kRandomMedian, kPolicy };

std::vector<std::string> names_of(std::span<const passes::PhaseId> seq, const std::vector<bool>& changed) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (changed[i]) out.push_back(seq[i].name);
  }
  return out;
}

void set_relatives(EvalRow& row, const exec::DynamicFeatures& base) {
  row.rel_time = row.dynamics.exec_time_s / base.exec_time_s;
  row.rel_energy = row.dynamics.energy_j / base.energy_j;
  row.rel_size = static_cast<double>(row.dynamics.code_size_bytes) /
                 static_cast<double>(base.code_size_bytes);
}

template <class T>
T order_stat(std::vector<T> v, bool median) {
  std::sort(v.begin(), v.end());
  return median ? v[(v.size() - 1) / 2] : v.front();
}

exec::DynamicFeatures pool_stat(const std::vector<exec::DynamicFeatures>& pool, bool median) {
  std::vector<double> time, energy, power;
  std::vector<std::uint64_t> instr, size;
  for (const auto& d : pool) {
    time.push_back(d.exec_time_s);
    energy.push_back(d.energy_j);
    power.push_back(d.avg_power_w);
    instr.push_back(d.executed_instructions);
    size.push_back(d.code_size_bytes);
  }
  exec::DynamicFeatures out;
  out.exec_time_s = order_stat(time, median);
  out.energy_j = order_stat(energy, median);
  out.avg_power_w = order_stat(power, median);
  out.executed_instructions = order_stat(instr, median);
  out.code_size_bytes = order_stat(size, median);
  return out;
}

}  // namespace

EvalResult evaluate_policy(const std::vector<dataset::Program>& corpus, const pss::PhasePolicy& policy,
                           const exec::PlatformModel& platform, const EvalOptions& opts) {
  if (opts.random_pool == 0) throw Error("random pool size must be >= 1");
  EvalResult result;
  result.platform = platform.name;
  result.options = opts;
  const auto fixed = canonical_fixed_sequence();

  for (std::size_t p = 0; p < corpus.size(); ++p) {
    const auto& prog = corpus[p];
    std::array<EvalRow, kNumVariants> rows;
    for (std::size_t v = 0; v < kNumVariants; ++v) {
      rows[v].program_id = prog.id;
      rows[v].variant = variant_names()[v];
    }
    auto profile_into = [&](EvalRow& row, const tir::Module& m) {
      try {
        row.dynamics = exec::profile(m, platform, opts.fuel);
      } catch (const exec::ExecError& e) {
        row.error = e.what();
      }
    };

    profile_into(rows[kUnopt], prog.module);

    const auto fixed_run = passes::run_sequence(prog.module, fixed);
    rows[kFixed].sequence = names_of(fixed, fixed_run.changed);
    profile_into(rows[kFixed], fixed_run.module);

    std::vector<exec::DynamicFeatures> pool;
    std::string pool_error;
    for (std::size_t k = 0; k < opts.random_pool; ++k) {
      Rng rng(derive_seed(opts.seed, {p, k}));
      const auto seq = dataset::random_phase_sequence(rng, opts.random_max_len);
      const auto m = passes::run_sequence(prog.module, seq).module;
      try {
        pool.push_back(exec::profile(m, platform, opts.fuel));
      } catch (const exec::ExecError& e) {
        pool_error = e.what();
      }
    }
    if (pool.empty()) {
      rows[kRandomBest].error = rows[kRandomMedian].error = "every random sequence trapped: " + pool_error;
    } else {
      rows[kRandomBest].dynamics = pool_stat(pool, false);
      rows[kRandomMedian].dynamics = pool_stat(pool, true);
    }

    const auto opt = pss::optimize_program(prog.module, policy, opts.max_sequence_len, opts.max_inactive_len);
    rows[kPolicy].sequence = opt.applied;
    profile_into(rows[kPolicy], opt.module);

    const auto& base = rows[kUnopt];
    for (auto& row : rows) {
      if (!base.ok()) {
        row.error = "unoptimized reference trapped: " + base.error;
        row.dynamics = {};
      }
      if (row.ok()) set_relatives(row, base.dynamics);
      result.rows.push_back(std::move(row));
    }
  }
  result.summary = summarize(result.rows);
  return result;
}

EvalSummary summarize(const std::vector<EvalRow>& rows) {
  EvalSummary s;
  std::set<std::string> programs;
  for (const auto& name : variant_names()) {
    VariantSummary vs;
    vs.variant = name;
    double lt = 0.0, le = 0.0, ls = 0.0;
    for (const auto& r : rows) {
      programs.insert(r.program_id);
      if (r.variant != name || !r.ok()) continue;
      ++vs.programs;
      lt += std::log(r.rel_time);
      le += std::log(r.rel_energy);
      ls += std::log(r.rel_size);
      if (name == "policy" && r.rel_time <= 1.0 && r.rel_energy <= 1.0 && r.rel_size <= 1.0) {
        ++s.policy_no_degradation;
      }
    }
    if (vs.programs > 0) {
      const auto n = static_cast<double>(vs.programs);
      vs.geomean_time = std::exp(lt / n);
      vs.geomean_energy = std::exp(le / n);
      vs.geomean_size = std::exp(ls / n);
    } else {
      vs.geomean_time = vs.geomean_energy = vs.geomean_size = std::nan("");
    }
    s.variants.push_back(vs);
  }
  s.programs = programs.size();
  return s;
}

// ---------------------------------------------------------------------------
// Output

namespace {

const char* kCsvHeader =
    "program,variant,exec_time_s,energy_j,executed_instructions,avg_power_w,code_size_bytes,rel_time,"
    "rel_energy,rel_size";

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json row_json(const EvalRow& r) {
  json j{{"program", r.program_id}, {"variant", r.variant}};
  if (!r.ok()) {
    j["error"] = r.error;
    return j;
  }
  j["exec_time_s"] = r.dynamics.exec_time_s;
  j["energy_j"] = r.dynamics.energy_j;
  j["executed_instructions"] = r.dynamics.executed_instructions;
  j["avg_power_w"] = r.dynamics.avg_power_w;
  j["code_size_bytes"] = r.dynamics.code_size_bytes;
  j["rel_time"] = r.rel_time;
  j["rel_energy"] = r.rel_energy;
  j["rel_size"] = r.rel_size;
  if (r.variant == "fixed-O" || r.variant == "policy") j["sequence"] = r.sequence;
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

}  // namespace

std::string format_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.program_id << ',' << r.variant;
    if (r.ok()) {
      const auto& d = r.dynamics;
      out << ',' << kv::format_double(d.exec_time_s) << ',' << kv::format_double(d.energy_j) << ','
          << d.executed_instructions << ',' << kv::format_double(d.avg_power_w) << ','
          << d.code_size_bytes << ',' << kv::format_double(r.rel_time) << ','
          << kv::format_double(r.rel_energy) << ',' << kv::format_double(r.rel_size);
    } else {
      out << ",,,,,,,,";
    }
    out << '\n';
  }
  return out.str();
}

std::vector<EvalRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw FormatError("report csv: bad header");
  std::vector<EvalRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 10) throw FormatError("report csv: expected 10 fields in '" + line + "'");
    EvalRow r;
    r.program_id = f[0];
    r.variant = f[1];
    if (f[2].empty()) {
      r.error = "trapped";
    } else {
      r.dynamics.exec_time_s = kv::to_double(f[2], "exec_time_s");
      r.dynamics.energy_j = kv::to_double(f[3], "energy_j");
      r.dynamics.executed_instructions = static_cast<std::uint64_t>(kv::to_int(f[4], "executed_instructions"));
      r.dynamics.avg_power_w = kv::to_double(f[5], "avg_power_w");
      r.dynamics.code_size_bytes = static_cast<std::uint64_t>(kv::to_int(f[6], "code_size_bytes"));
      r.rel_time = kv::to_double(f[7], "rel_time");
      r.rel_energy = kv::to_double(f[8], "rel_energy");
      r.rel_size = kv::to_double(f[9], "rel_size");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

json report_json(const EvalResult& r) {
  json rows = json::array();
  for (const auto& row : r.rows) rows.push_back(row_json(row));
  json variants = json::object();
  for (const auto& v : r.summary.variants) {
    variants[v.variant] = {{"programs", v.programs},
                           {"geomean_rel_time", finite_or_null(v.geomean_time)},
                           {"geomean_rel_energy", finite_or_null(v.geomean_energy)},
                           {"geomean_rel_size", finite_or_null(v.geomean_size)}};
  }
  const auto& o = r.options;
  return {{"format", "mlcomp-report"},
          {"version", kReportVersion},
          {"platform", r.platform},
          {"options",
           {{"random_pool", o.random_pool},
            {"random_max_len", o.random_max_len},
            {"seed", o.seed},
            {"fuel", o.fuel},
            {"max_sequence_len", o.max_sequence_len},
            {"max_inactive_len", o.max_inactive_len}}},
          {"fixed_sequence", passes::format_phase_list(canonical_fixed_sequence())},
          {"rows", rows},
          {"summary",
           {{"programs", r.summary.programs},
            {"policy_no_degradation", r.summary.policy_no_degradation},
            {"variants", variants}}}};
}

void emit_report(const EvalResult& r, const std::filesystem::path& csv_path,
                 const std::filesystem::path& json_path) {
  if (r.rows.empty()) throw Error("report has no rows");
  write_text(csv_path, format_csv(r.rows));
  write_text(json_path, report_json(r).dump(1) + "\n");
}

// ---------------------------------------------------------------------------
// Run configuration

EvalOptions RunConfig::eval_options() const {
  EvalOptions o;
  o.random_pool = k_random;
  o.random_max_len = max_len;
  o.seed = seed;
  o.fuel = fuel;
  o.max_sequence_len = pss_train.max_sequence_len;
  o.max_inactive_len = pss_train.max_inactive_len;
  return o;
}

RunConfig run_config_from(const kv::Table& t, RunConfig cfg) {
  auto count = [](const std::string& v, const char* key) {
    const auto n = kv::to_int(v, key);
    if (n < 0) throw FormatError(std::string(key) + " must be >= 0");
    return static_cast<std::uint64_t>(n);
  };
  static const std::set<std::string> known_pe{"accuracy_thr", "trials_per_pair", "split_fraction", "seed",
                                              "models", "range.ridge.lambda", "range.knn.k",
                                              "range.tree.max_depth", "range.tree.min_leaf",
                                              "range.forest.n_trees", "range.forest.max_depth",
                                              "range.forest.feature_subsample"};
  static const std::set<std::string> known_pss{"episodes", "batch", "lr",     "max_len", "max_inactive", "layers",
                                               "hidden",   "gamma", "weights", "kappa",  "seed"};
  kv::Table pe_keys, pss_keys;
  for (const auto& [key, value] : t.entries()) {
    if (key != "seed" && known_pe.contains(key)) {
      pe_keys.set(key, value);
    } else if (key != "seed" && key != "max_len" && known_pss.contains(key)) {
      pss_keys.set(key, value);
    } else if (key.starts_with("pe.")) {
      pe_keys.set(key.substr(3), value);
    } else if (key.starts_with("pss.")) {
      pss_keys.set(key.substr(4), value);
    } else if (key == "corpus") {
      cfg.corpus = value;
    } else if (key == "platform") {
      cfg.platform = value;
    } else if (key == "dataset") {
      cfg.dataset = value;
    } else if (key == "pe") {
      cfg.pe = value;
    } else if (key == "policy") {
      cfg.policy = value;
    } else if (key == "report_csv") {
      cfg.report_csv = value;
    } else if (key == "report_json") {
      cfg.report_json = value;
    } else if (key == "output") {
      cfg.output = value;
    } else if (key == "optimize_report") {
      cfg.optimize_report = value;
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(kv::to_int(value, "seed"));
      cfg.pe_search.seed = cfg.pss_train.seed = cfg.seed;
    } else if (key == "samples") {
      cfg.samples = count(value, "samples");
    } else if (key == "max_len") {
      cfg.max_len = count(value, "max_len");
    } else if (key == "fuel") {
      cfg.fuel = count(value, "fuel");
    } else if (key == "k_random") {
      cfg.k_random = count(value, "k_random");
      if (cfg.k_random == 0) throw FormatError("k_random must be >= 1");
    } else {
      throw FormatError("unknown configuration key '" + key + "'");
    }
  }
  for (const auto& [key, _] : pe_keys.entries()) {
    if (!known_pe.contains(key)) throw FormatError("unknown configuration key 'pe." + key + "'");
  }
  for (const auto& [key, _] : pss_keys.entries()) {
    if (!known_pss.contains(key)) throw FormatError("unknown configuration key 'pss." + key + "'");
  }
  cfg.pe_search = pe::search_config_from(pe_keys, cfg.pe_search);
  cfg.pss_train = pss::train_config_from(pss_keys, cfg.pss_train);
  return cfg;
}

}  // namespace mlcomp::report
