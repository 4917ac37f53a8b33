// Command-line driver: extract -> train-pe -> train-pss -> optimize -> eval.
//
// Settings are resolved as MLCOMP_SEED < --config file < command-line flags.
// Every flag maps to a config key (see report::run_config_from); `--set k=v`
// reaches the keys that have no dedicated flag.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mlcomp/report.hpp"

namespace fs = std::filesystem;
using namespace mlcomp;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::map<std::string, std::string> direct;  // key -> value from dedicated flags
  std::string program;
};

/// Dedicated flag `--name` bound to config key `key`.
void flag(CLI::App* cmd, Flags& f, const std::string& name, const std::string& key, const std::string& help) {
  cmd->add_option_function<std::string>(
      "--" + name, [&f, key](const std::string& v) { f.direct[key] = v; }, help);
}

report::RunConfig resolve(const Flags& f) {
  kv::Table t;
  if (const char* env = std::getenv("MLCOMP_SEED"); env && *env) t.set("seed", env);
  if (!f.config.empty()) {
    const auto file = kv::parse(kv::read_file(f.config));
    for (const auto& [k, v] : file.entries()) t.set(k, v);
  }
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects KEY=VALUE, got '" + s + "'");
    t.set(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [k, v] : f.direct) t.set(k, v);
  try {
    return report::run_config_from(t);
  } catch (const FormatError& e) {
    throw UsageError(e.what());
  }
}

exec::PlatformModel need_platform(const report::RunConfig& c) {
  if (c.platform.empty()) throw UsageError("a platform file is required (--platform or 'platform' key)");
  return exec::load_platform(c.platform);
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

int cmd_extract(const report::RunConfig& c) {
  const auto platform = need_platform(c);
  const auto corpus = dataset::load_corpus(c.corpus);
  const auto d = dataset::extract_dataset(corpus, platform, c.samples, c.max_len, c.seed, c.fuel);
  const auto& out = c.dataset;
  dataset::write_dataset(d, out);
  std::printf("%zu samples (%zu dropped) from %zu programs on %s -> %s\n", d.samples.size(), d.dropped,
              corpus.size(), platform.name.c_str(), out.string().c_str());
  return 0;
}

int cmd_features(const report::RunConfig& c, const std::string& program) {
  std::vector<dataset::Program> progs;
  if (!program.empty()) {
    progs.push_back(dataset::load_program(program));
  } else {
    progs = dataset::load_corpus(c.corpus);
  }
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& p : progs) {
    const auto f = features::extract_features(p.module);
    nlohmann::ordered_json values = nlohmann::ordered_json::object();
    for (const auto& info : features::feature_manifest()) values[info.name] = f.values[info.index];
    out.push_back({{"program", p.id}, {"manifest_version", f.manifest_version}, {"features", values}});
  }
  const auto text = out.dump(1) + "\n";
  if (c.output.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    write_file(c.output, text);
  }
  return 0;
}

int cmd_train_pe(const report::RunConfig& c) {
  const auto d = dataset::read_dataset(c.dataset);
  const auto bundle = pe::model_search(d, c.pe_search);
  const auto& out = c.pe;
  pe::save_pe(bundle, out);
  std::size_t failed = 0;
  for (const auto& t : bundle.log) failed += t.failed;
  std::printf("%zu trials (%zu failed), best trial %zu: %s:%s accuracy %.6f\n", bundle.log.size(), failed,
              bundle.best_trial, std::string(mlkit::preprocessor_name(bundle.preprocessor.kind())).c_str(),
              std::string(mlkit::regressor_name(bundle.regressors[0].spec().kind)).c_str(), bundle.accuracy);
  for (std::size_t i = 0; i < pe::kNumMetrics; ++i) {
    std::printf("  %-22s test mape %.6f\n", std::string(pe::metric_names()[i]).c_str(),
                bundle.test_metrics[i].mape);
  }
  std::printf("-> %s\n", out.string().c_str());
  return 0;
}

int cmd_train_pss(const report::RunConfig& c) {
  const auto platform = need_platform(c);
  const auto corpus = dataset::load_corpus(c.corpus);
  const auto bundle = pe::load_pe(c.pe);
  const auto result = pss::train_policy(corpus, bundle, platform, c.pss_train);
  const auto& out = c.policy;
  pss::save_policy(result.policy, out, &result, &c.pss_train);
  const std::size_t n = result.log.size(), tail = std::min<std::size_t>(n, 100);
  double last = 0.0;
  for (std::size_t i = n - tail; i < n; ++i) last += result.log[i].episode_return;
  std::printf("%zu episodes, %zu updates, mean return of last %zu episodes %.6f -> %s\n", n, result.updates,
              tail, tail ? last / static_cast<double>(tail) : 0.0, out.string().c_str());
  return 0;
}

int cmd_optimize(const report::RunConfig& c, const std::string& program) {
  const auto policy = pss::load_policy(c.policy);
  const auto& t = c.pss_train;
  if (!program.empty()) {
    const auto p = dataset::load_program(program);
    const auto r = pss::optimize_program(p.module, policy, t.max_sequence_len, t.max_inactive_len);
    const auto text = tir::print_module(r.module);
    if (c.output.empty()) {
      std::fputs(text.c_str(), stdout);
    } else {
      write_file(c.output, text);
    }
    const auto report = pss::optimize_report_json(r, p.id).dump(1) + "\n";
    if (c.optimize_report.empty()) {
      std::fputs(report.c_str(), stderr);
    } else {
      write_file(c.optimize_report, report);
    }
    return 0;
  }
  const fs::path dir = c.output.empty() ? fs::path("optimized") : c.output;
  fs::create_directories(dir);
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& p : dataset::load_corpus(c.corpus)) {
    const auto r = pss::optimize_program(p.module, policy, t.max_sequence_len, t.max_inactive_len);
    write_file(dir / (p.id + ".tir"), tir::print_module(r.module));
    summary.push_back(pss::optimize_report_json(r, p.id));
    std::printf("%-16s %zu phases applied (%s)\n", p.id.c_str(), r.applied.size(),
                std::string(pss::terminal_name(r.terminal)).c_str());
  }
  write_file(c.optimize_report.empty() ? dir / "optimize.json" : c.optimize_report, summary.dump(1) + "\n");
  return 0;
}

int cmd_eval(const report::RunConfig& c) {
  const auto platform = need_platform(c);
  const auto corpus = dataset::load_corpus(c.corpus);
  const auto policy = pss::load_policy(c.policy);
  const auto result = report::evaluate_policy(corpus, policy, platform, c.eval_options());
  report::emit_report(result, c.report_csv, c.report_json);
  std::printf("%-14s %9s %9s %9s\n", "variant", "rel_time", "rel_energy", "rel_size");
  for (const auto& v : result.summary.variants) {
    std::printf("%-14s %9.4f %9.4f %9.4f\n", v.variant.c_str(), v.geomean_time, v.geomean_energy,
                v.geomean_size);
  }
  std::printf("policy degrades no metric on %zu/%zu programs\n", result.summary.policy_no_degradation,
              result.summary.programs);
  for (const auto& r : result.rows) {
    if (!r.ok()) std::printf("trap: %s %s: %s\n", r.program_id.c_str(), r.variant.c_str(), r.error.c_str());
  }
  std::printf("-> %s, %s\n", c.report_csv.string().c_str(), c.report_json.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phase-ordering toolkit: dataset extraction, performance estimation, policy training"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", f.config, "key = value configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--set", f.sets, "override any configuration key (KEY=VALUE, repeatable)");
    flag(cmd, f, "seed", "seed", "global seed (default: MLCOMP_SEED or 0)");
    flag(cmd, f, "corpus", "corpus", "directory of .tir programs");
  };

  auto* extract = app.add_subcommand("extract", "profile random phase sequences into a dataset");
  common(extract);
  flag(extract, f, "platform", "platform", "platform file");
  flag(extract, f, "per-program", "samples", "samples per program");
  flag(extract, f, "max-len", "max_len", "maximum random sequence length");
  flag(extract, f, "fuel", "fuel", "interpreter instruction budget");
  flag(extract, f, "out", "dataset", "dataset file to write");

  auto* feats = app.add_subcommand("features", "print static features as JSON");
  common(feats);
  feats->add_option("--program", f.program, "single .tir file instead of the corpus");
  flag(feats, f, "out", "output", "write JSON here instead of stdout");

  auto* train_pe = app.add_subcommand("train-pe", "search a performance estimator on a dataset");
  common(train_pe);
  flag(train_pe, f, "dataset", "dataset", "dataset file");
  flag(train_pe, f, "accuracy-thr", "pe.accuracy_thr", "stop once accuracy exceeds this");
  flag(train_pe, f, "trials", "pe.trials_per_pair", "random trials per model pair");
  flag(train_pe, f, "models", "pe.models", "comma-separated preprocessor:regressor pairs");
  flag(train_pe, f, "out", "pe", "estimator bundle to write");

  auto* train_pss = app.add_subcommand("train-pss", "train the phase selection policy");
  common(train_pss);
  flag(train_pss, f, "platform", "platform", "platform file (exact code size)");
  flag(train_pss, f, "pe", "pe", "estimator bundle");
  flag(train_pss, f, "episodes", "pss.episodes", "number of episodes");
  flag(train_pss, f, "batch", "pss.batch", "episodes per update");
  flag(train_pss, f, "lr", "pss.lr", "learning rate");
  flag(train_pss, f, "max-len", "pss.max_len", "changed phases per episode");
  flag(train_pss, f, "max-inactive", "pss.max_inactive", "consecutive unchanged phases per episode");
  flag(train_pss, f, "gamma", "pss.gamma", "discount");
  flag(train_pss, f, "weights", "pss.weights", "time,energy,size objective weights");
  flag(train_pss, f, "kappa", "pss.kappa", "degradation penalty");
  flag(train_pss, f, "out", "policy", "policy file to write");

  auto* optimize = app.add_subcommand("optimize", "apply the trained policy");
  common(optimize);
  flag(optimize, f, "policy", "policy", "policy file");
  optimize->add_option("--program", f.program, "single .tir file instead of the corpus");
  flag(optimize, f, "emit", "output", "optimized .tir (single program) or output directory (corpus)");
  flag(optimize, f, "report", "optimize_report", "JSON report of the applied phases");
  flag(optimize, f, "max-len", "pss.max_len", "changed phases to apply at most");
  flag(optimize, f, "max-inactive", "pss.max_inactive", "consecutive unchanged attempts before stopping");

  auto* eval = app.add_subcommand("eval", "compare the policy with baselines on ground truth");
  common(eval);
  flag(eval, f, "platform", "platform", "platform file");
  flag(eval, f, "policy", "policy", "policy file");
  flag(eval, f, "k", "k_random", "random sequences per program");
  flag(eval, f, "csv", "report_csv", "CSV report path");
  flag(eval, f, "json", "report_json", "JSON report path");
  flag(eval, f, "fuel", "fuel", "interpreter instruction budget");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    const auto cfg = resolve(f);
    if (*extract) return cmd_extract(cfg);
    if (*feats) return cmd_features(cfg, f.program);
    if (*train_pe) return cmd_train_pe(cfg);
    if (*train_pss) return cmd_train_pss(cfg);
    if (*optimize) return cmd_optimize(cfg, f.program);
    if (*eval) return cmd_eval(cfg);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
