#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "cmdp/experiments.hpp"
#include "cmdp/series.hpp"

namespace fs = std::filesystem;
using namespace cmdp;

namespace {

#ifndef CMDP_CONFIG_DIR
#define CMDP_CONFIG_DIR "configs"
#endif

constexpr int kFail = 1, kInvalid = 2, kHypothesis = 3;

std::vector<fs::path> config_files(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".kv") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

/// A path to an existing file, or the name of a config in the config directory.
fs::path locate(const std::string& target, const fs::path& dir) {
  if (fs::is_regular_file(target)) return target;
  const fs::path named = dir / (target + ".kv");
  if (fs::is_regular_file(named)) return named;
  throw ConfigInvalid("no config file or experiment named " + target + " (looked in " + dir.string() + ")");
}

void print_header(const KvFile& kv) {
  std::istringstream in(kv.header());
  for (std::string line; std::getline(in, line);) std::cout << "  " << line << "\n";
}

int run_one(const fs::path& path, const Overrides& o, const std::string& out_dir) {
  KvFile cfg = KvFile::load(path.string());
  for (const auto& flag : apply_overrides(cfg, o))
    std::cerr << "note: " << flag << " does not apply to " << path.filename().string() << "\n";
  const ExperimentResult r = run_experiment(cfg);
  write_artifacts(r, out_dir);
  std::cout << r.id << " (" << r.kind << ", " << r.wall_seconds << " s): " << (r.passed() ? "PASS" : "FAIL") << "\n";
  for (const auto& c : r.clauses) std::cout << "  [" << (c.pass ? "pass" : "FAIL") << "] " << c.name << ": " << c.detail << "\n";
  return r.passed() ? 0 : kFail;
}

void validate_schedule(const ScheduleRef& s) {
  validate_hypotheses(*s);
  std::cout << "schedule " << s->name() << " (" << to_string(s->family()) << "), N* = " << s->n_star() << "\n";
  if (s->family() == Family::FaithfulA || s->family() == Family::FaithfulB) {
    for (int k = 1; k <= 3; ++k) {
      const auto t = BigExpr::tower(k + 1).numeric();
      if (!t) continue;
      const Interval n = ceil(*t);
      Interval sum(0L);
      for (int i = 0; i < k; ++i) sum = sum + faithful_delta(i, n);
      std::cout << "  k=" << k << ", n=" << n.str(6) << ": sum delta_i in " << sum.str(12)
                << (sum.certainly_le(Interval(1L)) ? " <= 1" : " NOT certified <= 1") << "\n";
      if (!sum.certainly_le(Interval(1L))) throw HypothesisViolated("sum of delta_i not certified at k=" + std::to_string(k));
    }
  }
  const std::int64_t first = s->n_star();
  for (std::int64_t n = first; n < first + 5; ++n) {
    const auto& b = s->block(n);
    std::cout << "  n=" << n << " k=" << b.k << " loss in " << s->loss(n).str(10) << "\n";
  }
  if (s->loss_convergent()) std::cout << "  tail loss after N*+4 in " << s->loss_tail(first + 4).str(10) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Countable MDP experiments: chains, strategies, exact DP and Monte Carlo"};
  app.require_subcommand(1);
  std::string config_dir = CMDP_CONFIG_DIR;
  app.add_option("--config-dir", config_dir, "Directory holding experiment configs")->capture_default_str();

  Overrides o;
  std::string out_dir = "results";
  std::vector<std::string> targets;
  auto* run = app.add_subcommand("run", "Run experiments (config path, experiment name, or 'all')");
  run->add_option("targets", targets, "Configs to run")->required();
  run->add_option("--seed", o.seed, "Override the seed");
  run->add_option("--trials", o.trials, "Override the Monte Carlo trial count");
  run->add_option("--horizon-blocks", o.horizon_blocks, "Override the horizon in blocks");
  run->add_option("--schedule", o.schedule, "Override the schedule (preset or file)");
  run->add_option("--confidence", o.confidence, "Override the confidence level");
  run->add_option("--out-dir", out_dir, "Directory for CSV, JSON-lines and config artifacts")->capture_default_str();

  std::string target;
  auto* validate = app.add_subcommand("validate", "Check an experiment config or a schedule (file or preset)");
  validate->add_option("target", target)->required();
  auto* list = app.add_subcommand("list", "List experiments and schedule presets");
  auto* describe = app.add_subcommand("describe", "Show what an experiment checks and its parameters");
  describe->add_option("name", target)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      std::vector<fs::path> paths;
      for (const auto& t : targets) {
        if (t == "all") {
          const auto all = config_files(config_dir);
          paths.insert(paths.end(), all.begin(), all.end());
        } else {
          paths.push_back(locate(t, config_dir));
        }
      }
      int status = 0;
      for (const auto& p : paths) status = std::max(status, run_one(p, o, out_dir));
      return status;
    }
    if (*validate) {
      const auto names = Schedule::preset_names();
      if (std::find(names.begin(), names.end(), target) != names.end()) {
        validate_schedule(Schedule::preset(target));
      } else {
        const fs::path path = locate(target, config_dir);
        const KvFile kv = KvFile::load(path.string());
        if (kv.has("experiment")) {
          validate_config(kv);
          std::cout << "config " << path.string() << " (" << kv.require("experiment") << ") is valid\n";
        } else {
          validate_schedule(Schedule::from_kv(kv));
        }
      }
      std::cout << "valid\n";
      return 0;
    }
    if (*list) {
      std::cout << "experiments in " << config_dir << ":\n";
      for (const auto& p : config_files(config_dir)) {
        const KvFile kv = KvFile::load(p.string());
        std::cout << "  " << p.stem().string() << "  [" << kv.get_or("experiment", "?") << "]\n";
      }
      std::cout << "experiment kinds:";
      for (const auto& k : experiment_kinds()) std::cout << " " << k;
      std::cout << "\nschedule presets:";
      for (const auto& n : Schedule::preset_names()) std::cout << " " << n;
      std::cout << "\n";
      return 0;
    }
    if (*describe) {
      const KvFile kv = KvFile::load(locate(target, config_dir).string());
      const std::string kind = kv.require("experiment");
      std::cout << target << " (" << kind << ")\n";
      print_header(kv);
      std::cout << "parameters:\n";
      for (const auto& key : experiment_keys(kind)) std::cout << "  " << key << " = " << kv.get_or(key, "<missing>") << "\n";
      return 0;
    }
  } catch (const HypothesisViolated& e) {
    std::cerr << "hypothesis violated: " << e.what() << "\n";
    return kHypothesis;
  } catch (const ConfigInvalid& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }
  return 0;
}
