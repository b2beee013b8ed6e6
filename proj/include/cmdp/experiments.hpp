#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmdp/kv.hpp"
#include "cmdp/schedule.hpp"

namespace cmdp {

/// One line of the CSV summary. Empty optionals print as empty cells.
struct CsvRow {
  std::string experiment;
  std::string n_or_N;
  std::optional<double> analytic_lo, analytic_hi, mc_lo, mc_hi;
  std::string exact;
  std::string verdict;
};

std::string csv_header();
std::string to_csv(const CsvRow& row);

/// A named acceptance clause of an experiment.
struct Clause {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ExperimentResult {
  std::string id;
  std::string kind;
  /// The configuration actually run (overrides applied); rerunning it reproduces the artifacts.
  KvFile config;
  std::vector<CsvRow> rows;
  std::vector<nlohmann::json> records;
  std::vector<Clause> clauses;
  double wall_seconds = 0;

  bool passed() const;
};

/// Command-line overrides; each applies only to experiments that take the parameter.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> trials;
  std::optional<std::int64_t> horizon_blocks;
  std::optional<std::string> schedule;
  std::optional<double> confidence;
};

std::vector<std::string> experiment_kinds();
/// Keys accepted by an experiment kind (besides "experiment" and "id").
std::vector<std::string> experiment_keys(const std::string& kind);

/// Applies overrides to the keys the experiment accepts; returns the names that did not apply.
std::vector<std::string> apply_overrides(KvFile& config, const Overrides& o);

/// Throws ConfigInvalid for unknown kinds or keys and HypothesisViolated for schedules that
/// break the convergence/divergence requirements.
void validate_config(const KvFile& config);
ExperimentResult run_experiment(const KvFile& config);

/// Preset name or path of a schedule file.
ScheduleRef resolve_schedule(const std::string& name_or_path);

/// Writes <id>.csv, <id>.jsonl and <id>.kv under dir, each through a temporary file and a rename.
void write_artifacts(const ExperimentResult& r, const std::string& dir);

}  // namespace cmdp
