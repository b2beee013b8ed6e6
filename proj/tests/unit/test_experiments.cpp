#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cmdp/experiments.hpp"

using namespace cmdp;

namespace {

KvFile small_branching() {
  return KvFile::parse(
      "# header line\n"
      "experiment = infinite-branching\n"
      "id = tiny-branching\n"
      "terms = 30\nfloor = 0.288\ntarget = 9/10\nbranches = 1 2\n"
      "trials = 300\nseed = 5\nconfidence = 0.99\nhd_cycles = 12\n");
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("config validation") {
  KvFile ok = small_branching();
  CHECK_NOTHROW(validate_config(ok));

  KvFile extra = ok;
  extra.set("horizon", "3");
  CHECK_THROWS_AS(validate_config(extra), ConfigInvalid);

  KvFile missing = KvFile::parse("experiment = puterman-trajectory\nexact_k = 2\n");
  CHECK_THROWS_AS(validate_config(missing), ConfigInvalid);
  CHECK_THROWS_AS(validate_config(KvFile::parse("experiment = nonsense\n")), ConfigInvalid);

  // A schedule whose expected loss diverges is rejected before anything runs.
  const auto path = std::filesystem::temp_directory_path() / "cmdp_bad_schedule.kv";
  std::ofstream(path) << "name = bad\nfamily = accelerated\nm = A\nbits = 40\nshift = 0\nk.max = 2\nk.table = 1:2\n"
                         "delta.0 = 1/5 ; 1\ndelta.1 = 1/4 ; 0\nepsilon.0 = 1/10 ; 0\nepsilon.1 = 1/10 ; 3\n";
  KvFile skip = KvFile::parse("experiment = skip-index\neps = 1/2\nhorizon_blocks = 5\n");
  skip.set("schedule", path.string());
  CHECK_THROWS_AS(validate_config(skip), HypothesisViolated);
  skip.set("schedule", "accelerated-mimic");
  CHECK_NOTHROW(validate_config(skip));
  std::filesystem::remove(path);
}

TEST_CASE("overrides apply only where the experiment takes the key") {
  KvFile cfg = small_branching();
  Overrides o;
  o.seed = 99;
  o.trials = 10;
  o.horizon_blocks = 4;
  const auto ignored = apply_overrides(cfg, o);
  CHECK(cfg.require("seed") == "99");
  CHECK(cfg.require("trials") == "10");
  REQUIRE(ignored.size() == 1);
  CHECK(ignored[0] == "--horizon-blocks");
}

TEST_CASE("csv rows") {
  CHECK(csv_header() == "experiment,n_or_N,analytic_lo,analytic_hi,mc_lo,mc_hi,exact,verdict");
  CsvRow r{"x", "eps=1/2, N=3", 0.5, std::nullopt, std::nullopt, 0.25, "say \"hi\"", "pass"};
  CHECK(to_csv(r) == "x,\"eps=1/2, N=3\",0.5,,,0.25,\"say \"\"hi\"\"\",pass");
}

TEST_CASE("artifacts are reproduced by rerunning the emitted config") {
  const auto dir = std::filesystem::temp_directory_path() / "cmdp_artifacts_test";
  std::filesystem::remove_all(dir);
  const ExperimentResult first = run_experiment(small_branching());
  CHECK(first.passed());
  CHECK(first.config.header().find("header line") != std::string::npos);
  write_artifacts(first, (dir / "a").string());
  const KvFile emitted = KvFile::load((dir / "a" / "tiny-branching.kv").string());
  write_artifacts(run_experiment(emitted), (dir / "b").string());
  for (const char* ext : {".csv", ".jsonl", ".kv"}) {
    const std::string name = std::string("tiny-branching") + ext;
    CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
    CHECK(!std::filesystem::exists(dir / "a" / (name + ".tmp")));
  }
  const std::string csv = slurp(dir / "a" / "tiny-branching.csv");
  CHECK(csv.rfind(csv_header(), 0) == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("failing clauses make the experiment fail") {
  KvFile cfg = small_branching();
  cfg.set("floor", "0.3");  // above the true product 0.2888
  const ExperimentResult r = run_experiment(cfg);
  CHECK_FALSE(r.passed());
  CHECK_FALSE(r.clauses.at(0).pass);
}
