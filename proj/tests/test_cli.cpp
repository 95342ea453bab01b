#include <catch2/catch_amalgamated.hpp>

#include <bcflong/csv.hpp>
#include <bcflong/panel.hpp>
#include <bcflong/serialize.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

using namespace bcflong;
namespace fs = std::filesystem;

namespace {

const char* kRoot = "cli_scratch";

int run_cli(const std::string& args) {
  std::string cmd = std::string(BCFLONG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string at(const std::string& leaf) { return (fs::path(kRoot) / leaf).string(); }

void write_cfg(const std::string& leaf, const std::string& text) {
  write_text_file(at(leaf), text);
}

Json read_json(const std::string& path) { return Json::parse(read_text_file(path)); }

}  // namespace

TEST_CASE("help exits cleanly", "[cli]") {
  fs::remove_all(kRoot);
  fs::create_directories(kRoot);
  REQUIRE(run_cli("--help") == 0);
  REQUIRE(run_cli("fit --help") == 0);
}

TEST_CASE("bad invocations are parse errors", "[cli]") {
  REQUIRE(run_cli("--bogus") == 2);
  REQUIRE(run_cli("") == 2);
  REQUIRE(run_cli("simulate --out " + at("nowhere")) == 2);
  REQUIRE(run_cli("simulate --preset parametric --out " + at("nowhere")) == 2);
}

TEST_CASE("simulate writes a panel with aligned ground truth", "[cli]") {
  write_cfg("gen.cfg", "N=20\nn_i=3\np=10\nsparsity=0.5\n");
  REQUIRE(run_cli("simulate --preset fully-synthetic --out " + at("sim") + " --config " +
                  at("gen.cfg") + " --seed 5") == 0);

  for (const char* f : {"panel.csv", "ground_truth.csv", "alpha_truth.csv", "manifest.json",
                        "timings.json"})
    REQUIRE(fs::exists(fs::path(at("sim")) / f));

  Json manifest = read_json(at("sim/manifest.json"));
  REQUIRE(manifest.at("subcommand") == "simulate");
  REQUIRE(manifest.at("rows").get<long>() == 60);
  REQUIRE(manifest.at("subjects").get<int>() == 20);
  REQUIRE(manifest.at("config").at("seed").get<std::uint64_t>() == 5);

  PanelDataset d = load_panel(at("sim/panel.csv"));
  REQUIRE(d.n_rows() == 60);
  REQUIRE(d.n_subjects() == 20);
  REQUIRE(read_csv(at("sim/ground_truth.csv")).values.rows() == 60);
}

TEST_CASE("fit produces a loadable draws directory", "[cli]") {
  write_cfg("fit.cfg",
            "max_iter=80\nburn_in=20\nthin=1\nmu_m=8\nuse_tau_forest=false\n"
            "include_propensity_in_mu=false\nstore_max=10\n");
  REQUIRE(run_cli("fit --data " + at("sim/panel.csv") + " --out " + at("fit") + " --config " +
                  at("fit.cfg") + " --seed 7") == 0);

  Json manifest = read_json(at("fit/manifest.json"));
  REQUIRE(manifest.at("subcommand") == "fit");
  REQUIRE(fs::exists(fs::path(at("fit")) / "traces.csv"));

  Json summary = read_json(at("fit/summary.json"));
  REQUIRE(summary.at("chains")[0].at("n_retained").get<long>() == 60);

  PosteriorDraws dr = load_draws(at("fit/draws"));
  REQUIRE(dr.n_retained == 60);
  REQUIRE(dr.n_subjects() == 20);
  REQUIRE(dr.tau_forests.empty());
}

TEST_CASE("identical fit invocations are byte-identical", "[cli]") {
  REQUIRE(run_cli("fit --data " + at("sim/panel.csv") + " --out " + at("fit2") + " --config " +
                  at("fit.cfg") + " --seed 7") == 0);

  int compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(at("fit"))) {
    if (!entry.is_regular_file()) continue;
    fs::path rel = fs::relative(entry.path(), at("fit"));
    if (rel.filename() == "timings.json") continue;
    ++compared;
    REQUIRE(read_text_file(entry.path().string()) ==
            read_text_file((fs::path(at("fit2")) / rel).string()));
  }
  REQUIRE(compared >= 8);
}

TEST_CASE("fit resume continues to the same draws", "[cli]") {
  write_cfg("fitck.cfg",
            "max_iter=80\nburn_in=20\nthin=1\nmu_m=8\nuse_tau_forest=false\n"
            "include_propensity_in_mu=false\nstore_max=10\ncheckpoint_every=40\n");
  REQUIRE(run_cli("fit --data " + at("sim/panel.csv") + " --out " + at("fitck") + " --config " +
                  at("fitck.cfg") + " --seed 7") == 0);
  REQUIRE(fs::exists(fs::path(at("fitck")) / "checkpoint" / "state.json"));

  std::string straight = read_text_file(at("fitck/draws/stored_mu.csv"));
  std::string straight_scalars = read_text_file(at("fitck/draws/scalars.csv"));

  REQUIRE(run_cli("fit --data " + at("sim/panel.csv") + " --out " + at("fitck") +
                  " --resume") == 0);
  REQUIRE(read_text_file(at("fitck/draws/stored_mu.csv")) == straight);
  REQUIRE(read_text_file(at("fitck/draws/scalars.csv")) == straight_scalars);
}

TEST_CASE("predict tabulates counterfactual trajectories", "[cli]") {
  PosteriorDraws dr = load_draws(at("fit/draws"));
  long long subject = dr.subject_label.front();
  REQUIRE(run_cli("predict --fit " + at("fit") + " --out " + at("pred") + " --subject " +
                  std::to_string(subject) + " --z both --times 0,1,2") == 0);

  CsvTable t = read_csv(at("pred/counterfactual.csv"));
  REQUIRE(t.values.rows() == 6);
  REQUIRE(t.col("t") == 2);
  REQUIRE(fs::exists(fs::path(at("pred")) / "counterfactual.svg"));
  Json manifest = read_json(at("pred/manifest.json"));
  REQUIRE(manifest.at("subcommand") == "predict");
}

TEST_CASE("effects needs a treatment forest and reports one when present", "[cli]") {
  REQUIRE(run_cli("effects --fit " + at("fit") + " --out " + at("effbad")) == 2);
  Json err = read_json(at("effbad/error.json"));
  REQUIRE(err.at("error").at("exit_code").get<int>() == 2);

  write_cfg("gen2.cfg", "rows=120\nsparsity=0.5\n");
  REQUIRE(run_cli("simulate --preset semi-synthetic --out " + at("sim2") + " --config " +
                  at("gen2.cfg") + " --seed 3") == 0);
  write_cfg("fit3.cfg", "max_iter=60\nburn_in=10\nthin=1\nmu_m=8\ntau_m=4\nstore_max=5\n");
  REQUIRE(run_cli("fit --data " + at("sim2/panel.csv") + " --out " + at("fit3") + " --config " +
                  at("fit3.cfg") + " --seed 9") == 0);

  REQUIRE(run_cli("effects --fit " + at("fit3") + " --out " + at("eff") +
                  " --t 0.5 --t 1.5") == 0);
  std::string rows = read_text_file(at("eff/effects.csv"));
  REQUIRE(rows.find("cate_t=0.5,") != std::string::npos);
  REQUIRE(rows.find("cate_t=1.5,") != std::string::npos);
  REQUIRE(rows.find("longitudinal_t=0.5_to_t=1.5,") != std::string::npos);
}

TEST_CASE("harmonize writes the adjusted outcome", "[cli]") {
  REQUIRE(run_cli("harmonize --fit " + at("fit3") + " --data " + at("sim2/panel.csv") +
                  " --out " + at("harm")) == 0);
  CsvTable t = read_csv(at("harm/harmonized.csv"));
  REQUIRE(t.values.rows() == 120);
  REQUIRE(t.col("y_harm") == 5);
  Json summary = read_json(at("harm/summary.json"));
  REQUIRE(std::abs(summary.at("slope_post").get<double>()) <
          std::abs(summary.at("slope_pre").get<double>()));

  REQUIRE(run_cli("harmonize --fit " + at("fit3") + " --data " + at("sim/panel.csv") +
                  " --out " + at("harmbad")) == 2);
  REQUIRE(fs::exists(fs::path(at("harmbad")) / "error.json"));
}

TEST_CASE("diagnostics summarizes the chain", "[cli]") {
  REQUIRE(run_cli("diagnostics --fit " + at("fit3") + " --out " + at("diag")) == 0);
  Json summary = read_json(at("diag/summary.json"));
  REQUIRE(summary.at("n_retained").get<long>() == 50);
  double grow = summary.at("acceptance_mu").at("grow").get<double>();
  REQUIRE(grow >= 0.0);
  REQUIRE(grow <= 1.0);
  REQUIRE(fs::exists(fs::path(at("diag")) / "traces.csv"));
}

TEST_CASE("replicate writes the metrics table", "[cli]") {
  write_cfg("rep.cfg", "max_iter=40\nburn_in=5\nthin=1\nmu_m=4\nstore_max=20\n");
  REQUIRE(run_cli("replicate --generator fully-synthetic --out " + at("rep") +
                  " --reps 1 --sparsity 0.5 --variants base --seed 11 --config " +
                  at("rep.cfg")) == 0);

  std::string metrics = read_text_file(at("rep/metrics.csv"));
  REQUIRE(metrics.rfind("sparsity,variant,metric,mean,stderr,n_reps\n", 0) == 0);
  REQUIRE(metrics.find(",B,param_rmse_gamma,") != std::string::npos);
  Json manifest = read_json(at("rep/manifest.json"));
  REQUIRE(manifest.at("n_attempted").get<int>() == 1);
  REQUIRE(manifest.at("n_failed").get<int>() == 0);
  REQUIRE(fs::exists(fs::path(at("rep")) / "metrics.svg"));

  fs::remove_all(kRoot);
}
