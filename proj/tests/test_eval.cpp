#include <catch2/catch_amalgamated.hpp>

#include <bcflong/csv.hpp>
#include <bcflong/eval.hpp>

#include <algorithm>
#include <cstdio>

using namespace bcflong;

TEST_CASE("rmse and pehe follow the root mean square form", "[eval]") {
  Eigen::VectorXd truth(2), est(2);
  truth << 0.0, 0.0;
  est << 3.0, 4.0;
  REQUIRE(rmse(truth, est) == Catch::Approx(std::sqrt(12.5)).margin(1e-12));
  REQUIRE(pehe(truth, est) == Catch::Approx(rmse(truth, est)));

  Eigen::VectorXd same(3);
  same << 1.0, -2.0, 7.0;
  REQUIRE(rmse(same, same) == 0.0);
}

TEST_CASE("rmse is permutation-invariant and absolutely homogeneous", "[eval]") {
  Eigen::VectorXd a(4), b(4);
  a << 1.0, 2.0, 3.0, 4.0;
  b << 1.5, 1.0, 3.5, 5.0;
  double base = rmse(a, b);

  std::vector<int> perm = {2, 0, 3, 1};
  Eigen::VectorXd ap(4), bp(4);
  for (int i = 0; i < 4; ++i) {
    ap[i] = a[perm[i]];
    bp[i] = b[perm[i]];
  }
  REQUIRE(rmse(ap, bp) == Catch::Approx(base).margin(1e-14));

  REQUIRE(rmse(-2.0 * a, -2.0 * b) == Catch::Approx(2.0 * base).margin(1e-12));
  REQUIRE(pehe(0.5 * a, 0.5 * b) == Catch::Approx(0.5 * base).margin(1e-12));
}

TEST_CASE("coverage counts interval hits and averages widths", "[eval]") {
  Eigen::VectorXd truth(3), lo(3), hi(3);
  truth << 1.0, 2.0, 3.0;
  lo << 0.0, 0.0, 2.0;
  hi << 2.0, 1.0, 4.0;
  CoverageResult c = coverage_and_width(truth, lo, hi);
  REQUIRE(c.coverage == Catch::Approx(2.0 / 3.0));
  REQUIRE(c.mean_width == Catch::Approx(5.0 / 3.0));
}

TEST_CASE("least squares slope recovers a linear trend", "[eval]") {
  Eigen::VectorXd x(5), y(5);
  x << 0, 1, 2, 3, 4;
  y = 2.0 * x.array() + 1.0;
  REQUIRE(least_squares_slope(x, y) == Catch::Approx(2.0).margin(1e-12));
  // slope of y on x, not symmetric
  Eigen::VectorXd noisy = y;
  noisy[2] += 3.0;
  REQUIRE(least_squares_slope(x, noisy) == Catch::Approx(2.0).margin(0.5));
}

TEST_CASE("variant labels match the prior names", "[eval]") {
  REQUIRE(variant_name(REPrior::none) == "vanilla-BCF");
  REQUIRE(variant_name(REPrior::base) == "B");
  REQUIRE(variant_name(REPrior::horseshoe) == "S");
}

TEST_CASE("plan presets encode the two study profiles", "[eval]") {
  ReplicationPlan fully = ReplicationPlan::fully_synthetic_default();
  REQUIRE(fully.kind == GeneratorKind::fully_synthetic);
  REQUIRE(fully.sampler.max_iter == 5000);
  REQUIRE(fully.sampler.burn_in == 1000);
  REQUIRE(fully.sampler.mu_forest.m == 100);
  REQUIRE_FALSE(fully.sampler.use_tau_forest);
  REQUIRE(fully.variants.size() == 2);

  ReplicationPlan semi = ReplicationPlan::semi_synthetic_default();
  REQUIRE(semi.kind == GeneratorKind::semi_synthetic);
  REQUIRE(semi.sampler.max_iter == 10000);
  REQUIRE(semi.sampler.burn_in == 3000);
  REQUIRE(semi.variants.size() == 3);
  REQUIRE(semi.sampler.use_tau_forest);

  ReplicationPlan bad = fully;
  bad.holdout_fraction = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("metrics report lookups and csv export", "[eval]") {
  MetricsReport rep;
  rep.rows.push_back({0.75, "S", "param_rmse_gamma", 0.42, 0.01, 20});
  rep.rows.push_back({0.75, "B", "param_rmse_gamma", 0.79, 0.02, 20});
  REQUIRE(rep.value(0.75, "S", "param_rmse_gamma") == 0.42);
  REQUIRE_THROWS_AS(rep.value(0.5, "S", "param_rmse_gamma"), DataError);

  rep.write("metrics_test.csv");
  std::string text = read_text_file("metrics_test.csv");
  std::remove("metrics_test.csv");
  REQUIRE(text.rfind("sparsity,variant,metric,mean,stderr,n_reps\n", 0) == 0);
  REQUIRE(text.find("0.75,S,param_rmse_gamma,0.42,0.01,20\n") != std::string::npos);
}

TEST_CASE("one-replication study produces the full metric block", "[eval]") {
  ReplicationPlan plan = ReplicationPlan::fully_synthetic_default();
  plan.syn.N = 24;
  plan.syn.n_i = 4;
  plan.n_replications = 1;
  plan.sparsity_grid = {0.5};
  plan.seed = 3;
  plan.sampler.max_iter = 60;
  plan.sampler.burn_in = 10;
  plan.sampler.mu_forest.m = 8;
  plan.sampler.store_max = 50;

  std::vector<std::string> progress;
  MetricsReport rep = run_replication_study(plan, [&](const std::string& line) {
    progress.push_back(line);
  });

  REQUIRE(rep.n_attempted == 1);
  REQUIRE(rep.n_failed == 0);
  REQUIRE_FALSE(progress.empty());

  // no treatment forest: pehe rows are absent, everything else present per variant
  std::vector<std::string> metrics = {"param_rmse_y",  "param_rmse_mu",    "param_rmse_gamma",
                                      "param_rmse_alpha1", "param_rmse_alpha2", "pp_rmse_gamma",
                                      "pp_cov_gamma",  "pp_width_gamma",   "pp_rmse_y",
                                      "pp_cov_y",      "pp_width_y"};
  for (const char* variant : {"B", "S"})
    for (const auto& m : metrics) {
      double v = rep.value(0.5, variant, m);
      REQUIRE(std::isfinite(v));
    }
  for (const auto& row : rep.rows) {
    REQUIRE(row.n_reps == 1);
    REQUIRE(row.metric.find("pehe") == std::string::npos);
  }

  // identical plan, identical numbers
  MetricsReport again = run_replication_study(plan);
  REQUIRE(again.value(0.5, "S", "param_rmse_gamma") ==
          rep.value(0.5, "S", "param_rmse_gamma"));
}
