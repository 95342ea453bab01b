#include <catch2/catch_amalgamated.hpp>

#include <bcflong/simgen.hpp>

#include <set>

using namespace bcflong;

TEST_CASE("friedman surface hits its center value", "[simgen]") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Constant(1, 10, 0.5);
  // 10 sin(pi/4) + 0 + 5 + 2.5
  REQUIRE(friedman_mean(X)[0] == Catch::Approx(14.5710678119).margin(1e-9));
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(1, 5);
  REQUIRE(friedman_mean(Z)[0] == Catch::Approx(5.0));  // only the quadratic term
}

TEST_CASE("noise scale is a fixed fraction of the signal mean", "[simgen]") {
  Eigen::VectorXd v(3);
  v << 1.0, 2.0, 3.0;
  REQUIRE(detail::noise_scale(v, 0.10) == Catch::Approx(0.2).margin(1e-15));
  v << -1.0, -2.0, -3.0;
  REQUIRE(detail::noise_scale(v, 0.10) == Catch::Approx(0.2).margin(1e-15));
  // centered signal falls back to the standard deviation
  Eigen::VectorXd c(2);
  c << 1.0, -1.0;
  REQUIRE(detail::noise_scale(c, 0.10) == Catch::Approx(0.1 * std::sqrt(2.0)).margin(1e-12));
}

TEST_CASE("sparsity mask zeroes the requested share of subjects", "[simgen]") {
  Eigen::MatrixXd alpha = Eigen::MatrixXd::Ones(200, 2);
  auto [masked, mask] = apply_sparsity(alpha, 0.75, 5);
  REQUIRE(mask.size() == 200);
  int zeroed = 0;
  for (int i = 0; i < 200; ++i) {
    if (mask[i]) {
      ++zeroed;
      REQUIRE(masked(i, 0) == 0.0);
      REQUIRE(masked(i, 1) == 0.0);
    } else {
      REQUIRE(masked(i, 0) == 1.0);
    }
  }
  REQUIRE(zeroed == 150);

  auto [m2, k2] = apply_sparsity(alpha, 0.0, 5);
  REQUIRE((m2 - alpha).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("regression generator layout and bookkeeping", "[simgen]") {
  SyntheticConfig cfg;
  cfg.sparsity = 0.5;
  cfg.seed = 8;
  auto [d, gt] = gen_fully_synthetic(cfg);

  REQUIRE(d.n_rows() == 1000);
  REQUIRE(d.n_subjects() == 200);
  REQUIRE(d.K.cols() == 10);
  REQUIRE(d.W.cols() == 0);
  for (int s = 0; s < d.n_subjects(); ++s) REQUIRE(d.n_i(s) == 5);

  // column 7 is the within-subject visit index mapped to [0,1]
  for (int s = 0; s < d.n_subjects(); ++s) {
    auto [b, e] = d.subject_rows[s];
    for (int r = b; r < e; ++r) {
      REQUIRE(d.K(r, 6) == Catch::Approx((r - b) / 4.0).margin(1e-15));
      REQUIRE(d.t[r] == d.K(r, 6));
    }
  }
  for (Eigen::Index r = 0; r < d.n_rows(); ++r) REQUIRE(d.z[r] == -0.5);

  // exact decomposition, no treatment term
  REQUIRE(gt.tau_true.cwiseAbs().maxCoeff() == 0.0);
  Eigen::VectorXd rebuilt = gt.mu_true + gt.gamma_true + gt.eps;
  REQUIRE((d.y - rebuilt).cwiseAbs().maxCoeff() < 1e-10);

  // gamma rows come from the per-subject coefficients
  for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
    int s = d.subject_of_row[r];
    double g = gt.alpha_true(s, 0) + gt.alpha_true(s, 1) * d.t[r];
    REQUIRE(gt.gamma_true[r] == Catch::Approx(g).margin(1e-12));
  }

  int zeroed = 0;
  for (char m : gt.mask) zeroed += m;
  REQUIRE(zeroed == 100);

  REQUIRE(gt.sigma == Catch::Approx(0.10 * std::abs((gt.mu_true + gt.gamma_true).mean())).margin(1e-12));
}

TEST_CASE("regression generator is seed-deterministic", "[simgen]") {
  SyntheticConfig cfg;
  cfg.seed = 10;
  auto [d1, g1] = gen_fully_synthetic(cfg);
  auto [d2, g2] = gen_fully_synthetic(cfg);
  REQUIRE((d1.y - d2.y).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((g1.alpha_true - g2.alpha_true).cwiseAbs().maxCoeff() == 0.0);

  cfg.seed = 11;
  auto [d3, g3] = gen_fully_synthetic(cfg);
  REQUIRE((d1.y - d3.y).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("causal generator layout and bookkeeping", "[simgen]") {
  SemiSyntheticConfig cfg;
  cfg.sparsity = 0.25;
  cfg.seed = 14;
  auto [d, gt] = gen_semi_synthetic(cfg);

  REQUIRE(d.n_rows() == 2583);
  REQUIRE(d.K.cols() == 30);
  REQUIRE(d.W.cols() == 7);  // time is carried separately

  std::set<int> sizes;
  for (int s = 0; s < d.n_subjects(); ++s) {
    sizes.insert(d.n_i(s));
    auto [b, e] = d.subject_rows[s];
    for (int r = b; r < e; ++r) {
      REQUIRE(d.t[r] >= 0.0);
      REQUIRE(d.t[r] <= cfg.t_max);
      if (r > b) {
        REQUIRE(d.t[r] >= d.t[r - 1]);
        REQUIRE((d.W.row(r) - d.W.row(b)).cwiseAbs().maxCoeff() == 0.0);
      }
    }
    REQUIRE((d.z_subject(s) == 0.5 || d.z_subject(s) == -0.5));
  }
  for (int n : sizes) {
    REQUIRE(n >= 2);
    REQUIRE(n <= 4);
  }

  Eigen::VectorXd rebuilt =
      gt.mu_true + gt.tau_true.cwiseProduct(d.z) + gt.gamma_true + gt.eps;
  REQUIRE((d.y - rebuilt).cwiseAbs().maxCoeff() < 1e-9);

  for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
    int s = d.subject_of_row[r];
    double g = gt.alpha_true(s, 0) + gt.alpha_true(s, 1) * d.t[r];
    REQUIRE(gt.gamma_true[r] == Catch::Approx(g).margin(1e-12));
  }

  // both treatment arms appear in reasonable balance
  int treated = 0;
  for (int s = 0; s < d.n_subjects(); ++s) treated += d.z_subject(s) > 0;
  REQUIRE(treated > d.n_subjects() / 4);
  REQUIRE(treated < 3 * d.n_subjects() / 4);

  // the treatment surface moves with time through the last generator column
  double spread = gt.tau_true.maxCoeff() - gt.tau_true.minCoeff();
  REQUIRE(spread > 0.0);
}

TEST_CASE("causal generator is seed-deterministic", "[simgen]") {
  SemiSyntheticConfig cfg;
  cfg.rows = 300;
  cfg.seed = 4;
  auto [d1, g1] = gen_semi_synthetic(cfg);
  auto [d2, g2] = gen_semi_synthetic(cfg);
  REQUIRE((d1.y - d2.y).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((d1.W - d2.W).cwiseAbs().maxCoeff() == 0.0);
  cfg.seed = 5;
  auto [d3, g3] = gen_semi_synthetic(cfg);
  REQUIRE((d1.y - d3.y).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("ground truth files share the panel row order", "[simgen]") {
  SyntheticConfig cfg;
  cfg.N = 10;
  cfg.n_i = 3;
  cfg.seed = 3;
  auto [d, gt] = gen_fully_synthetic(cfg);
  write_ground_truth("gt_test.csv", gt, d);
  write_alpha_truth("alpha_test.csv", gt, d);
  CsvTable g = read_csv("gt_test.csv");
  CsvTable a = read_csv("alpha_test.csv");
  std::remove("gt_test.csv");
  std::remove("alpha_test.csv");

  REQUIRE(g.values.rows() == d.n_rows());
  REQUIRE(a.values.rows() == d.n_subjects());
  Eigen::Index tc = g.col("t"), gc = g.col("gamma_true");
  for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
    REQUIRE(g.values(r, tc) == d.t[r]);
    REQUIRE(g.values(r, gc) == Catch::Approx(gt.gamma_true[r]).margin(1e-9));
  }
}
