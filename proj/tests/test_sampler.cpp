#include <catch2/catch_amalgamated.hpp>

#include <bcflong/panel.hpp>
#include <bcflong/sampler.hpp>
#include <bcflong/simgen.hpp>

using namespace bcflong;

namespace {

PanelDataset small_panel(std::uint64_t seed = 2) {
  SyntheticConfig c;
  c.N = 30;
  c.n_i = 4;
  c.seed = seed;
  c.sparsity = 0.5;
  return gen_fully_synthetic(c).first;
}

SamplerConfig tiny_config() {
  SamplerConfig cfg;
  cfg.max_iter = 60;
  cfg.burn_in = 20;
  cfg.mu_forest.m = 10;
  cfg.use_tau_forest = false;
  cfg.include_propensity_in_mu = false;
  cfg.seed = 4;
  return cfg;
}

}  // namespace

TEST_CASE("retained count subtracts burn-in after thinning", "[sampler]") {
  SamplerConfig cfg;
  cfg.max_iter = 5000;
  cfg.thin = 1;
  cfg.burn_in = 1000;
  REQUIRE(cfg.retained_count() == 4000);
  cfg.max_iter = 100000;
  cfg.thin = 10;
  cfg.burn_in = 3000;
  REQUIRE(cfg.retained_count() == 7000);

  cfg.max_iter = 100;
  cfg.thin = 1;
  cfg.burn_in = 100;
  REQUIRE_THROWS_AS(cfg.validate(), DataError);
  cfg.burn_in = 10;
  cfg.thin = 0;
  REQUIRE_THROWS_AS(cfg.validate(), DataError);
}

TEST_CASE("same seed reproduces every posterior summary", "[sampler]") {
  PanelDataset d = small_panel();
  SamplerConfig cfg = tiny_config();
  PosteriorDraws a = run_gibbs(d, cfg);
  PosteriorDraws b = run_gibbs(d, cfg);

  REQUIRE((a.mu_mean - b.mu_mean).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((a.gamma_mean - b.gamma_mean).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((a.alpha_mean - b.alpha_mean).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(a.sigma2 == b.sigma2);
  REQUIRE((a.stored_gamma - b.stored_gamma).cwiseAbs().maxCoeff() == 0.0);

  cfg.seed = 5;
  PosteriorDraws c = run_gibbs(d, cfg);
  REQUIRE((a.mu_mean - c.mu_mean).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("chunked runs match a single run exactly", "[sampler]") {
  PanelDataset d = small_panel();
  SamplerConfig cfg = tiny_config();

  GibbsRunner one(d, cfg);
  one.run();
  PosteriorDraws a = one.take();

  GibbsRunner two(d, cfg);
  two.run_until(13);
  REQUIRE(two.iteration() == 13);
  two.run_until(40);
  two.run();
  PosteriorDraws b = two.take();

  REQUIRE((a.mu_mean - b.mu_mean).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((a.alpha_mean - b.alpha_mean).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(a.sigma2 == b.sigma2);
}

TEST_CASE("hooked state satisfies the additive decomposition", "[sampler]") {
  PanelDataset d = small_panel(7);
  SamplerConfig cfg = tiny_config();
  cfg.re_prior = REPrior::horseshoe;

  long calls = 0;
  double worst = 0.0;
  ChainHook hook = [&](const ChainInternals& in) {
    ++calls;
    // gamma rows must be the subject intercept/slope applied to time
    for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
      int s = d.subject_of_row[r];
      double g = in.re_state->alpha(s, 0) + in.re_state->alpha(s, 1) * d.t[r];
      worst = std::max(worst, std::abs((*in.gamma)[r] - g));
    }
    REQUIRE(in.sigma2_std > 0.0);
    REQUIRE(in.mu_fit->allFinite());
  };
  run_gibbs(d, cfg, nullptr, hook);
  REQUIRE(calls == cfg.max_iter);
  REQUIRE(worst < 1e-10);
}

TEST_CASE("stage-three prior choice leaves the forest stages untouched when alpha is pinned",
          "[sampler]") {
  PanelDataset d = small_panel(9);
  SamplerConfig cfg = tiny_config();
  cfg.pin_alpha_zero = true;

  cfg.re_prior = REPrior::base;
  PosteriorDraws a = run_gibbs(d, cfg);
  cfg.re_prior = REPrior::horseshoe;
  PosteriorDraws b = run_gibbs(d, cfg);

  REQUIRE((a.mu_mean - b.mu_mean).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(a.sigma2 == b.sigma2);
  REQUIRE(a.gamma_mean.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(b.alpha_mean.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fixed variance settings pass through to the draws", "[sampler]") {
  PanelDataset d = small_panel(11);
  SamplerConfig cfg = tiny_config();
  cfg.fixed_sigma2 = true;
  cfg.sigma2_value = 2.25;
  PosteriorDraws dr = run_gibbs(d, cfg);
  for (double v : dr.sigma2) REQUIRE(v == Catch::Approx(2.25).margin(1e-10));
}

TEST_CASE("thinning and the storage cap control what is kept", "[sampler]") {
  PanelDataset d = small_panel(13);
  SamplerConfig cfg = tiny_config();
  cfg.max_iter = 40;
  cfg.thin = 4;
  cfg.burn_in = 3;
  cfg.store_max = 1000;
  PosteriorDraws a = run_gibbs(d, cfg);
  REQUIRE(a.n_retained == 7);
  REQUIRE(a.sigma2.size() == 7);
  REQUIRE(a.stored_iters == std::vector<long>{0, 1, 2, 3, 4, 5, 6});
  REQUIRE(a.stored_mu.rows() == 7);

  cfg.store_max = 3;
  PosteriorDraws b = run_gibbs(d, cfg);
  REQUIRE(b.n_retained == 7);
  REQUIRE(b.stored_iters == std::vector<long>{0, 3, 6});
  REQUIRE(b.stored_alpha.size() == 3);
}

TEST_CASE("held-out evaluation draws cover every retained sweep", "[sampler]") {
  PanelDataset d = small_panel(15);
  HoldoutPartition part = partition_holdout(d, 5, 99);
  PanelDataset train = subset_rows(d, part.fit_rows);
  PanelDataset ho = subset_rows(d, part.holdout_rows);

  SamplerConfig cfg = tiny_config();
  PosteriorDraws dr = run_gibbs(train, cfg, &ho);
  REQUIRE(dr.eval_gamma_draws.rows() == cfg.retained_count());
  REQUIRE(dr.eval_gamma_draws.cols() == 5);
  REQUIRE(dr.eval_mu_draws.allFinite());
  REQUIRE(dr.eval_tau_draws.cwiseAbs().maxCoeff() == 0.0);  // no treatment forest here
}

TEST_CASE("evaluation subjects must exist in the training panel", "[sampler]") {
  PanelDataset d = small_panel(17);
  SyntheticConfig other;
  other.N = 4;
  other.n_i = 3;
  other.seed = 1234;
  PanelDataset foreign = gen_fully_synthetic(other).first;
  // relabel so the ids cannot collide
  for (auto& lab : foreign.subject_label) lab += 100000;

  SamplerConfig cfg = tiny_config();
  REQUIRE_THROWS_AS(GibbsRunner(d, cfg, &foreign), DataError);
}

TEST_CASE("posterior mean of alpha matches the mixed-model normal equations", "[sampler]") {
  // forests off, variance components pinned: every alpha draw is an exact
  // Gaussian sample, so the chain mean must land on the closed form
  const int N = 12, ni = 3;
  Eigen::Matrix2d Sigma_B;
  Sigma_B << 0.5, 0.1, 0.1, 0.3;
  const double sigma2 = 0.36;

  RngStream gen(77);
  Eigen::Matrix2d Lc = Eigen::LLT<Eigen::Matrix2d>(Sigma_B).matrixL();
  std::vector<long long> id;
  std::vector<double> tv, yv, zv, kv;
  Eigen::MatrixXd alpha_true(N, 2);
  for (int s = 0; s < N; ++s) {
    Eigen::Vector2d a = Lc * Eigen::Vector2d(gen.normal(), gen.normal());
    alpha_true.row(s) = a.transpose();
    for (int j = 0; j < ni; ++j) {
      double t = j / 2.0;
      id.push_back(s);
      tv.push_back(t);
      yv.push_back(a[0] + a[1] * t + std::sqrt(sigma2) * gen.normal());
      zv.push_back(0.0);
      kv.push_back(gen.uniform());
    }
  }
  Eigen::VectorXd t = Eigen::Map<Eigen::VectorXd>(tv.data(), tv.size());
  Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(yv.data(), yv.size());
  Eigen::VectorXd z = Eigen::Map<Eigen::VectorXd>(zv.data(), zv.size());
  Eigen::MatrixXd K = Eigen::Map<Eigen::MatrixXd>(kv.data(), kv.size(), 1);
  PanelDataset d = build_panel(id, t, y, z, K, {});

  SamplerConfig cfg;
  cfg.max_iter = 1600;
  cfg.burn_in = 100;
  cfg.seed = 31;
  cfg.mu_forest.m = 0;
  cfg.use_tau_forest = false;
  cfg.include_propensity_in_mu = false;
  cfg.re_prior = REPrior::base;
  cfg.standardize = false;
  cfg.fixed_sigma2 = true;
  cfg.sigma2_value = sigma2;
  cfg.fixed_Sigma_B = true;
  cfg.Sigma_B_value = Sigma_B;
  PosteriorDraws dr = run_gibbs(d, cfg);

  const long R = dr.n_retained;
  for (int s = 0; s < N; ++s) {
    auto [b, e] = d.subject_rows[s];
    Eigen::Matrix2d TtT = Eigen::Matrix2d::Zero();
    Eigen::Vector2d TtY = Eigen::Vector2d::Zero();
    for (int r = b; r < e; ++r) {
      Eigen::Vector2d row(1.0, d.t[r]);
      TtT += row * row.transpose();
      TtY += row * d.y[r];
    }
    Eigen::Matrix2d prec = TtT / sigma2 + Sigma_B.inverse();
    Eigen::Matrix2d cov = prec.inverse();
    Eigen::Vector2d mean = cov * (TtY / sigma2);
    for (int c = 0; c < 2; ++c) {
      double mcse = std::sqrt(cov(c, c) / static_cast<double>(R));
      REQUIRE(dr.alpha_mean(s, c) == Catch::Approx(mean[c]).margin(4.0 * mcse));
    }
  }
}
