// Acceptance gate. One criterion per invocation: argv[1] in 1..9. Prints a
// single "CRITERION <n> PASS/FAIL: <details>" line on stdout and exits 0/1.
// Study progress for the long-running criteria goes to stderr.

#include <bcflong/estimands.hpp>
#include <bcflong/eval.hpp>
#include <bcflong/forest.hpp>
#include <bcflong/panel.hpp>
#include <bcflong/random_effects.hpp>
#include <bcflong/sampler.hpp>
#include <bcflong/serialize.hpp>
#include <bcflong/simgen.hpp>

#include <boost/math/distributions/inverse_gamma.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace bcflong;
namespace fs = std::filesystem;

namespace {

int report(int n, bool ok, const std::string& details) {
  std::cout << "CRITERION " << n << (ok ? " PASS: " : " FAIL: ") << details << std::endl;
  return ok ? 0 : 1;
}

std::string fmt(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

void progress_to_stderr(const std::string& msg) { std::cerr << msg << std::endl; }

// ---------------------------------------------------------------- criterion 1

// Forests off, residual variance and prior covariance pinned: every alpha
// draw is an exact Gaussian sample from the closed-form conditional, so the
// chain mean must match the GLS posterior mean to Monte Carlo accuracy. The
// draws are iid, which gives the exact MCSE sqrt(cov_cc / R) per component.
int criterion1() {
  const int N = 50, ni = 5;
  Eigen::Matrix2d Sigma_B;
  Sigma_B << 0.5, 0.1, 0.1, 0.3;
  const double sigma2 = 0.36;

  RngStream gen(101);
  Eigen::Matrix2d Lc = Eigen::LLT<Eigen::Matrix2d>(Sigma_B).matrixL();
  std::vector<long long> id;
  std::vector<double> tv, yv, zv, kv;
  for (int s = 0; s < N; ++s) {
    Eigen::Vector2d a = Lc * Eigen::Vector2d(gen.normal(), gen.normal());
    for (int j = 0; j < ni; ++j) {
      double t = j / 2.0;
      id.push_back(s);
      tv.push_back(t);
      yv.push_back(a[0] + a[1] * t + std::sqrt(sigma2) * gen.normal());
      zv.push_back(0.0);
      kv.push_back(gen.uniform());
    }
  }
  Eigen::VectorXd t = Eigen::Map<Eigen::VectorXd>(tv.data(), static_cast<long>(tv.size()));
  Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(yv.data(), static_cast<long>(yv.size()));
  Eigen::VectorXd z = Eigen::Map<Eigen::VectorXd>(zv.data(), static_cast<long>(zv.size()));
  Eigen::MatrixXd K = Eigen::Map<Eigen::MatrixXd>(kv.data(), static_cast<long>(kv.size()), 1);
  PanelDataset d = build_panel(id, t, y, z, K, {});

  SamplerConfig cfg;
  cfg.max_iter = 4200;
  cfg.burn_in = 200;
  cfg.seed = 32;
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

  const double R = static_cast<double>(dr.n_retained);
  double max_z = 0.0, sum_z2 = 0.0;
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
      double mcse = std::sqrt(cov(c, c) / R);
      double zscore = (dr.alpha_mean(s, c) - mean[c]) / mcse;
      max_z = std::max(max_z, std::abs(zscore));
      sum_z2 += zscore * zscore;
    }
  }
  double rms = std::sqrt(sum_z2 / (2.0 * N));
  std::ostringstream os;
  os << "Gibbs alpha mean vs closed-form GLS over " << 2 * N << " components: max |z| = "
     << fmt(max_z) << " (bound 3 MCSE), z RMS = " << fmt(rms) << ", R = "
     << dr.n_retained << " retained draws";
  return report(1, max_z <= 3.0, os.str());
}

// ---------------------------------------------------------------- criterion 2

// Each horseshoe conditional against an independent inverse-CDF sampler on
// pinned inputs. Shape-1 conditionals have no mean, so the moment check uses
// E[1/X] = shape/rate, which always exists; deciles cover the full shape.
struct CondCheck {
  std::string name;
  double shape, rate;
  double max_decile_rel = 0.0;
  double inv_mean_rel = 0.0;
  bool pass(double tol) const { return max_decile_rel <= tol && inv_mean_rel <= tol; }
};

void compare_to_reference(CondCheck& c, std::vector<double>& ours, std::uint64_t ref_seed) {
  const std::size_t n = ours.size();
  boost::math::inverse_gamma_distribution<double> dist(c.shape, c.rate);
  std::mt19937 ref_gen(static_cast<std::uint32_t>(ref_seed));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> ref(n);
  for (std::size_t i = 0; i < n; ++i) ref[i] = boost::math::quantile(dist, unif(ref_gen));

  std::sort(ours.begin(), ours.end());
  std::sort(ref.begin(), ref.end());
  for (int dec = 1; dec <= 9; ++dec) {
    double p = dec / 10.0;
    double q_ours = empirical_quantile(ours, p);
    double q_ref = empirical_quantile(ref, p);
    c.max_decile_rel = std::max(c.max_decile_rel, std::abs(q_ours - q_ref) / q_ref);
  }
  double inv_mean = 0.0;
  for (double x : ours) inv_mean += 1.0 / x;
  inv_mean /= static_cast<double>(n);
  double analytic = c.shape / c.rate;  // 1/X ~ Gamma(shape, rate)
  c.inv_mean_rel = std::abs(inv_mean - analytic) / analytic;
}

int criterion2() {
  // plug-in shapes and rates must come out exactly
  bool plugins = local_lambda_rate(2.0, 1.0, 1.0) == 3.0 && local_v_rate(1.0, 0.5) == 3.0 &&
                 global_rho_shape(4) == 2.5 && global_rho_shape(1000) == 500.5 &&
                 global_rho_rate(1.0, 4.0) == 3.0 && global_xi_rate(1.0, 0.25) == 5.0;
  if (!plugins) return report(2, false, "plug-in inverse-gamma shapes/rates are not exact");

  const std::size_t n = 100000;
  RngStream rng(2024);

  // lambda2 end to end: alpha = 2, v and rho2 reset to 1 before every call,
  // so the conditional is IG(1, 1/1 + 4/2) = IG(1, 3)
  CondCheck lam{"lambda2", 1.0, 3.0};
  {
    RandomEffectState st = RandomEffectState::zero(1);
    st.alpha(0, 0) = 2.0;
    HorseshoeState hs = HorseshoeState::init(1);
    std::vector<double> draws(n);
    for (std::size_t i = 0; i < n; ++i) {
      hs.v.setOnes();
      hs.rho2.setOnes();
      update_horseshoe_local(st, hs, rng);
      draws[i] = hs.lambda2(0, 0);
    }
    compare_to_reference(lam, draws, 7001);
  }

  // v primitive at the plug-in rate: IG(1, 1/1 + 1/0.5) = IG(1, 3)
  CondCheck vv{"v", 1.0, local_v_rate(1.0, 0.5)};
  {
    std::vector<double> draws(n);
    for (std::size_t i = 0; i < n; ++i) draws[i] = rng.inv_gamma(vv.shape, vv.rate);
    compare_to_reference(vv, draws, 7002);
  }

  // rho2 end to end: N = 4 subjects, alpha = 1, lambda2 and xi reset to 1, so
  // the conditional is IG((4+1)/2, 1/1 + 4/2) = IG(2.5, 3) with mean 2
  CondCheck rho{"rho2", 2.5, 3.0};
  double rho_mean = 0.0;
  {
    RandomEffectState st = RandomEffectState::zero(4);
    st.alpha.setOnes();
    HorseshoeState hs = HorseshoeState::init(4);
    std::vector<double> draws(n);
    for (std::size_t i = 0; i < n; ++i) {
      hs.lambda2.setOnes();
      hs.xi.setOnes();
      update_horseshoe_global(st, hs, 1.0, rng);
      draws[i] = hs.rho2[0];
      rho_mean += draws[i];
    }
    rho_mean /= static_cast<double>(n);
    compare_to_reference(rho, draws, 7003);
  }

  // xi primitive at the plug-in rate: IG(1, 1/1 + 1/0.25) = IG(1, 5)
  CondCheck xi{"xi", 1.0, global_xi_rate(1.0, 0.25)};
  {
    std::vector<double> draws(n);
    for (std::size_t i = 0; i < n; ++i) draws[i] = rng.inv_gamma(xi.shape, xi.rate);
    compare_to_reference(xi, draws, 7004);
  }

  const double tol = 0.02;
  double rho_mean_rel = std::abs(rho_mean - 2.0) / 2.0;
  bool ok = lam.pass(tol) && vv.pass(tol) && rho.pass(tol) && xi.pass(tol) &&
            rho_mean_rel <= tol;
  std::ostringstream os;
  os << "IG conditionals vs inverse-CDF reference, " << n << " draws each: rates exact "
     << "(lambda2 3, v 3, rho2 [2.5, 3], xi 5); decile rel err lambda2 "
     << fmt(lam.max_decile_rel) << ", v " << fmt(vv.max_decile_rel) << ", rho2 "
     << fmt(rho.max_decile_rel) << ", xi " << fmt(xi.max_decile_rel)
     << "; E[1/X] rel err max "
     << fmt(std::max({lam.inv_mean_rel, vv.inv_mean_rel, rho.inv_mean_rel, xi.inv_mean_rel}))
     << "; rho2 mean " << fmt(rho_mean) << " vs 2 (all bounds 2%)";
  return report(2, ok, os.str());
}

// ---------------------------------------------------------------- criterion 3

// With zero data rows every Metropolis step targets the tree prior itself,
// so the long-run leaf-count distribution must match the analytic prior.
int criterion3() {
  ForestConfig fc;
  fc.m = 1;
  fc.eta = 0.95;
  fc.beta = 2.0;
  const int p = 3;
  CutGrids grids = CutGrids::from_ranges(Eigen::VectorXd::Zero(p), Eigen::VectorXd::Ones(p), 100);
  SoftTreeEnsemble e = make_ensemble(fc, Eigen::MatrixXd(0, p), &grids);
  Eigen::VectorXd R0(0);
  RngStream rng(5);

  const long burn = 1000, sweeps = 200000;
  for (long i = 0; i < burn; ++i) backfit_sweep(e, R0, 1.0, rng);
  std::vector<long> counts(6, 0);
  for (long i = 0; i < sweeps; ++i) {
    backfit_sweep(e, R0, 1.0, rng);
    int L = std::min(e.trees[0].n_leaves(), 5);
    ++counts[static_cast<std::size_t>(L)];
  }
  const std::vector<double> target = {0.05, 0.55, 0.28, 0.09, 0.03};
  double max_dev = 0.0;
  std::ostringstream props;
  for (int L = 1; L <= 5; ++L) {
    double prop = static_cast<double>(counts[static_cast<std::size_t>(L)]) /
                  static_cast<double>(sweeps);
    max_dev = std::max(max_dev, std::abs(prop - target[static_cast<std::size_t>(L - 1)]));
    props << (L > 1 ? "/" : "") << fmt(prop, 3);
  }
  std::ostringstream os;
  os << "leaf-count proportions " << props.str() << " vs prior 0.05/0.55/0.28/0.09/0.03 over "
     << sweeps << " sweeps, max abs deviation " << fmt(max_dev) << " (bound 0.03)";
  return report(3, max_dev <= 0.03, os.str());
}

// ---------------------------------------------------------------- criterion 4

// The reference results are reported for an outcome with roughly unit spread;
// this generator pins the noise to 10% of the outcome mean, which puts the
// raw outcome scale near 14. Orderings and the width ratio are checked on the
// raw values; magnitudes are checked after dividing by the noiseless outcome
// standard deviation averaged over the exact replication datasets.
int criterion4() {
  ReplicationPlan plan = ReplicationPlan::fully_synthetic_default();
  plan.sparsity_grid = {0.75};
  plan.n_replications = 20;
  plan.seed = 0;
  MetricsReport rep = run_replication_study(plan, progress_to_stderr);

  double rS = rep.value(0.75, "S", "param_rmse_gamma");
  double rB = rep.value(0.75, "B", "param_rmse_gamma");
  double wS = rep.value(0.75, "S", "pp_width_gamma");
  double wB = rep.value(0.75, "B", "pp_width_gamma");

  double sd_sum = 0.0;
  for (int k = 0; k < plan.n_replications; ++k) {
    SyntheticConfig c = plan.syn;
    c.sparsity = 0.75;
    c.seed = derive_seed(plan.seed, (1ull << 32) | static_cast<std::uint64_t>(k));
    auto [d, gt] = gen_fully_synthetic(c);
    Eigen::VectorXd f = gt.mu_true + gt.gamma_true;
    double m = f.mean();
    sd_sum += std::sqrt((f.array() - m).square().sum() / static_cast<double>(f.size() - 1));
  }
  double sd = sd_sum / plan.n_replications;

  auto in_band = [](double v, double target) { return std::abs(v - target) <= 0.5 * target; };
  bool order_ok = rS < rB;
  bool width_ok = wS < 0.7 * wB;
  bool mags_ok = in_band(rS / sd, 0.08) && in_band(rB / sd, 0.13) && in_band(wS / sd, 0.46) &&
                 in_band(wB / sd, 0.99);
  std::ostringstream os;
  os << "gamma RMSE S " << fmt(rS) << " < B " << fmt(rB) << " is " << (order_ok ? "true" : "FALSE")
     << "; CI width S " << fmt(wS) << " < 0.7*B = " << fmt(0.7 * wB) << " is "
     << (width_ok ? "true" : "FALSE") << "; outcome-SD-normalized (SD " << fmt(sd)
     << ", band +/-50%): RMSE S " << fmt(rS / sd) << " vs 0.08, B " << fmt(rB / sd)
     << " vs 0.13, width S " << fmt(wS / sd) << " vs 0.46, B " << fmt(wB / sd) << " vs 0.99";
  return report(4, order_ok && width_ok && mags_ok, os.str());
}

// ---------------------------------------------------------------- criterion 5

int criterion5() {
  ReplicationPlan plan = ReplicationPlan::semi_synthetic_default();
  plan.sparsity_grid = {0.75};
  plan.n_replications = 20;
  plan.seed = 0;
  MetricsReport rep = run_replication_study(plan, progress_to_stderr);

  double pehe_v = rep.value(0.75, "vanilla-BCF", "pp_pehe");
  double pehe_b = rep.value(0.75, "B", "pp_pehe");
  double pehe_s = rep.value(0.75, "S", "pp_pehe");
  double cov_s = rep.value(0.75, "S", "pp_cov_y");
  bool order_ok = pehe_s < pehe_b && pehe_b < pehe_v;
  bool cov_ok = cov_s >= 0.85 && cov_s <= 0.99;
  std::ostringstream os;
  os << "held-out PEHE S " << fmt(pehe_s) << " < B " << fmt(pehe_b) << " < vanilla-BCF "
     << fmt(pehe_v) << " is " << (order_ok ? "true" : "FALSE")
     << " (reference 0.16 < 0.52 < 0.73); S outcome coverage " << fmt(cov_s)
     << " in [0.85, 0.99] is " << (cov_ok ? "true" : "FALSE") << " (reference 0.94)";
  return report(5, order_ok && cov_ok, os.str());
}

// ---------------------------------------------------------------- criterion 6

int criterion6() {
  ReplicationPlan plan = ReplicationPlan::fully_synthetic_default();
  plan.sparsity_grid = {0.0};
  plan.n_replications = 20;
  plan.seed = 0;
  MetricsReport rep = run_replication_study(plan, progress_to_stderr);

  double rS = rep.value(0.0, "S", "pp_rmse_y");
  double rB = rep.value(0.0, "B", "pp_rmse_y");
  double rel = std::abs(rS - rB) / rB;
  std::ostringstream os;
  os << "held-out outcome RMSE at 0% sparsity: S " << fmt(rS) << ", B " << fmt(rB)
     << ", relative gap " << fmt(100.0 * rel) << "% (bound 10%, reference 0.32 vs 0.31)";
  return report(6, rel <= 0.10, os.str());
}

// ---------------------------------------------------------------- criterion 7

int criterion7() {
  SemiSyntheticConfig sc;
  sc.rows = 600;
  sc.sparsity = 0.5;
  sc.seed = 42;
  PanelDataset d = gen_semi_synthetic(sc).first;

  SamplerConfig cfg;
  cfg.max_iter = 400;
  cfg.burn_in = 100;
  cfg.store_max = 300;
  cfg.mu_forest.m = 20;
  cfg.tau_forest.m = 10;
  cfg.re_prior = REPrior::horseshoe;
  cfg.seed = 7;
  PosteriorDraws dr = run_gibbs(d, cfg);

  RngStream pick(99);
  double max_diff = 0.0;
  for (int k = 0; k < 100; ++k) {
    int i = static_cast<int>(pick.uniform_int(static_cast<std::uint64_t>(dr.n_subjects())));
    double t = pick.uniform(0.0, sc.t_max);
    Eigen::MatrixXd plus = counterfactual_draws(dr, i, 0.5, {t});
    Eigen::MatrixXd minus = counterfactual_draws(dr, i, -0.5, {t});
    std::vector<double> tau = tau_draws_at(dr, dr.W_subjects.row(i), t);
    for (long s = 0; s < dr.n_stored(); ++s) {
      double contrast = plus(s, 0) - minus(s, 0);
      max_diff = std::max(max_diff, std::abs(contrast - tau[static_cast<std::size_t>(s)]));
    }
  }

  EffectSummary same = longitudinal_effect(dr, dr.W_subjects.row(0), 0.7, 0.7);
  bool zero_ok = same.mean == 0.0 && same.lo == 0.0 && same.hi == 0.0 &&
                 same.n_draws == static_cast<long>(dr.tau_forests.size());
  bool contrast_ok = max_diff <= 1e-10;
  std::ostringstream os;
  os << "max |counterfactual contrast - tau draw| = " << fmt(max_diff)
     << " over 100 random subject/time pairs x " << dr.n_stored()
     << " draws (bound 1e-10); longitudinal effect at equal times is "
     << (zero_ok ? "exactly zero" : "NOT zero") << " with " << same.n_draws << " draws";
  return report(7, contrast_ok && zero_ok, os.str());
}

// ---------------------------------------------------------------- criterion 8

int criterion8() {
  SemiSyntheticConfig sc;
  sc.seed = 1;
  PanelDataset d = gen_semi_synthetic(sc).first;

  SamplerConfig cfg;
  cfg.max_iter = 10000;
  cfg.burn_in = 3000;
  cfg.re_prior = REPrior::horseshoe;
  cfg.seed = 2;
  PosteriorDraws dr = run_gibbs(d, cfg);

  HarmonizedOutcome h = harmonize(dr, d);
  double slope_pre = least_squares_slope(h.mu_hat, h.y);
  double slope_post = least_squares_slope(h.mu_hat, h.y_harm);
  bool ok = slope_pre > 0.3 && std::abs(slope_post) < 0.05;
  std::ostringstream os;
  os << "outcome-on-estimated-prognostic-effect slope " << fmt(slope_pre)
     << " before harmonization (bound > 0.3), " << fmt(slope_post)
     << " after (bound |.| < 0.05), " << d.n_rows() << " rows";
  return report(8, ok, os.str());
}

// ---------------------------------------------------------------- criterion 9

int run_cli(const std::string& args) {
  std::string cmd = std::string(BCFLONG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -2;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Byte compare two run directories, ignoring only the wall-clock log.
bool dirs_identical(const fs::path& a, const fs::path& b, long& n_files, std::string& why) {
  std::vector<fs::path> rels;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    fs::path rel = fs::relative(entry.path(), a);
    if (rel.filename() == "timings.json") continue;
    rels.push_back(rel);
  }
  long n_b = 0;
  for (const auto& entry : fs::recursive_directory_iterator(b)) {
    if (entry.is_regular_file() && entry.path().filename() != "timings.json") ++n_b;
  }
  if (static_cast<long>(rels.size()) != n_b) {
    why = a.filename().string() + " and " + b.filename().string() + " hold " +
          std::to_string(rels.size()) + " vs " + std::to_string(n_b) + " files";
    return false;
  }
  for (const auto& rel : rels) {
    if (!fs::exists(b / rel)) {
      why = (b / rel).string() + " missing";
      return false;
    }
    if (slurp(a / rel) != slurp(b / rel)) {
      why = rel.string() + " differs between " + a.filename().string() + " and " +
            b.filename().string();
      return false;
    }
  }
  n_files += static_cast<long>(rels.size());
  return true;
}

int criterion9() {
  fs::path base = fs::absolute("acceptance_c9");
  fs::remove_all(base);
  fs::create_directories(base);
  auto at = [&](const std::string& leaf) { return (base / leaf).string(); };

  write_text_file(at("gen.cfg"), "N=20\nn_i=3\np=10\nsparsity=0.5\n");
  write_text_file(at("sgen.cfg"), "rows=120\nsparsity=0.5\n");
  write_text_file(at("fit.cfg"),
                  "max_iter=80\nburn_in=20\nthin=1\nmu_m=8\nuse_tau_forest=false\n"
                  "include_propensity_in_mu=false\nstore_max=10\n");
  write_text_file(at("sfit.cfg"), "max_iter=60\nburn_in=10\nthin=1\nmu_m=8\ntau_m=4\nstore_max=5\n");
  write_text_file(at("rep.cfg"), "max_iter=40\nburn_in=5\nthin=1\nmu_m=4\nstore_max=20\n");

  struct Step {
    std::string name, args_a, args_b;
  };
  std::vector<Step> steps;
  auto paired = [&](const std::string& name, const std::string& head, const std::string& tail) {
    steps.push_back({name, head + at(name + "_a") + tail, head + at(name + "_b") + tail});
  };

  paired("sim", "simulate --preset fully-synthetic --out ",
         " --config " + at("gen.cfg") + " --seed 5");
  paired("ssim", "simulate --preset semi-synthetic --out ",
         " --config " + at("sgen.cfg") + " --seed 3");
  for (const auto& s : steps) {
    if (run_cli(s.args_a) != 0 || run_cli(s.args_b) != 0)
      return report(9, false, s.name + " run did not exit cleanly");
  }
  std::size_t done = steps.size();

  paired("fit", "fit --data " + at("sim_a/panel.csv") + " --out ",
         " --config " + at("fit.cfg") + " --seed 7");
  paired("sfit", "fit --data " + at("ssim_a/panel.csv") + " --out ",
         " --config " + at("sfit.cfg") + " --seed 9");
  for (std::size_t i = done; i < steps.size(); ++i) {
    if (run_cli(steps[i].args_a) != 0 || run_cli(steps[i].args_b) != 0)
      return report(9, false, steps[i].name + " run did not exit cleanly");
  }
  done = steps.size();

  long long subject = load_draws(at("fit_a/draws")).subject_label.front();
  paired("pred", "predict --fit " + at("fit_a") + " --out ",
         " --subject " + std::to_string(subject) + " --z both --times 0,1,2");
  paired("eff", "effects --fit " + at("sfit_a") + " --out ", " --t 0.5 --t 1.5");
  paired("harm", "harmonize --fit " + at("sfit_a") + " --data " + at("ssim_a/panel.csv") +
                     " --out ", "");
  paired("diag", "diagnostics --fit " + at("sfit_a") + " --out ", "");
  paired("rep", "replicate --generator fully-synthetic --out ",
         " --config " + at("rep.cfg") + " --reps 1 --sparsity 0.5 --variants base --seed 11");
  for (std::size_t i = done; i < steps.size(); ++i) {
    if (run_cli(steps[i].args_a) != 0 || run_cli(steps[i].args_b) != 0)
      return report(9, false, steps[i].name + " run did not exit cleanly");
  }

  long n_files = 0;
  for (const auto& s : steps) {
    std::string why;
    if (!dirs_identical(base / (s.name + "_a"), base / (s.name + "_b"), n_files, why))
      return report(9, false, s.name + " re-run is not byte-identical: " + why);
  }
  fs::remove_all(base);
  std::ostringstream os;
  os << steps.size() << " paired re-runs across all 7 subcommands byte-identical ("
     << n_files << " files compared, timings.json excluded)";
  return report(9, true, os.str());
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: bcflong_acceptance <criterion 1..9>\n";
    return 2;
  }
  int n = std::atoi(argv[1]);
  try {
    switch (n) {
      case 1: return criterion1();
      case 2: return criterion2();
      case 3: return criterion3();
      case 4: return criterion4();
      case 5: return criterion5();
      case 6: return criterion6();
      case 7: return criterion7();
      case 8: return criterion8();
      case 9: return criterion9();
      default:
        std::cerr << "usage: bcflong_acceptance <criterion 1..9>\n";
        return 2;
    }
  } catch (const std::exception& ex) {
    return report(n, false, std::string("unexpected exception: ") + ex.what());
  }
}
