#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "bcflong/common.hpp"
#include "bcflong/csv.hpp"
#include "bcflong/panel.hpp"
#include "bcflong/sampler.hpp"
#include "bcflong/simgen.hpp"

namespace bcflong {

inline double rmse(const Eigen::VectorXd& truth, const Eigen::VectorXd& estimate) {
  require(truth.size() == estimate.size() && truth.size() >= 1, "rmse length mismatch");
  return std::sqrt((truth - estimate).squaredNorm() / static_cast<double>(truth.size()));
}

// same root-mean-square, named for its causal use over all (i,j)
inline double pehe(const Eigen::VectorXd& tau_true, const Eigen::VectorXd& tau_hat) {
  require(tau_true.size() == tau_hat.size() && tau_true.size() >= 1, "pehe length mismatch");
  return std::sqrt((tau_true - tau_hat).squaredNorm() / static_cast<double>(tau_true.size()));
}

struct CoverageResult {
  double coverage = 0.0;
  double mean_width = 0.0;
};

inline CoverageResult coverage_and_width(const Eigen::VectorXd& truth, const Eigen::VectorXd& lower,
                                         const Eigen::VectorXd& upper) {
  require(truth.size() == lower.size() && truth.size() == upper.size() && truth.size() >= 1,
          "coverage length mismatch");
  CoverageResult res;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    require(lower[i] <= upper[i], "interval bounds out of order at entry " + std::to_string(i + 1));
    if (truth[i] >= lower[i] && truth[i] <= upper[i]) res.coverage += 1.0;
    res.mean_width += upper[i] - lower[i];
  }
  res.coverage /= static_cast<double>(truth.size());
  res.mean_width /= static_cast<double>(truth.size());
  return res;
}

inline double least_squares_slope(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  require(x.size() == y.size() && x.size() >= 2, "slope needs two paired points");
  double xm = x.mean(), ym = y.mean();
  double sxx = (x.array() - xm).square().sum();
  require(sxx > 0.0, "slope undefined for constant x");
  return (x.array() - xm).cwiseProduct(y.array() - ym).sum() / sxx;
}

enum class GeneratorKind { fully_synthetic, semi_synthetic };

inline std::string variant_name(REPrior p) {
  switch (p) {
    case REPrior::none:
      return "vanilla-BCF";
    case REPrior::base:
      return "B";
    case REPrior::horseshoe:
      return "S";
  }
  return "?";
}

struct ReplicationPlan {
  GeneratorKind kind = GeneratorKind::fully_synthetic;
  SyntheticConfig syn;
  SemiSyntheticConfig semi;
  std::vector<double> sparsity_grid = {0.0};
  std::vector<REPrior> variants = {REPrior::base, REPrior::horseshoe};
  int n_replications = 20;
  SamplerConfig sampler;  // template; seed and re_prior set per run
  double holdout_fraction = 0.10;
  std::uint64_t seed = 0;
  int n_workers = 1;

  // paper run profiles; single 100-tree ensemble for the regression-only
  // study, full two-forest decomposition for the causal one
  static ReplicationPlan fully_synthetic_default() {
    ReplicationPlan p;
    p.kind = GeneratorKind::fully_synthetic;
    p.sampler.max_iter = 5000;
    p.sampler.burn_in = 1000;
    p.sampler.mu_forest.m = 100;
    p.sampler.use_tau_forest = false;
    p.sampler.include_propensity_in_mu = false;
    return p;
  }

  static ReplicationPlan semi_synthetic_default() {
    ReplicationPlan p;
    p.kind = GeneratorKind::semi_synthetic;
    p.variants = {REPrior::none, REPrior::base, REPrior::horseshoe};
    p.sampler.max_iter = 10000;
    p.sampler.burn_in = 3000;
    return p;
  }

  void validate() const {
    require(n_replications >= 1, "replication count must be at least 1");
    require(holdout_fraction > 0.0 && holdout_fraction < 1.0, "holdout fraction must be in (0,1)");
    require(!variants.empty() && !sparsity_grid.empty(), "empty variant or sparsity grid");
    for (double s : sparsity_grid) require(s >= 0.0 && s < 1.0, "sparsity must be in [0,1)");
    require(n_workers >= 1, "worker count must be positive");
  }
};

struct MetricRow {
  double sparsity = 0.0;
  std::string variant;
  std::string metric;
  double mean = 0.0;
  double stderr_mean = 0.0;
  long n_reps = 0;
};

struct MetricsReport {
  std::vector<MetricRow> rows;
  long n_attempted = 0;
  long n_failed = 0;
  std::vector<std::string> failures;

  double value(double sparsity, const std::string& variant, const std::string& metric) const {
    for (const auto& r : rows)
      if (r.sparsity == sparsity && r.variant == variant && r.metric == metric) return r.mean;
    throw DataError("no report row for sparsity=" + format_double(sparsity) + " variant=" +
                    variant + " metric=" + metric);
  }

  void write(const std::string& path) const {
    std::string out = "sparsity,variant,metric,mean,stderr,n_reps\n";
    for (const auto& r : rows) {
      out += format_double(r.sparsity) + "," + r.variant + "," + r.metric + "," +
             format_double(r.mean) + "," + format_double(r.stderr_mean) + "," +
             std::to_string(r.n_reps) + "\n";
    }
    write_text_file(path, out);
  }
};

namespace detail {

inline std::pair<PanelDataset, GroundTruth> generate_for(const ReplicationPlan& plan,
                                                         double sparsity, std::uint64_t seed) {
  if (plan.kind == GeneratorKind::fully_synthetic) {
    SyntheticConfig c = plan.syn;
    c.sparsity = sparsity;
    c.seed = seed;
    return gen_fully_synthetic(c);
  }
  SemiSyntheticConfig c = plan.semi;
  c.sparsity = sparsity;
  c.seed = seed;
  return gen_semi_synthetic(c);
}

// All metrics for one fitted variant on one realization. Held-out targets are
// the latent noiseless quantities; intervals are posterior credible intervals
// of those latents from the per-draw evaluation matrices.
inline std::map<std::string, double> score_fit(const PosteriorDraws& dr, const GroundTruth& gt,
                                               const HoldoutPartition& part,
                                               const PanelDataset& full, bool has_tau) {
  std::map<std::string, double> m;
  const auto& fr = part.fit_rows;
  const Eigen::Index nf = static_cast<Eigen::Index>(fr.size());

  Eigen::VectorXd mu_t(nf), tau_t(nf), gamma_t(nf), z_t(nf);
  for (Eigen::Index i = 0; i < nf; ++i) {
    mu_t[i] = gt.mu_true[fr[i]];
    tau_t[i] = gt.tau_true[fr[i]];
    gamma_t[i] = gt.gamma_true[fr[i]];
    z_t[i] = full.z[fr[i]];
  }
  Eigen::VectorXd y_noiseless = mu_t + tau_t.cwiseProduct(z_t) + gamma_t;
  Eigen::VectorXd y_hat = dr.mu_mean + dr.tau_mean.cwiseProduct(dr.train_z) + dr.gamma_mean;

  m["param_rmse_y"] = rmse(y_noiseless, y_hat);
  m["param_rmse_mu"] = rmse(mu_t, dr.mu_mean);
  m["param_rmse_gamma"] = rmse(gamma_t, dr.gamma_mean);
  m["param_rmse_alpha1"] = rmse(gt.alpha_true.col(0), dr.alpha_mean.col(0));
  m["param_rmse_alpha2"] = rmse(gt.alpha_true.col(1), dr.alpha_mean.col(1));
  if (has_tau) m["param_pehe"] = pehe(tau_t, dr.tau_mean);

  const auto& hr = part.holdout_rows;
  const Eigen::Index nh = static_cast<Eigen::Index>(hr.size());
  require(dr.eval_gamma_draws.cols() == nh, "evaluation draws missing for held-out rows");

  Eigen::VectorXd hmu(nh), htau(nh), hgamma(nh), hz(nh);
  for (Eigen::Index i = 0; i < nh; ++i) {
    hmu[i] = gt.mu_true[hr[i]];
    htau[i] = gt.tau_true[hr[i]];
    hgamma[i] = gt.gamma_true[hr[i]];
    hz[i] = full.z[hr[i]];
  }
  Eigen::VectorXd hy = hmu + htau.cwiseProduct(hz) + hgamma;

  const long R = dr.eval_gamma_draws.rows();
  Eigen::VectorXd g_mean(nh), g_lo(nh), g_hi(nh), y_mean(nh), y_lo(nh), y_hi(nh), t_mean(nh);
  std::vector<double> col(R);
  for (Eigen::Index j = 0; j < nh; ++j) {
    for (long k = 0; k < R; ++k) col[k] = dr.eval_gamma_draws(k, j);
    g_mean[j] = Eigen::Map<Eigen::VectorXd>(col.data(), R).mean();
    g_lo[j] = empirical_quantile(col, 0.025);
    g_hi[j] = empirical_quantile(col, 0.975);

    for (long k = 0; k < R; ++k)
      col[k] = dr.eval_mu_draws(k, j) + dr.eval_tau_draws(k, j) * hz[j] + dr.eval_gamma_draws(k, j);
    y_mean[j] = Eigen::Map<Eigen::VectorXd>(col.data(), R).mean();
    y_lo[j] = empirical_quantile(col, 0.025);
    y_hi[j] = empirical_quantile(col, 0.975);

    t_mean[j] = dr.eval_tau_draws.col(j).mean();
  }

  m["pp_rmse_gamma"] = rmse(hgamma, g_mean);
  CoverageResult cg = coverage_and_width(hgamma, g_lo, g_hi);
  m["pp_cov_gamma"] = cg.coverage;
  m["pp_width_gamma"] = cg.mean_width;

  m["pp_rmse_y"] = rmse(hy, y_mean);
  CoverageResult cy = coverage_and_width(hy, y_lo, y_hi);
  m["pp_cov_y"] = cy.coverage;
  m["pp_width_y"] = cy.mean_width;

  if (has_tau) m["pp_pehe"] = pehe(htau, t_mean);
  return m;
}

struct RepResult {
  bool ok = false;
  std::string error;
  std::vector<std::map<std::string, double>> per_variant;
};

}  // namespace detail

// Generates one realization per (sparsity, replication), fits every variant
// on the same fit/holdout split, scores against the stored truth, and
// aggregates means with Monte Carlo standard errors. A replication that
// fails for any variant is dropped whole so comparisons stay paired; more
// than 10% dropped aborts the study.
inline MetricsReport run_replication_study(
    const ReplicationPlan& plan, std::function<void(const std::string&)> progress = nullptr) {
  plan.validate();
  const int ns = static_cast<int>(plan.sparsity_grid.size());
  const int nr = plan.n_replications;
  const int nv = static_cast<int>(plan.variants.size());

  std::vector<detail::RepResult> results(static_cast<std::size_t>(ns) * nr);
  std::atomic<int> next{0};
  std::mutex log_mutex;

  auto run_task = [&](int task) {
    int si = task / nr;
    int k = task % nr;
    double sparsity = plan.sparsity_grid[si];
    std::uint64_t data_seed =
        derive_seed(plan.seed, (static_cast<std::uint64_t>(si) + 1) << 32 | static_cast<std::uint64_t>(k));
    detail::RepResult& slot = results[static_cast<std::size_t>(task)];
    try {
      auto [d, gt] = detail::generate_for(plan, sparsity, data_seed);
      int x = std::max(1, static_cast<int>(std::lround(plan.holdout_fraction * d.n_subjects())));
      HoldoutPartition part = partition_holdout(d, x, derive_seed(data_seed, 11));
      PanelDataset fit_panel = subset_rows(d, part.fit_rows);
      PanelDataset eval_panel = subset_rows(d, part.holdout_rows);

      slot.per_variant.resize(nv);
      for (int v = 0; v < nv; ++v) {
        SamplerConfig cfg = plan.sampler;
        cfg.re_prior = plan.variants[v];
        cfg.seed = derive_seed(data_seed, 21 + static_cast<std::uint64_t>(v));
        PosteriorDraws dr = run_gibbs(fit_panel, cfg, &eval_panel);
        slot.per_variant[v] =
            detail::score_fit(dr, gt, part, d, cfg.use_tau_forest && cfg.tau_forest.m > 0);
      }
      slot.ok = true;
    } catch (const std::exception& ex) {
      slot.ok = false;
      slot.error = "sparsity " + format_double(sparsity) + " replication " + std::to_string(k + 1) +
                   ": " + ex.what();
    }
    if (progress) {
      std::lock_guard<std::mutex> lock(log_mutex);
      progress("replication " + std::to_string(task + 1) + "/" + std::to_string(ns * nr) +
               (slot.ok ? "" : " FAILED"));
    }
  };

  const int total = ns * nr;
  if (plan.n_workers <= 1) {
    for (int task = 0; task < total; ++task) run_task(task);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < std::min(plan.n_workers, total); ++w)
      pool.emplace_back([&]() {
        for (int task = next.fetch_add(1); task < total; task = next.fetch_add(1)) run_task(task);
      });
    for (auto& th : pool) th.join();
  }

  MetricsReport report;
  report.n_attempted = total;
  for (const auto& r : results)
    if (!r.ok) {
      report.n_failed++;
      report.failures.push_back(r.error);
    }
  if (report.n_failed * 10 > report.n_attempted) {
    std::string msg = std::to_string(report.n_failed) + " of " + std::to_string(report.n_attempted) +
                      " replications failed";
    for (const auto& f : report.failures) msg += "\n  " + f;
    throw SamplerError(msg);
  }

  static const std::vector<std::string> metric_order = {
      "param_rmse_y",  "param_rmse_alpha1", "param_rmse_alpha2", "param_rmse_gamma",
      "param_rmse_mu", "param_pehe",        "pp_rmse_gamma",     "pp_cov_gamma",
      "pp_width_gamma", "pp_pehe",          "pp_rmse_y",         "pp_cov_y",
      "pp_width_y"};

  for (int si = 0; si < ns; ++si)
    for (int v = 0; v < nv; ++v)
      for (const auto& metric : metric_order) {
        std::vector<double> vals;
        for (int k = 0; k < nr; ++k) {
          const auto& slot = results[static_cast<std::size_t>(si) * nr + k];
          if (!slot.ok) continue;
          auto it = slot.per_variant[v].find(metric);
          if (it != slot.per_variant[v].end()) vals.push_back(it->second);
        }
        if (vals.empty()) continue;
        MetricRow row;
        row.sparsity = plan.sparsity_grid[si];
        row.variant = variant_name(plan.variants[v]);
        row.metric = metric;
        row.n_reps = static_cast<long>(vals.size());
        double acc = 0.0;
        for (double x : vals) acc += x;
        row.mean = acc / static_cast<double>(vals.size());
        if (vals.size() > 1) {
          double ss = 0.0;
          for (double x : vals) ss += (x - row.mean) * (x - row.mean);
          row.stderr_mean = std::sqrt(ss / static_cast<double>(vals.size() - 1) /
                                      static_cast<double>(vals.size()));
        }
        report.rows.push_back(row);
      }
  return report;
}

}  // namespace bcflong
