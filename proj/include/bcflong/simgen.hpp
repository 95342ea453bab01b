#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "bcflong/common.hpp"
#include "bcflong/csv.hpp"
#include "bcflong/panel.hpp"
#include "bcflong/rng.hpp"

namespace bcflong {

struct SyntheticConfig {
  int N = 200;
  int n_i = 5;
  int p = 10;
  int time_col = 7;  // 1-based; overwritten with the within-subject index
  double sparsity = 0.0;
  double noise_factor = 0.10;
  std::uint64_t seed = 0;
};

struct SemiSyntheticConfig {
  int rows = 2583;
  int W_width = 8;  // includes follow-up time as the last generator column
  int K_width = 30;
  double beta_bio_mean = 2.0, beta_bio_sd = 4.0;
  double beta_nonbio_mean = 0.0, beta_nonbio_sd = 0.5;
  double alpha_intercept_mean = 0.5, alpha_intercept_sd = 3.0;
  double alpha_slope_mean = 0.5, alpha_slope_sd = 2.0;
  double t_max = 2.0;
  double sparsity = 0.0;
  double noise_factor = 0.10;
  std::uint64_t seed = 0;
};

// Latent components, row-aligned with the generated panel (post-sorting both
// share the same order because subjects are emitted sorted by (id, t)).
struct GroundTruth {
  Eigen::VectorXd mu_true, tau_true, gamma_true;  // per row
  Eigen::MatrixXd alpha_true;                     // N x 2, intercept then slope
  Eigen::VectorXd eps;                            // realized noise per row
  double sigma = 0.0;
  std::vector<char> mask;  // 1 = subject's random effects were zeroed
};

inline Eigen::VectorXd friedman_mean(const Eigen::MatrixXd& X) {
  require(X.cols() >= 5, "friedman mean needs at least 5 covariates");
  Eigen::VectorXd f(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    f[i] = 10.0 * std::sin(3.14159265358979323846 * X(i, 0) * X(i, 1)) +
           20.0 * (X(i, 2) - 0.5) * (X(i, 2) - 0.5) + 10.0 * X(i, 3) + 5.0 * X(i, 4);
  return f;
}

inline std::pair<Eigen::MatrixXd, std::vector<char>> apply_sparsity(const Eigen::MatrixXd& alpha,
                                                                    double proportion,
                                                                    std::uint64_t seed) {
  require(proportion >= 0.0 && proportion < 1.0, "sparsity proportion must be in [0,1)");
  const int N = static_cast<int>(alpha.rows());
  int n_zero = static_cast<int>(std::ceil(proportion * N));
  std::vector<int> idx(N);
  for (int i = 0; i < N; ++i) idx[i] = i;
  RngStream rng(seed);
  for (int i = 0; i < n_zero; ++i) {
    std::size_t j = i + rng.uniform_int(N - i);
    std::swap(idx[i], idx[j]);
  }
  Eigen::MatrixXd out = alpha;
  std::vector<char> mask(N, 0);
  for (int i = 0; i < n_zero; ++i) {
    out.row(idx[i]).setZero();
    mask[idx[i]] = 1;
  }
  return {std::move(out), std::move(mask)};
}

namespace detail {

inline double noise_scale(const Eigen::VectorXd& noiseless, double factor) {
  double mean = noiseless.mean();
  if (std::abs(mean) < 1e-6) {
    double sd = std::sqrt((noiseless.array() - mean).square().sum() /
                          std::max<Eigen::Index>(1, noiseless.size() - 1));
    return factor * sd;
  }
  return factor * std::abs(mean);
}

}  // namespace detail

// Mixed-effects benchmark: Friedman mean surface plus per-subject random
// intercept/slope on a normalized visit index, no treatment term.
inline std::pair<PanelDataset, GroundTruth> gen_fully_synthetic(const SyntheticConfig& cfg) {
  require(cfg.N >= 2 && cfg.n_i >= 2 && cfg.p >= 5, "degenerate synthetic config");
  require(cfg.time_col >= 1 && cfg.time_col <= cfg.p, "time column out of range");
  const Eigen::Index L = static_cast<Eigen::Index>(cfg.N) * cfg.n_i;
  const int tc = cfg.time_col - 1;
  RngStream rng = RngStream(cfg.seed);

  Eigen::MatrixXd X(L, cfg.p);
  for (Eigen::Index i = 0; i < L; ++i)
    for (int j = 0; j < cfg.p; ++j) X(i, j) = rng.uniform();

  std::vector<long long> subject(L);
  Eigen::VectorXd t(L);
  for (int s = 0; s < cfg.N; ++s)
    for (int j = 0; j < cfg.n_i; ++j) {
      Eigen::Index r = static_cast<Eigen::Index>(s) * cfg.n_i + j;
      subject[r] = s + 1;
      t[r] = static_cast<double>(j) / (cfg.n_i - 1);
      X(r, tc) = t[r];
    }

  Eigen::MatrixXd alpha(cfg.N, 2);
  for (int s = 0; s < cfg.N; ++s) {
    alpha(s, 0) = rng.normal();
    alpha(s, 1) = rng.normal();
  }
  auto [alpha_masked, mask] = apply_sparsity(alpha, cfg.sparsity, derive_seed(cfg.seed, 101));

  Eigen::VectorXd mu = friedman_mean(X);
  Eigen::VectorXd gamma(L);
  for (Eigen::Index r = 0; r < L; ++r) {
    int s = static_cast<int>(subject[r]) - 1;
    gamma[r] = alpha_masked(s, 0) + alpha_masked(s, 1) * t[r];
  }

  Eigen::VectorXd noiseless = mu + gamma;
  double sigma = detail::noise_scale(noiseless, cfg.noise_factor);
  Eigen::VectorXd eps(L), y(L);
  for (Eigen::Index r = 0; r < L; ++r) {
    eps[r] = rng.normal(0.0, sigma);
    y[r] = noiseless[r] + eps[r];
  }

  Eigen::VectorXd z = Eigen::VectorXd::Constant(L, -0.5);
  PanelDataset d = build_panel(subject, t, y, z, X, Eigen::MatrixXd(L, 0));

  GroundTruth gt;
  gt.mu_true = mu;
  gt.tau_true = Eigen::VectorXd::Zero(L);
  gt.gamma_true = gamma;
  gt.alpha_true = alpha_masked;
  gt.eps = eps;
  gt.sigma = sigma;
  gt.mask = mask;
  return {std::move(d), std::move(gt)};
}

// Longitudinal causal benchmark with linear treatment and nuisance surfaces.
// Baseline moderators are constant within subject; the treatment effect also
// loads on follow-up time (the last generator coefficient). External W/K can
// replace the synthesized covariates; widths must match the config.
inline std::pair<PanelDataset, GroundTruth> gen_semi_synthetic(
    const SemiSyntheticConfig& cfg, const Eigen::MatrixXd* external_W = nullptr,
    const Eigen::MatrixXd* external_K = nullptr) {
  require(cfg.rows >= 5 && cfg.W_width >= 2 && cfg.K_width >= 1, "degenerate semi-synthetic config");
  RngStream rng = RngStream(cfg.seed);
  const int wb = cfg.W_width - 1;  // baseline moderator columns, excluding time

  // subject sizes in {2,3,4}, adjusted to land exactly on the row budget
  std::vector<int> sizes;
  long remaining = cfg.rows;
  while (remaining > 0) {
    long n;
    if (remaining <= 4)
      n = remaining;
    else if (remaining == 5)
      n = 2;
    else
      n = 2 + static_cast<long>(rng.uniform_int(3));
    sizes.push_back(static_cast<int>(n));
    remaining -= n;
  }
  const int N = static_cast<int>(sizes.size());
  const Eigen::Index L = cfg.rows;

  std::vector<long long> subject(L);
  Eigen::VectorXd t(L);
  {
    Eigen::Index r = 0;
    std::vector<double> ts;
    for (int s = 0; s < N; ++s) {
      ts.resize(sizes[s]);
      for (auto& v : ts) v = rng.uniform(0.0, cfg.t_max);
      std::sort(ts.begin(), ts.end());
      for (int j = 0; j < sizes[s]; ++j, ++r) {
        subject[r] = s + 1;
        t[r] = ts[j];
      }
    }
  }

  Eigen::MatrixXd Wbase(L, wb);
  if (external_W) {
    require(external_W->rows() == L && external_W->cols() == cfg.W_width,
            "external W must be rows x W_width (time in the last column)");
  } else {
    Eigen::Index r = 0;
    for (int s = 0; s < N; ++s) {
      Eigen::RowVectorXd row(wb);
      for (int j = 0; j < wb; ++j) row[j] = rng.uniform();
      for (int j = 0; j < sizes[s]; ++j, ++r) Wbase.row(r) = row;
    }
  }

  Eigen::MatrixXd K(L, cfg.K_width);
  if (external_K) {
    require(external_K->rows() == L && external_K->cols() == cfg.K_width,
            "external K width mismatch");
    K = *external_K;
  } else {
    for (Eigen::Index i = 0; i < L; ++i)
      for (int j = 0; j < cfg.K_width; ++j) K(i, j) = rng.uniform();
  }

  Eigen::VectorXd beta_bio(cfg.W_width), beta_nonbio(cfg.K_width);
  for (int j = 0; j < cfg.W_width; ++j) beta_bio[j] = rng.normal(cfg.beta_bio_mean, cfg.beta_bio_sd);
  for (int j = 0; j < cfg.K_width; ++j)
    beta_nonbio[j] = rng.normal(cfg.beta_nonbio_mean, cfg.beta_nonbio_sd);

  Eigen::MatrixXd alpha(N, 2);
  for (int s = 0; s < N; ++s) {
    alpha(s, 0) = rng.normal(cfg.alpha_intercept_mean, cfg.alpha_intercept_sd);
    alpha(s, 1) = rng.normal(cfg.alpha_slope_mean, cfg.alpha_slope_sd);
  }
  auto [alpha_masked, mask] = apply_sparsity(alpha, cfg.sparsity, derive_seed(cfg.seed, 101));

  Eigen::VectorXd z_subj(N);
  for (int s = 0; s < N; ++s) z_subj[s] = rng.uniform() < 0.5 ? -0.5 : 0.5;

  // generator covariate row for tau: baseline moderators then time
  Eigen::MatrixXd Wgen(L, cfg.W_width);
  if (external_W) {
    Wgen = *external_W;
    Wbase = external_W->leftCols(wb);
  } else {
    Wgen.leftCols(wb) = Wbase;
    Wgen.col(wb) = t;
  }

  Eigen::VectorXd tau = Wgen * beta_bio;
  Eigen::VectorXd mu = K * beta_nonbio;
  Eigen::VectorXd gamma(L), z(L);
  for (Eigen::Index r = 0; r < L; ++r) {
    int s = static_cast<int>(subject[r]) - 1;
    gamma[r] = alpha_masked(s, 0) + alpha_masked(s, 1) * t[r];
    z[r] = z_subj[s];
  }

  Eigen::VectorXd noiseless = gamma + tau.cwiseProduct(z) + mu;
  double sigma = detail::noise_scale(noiseless, cfg.noise_factor);
  Eigen::VectorXd eps(L), y(L);
  for (Eigen::Index r = 0; r < L; ++r) {
    eps[r] = rng.normal(0.0, sigma);
    y[r] = noiseless[r] + eps[r];
  }

  PanelDataset d = build_panel(subject, t, y, z, K, Wbase);

  GroundTruth gt;
  gt.mu_true = mu;
  gt.tau_true = tau;
  gt.gamma_true = gamma;
  gt.alpha_true = alpha_masked;
  gt.eps = eps;
  gt.sigma = sigma;
  gt.mask = mask;
  return {std::move(d), std::move(gt)};
}

inline void write_ground_truth(const std::string& path, const GroundTruth& gt,
                               const PanelDataset& d) {
  std::vector<std::string> cols = {"subject", "t", "mu_true", "tau_true", "gamma_true",
                                   "eps",     "sigma"};
  Eigen::MatrixXd m(d.n_rows(), 7);
  for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
    m(r, 0) = static_cast<double>(d.subject_label[d.subject_of_row[r]]);
    m(r, 1) = d.t[r];
    m(r, 2) = gt.mu_true[r];
    m(r, 3) = gt.tau_true[r];
    m(r, 4) = gt.gamma_true[r];
    m(r, 5) = gt.eps[r];
    m(r, 6) = gt.sigma;
  }
  write_csv(path, cols, m);
}

inline void write_alpha_truth(const std::string& path, const GroundTruth& gt,
                              const PanelDataset& d) {
  std::vector<std::string> cols = {"subject", "alpha1", "alpha2", "masked"};
  Eigen::MatrixXd m(gt.alpha_true.rows(), 4);
  for (Eigen::Index s = 0; s < gt.alpha_true.rows(); ++s) {
    m(s, 0) = static_cast<double>(d.subject_label[s]);
    m(s, 1) = gt.alpha_true(s, 0);
    m(s, 2) = gt.alpha_true(s, 1);
    m(s, 3) = gt.mask.empty() ? 0.0 : static_cast<double>(gt.mask[s]);
  }
  write_csv(path, cols, m);
}

}  // namespace bcflong
