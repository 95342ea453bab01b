#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "bcflong/common.hpp"
#include "bcflong/sampler.hpp"

namespace bcflong {

// Initial-positive-sequence autocorrelation-time estimate. Lag covariances
// are summed in adjacent pairs until a pair sum turns negative, with the
// monotone envelope applied.
inline double effective_sample_size(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 4) return static_cast<double>(n);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);

  auto gamma = [&](std::size_t k) {
    double acc = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) acc += (x[i] - mean) * (x[i + k] - mean);
    return acc / static_cast<double>(n);
  };

  double g0 = gamma(0);
  if (!(g0 > 0.0)) return 0.0;  // constant chain

  double sum = 0.0, prev = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; 2 * t + 1 < n; ++t) {
    double pair = gamma(2 * t) + gamma(2 * t + 1);
    if (pair <= 0.0) break;
    if (pair > prev) pair = prev;
    prev = pair;
    sum += pair;
  }
  double tau = 2.0 * sum / g0 - 1.0;
  if (tau < 1.0 / static_cast<double>(n)) tau = 1.0 / static_cast<double>(n);
  return static_cast<double>(n) / tau;
}

// halves are estimated separately so a drifting chain cannot hide behind a
// favorable full-series autocorrelation estimate
inline double split_half_ess(const std::vector<double>& x) {
  if (x.size() < 8) return effective_sample_size(x);
  std::size_t h = x.size() / 2;
  std::vector<double> a(x.begin(), x.begin() + h);
  std::vector<double> b(x.begin() + h, x.end());
  return effective_sample_size(a) + effective_sample_size(b);
}

struct TraceSeries {
  std::string name;
  std::vector<double> values;
  std::vector<double> running_mean;
  double ess = 0.0;
  bool degenerate = false;
};

struct ChainSummary {
  std::vector<TraceSeries> traces;

  Eigen::VectorXd mu_mean, mu_lo, mu_hi;
  Eigen::VectorXd tau_mean, tau_lo, tau_hi;
  Eigen::VectorXd gamma_mean, gamma_lo, gamma_hi;
  Eigen::MatrixXd alpha_mean;

  std::vector<std::string> warnings;
};

namespace detail {

inline TraceSeries make_trace(const std::string& name, std::vector<double> values) {
  TraceSeries t;
  t.name = name;
  t.values = std::move(values);
  t.running_mean.resize(t.values.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    acc += t.values[i];
    t.running_mean[i] = acc / static_cast<double>(i + 1);
  }
  t.ess = split_half_ess(t.values);
  double lo = t.values.empty() ? 0.0 : t.values.front(), hi = lo;
  for (double v : t.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  t.degenerate = !(hi > lo);
  return t;
}

inline void quantile_rows(const Eigen::MatrixXd& stored, Eigen::VectorXd& lo, Eigen::VectorXd& hi) {
  const Eigen::Index L = stored.cols();
  lo.resize(L);
  hi.resize(L);
  std::vector<double> col(stored.rows());
  for (Eigen::Index j = 0; j < L; ++j) {
    for (Eigen::Index s = 0; s < stored.rows(); ++s) col[s] = stored(s, j);
    lo[j] = empirical_quantile(col, 0.025);
    hi[j] = empirical_quantile(col, 0.975);
  }
}

}  // namespace detail

inline ChainSummary summarize_chain(const PosteriorDraws& draws) {
  require(draws.n_retained >= 2, "chain summary needs at least 2 retained draws");
  ChainSummary s;

  s.traces.push_back(detail::make_trace("sigma2", draws.sigma2));
  if (!draws.rho.empty()) {
    std::vector<double> r1(draws.rho.size()), r2(draws.rho.size());
    for (std::size_t k = 0; k < draws.rho.size(); ++k) {
      r1[k] = draws.rho[k][0];
      r2[k] = draws.rho[k][1];
    }
    s.traces.push_back(detail::make_trace("rho_intercept", std::move(r1)));
    s.traces.push_back(detail::make_trace("rho_slope", std::move(r2)));
  }
  if (!draws.Sigma_B.empty()) {
    std::vector<double> v1(draws.Sigma_B.size()), v2(draws.Sigma_B.size());
    for (std::size_t k = 0; k < draws.Sigma_B.size(); ++k) {
      v1[k] = draws.Sigma_B[k](0, 0);
      v2[k] = draws.Sigma_B[k](1, 1);
    }
    s.traces.push_back(detail::make_trace("Sigma_B_intercept", std::move(v1)));
    s.traces.push_back(detail::make_trace("Sigma_B_slope", std::move(v2)));
  }
  if (draws.stored_lambda2.size() > 0) {
    const long S = draws.n_stored();
    int N = draws.n_subjects();
    std::vector<double> l1(S), l2(S);
    for (long k = 0; k < S; ++k) {
      l1[k] = draws.stored_lambda2(k, 0);
      l2[k] = draws.stored_lambda2(k, N);
    }
    s.traces.push_back(detail::make_trace("lambda2_first_subject_intercept", std::move(l1)));
    s.traces.push_back(detail::make_trace("lambda2_first_subject_slope", std::move(l2)));
  }

  for (const auto& t : s.traces)
    if (t.degenerate) s.warnings.push_back("trace '" + t.name + "' is constant; ESS undefined");

  s.mu_mean = draws.mu_mean;
  s.tau_mean = draws.tau_mean;
  s.gamma_mean = draws.gamma_mean;
  s.alpha_mean = draws.alpha_mean;
  require(draws.n_stored() >= 1, "no stored row-level draws");
  detail::quantile_rows(draws.stored_mu.topRows(draws.n_stored()), s.mu_lo, s.mu_hi);
  detail::quantile_rows(draws.stored_tau.topRows(draws.n_stored()), s.tau_lo, s.tau_hi);
  detail::quantile_rows(draws.stored_gamma.topRows(draws.n_stored()), s.gamma_lo, s.gamma_hi);
  return s;
}

}  // namespace bcflong
