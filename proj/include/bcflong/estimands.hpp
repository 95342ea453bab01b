#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "bcflong/common.hpp"
#include "bcflong/panel.hpp"
#include "bcflong/sampler.hpp"

namespace bcflong {

struct EffectSummary {
  double mean = 0.0, lo = 0.0, hi = 0.0;
  long n_draws = 0;

  std::string format() const {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.2f [%.2f, %.2f]", mean, lo, hi);
    return buf;
  }
};

inline EffectSummary summarize_draws(const std::vector<double>& draws, double level = 0.95) {
  require(!draws.empty(), "no draws to summarize");
  require(level > 0.0 && level < 1.0, "interval level must be in (0,1)");
  EffectSummary s;
  s.n_draws = static_cast<long>(draws.size());
  double acc = 0.0;
  for (double d : draws) acc += d;
  s.mean = acc / static_cast<double>(draws.size());
  double tail = 0.5 * (1.0 - level);
  s.lo = empirical_quantile(draws, tail);
  s.hi = empirical_quantile(draws, 1.0 - tail);
  return s;
}

struct CATEQuery {
  Eigen::RowVectorXd W;  // baseline moderators, width = training W columns
  double t_star = 1.0;
};

// One treatment-effect draw per stored tau ensemble at moderators W, time t.
inline std::vector<double> tau_draws_at(const PosteriorDraws& draws, const Eigen::RowVectorXd& W,
                                        double t) {
  require(!draws.tau_forests.empty(), "no stored treatment-forest draws");
  require(W.size() == draws.W_subjects.cols(),
          "moderator width " + std::to_string(W.size()) + " does not match training width " +
              std::to_string(draws.W_subjects.cols()));
  Eigen::RowVectorXd x(W.size() + 1);
  x.head(W.size()) = W;
  x[W.size()] = t;
  std::vector<double> out(draws.tau_forests.size());
  for (std::size_t s = 0; s < draws.tau_forests.size(); ++s)
    out[s] = draws.tau_forests[s].evaluate(x);
  return out;
}

inline EffectSummary cate_at_time(const PosteriorDraws& draws, const CATEQuery& q,
                                  std::vector<std::string>* warnings = nullptr) {
  double t_lo = draws.train_t.minCoeff(), t_hi = draws.train_t.maxCoeff();
  if (warnings && (q.t_star < t_lo || q.t_star > t_hi))
    warnings->push_back("t*=" + format_double(q.t_star) + " is outside the observed time range [" +
                        format_double(t_lo) + ", " + format_double(t_hi) +
                        "]; the effect is an extrapolation");
  return summarize_draws(tau_draws_at(draws, q.W, q.t_star));
}

// Effect of treatment on the outcome change between t1 and t2; random slopes
// cancel in the contrast, so this is a pure function of the tau draws.
inline EffectSummary longitudinal_effect(const PosteriorDraws& draws, const Eigen::RowVectorXd& W,
                                         double t1, double t2) {
  if (t1 == t2) {
    EffectSummary s;
    s.n_draws = static_cast<long>(draws.tau_forests.size());
    return s;
  }
  std::vector<double> a = tau_draws_at(draws, W, t1);
  std::vector<double> b = tau_draws_at(draws, W, t2);
  for (std::size_t s = 0; s < a.size(); ++s) a[s] = b[s] - a[s];
  return summarize_draws(a);
}

struct SubjectEffect {
  long long subject = 0;
  double z = 0.0;
  EffectSummary summary;
};

inline std::vector<SubjectEffect> icate_summary(const PosteriorDraws& draws, double t_star) {
  std::vector<SubjectEffect> out(draws.n_subjects());
  for (int i = 0; i < draws.n_subjects(); ++i) {
    out[i].subject = draws.subject_label[i];
    out[i].z = draws.z_subjects[i];
    out[i].summary = summarize_draws(tau_draws_at(draws, draws.W_subjects.row(i), t_star));
  }
  std::stable_sort(out.begin(), out.end(), [](const SubjectEffect& a, const SubjectEffect& b) {
    return a.summary.mean < b.summary.mean;
  });
  return out;
}

// Per-draw counterfactual outcome for one subject under treatment code z_cf,
// one column per query time. mu is frozen at the subject's last observed row;
// the estimands of interest difference it away.
inline Eigen::MatrixXd counterfactual_draws(const PosteriorDraws& draws, int subject_idx,
                                            double z_cf, const std::vector<double>& times) {
  require(subject_idx >= 0 && subject_idx < draws.n_subjects(), "subject index out of range");
  require(z_cf == 0.5 || z_cf == -0.5, "counterfactual treatment must be +/-0.5");
  require(!times.empty(), "no query times");
  const long S = draws.n_stored();
  require(S > 0, "no stored draws");
  const bool has_tau = !draws.tau_forests.empty();
  const int last_row = draws.last_row_of_subject[subject_idx];

  Eigen::RowVectorXd x(draws.W_subjects.cols() + 1);
  x.head(draws.W_subjects.cols()) = draws.W_subjects.row(subject_idx);

  Eigen::MatrixXd out(S, static_cast<Eigen::Index>(times.size()));
  for (long s = 0; s < S; ++s) {
    double mu = draws.stored_mu(s, last_row);
    const Eigen::MatrixXd& a = draws.stored_alpha[static_cast<std::size_t>(s)];
    for (std::size_t j = 0; j < times.size(); ++j) {
      double t = times[j];
      x[draws.W_subjects.cols()] = t;
      double tau = has_tau ? draws.tau_forests[static_cast<std::size_t>(s)].evaluate(x) : 0.0;
      out(s, static_cast<Eigen::Index>(j)) =
          mu + tau * z_cf + a(subject_idx, 0) + a(subject_idx, 1) * t;
    }
  }
  return out;
}

struct CounterfactualPoint {
  double t = 0.0;
  EffectSummary y;
};

inline std::vector<CounterfactualPoint> predict_counterfactual(const PosteriorDraws& draws,
                                                               long long subject, double z_cf,
                                                               const std::vector<double>& times) {
  int idx = draws.subject_index(subject);
  Eigen::MatrixXd m = counterfactual_draws(draws, idx, z_cf, times);
  std::vector<CounterfactualPoint> out(times.size());
  std::vector<double> col(m.rows());
  for (std::size_t j = 0; j < times.size(); ++j) {
    for (Eigen::Index s = 0; s < m.rows(); ++s) col[s] = m(s, static_cast<Eigen::Index>(j));
    out[j].t = times[j];
    out[j].y = summarize_draws(col);
  }
  return out;
}

struct HarmonizedOutcome {
  Eigen::VectorXd y;       // observed outcome, scatter export
  Eigen::VectorXd mu_hat;  // posterior-mean scanner effect per row
  Eigen::VectorXd y_harm;
  Eigen::MatrixXd K_bar;  // per-subject mean IQMs, exported for completeness
  double mu_grand_mean = 0.0;
};

inline HarmonizedOutcome harmonize(const PosteriorDraws& draws, const PanelDataset& d) {
  require(d.n_rows() == draws.mu_mean.size(), "panel does not match the fitted draws");
  HarmonizedOutcome h;
  h.y = d.y;
  h.mu_hat = draws.mu_mean;
  h.mu_grand_mean = h.mu_hat.mean();
  h.y_harm = d.y - h.mu_hat + Eigen::VectorXd::Constant(d.n_rows(), h.mu_grand_mean);
  h.K_bar.resize(d.n_subjects(), d.K.cols());
  for (int i = 0; i < d.n_subjects(); ++i) {
    auto [b, e] = d.subject_rows[i];
    h.K_bar.row(i) = d.K.middleRows(b, e - b).colwise().mean();
  }
  return h;
}

}  // namespace bcflong
