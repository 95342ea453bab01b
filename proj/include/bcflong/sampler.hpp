#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "bcflong/common.hpp"
#include "bcflong/forest.hpp"
#include "bcflong/panel.hpp"
#include "bcflong/random_effects.hpp"
#include "bcflong/rng.hpp"

namespace bcflong {

enum class REPrior { none, base, horseshoe };

struct SamplerConfig {
  long max_iter = 5000;
  long burn_in = 1000;  // counted after thinning
  int thin = 1;
  std::uint64_t seed = 0;
  REPrior re_prior = REPrior::horseshoe;
  ForestConfig mu_forest = ForestConfig::mu_default();
  ForestConfig tau_forest = ForestConfig::tau_default();
  GlobalScaleMode global_scale_mode = GlobalScaleMode::sigma_scaled;
  int N0 = 0;  // rho0 mode prior guess of non-null subjects

  bool use_tau_forest = true;  // off for generators with no treatment term
  bool include_propensity_in_mu = true;
  PropensityMode propensity_mode = PropensityMode::constant;

  double sigma_nu = 3.0;
  double sigma_quantile = 0.9;
  bool standardize = true;

  // pin the residual variance / base covariance, for conjugate-oracle runs
  bool fixed_sigma2 = false;
  double sigma2_value = 1.0;  // original outcome scale
  bool fixed_Sigma_B = false;
  Eigen::Matrix2d Sigma_B_value = Eigen::Matrix2d::Identity();

  // draw alpha each iteration but force it to zero before it is used; lets a
  // structural test confirm stages 1-2 are independent of the stage-3 prior
  bool pin_alpha_zero = false;

  int store_max = 1000;     // cap on stored row-level draws (quantile support)
  bool store_lambda = false;

  long checkpoint_every = 0;  // iterations; 0 disables
  std::string checkpoint_path;

  long retained_count() const { return max_iter / thin - burn_in; }

  void validate() const {
    require(max_iter >= 1 && thin >= 1, "max_iter and thin must be positive");
    require(burn_in >= 0, "burn_in must be nonnegative");
    require(burn_in < max_iter / thin, "burn_in (post-thinning) must be below max_iter/thin");
    require(store_max >= 1, "store_max must be positive");
    require(mu_forest.m >= 0 && tau_forest.m >= 0, "negative tree count");
    if (global_scale_mode == GlobalScaleMode::rho0)
      require(N0 > 0, "rho0 global-scale mode needs N0 > 0");
  }
};

enum class Stage { mu, tau, alpha };

// Stage residuals: R_mu = y - tau z - gamma; R_tau = (y - mu - gamma)/z;
// R_alpha = y - mu - tau z. All on whatever scale y is given in.
inline Eigen::VectorXd compute_residual(Stage stage, const Eigen::VectorXd& y,
                                        const Eigen::VectorXd& mu_fit,
                                        const Eigen::VectorXd& tau_fit,
                                        const Eigen::VectorXd& gamma, const Eigen::VectorXd& z) {
  switch (stage) {
    case Stage::mu:
      return y - tau_fit.cwiseProduct(z) - gamma;
    case Stage::tau: {
      for (Eigen::Index i = 0; i < z.size(); ++i)
        if (z[i] == 0.0) throw DataError("treatment code 0 cannot enter the tau stage");
      return (y - mu_fit - gamma).cwiseQuotient(z);
    }
    case Stage::alpha:
      return y - mu_fit - tau_fit.cwiseProduct(z);
  }
  throw DataError("unknown stage");
}

inline Eigen::MatrixXd assemble_mu_covariates(const PanelDataset& d, const Eigen::VectorXd& pi_rows,
                                              bool include_pi) {
  require(d.K.cols() > 0, "mu forest needs at least one K column");
  if (!include_pi) return d.K;
  require(pi_rows.size() == d.n_rows(), "propensity rows missing");
  Eigen::MatrixXd X(d.n_rows(), d.K.cols() + 1);
  X.leftCols(d.K.cols()) = d.K;
  X.col(d.K.cols()) = pi_rows;
  return X;
}

inline Eigen::MatrixXd assemble_tau_covariates(const PanelDataset& d) {
  Eigen::MatrixXd X(d.n_rows(), d.W.cols() + 1);
  if (d.W.cols()) X.leftCols(d.W.cols()) = d.W;
  X.col(d.W.cols()) = d.t;
  return X;
}

// Everything retained from a fitted chain, on the original outcome scale.
// Exact posterior means accumulate over every retained draw; row-level draw
// matrices for quantiles keep at most store_max evenly thinned draws, except
// at held-out evaluation rows where every retained draw is kept.
struct PosteriorDraws {
  SamplerConfig cfg;
  StandardizationParams std_params;
  long n_retained = 0;

  Eigen::VectorXd mu_mean, tau_mean, gamma_mean;  // training rows
  Eigen::MatrixXd alpha_mean;                     // N x 2

  std::vector<double> sigma2;            // per retained draw
  std::vector<Eigen::Vector2d> rho;      // horseshoe global scales
  std::vector<Eigen::Matrix2d> Sigma_B;  // base-prior covariance draws

  std::vector<long> stored_iters;  // retained-draw index of each stored draw
  Eigen::MatrixXd stored_mu, stored_tau, stored_gamma;  // S x L
  std::vector<Eigen::MatrixXd> stored_alpha;            // S entries, N x 2
  std::vector<FrozenForest> tau_forests;                // S entries
  Eigen::MatrixXd stored_lambda2;  // S x 2N (intercept block then slope block)

  Eigen::MatrixXd eval_mu_draws, eval_tau_draws, eval_gamma_draws;  // R x L_eval

  MoveCounts mu_counts, tau_counts;

  // training metadata carried for estimand extraction
  std::vector<long long> subject_label;
  Eigen::MatrixXd W_subjects;
  Eigen::VectorXd z_subjects;
  std::vector<int> last_row_of_subject;
  Eigen::VectorXd train_t, train_z, y_orig;
  std::vector<int> train_subject_of_row;

  int n_subjects() const { return static_cast<int>(subject_label.size()); }
  long n_stored() const { return static_cast<long>(stored_iters.size()); }

  int subject_index(long long label) const {
    for (std::size_t i = 0; i < subject_label.size(); ++i)
      if (subject_label[i] == label) return static_cast<int>(i);
    throw DataError("unknown subject " + std::to_string(label));
  }
};

struct ChainInternals {
  long iteration;
  const Eigen::VectorXd* y_std;
  const SoftTreeEnsemble* mu_ens;
  const SoftTreeEnsemble* tau_ens;
  const Eigen::VectorXd* mu_fit;
  const Eigen::VectorXd* tau_fit;
  const Eigen::VectorXd* gamma;
  const RandomEffectState* re_state;
  double sigma2_std;
};

using ChainHook = std::function<void(const ChainInternals&)>;

namespace detail {

inline double least_squares_sigma(const Eigen::VectorXd& y, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd D(y.size(), X.cols() + 1);
  D.col(0).setOnes();
  D.rightCols(X.cols()) = X;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(D);
  Eigen::Index rank = qr.rank();
  if (y.size() <= rank + 1) {
    double mean = y.mean();
    return std::sqrt((y.array() - mean).square().sum() / std::max<Eigen::Index>(1, y.size() - 1));
  }
  Eigen::VectorXd resid = y - D * qr.solve(y);
  return std::sqrt(resid.squaredNorm() / static_cast<double>(y.size() - rank));
}

inline double sigma_lambda_for(double sigest, double nu, double q) {
  boost::math::chi_squared_distribution<double> chi2(nu);
  return sigest * sigest * boost::math::quantile(chi2, 1.0 - q) / nu;
}

}  // namespace detail

// Three-stage Gibbs sampler. Stage 1 backfits the prognostic forest on the
// treatment-and-random-effect-free residual and draws sigma2 on the full
// residual; stage 2 backfits the treatment forest on the +/-2-scaled
// residual; stage 3 draws alpha and its shrinkage hierarchy. Each stage has
// its own substream of the seed so toggling one stage never shifts the draws
// of another.
class GibbsRunner {
 public:
  GibbsRunner(const PanelDataset& d, const SamplerConfig& cfg,
              const PanelDataset* eval_panel = nullptr, ChainHook hook = nullptr)
      : cfg_(cfg), data_(d), hook_(std::move(hook)) {
    cfg_.validate();
    init(eval_panel);
  }

  void run() {
    while (iter_ < cfg_.max_iter) iterate();
  }

  void run_until(long iter_stop) {
    while (iter_ < std::min(iter_stop, cfg_.max_iter)) iterate();
  }

  long iteration() const { return iter_; }
  PosteriorDraws take() {
    sync_counts();
    return std::move(draws_);
  }
  const PosteriorDraws& draws() const { return draws_; }

  // state capture for checkpoint/resume lives in serialize.hpp
  const SoftTreeEnsemble& mu_ensemble() const { return mu_ens_; }
  const SoftTreeEnsemble& tau_ensemble() const { return tau_ens_; }
  SoftTreeEnsemble& mu_ensemble() { return mu_ens_; }
  SoftTreeEnsemble& tau_ensemble() { return tau_ens_; }
  RandomEffectState& re_state() { return re_; }
  HorseshoeState& horseshoe() { return hs_; }
  GaussianREPrior& base_prior() { return base_; }
  SigmaState& sigma_state() { return sigma_; }
  RngStream &rng_mu() { return rng_mu_; }
  RngStream &rng_tau() { return rng_tau_; }
  RngStream &rng_re() { return rng_re_; }
  PosteriorDraws& draws_mutable() { return draws_; }
  long& iteration_mutable() { return iter_; }
  const Eigen::VectorXd& y_std() const { return y_; }

  // makes the incremental fit bookkeeping bit-reproducible across a
  // checkpoint/restore boundary
  void sync_caches() {
    resync_ensemble(mu_ens_);
    mu_fit_ = mu_ens_.fit_total;
    if (has_tau_()) {
      resync_ensemble(tau_ens_);
      tau_fit_ = tau_ens_.fit_total;
    }
  }

  void sync_counts() {
    draws_.mu_counts = mu_ens_.counts;
    if (has_tau_()) draws_.tau_counts = tau_ens_.counts;
  }

  void rebuild_after_restore() {
    for (auto& t : mu_ens_.trees) rebuild_cache(mu_ens_, t);
    if (has_tau_())
      for (auto& t : tau_ens_.trees) rebuild_cache(tau_ens_, t);
    sync_caches();
    gamma_ = cfg_.re_prior == REPrior::none ? Eigen::VectorXd::Zero(data_.n_rows())
                                            : random_contribution(re_, data_);
  }

  void iterate() {
    ++iter_;

    // Stage 1: prognostic forest and residual variance
    Eigen::VectorXd R_mu = compute_residual(Stage::mu, y_, mu_fit_, tau_fit_, gamma_, data_.z);
    backfit_sweep(mu_ens_, R_mu, sigma_.sigma2, rng_mu_);
    mu_fit_ = mu_ens_.fit_total;
    if (!cfg_.fixed_sigma2) {
      Eigen::VectorXd full = y_ - mu_fit_ - tau_fit_.cwiseProduct(data_.z) - gamma_;
      update_sigma2(full, sigma_, rng_mu_);
    }

    // Stage 2: treatment forest on the z-scaled residual; dividing the
    // residual by z = +/-0.5 scales its noise variance to 4 sigma2
    if (has_tau_()) {
      Eigen::VectorXd R_tau = compute_residual(Stage::tau, y_, mu_fit_, tau_fit_, gamma_, data_.z);
      backfit_sweep(tau_ens_, R_tau, 4.0 * sigma_.sigma2, rng_tau_);
      tau_fit_ = tau_ens_.fit_total;
    }

    // Stage 3: random effects and shrinkage hierarchy
    if (cfg_.re_prior != REPrior::none) {
      Eigen::VectorXd R_alpha =
          compute_residual(Stage::alpha, y_, mu_fit_, tau_fit_, gamma_, data_.z);
      if (cfg_.re_prior == REPrior::base) {
        std::vector<Eigen::Matrix2d> cov(data_.n_subjects(), base_.Sigma_B);
        re_ = draw_alpha(R_alpha, data_, cov, sigma_.sigma2, rng_re_);
        if (cfg_.pin_alpha_zero) re_.alpha.setZero();
        if (!cfg_.fixed_Sigma_B) base_ = update_base_covariance(re_, base_, rng_re_);
      } else {
        std::vector<Eigen::Matrix2d> cov(data_.n_subjects());
        for (int i = 0; i < data_.n_subjects(); ++i) cov[i] = hs_.subject_cov(i);
        re_ = draw_alpha(R_alpha, data_, cov, sigma_.sigma2, rng_re_);
        if (cfg_.pin_alpha_zero) re_.alpha.setZero();
        update_horseshoe_local(re_, hs_, rng_re_);
        update_horseshoe_global(re_, hs_, resolve_a_rho(), rng_re_);
      }
      gamma_ = random_contribution(re_, data_);
    }

    if (!std::isfinite(sigma_.sigma2) || !mu_fit_.allFinite() || !tau_fit_.allFinite() ||
        !gamma_.allFinite())
      throw SamplerError("non-finite sampler state", iter_);

    if (hook_) {
      ChainInternals view{iter_,  &y_,     &mu_ens_, has_tau_() ? &tau_ens_ : nullptr,
                          &mu_fit_, &tau_fit_, &gamma_,  &re_,
                          sigma_.sigma2};
      hook_(view);
    }

    if (iter_ % cfg_.thin == 0) {
      long k = iter_ / cfg_.thin - 1;  // 0-based retained index
      if (k >= cfg_.burn_in) {
        sync_counts();
        record(k - cfg_.burn_in);
      }
    }

    if (cfg_.checkpoint_every > 0 && iter_ % cfg_.checkpoint_every == 0 && iter_ < cfg_.max_iter)
      sync_caches();
    if (checkpoint_writer && cfg_.checkpoint_every > 0 && iter_ % cfg_.checkpoint_every == 0 &&
        iter_ < cfg_.max_iter)
      checkpoint_writer(*this);
  }

  std::function<void(GibbsRunner&)> checkpoint_writer;  // set by the cli layer

  double resolve_a_rho() const {
    switch (cfg_.global_scale_mode) {
      case GlobalScaleMode::unit:
        return 1.0;
      case GlobalScaleMode::sigma_scaled:
        return sigma_.sigma2;
      case GlobalScaleMode::rho0: {
        double r0 = compute_rho0(cfg_.N0, data_.n_subjects(), data_.n_rows(),
                                 std::sqrt(sigma_.sigma2));
        return r0 * r0;
      }
    }
    return 1.0;
  }

 private:
  SamplerConfig cfg_;
  PanelDataset data_;  // standardized copy
  ChainHook hook_;

  Eigen::VectorXd y_;
  StandardizationParams std_;
  SoftTreeEnsemble mu_ens_, tau_ens_;
  SigmaState sigma_;
  RandomEffectState re_;
  HorseshoeState hs_;
  GaussianREPrior base_;
  Eigen::VectorXd mu_fit_, tau_fit_, gamma_;
  RngStream rng_mu_, rng_tau_, rng_re_;
  long iter_ = 0;

  Eigen::MatrixXd X_mu_eval_, X_tau_eval_;
  std::vector<int> eval_subject_idx_;
  Eigen::VectorXd eval_t_;

  PosteriorDraws draws_;
  long store_stride_ = 1;

  bool has_tau_() const { return cfg_.use_tau_forest && cfg_.tau_forest.m > 0; }

  void resync_ensemble(SoftTreeEnsemble& e) {
    e.fit_total.setZero();
    for (const auto& t : e.trees) e.fit_total += t.fit;
  }

  void init(const PanelDataset* eval_panel) {
    if (cfg_.standardize) {
      auto [ds, p] = standardize_outcome(data_);
      data_ = std::move(ds);
      std_ = p;
    } else {
      std_.y_min = -0.5;
      std_.y_max = 0.5;  // identity transform
    }
    y_ = data_.y;

    Eigen::VectorXd pi_rows;
    PropensityResult prop;
    if (cfg_.include_propensity_in_mu) {
      if (data_.pi.size()) {
        pi_rows = data_.pi;
      } else {
        prop = estimate_propensity(data_, cfg_.propensity_mode);
        pi_rows = prop.per_row;
      }
    }

    Eigen::MatrixXd X_mu = assemble_mu_covariates(data_, pi_rows, cfg_.include_propensity_in_mu);
    mu_ens_ = make_ensemble(cfg_.mu_forest, X_mu);
    if (has_tau_()) tau_ens_ = make_ensemble(cfg_.tau_forest, assemble_tau_covariates(data_));

    sigma_.nu = cfg_.sigma_nu;
    if (cfg_.fixed_sigma2) {
      sigma_.sigma2 = cfg_.sigma2_value / (std_.range() * std_.range());
      sigma_.lambda = sigma_.sigma2;
    } else {
      Eigen::MatrixXd D(data_.n_rows(), X_mu.cols() + data_.W.cols() + 2);
      D.leftCols(X_mu.cols()) = X_mu;
      D.middleCols(X_mu.cols(), data_.W.cols()) = data_.W;
      D.col(X_mu.cols() + data_.W.cols()) = data_.t;
      D.col(X_mu.cols() + data_.W.cols() + 1) = data_.z;
      double sigest = detail::least_squares_sigma(y_, D);
      sigma_.lambda = detail::sigma_lambda_for(sigest, sigma_.nu, cfg_.sigma_quantile);
      sigma_.sigma2 = sigest * sigest;
    }

    re_ = RandomEffectState::zero(data_.n_subjects());
    hs_ = HorseshoeState::init(data_.n_subjects());
    hs_.a_rho_mode = cfg_.global_scale_mode;
    hs_.N0 = cfg_.N0;
    // the inverse-Wishart prior is stated on the raw outcome scale
    double r2 = std_.range() * std_.range();
    if (cfg_.fixed_Sigma_B) {
      base_.Sigma_B = cfg_.Sigma_B_value / r2;
    } else {
      base_.Sigma_B /= r2;
      base_.Lambda /= r2;
    }

    mu_fit_ = Eigen::VectorXd::Zero(data_.n_rows());
    tau_fit_ = Eigen::VectorXd::Zero(data_.n_rows());
    gamma_ = Eigen::VectorXd::Zero(data_.n_rows());

    rng_mu_ = RngStream(derive_seed(cfg_.seed, 1));
    rng_tau_ = RngStream(derive_seed(cfg_.seed, 2));
    rng_re_ = RngStream(derive_seed(cfg_.seed, 3));

    // evaluation rows
    if (eval_panel) {
      const PanelDataset& ev = *eval_panel;
      Eigen::VectorXd ev_pi;
      if (cfg_.include_propensity_in_mu) {
        if (ev.pi.size()) {
          ev_pi = ev.pi;
        } else if (data_.pi.size()) {
          throw DataError("training data has a propensity column but evaluation data does not");
        } else if (prop.beta.size()) {
          ev_pi.resize(ev.n_rows());
          for (Eigen::Index r = 0; r < ev.n_rows(); ++r) {
            double eta = prop.beta[0] + ev.W.row(r).dot(prop.beta.tail(prop.beta.size() - 1));
            ev_pi[r] = std::min(0.99, std::max(0.01, 1.0 / (1.0 + std::exp(-eta))));
          }
        } else {
          ev_pi = Eigen::VectorXd::Constant(ev.n_rows(), prop.per_subject.size() ? prop.per_subject[0] : 0.5);
        }
      }
      X_mu_eval_ = assemble_mu_covariates(ev, ev_pi, cfg_.include_propensity_in_mu);
      X_tau_eval_ = assemble_tau_covariates(ev);
      eval_t_ = ev.t;
      eval_subject_idx_.resize(ev.n_rows());
      for (Eigen::Index r = 0; r < ev.n_rows(); ++r) {
        long long lab = ev.subject_label[ev.subject_of_row[r]];
        int idx = -1;
        for (int s = 0; s < data_.n_subjects(); ++s)
          if (data_.subject_label[s] == lab) {
            idx = s;
            break;
          }
        require(idx >= 0, "evaluation subject " + std::to_string(lab) + " was not fitted");
        eval_subject_idx_[r] = idx;
      }
    }

    // retained-draw storage
    long R = cfg_.retained_count();
    store_stride_ = std::max(1L, (R + cfg_.store_max - 1) / cfg_.store_max);
    long S = (R + store_stride_ - 1) / store_stride_;
    const Eigen::Index L = data_.n_rows();

    draws_.cfg = cfg_;
    draws_.std_params = std_;
    draws_.mu_mean = Eigen::VectorXd::Zero(L);
    draws_.tau_mean = Eigen::VectorXd::Zero(L);
    draws_.gamma_mean = Eigen::VectorXd::Zero(L);
    draws_.alpha_mean = Eigen::MatrixXd::Zero(data_.n_subjects(), 2);
    draws_.sigma2.reserve(R);
    draws_.stored_mu.resize(S, L);
    draws_.stored_tau.resize(S, L);
    draws_.stored_gamma.resize(S, L);
    draws_.stored_alpha.reserve(S);
    draws_.tau_forests.reserve(has_tau_() ? S : 0);
    if (cfg_.store_lambda && cfg_.re_prior == REPrior::horseshoe)
      draws_.stored_lambda2.resize(S, 2 * data_.n_subjects());
    if (eval_panel) {
      draws_.eval_mu_draws.resize(R, X_mu_eval_.rows());
      draws_.eval_tau_draws.resize(R, X_mu_eval_.rows());
      draws_.eval_gamma_draws.resize(R, X_mu_eval_.rows());
    }

    draws_.subject_label = data_.subject_label;
    draws_.W_subjects = data_.W_subjects();
    draws_.z_subjects.resize(data_.n_subjects());
    draws_.last_row_of_subject.resize(data_.n_subjects());
    for (int s = 0; s < data_.n_subjects(); ++s) {
      draws_.z_subjects[s] = data_.z_subject(s);
      draws_.last_row_of_subject[s] = data_.subject_rows[s].second - 1;
    }
    draws_.train_t = data_.t;
    draws_.train_z = data_.z;
    draws_.train_subject_of_row = data_.subject_of_row;
    draws_.y_orig.resize(L);
    for (Eigen::Index r = 0; r < L; ++r) draws_.y_orig[r] = std_.unstandardize(y_[r]);
  }

  void record(long k) {
    const double range = std_.range();
    const Eigen::Index L = data_.n_rows();

    Eigen::VectorXd mu_o(L), tau_o(L), gamma_o(L);
    for (Eigen::Index r = 0; r < L; ++r) {
      // the location shift lands in mu; tau and gamma are pure scalings
      mu_o[r] = std_.y_min + (mu_fit_[r] + 0.5) * range;
      tau_o[r] = tau_fit_[r] * range;
      gamma_o[r] = gamma_[r] * range;
    }

    draws_.n_retained++;
    double wnew = 1.0 / static_cast<double>(draws_.n_retained);
    draws_.mu_mean += wnew * (mu_o - draws_.mu_mean);
    draws_.tau_mean += wnew * (tau_o - draws_.tau_mean);
    draws_.gamma_mean += wnew * (gamma_o - draws_.gamma_mean);
    draws_.alpha_mean += wnew * (re_.alpha * range - draws_.alpha_mean);

    draws_.sigma2.push_back(sigma_.sigma2 * range * range);
    if (cfg_.re_prior == REPrior::horseshoe)
      draws_.rho.push_back(Eigen::Vector2d(std::sqrt(hs_.rho2[0]) * range,
                                           std::sqrt(hs_.rho2[1]) * range));
    if (cfg_.re_prior == REPrior::base)
      draws_.Sigma_B.push_back(base_.Sigma_B * range * range);

    if (k % store_stride_ == 0) {
      long s = static_cast<long>(draws_.stored_iters.size());
      draws_.stored_iters.push_back(k);
      draws_.stored_mu.row(s) = mu_o.transpose();
      draws_.stored_tau.row(s) = tau_o.transpose();
      draws_.stored_gamma.row(s) = gamma_o.transpose();
      draws_.stored_alpha.push_back(re_.alpha * range);
      if (has_tau_()) {
        FrozenForest f = freeze(tau_ens_);
        for (auto& tr : f.trees)
          for (auto& nd : tr.nodes) nd.leaf *= range;
        draws_.tau_forests.push_back(std::move(f));
      }
      if (cfg_.store_lambda && cfg_.re_prior == REPrior::horseshoe) {
        for (int i = 0; i < data_.n_subjects(); ++i) {
          draws_.stored_lambda2(s, i) = hs_.lambda2(i, 0);
          draws_.stored_lambda2(s, data_.n_subjects() + i) = hs_.lambda2(i, 1);
        }
      }
    }

    if (X_mu_eval_.rows() > 0) {
      Eigen::VectorXd em = predict_ensemble(mu_ens_, X_mu_eval_);
      Eigen::VectorXd et = has_tau_() ? predict_ensemble(tau_ens_, X_tau_eval_)
                                      : Eigen::VectorXd::Zero(X_tau_eval_.rows());
      for (Eigen::Index r = 0; r < X_mu_eval_.rows(); ++r) {
        draws_.eval_mu_draws(k, r) = std_.y_min + (em[r] + 0.5) * range;
        draws_.eval_tau_draws(k, r) = et[r] * range;
        int si = eval_subject_idx_[r];
        draws_.eval_gamma_draws(k, r) =
            (re_.alpha(si, 0) + re_.alpha(si, 1) * eval_t_[r]) * range;
      }
    }
  }
};

inline PosteriorDraws run_gibbs(const PanelDataset& d, const SamplerConfig& cfg,
                                const PanelDataset* eval_panel = nullptr,
                                ChainHook hook = nullptr) {
  GibbsRunner runner(d, cfg, eval_panel, std::move(hook));
  runner.run();
  return runner.take();
}

}  // namespace bcflong
