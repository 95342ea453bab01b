#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "bcflong/common.hpp"
#include "bcflong/panel.hpp"
#include "bcflong/rng.hpp"

namespace bcflong {

constexpr double kVarianceFloor = 1e-12;

// Per-subject intercept/slope; column 0 is the intercept, column 1 the slope
// on time, so the row contribution is alpha(i,0) + alpha(i,1) * t.
struct RandomEffectState {
  Eigen::MatrixXd alpha;  // N x 2

  static RandomEffectState zero(int n_subjects) {
    RandomEffectState s;
    s.alpha = Eigen::MatrixXd::Zero(n_subjects, 2);
    return s;
  }
};

struct GaussianREPrior {
  Eigen::Matrix2d Sigma_B = Eigen::Matrix2d::Identity();
  double nu = 2.0;
  Eigen::Matrix2d Lambda = Eigen::Matrix2d::Identity();
};

enum class GlobalScaleMode { unit, sigma_scaled, rho0 };

struct HorseshoeState {
  Eigen::MatrixXd lambda2;  // N x 2 local scales, squared
  Eigen::MatrixXd v;        // N x 2 auxiliaries
  Eigen::Vector2d rho2;     // global scales, squared
  Eigen::Vector2d xi;       // auxiliaries
  double a_lambda = 1.0;
  GlobalScaleMode a_rho_mode = GlobalScaleMode::sigma_scaled;
  int N0 = 0;  // prior count of non-null subjects, rho0 mode only

  static HorseshoeState init(int n_subjects) {
    HorseshoeState s;
    s.lambda2 = Eigen::MatrixXd::Ones(n_subjects, 2);
    s.v = Eigen::MatrixXd::Ones(n_subjects, 2);
    s.rho2.setOnes();
    s.xi.setOnes();
    return s;
  }

  // prior covariance of alpha_i under the current scales
  Eigen::Matrix2d subject_cov(int i) const {
    Eigen::Matrix2d c = Eigen::Matrix2d::Zero();
    c(0, 0) = std::max(kVarianceFloor, rho2[0] * lambda2(i, 0));
    c(1, 1) = std::max(kVarianceFloor, rho2[1] * lambda2(i, 1));
    return c;
  }
};

// Conditional posterior of each alpha_i: precision sigma^-2 sum_j T'T +
// prior_cov^-1, mean = cov * sigma^-2 sum_j T'R.
inline RandomEffectState draw_alpha(const Eigen::VectorXd& R_alpha, const PanelDataset& d,
                                    const std::vector<Eigen::Matrix2d>& cov_i, double sigma2,
                                    RngStream& rng) {
  const int N = d.n_subjects();
  require(static_cast<int>(cov_i.size()) == N, "prior covariance list length != N");
  require(R_alpha.size() == d.n_rows(), "residual length mismatch");
  RandomEffectState out;
  out.alpha.resize(N, 2);
  for (int s = 0; s < N; ++s) {
    auto [b, e] = d.subject_rows[s];
    Eigen::Matrix2d TtT = Eigen::Matrix2d::Zero();
    Eigen::Vector2d TtR = Eigen::Vector2d::Zero();
    for (int r = b; r < e; ++r) {
      double t = d.t[r];
      TtT(0, 0) += 1.0;
      TtT(0, 1) += t;
      TtT(1, 1) += t * t;
      TtR[0] += R_alpha[r];
      TtR[1] += t * R_alpha[r];
    }
    TtT(1, 0) = TtT(0, 1);
    Eigen::Matrix2d prec = TtT / sigma2 + cov_i[s].inverse();
    Eigen::LLT<Eigen::Matrix2d> llt(prec);
    if (llt.info() != Eigen::Success) throw SamplerError("singular random-effect precision");
    Eigen::Vector2d mean = llt.solve(TtR / sigma2);
    Eigen::Vector2d z(rng.normal(), rng.normal());
    out.alpha.row(s) = (mean + llt.matrixU().solve(z)).transpose();
  }
  return out;
}

namespace detail {

// Wishart(df, V) via Bartlett decomposition, p = 2
inline Eigen::Matrix2d wishart2(double df, const Eigen::Matrix2d& V, RngStream& rng) {
  Eigen::LLT<Eigen::Matrix2d> llt(V);
  Eigen::Matrix2d Lv = llt.matrixL();
  Eigen::Matrix2d A = Eigen::Matrix2d::Zero();
  A(0, 0) = std::sqrt(rng.chi_squared(df));
  A(1, 0) = rng.normal();
  A(1, 1) = std::sqrt(rng.chi_squared(df - 1.0));
  Eigen::Matrix2d LA = Lv * A;
  return LA * LA.transpose();
}

}  // namespace detail

inline GaussianREPrior update_base_covariance(const RandomEffectState& state,
                                              const GaussianREPrior& prior, RngStream& rng) {
  const int N = static_cast<int>(state.alpha.rows());
  Eigen::Matrix2d S = prior.Lambda + state.alpha.transpose() * state.alpha;
  double df = prior.nu + N;
  Eigen::Matrix2d W = detail::wishart2(df, S.inverse(), rng);
  GaussianREPrior out = prior;
  out.Sigma_B = W.inverse();
  out.Sigma_B = 0.5 * (out.Sigma_B + out.Sigma_B.transpose().eval());
  return out;
}

// rate helpers exposed so the conditionals can be validated independently

inline double local_lambda_rate(double alpha_id, double rho2_d, double v_id) {
  return 1.0 / v_id + alpha_id * alpha_id / (2.0 * rho2_d);
}

inline double local_v_rate(double a_lambda, double lambda2_id) {
  return 1.0 / (a_lambda * a_lambda) + 1.0 / lambda2_id;
}

inline double global_rho_shape(int N) { return (N + 1) / 2.0; }

inline double global_rho_rate(double xi_d, double sum_alpha2_over_lambda2) {
  return 1.0 / xi_d + 0.5 * sum_alpha2_over_lambda2;
}

inline double global_xi_rate(double a_rho, double rho2_d) {
  return 1.0 / (a_rho * a_rho) + 1.0 / rho2_d;
}

inline void update_horseshoe_local(const RandomEffectState& state, HorseshoeState& hs,
                                   RngStream& rng) {
  const Eigen::Index N = state.alpha.rows();
  for (Eigen::Index i = 0; i < N; ++i)
    for (int dcol = 0; dcol < 2; ++dcol) {
      double rate = local_lambda_rate(state.alpha(i, dcol), hs.rho2[dcol], hs.v(i, dcol));
      hs.lambda2(i, dcol) = std::max(kVarianceFloor, rng.inv_gamma(1.0, rate));
    }
  for (Eigen::Index i = 0; i < N; ++i)
    for (int dcol = 0; dcol < 2; ++dcol) {
      double rate = local_v_rate(hs.a_lambda, hs.lambda2(i, dcol));
      hs.v(i, dcol) = std::max(kVarianceFloor, rng.inv_gamma(1.0, rate));
    }
}

inline void update_horseshoe_global(const RandomEffectState& state, HorseshoeState& hs,
                                    double a_rho, RngStream& rng) {
  const Eigen::Index N = state.alpha.rows();
  for (int dcol = 0; dcol < 2; ++dcol) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < N; ++i)
      sum += state.alpha(i, dcol) * state.alpha(i, dcol) / hs.lambda2(i, dcol);
    double rate = global_rho_rate(hs.xi[dcol], sum);
    hs.rho2[dcol] =
        std::max(kVarianceFloor, rng.inv_gamma(global_rho_shape(static_cast<int>(N)), rate));
    hs.xi[dcol] =
        std::max(kVarianceFloor, rng.inv_gamma(1.0, global_xi_rate(a_rho, hs.rho2[dcol])));
  }
}

inline double compute_rho0(int N0, int N, Eigen::Index L, double sigma) {
  require(N0 > 0 && N0 < N, "N0 must be in (0, N)");
  require(L > 0 && sigma > 0.0, "need positive L and sigma");
  return static_cast<double>(N0) / static_cast<double>(N - N0) * sigma /
         std::sqrt(static_cast<double>(L));
}

inline Eigen::VectorXd random_contribution(const RandomEffectState& state, const PanelDataset& d) {
  require(state.alpha.rows() == d.n_subjects(), "random-effect state does not match dataset");
  Eigen::VectorXd g(d.n_rows());
  for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
    int s = d.subject_of_row[r];
    g[r] = state.alpha(s, 0) + state.alpha(s, 1) * d.t[r];
  }
  return g;
}

}  // namespace bcflong
