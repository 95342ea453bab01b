#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "bcflong/common.hpp"
#include "bcflong/csv.hpp"
#include "bcflong/rng.hpp"

namespace bcflong {

// Long-format longitudinal panel. Rows are sorted by (subject, time) at
// construction; z is stored as ±0.5 per row and constant within subject, as
// is W. Subject indices run 0..N-1 in first-appearance order of the sorted
// labels.
struct PanelDataset {
  Eigen::VectorXd y;
  Eigen::VectorXd t;
  Eigen::VectorXd z;
  Eigen::MatrixXd K;   // prognostic covariates, per row
  Eigen::MatrixXd W;   // moderating covariates, per row (constant in subject)
  Eigen::VectorXd pi;  // propensity per row; size 0 until supplied/estimated

  std::vector<int> subject_of_row;            // row -> subject index
  std::vector<std::pair<int, int>> subject_rows;  // subject -> [begin, end)
  std::vector<long long> subject_label;       // subject index -> original id

  int n_subjects() const { return static_cast<int>(subject_rows.size()); }
  Eigen::Index n_rows() const { return y.size(); }
  int n_i(int s) const { return subject_rows[s].second - subject_rows[s].first; }

  double z_subject(int s) const { return z[subject_rows[s].first]; }

  Eigen::MatrixXd W_subjects() const {
    Eigen::MatrixXd out(n_subjects(), W.cols());
    for (int s = 0; s < n_subjects(); ++s) out.row(s) = W.row(subject_rows[s].first);
    return out;
  }
};

struct StandardizationParams {
  double y_min = 0.0;
  double y_max = 1.0;
  double range() const { return y_max - y_min; }
  double standardize(double y) const { return (y - y_min) / range() - 0.5; }
  double unstandardize(double s) const { return (s + 0.5) * range() + y_min; }
};

struct HoldoutPartition {
  std::vector<int> fit_rows;
  std::vector<int> holdout_rows;
  std::vector<long long> holdout_subjects;
};

struct PanelSchema {
  std::string subject = "subject";
  std::string time = "t";
  std::string outcome = "y";
  std::string treatment = "z";
  std::vector<std::string> K_cols;  // empty: every column named K* in file order
  std::vector<std::string> W_cols;  // empty: every column named W* in file order
  std::string propensity;           // empty: none
};

namespace detail {

inline void check_finite(const Eigen::VectorXd& v, const std::string& what) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i]))
      throw DataError("missing or non-finite value in " + what + " at row " + std::to_string(i + 1));
}

inline void check_finite(const Eigen::MatrixXd& m, const std::string& what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (!std::isfinite(m(i, j)))
        throw DataError("missing or non-finite value in " + what + " at row " + std::to_string(i + 1) +
                        ", column " + std::to_string(j + 1));
}

}  // namespace detail

// Validates and assembles a panel from parallel arrays. Treatment codes {0,1}
// are remapped to {-0.5,+0.5}; rows come out sorted by (subject, time).
inline PanelDataset build_panel(std::vector<long long> subject, Eigen::VectorXd t, Eigen::VectorXd y,
                                Eigen::VectorXd z, Eigen::MatrixXd K, Eigen::MatrixXd W,
                                Eigen::VectorXd pi = Eigen::VectorXd()) {
  const Eigen::Index L = y.size();
  require(L > 0, "panel has no rows");
  require(static_cast<Eigen::Index>(subject.size()) == L, "subject/outcome length mismatch");
  require(t.size() == L && z.size() == L, "time/treatment length mismatch");
  require(K.rows() == L || K.size() == 0, "K row count mismatch");
  require(W.rows() == L || W.size() == 0, "W row count mismatch");
  require(pi.size() == 0 || pi.size() == L, "propensity length mismatch");

  detail::check_finite(y, "outcome");
  detail::check_finite(t, "time");
  detail::check_finite(z, "treatment");
  if (K.size()) detail::check_finite(K, "K");
  if (W.size()) detail::check_finite(W, "W");
  for (Eigen::Index i = 0; i < L; ++i)
    if (t[i] < 0.0) throw DataError("negative time at row " + std::to_string(i + 1));

  bool zeroone = true, halves = true;
  for (Eigen::Index i = 0; i < L; ++i) {
    if (z[i] != 0.0 && z[i] != 1.0) zeroone = false;
    if (z[i] != -0.5 && z[i] != 0.5) halves = false;
  }
  if (!zeroone && !halves)
    throw DataError("treatment must be coded {0,1} or {-0.5,+0.5} consistently");
  if (zeroone)
    for (Eigen::Index i = 0; i < L; ++i) z[i] = z[i] == 1.0 ? 0.5 : -0.5;

  if (pi.size())
    for (Eigen::Index i = 0; i < L; ++i)
      if (!(pi[i] > 0.0 && pi[i] < 1.0))
        throw DataError("supplied propensity outside (0,1) at row " + std::to_string(i + 1));

  std::vector<Eigen::Index> order(L);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (subject[a] != subject[b]) return subject[a] < subject[b];
    return t[a] < t[b];
  });

  PanelDataset d;
  d.y.resize(L);
  d.t.resize(L);
  d.z.resize(L);
  d.K.resize(L, K.size() ? K.cols() : 0);
  d.W.resize(L, W.size() ? W.cols() : 0);
  if (pi.size()) d.pi.resize(L);
  d.subject_of_row.resize(L);

  for (Eigen::Index r = 0; r < L; ++r) {
    Eigen::Index src = order[r];
    d.y[r] = y[src];
    d.t[r] = t[src];
    d.z[r] = z[src];
    if (K.size()) d.K.row(r) = K.row(src);
    if (W.size()) d.W.row(r) = W.row(src);
    if (pi.size()) d.pi[r] = pi[src];
    long long lab = subject[src];
    if (d.subject_label.empty() || d.subject_label.back() != lab) {
      if (!d.subject_rows.empty()) d.subject_rows.back().second = static_cast<int>(r);
      d.subject_label.push_back(lab);
      d.subject_rows.emplace_back(static_cast<int>(r), 0);
    }
    d.subject_of_row[r] = static_cast<int>(d.subject_label.size()) - 1;
  }
  d.subject_rows.back().second = static_cast<int>(L);

  for (int s = 0; s < d.n_subjects(); ++s) {
    auto [b, e] = d.subject_rows[s];
    for (int r = b + 1; r < e; ++r) {
      if (d.z[r] != d.z[b])
        throw DataError("treatment varies within subject " + std::to_string(d.subject_label[s]));
      if (d.W.cols() && (d.W.row(r) - d.W.row(b)).cwiseAbs().maxCoeff() > 0.0)
        throw DataError("W varies within subject " + std::to_string(d.subject_label[s]));
    }
  }
  return d;
}

inline PanelDataset load_panel(const std::string& path, const PanelSchema& schema = PanelSchema()) {
  CsvTable tab = read_csv(path);
  const Eigen::Index L = tab.values.rows();
  require(L > 0, "'" + path + "' has a header but no data rows");

  auto grab = [&](const std::string& name) { return tab.values.col(tab.col(name)); };

  std::vector<std::string> kc = schema.K_cols, wc = schema.W_cols;
  if (kc.empty())
    for (const auto& c : tab.columns)
      if (c.size() > 1 && c[0] == 'K') kc.push_back(c);
  if (wc.empty())
    for (const auto& c : tab.columns)
      if (c.size() > 1 && c[0] == 'W') wc.push_back(c);

  Eigen::MatrixXd K(L, static_cast<Eigen::Index>(kc.size()));
  for (std::size_t j = 0; j < kc.size(); ++j) K.col(j) = grab(kc[j]);
  Eigen::MatrixXd W(L, static_cast<Eigen::Index>(wc.size()));
  for (std::size_t j = 0; j < wc.size(); ++j) W.col(j) = grab(wc[j]);

  std::vector<long long> subject(L);
  Eigen::VectorXd subj_col = grab(schema.subject);
  for (Eigen::Index i = 0; i < L; ++i) {
    double v = subj_col[i];
    subject[i] = static_cast<long long>(v);
    if (static_cast<double>(subject[i]) != v)
      throw DataError("non-integer subject id at row " + std::to_string(i + 1));
  }

  Eigen::VectorXd pi;
  if (!schema.propensity.empty()) pi = grab(schema.propensity);

  return build_panel(std::move(subject), grab(schema.time), grab(schema.outcome),
                     grab(schema.treatment), std::move(K), std::move(W), std::move(pi));
}

inline void write_panel(const std::string& path, const PanelDataset& d) {
  std::vector<std::string> cols = {"subject", "t", "y", "z"};
  for (Eigen::Index j = 0; j < d.W.cols(); ++j) cols.push_back("W" + std::to_string(j + 1));
  for (Eigen::Index j = 0; j < d.K.cols(); ++j) cols.push_back("K" + std::to_string(j + 1));
  if (d.pi.size()) cols.push_back("pi");
  Eigen::MatrixXd m(d.n_rows(), static_cast<Eigen::Index>(cols.size()));
  for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
    Eigen::Index c = 0;
    m(r, c++) = static_cast<double>(d.subject_label[d.subject_of_row[r]]);
    m(r, c++) = d.t[r];
    m(r, c++) = d.y[r];
    m(r, c++) = d.z[r];
    for (Eigen::Index j = 0; j < d.W.cols(); ++j) m(r, c++) = d.W(r, j);
    for (Eigen::Index j = 0; j < d.K.cols(); ++j) m(r, c++) = d.K(r, j);
    if (d.pi.size()) m(r, c++) = d.pi[r];
  }
  write_csv(path, cols, m);
}

inline std::pair<PanelDataset, StandardizationParams> standardize_outcome(const PanelDataset& d) {
  StandardizationParams p;
  p.y_min = d.y.minCoeff();
  p.y_max = d.y.maxCoeff();
  require(p.y_max > p.y_min, "outcome is constant; cannot standardize");
  PanelDataset out = d;
  for (Eigen::Index i = 0; i < out.y.size(); ++i) out.y[i] = p.standardize(out.y[i]);
  return {std::move(out), p};
}

// Hold out one row from each of x randomly chosen subjects that have at
// least two observations.
inline HoldoutPartition partition_holdout(const PanelDataset& d, int x, std::uint64_t seed) {
  std::vector<int> eligible;
  for (int s = 0; s < d.n_subjects(); ++s)
    if (d.n_i(s) >= 2) eligible.push_back(s);
  require(x >= 0, "holdout count must be nonnegative");
  require(x <= static_cast<int>(eligible.size()),
          "holdout count " + std::to_string(x) + " exceeds the " +
              std::to_string(eligible.size()) + " subjects with at least 2 rows");

  RngStream rng(seed);
  // partial Fisher-Yates: first x entries become the sampled subjects
  for (int i = 0; i < x; ++i) {
    std::size_t j = i + rng.uniform_int(eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
  }
  std::vector<int> chosen(eligible.begin(), eligible.begin() + x);
  std::sort(chosen.begin(), chosen.end());

  HoldoutPartition part;
  std::vector<char> held(d.n_rows(), 0);
  for (int s : chosen) {
    auto [b, e] = d.subject_rows[s];
    int r = b + static_cast<int>(rng.uniform_int(e - b));
    held[r] = 1;
    part.holdout_rows.push_back(r);
    part.holdout_subjects.push_back(d.subject_label[s]);
  }
  for (Eigen::Index r = 0; r < d.n_rows(); ++r)
    if (!held[r]) part.fit_rows.push_back(static_cast<int>(r));
  return part;
}

inline PanelDataset subset_rows(const PanelDataset& d, const std::vector<int>& rows) {
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  std::vector<long long> subject(n);
  Eigen::VectorXd t(n), y(n), z(n), pi;
  if (d.pi.size()) pi.resize(n);
  Eigen::MatrixXd K(n, d.K.cols()), W(n, d.W.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    int r = rows[i];
    subject[i] = d.subject_label[d.subject_of_row[r]];
    t[i] = d.t[r];
    y[i] = d.y[r];
    z[i] = d.z[r];
    K.row(i) = d.K.row(r);
    W.row(i) = d.W.row(r);
    if (d.pi.size()) pi[i] = d.pi[r];
  }
  return build_panel(std::move(subject), std::move(t), std::move(y), std::move(z), std::move(K),
                     std::move(W), std::move(pi));
}

enum class PropensityMode { constant, logistic, supplied };

struct PropensityResult {
  Eigen::VectorXd per_subject;  // N entries in [0.01, 0.99]
  Eigen::VectorXd per_row;      // expanded to rows
  Eigen::VectorXd beta;         // logistic coefficients (intercept first); empty otherwise
  std::vector<std::string> warnings;
};

// Subject-level propensity. constant: treated fraction. logistic: IRLS fit of
// treatment on W with intercept, fitted probabilities clamped to [0.01, 0.99]
// (overlap enforcement; also tames separation). supplied: pass-through of the
// pi column, clamped the same way.
inline PropensityResult estimate_propensity(const PanelDataset& d,
                                            PropensityMode mode = PropensityMode::constant) {
  const int N = d.n_subjects();
  PropensityResult res;
  res.per_subject.resize(N);

  auto clamp = [](double p) { return std::min(0.99, std::max(0.01, p)); };

  if (mode == PropensityMode::supplied) {
    require(d.pi.size() > 0, "propensity mode 'supplied' but no pi column present");
    for (int s = 0; s < N; ++s) res.per_subject[s] = clamp(d.pi[d.subject_rows[s].first]);
  } else if (mode == PropensityMode::constant) {
    double treated = 0;
    for (int s = 0; s < N; ++s) treated += d.z_subject(s) > 0 ? 1.0 : 0.0;
    double frac = clamp(treated / N);
    res.per_subject.setConstant(frac);
  } else {
    require(d.W.cols() > 0, "propensity mode 'logistic' needs W columns");
    Eigen::MatrixXd X(N, d.W.cols() + 1);
    Eigen::VectorXd zi(N);
    for (int s = 0; s < N; ++s) {
      X(s, 0) = 1.0;
      X.row(s).tail(d.W.cols()) = d.W.row(d.subject_rows[s].first);
      zi[s] = d.z_subject(s) > 0 ? 1.0 : 0.0;
    }
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
    bool converged = false;
    for (int it = 0; it < 100 && !converged; ++it) {
      Eigen::VectorXd eta = X * beta;
      Eigen::VectorXd p(N), w(N);
      for (int s = 0; s < N; ++s) {
        double e = 1.0 / (1.0 + std::exp(-eta[s]));
        e = std::min(1.0 - 1e-10, std::max(1e-10, e));
        p[s] = e;
        w[s] = e * (1.0 - e);
      }
      Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X;
      H.diagonal().array() += 1e-10;
      Eigen::VectorXd g = X.transpose() * (zi - p);
      Eigen::VectorXd step = H.ldlt().solve(g);
      beta += step;
      converged = step.cwiseAbs().maxCoeff() < 1e-10;
    }
    if (!converged) {
      PropensityResult fb = estimate_propensity(d, PropensityMode::constant);
      fb.warnings.push_back("logistic propensity did not converge in 100 iterations; using constant");
      return fb;
    }
    res.beta = beta;
    Eigen::VectorXd eta = X * beta;
    bool clamped = false;
    for (int s = 0; s < N; ++s) {
      double p = 1.0 / (1.0 + std::exp(-eta[s]));
      double c = clamp(p);
      clamped = clamped || c != p;
      res.per_subject[s] = c;
    }
    if (clamped)
      res.warnings.push_back("logistic propensity clamped to [0.01, 0.99] for some subjects");
  }

  res.per_row.resize(d.n_rows());
  for (Eigen::Index r = 0; r < d.n_rows(); ++r)
    res.per_row[r] = res.per_subject[d.subject_of_row[r]];
  return res;
}

}  // namespace bcflong
