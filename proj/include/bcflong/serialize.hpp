#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "bcflong/common.hpp"
#include "bcflong/csv.hpp"
#include "bcflong/forest.hpp"
#include "bcflong/random_effects.hpp"
#include "bcflong/sampler.hpp"

namespace bcflong {

using Json = nlohmann::ordered_json;

inline std::string to_string(REPrior p) {
  switch (p) {
    case REPrior::none:
      return "none";
    case REPrior::base:
      return "base";
    case REPrior::horseshoe:
      return "horseshoe";
  }
  return "?";
}

inline REPrior re_prior_from_string(const std::string& s) {
  if (s == "none") return REPrior::none;
  if (s == "base") return REPrior::base;
  if (s == "horseshoe") return REPrior::horseshoe;
  throw ConfigError("unknown random-effect prior '" + s + "' (none|base|horseshoe)");
}

inline std::string to_string(GlobalScaleMode m) {
  switch (m) {
    case GlobalScaleMode::unit:
      return "unit";
    case GlobalScaleMode::sigma_scaled:
      return "sigma_scaled";
    case GlobalScaleMode::rho0:
      return "rho0";
  }
  return "?";
}

inline GlobalScaleMode global_scale_mode_from_string(const std::string& s) {
  if (s == "unit") return GlobalScaleMode::unit;
  if (s == "sigma_scaled") return GlobalScaleMode::sigma_scaled;
  if (s == "rho0") return GlobalScaleMode::rho0;
  throw ConfigError("unknown global scale mode '" + s + "' (unit|sigma_scaled|rho0)");
}

inline std::string to_string(PropensityMode m) {
  switch (m) {
    case PropensityMode::constant:
      return "constant";
    case PropensityMode::logistic:
      return "logistic";
    case PropensityMode::supplied:
      return "supplied";
  }
  return "?";
}

inline PropensityMode propensity_mode_from_string(const std::string& s) {
  if (s == "constant") return PropensityMode::constant;
  if (s == "logistic") return PropensityMode::logistic;
  if (s == "supplied") return PropensityMode::supplied;
  throw ConfigError("unknown propensity mode '" + s + "' (constant|logistic|supplied)");
}

inline Json vec_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Eigen::VectorXd vec_from_json(const Json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

inline Json mat_json(const Eigen::MatrixXd& m) {
  Json v = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v.push_back(m(i, j));
  return Json{{"r", m.rows()}, {"c", m.cols()}, {"v", std::move(v)}};
}

inline Eigen::MatrixXd mat_from_json(const Json& j) {
  Eigen::Index r = j.at("r").get<Eigen::Index>(), c = j.at("c").get<Eigen::Index>();
  const Json& v = j.at("v");
  require(static_cast<Eigen::Index>(v.size()) == r * c, "matrix payload size mismatch");
  Eigen::MatrixXd m(r, c);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index jj = 0; jj < c; ++jj) m(i, jj) = v[k++].get<double>();
  return m;
}

inline Json forest_config_json(const ForestConfig& c) {
  return Json{{"m", c.m},
              {"eta", c.eta},
              {"beta", c.beta},
              {"k_leaf", c.k_leaf},
              {"soft", c.soft},
              {"bandwidth_prior_mean", c.bandwidth_prior_mean},
              {"n_cutpoints", c.n_cutpoints},
              {"sparse_splits", c.sparse_splits},
              {"sparse_alpha", c.sparse_alpha}};
}

inline ForestConfig forest_config_from_json(const Json& j) {
  ForestConfig c;
  c.m = j.at("m").get<int>();
  c.eta = j.at("eta").get<double>();
  c.beta = j.at("beta").get<double>();
  c.k_leaf = j.at("k_leaf").get<double>();
  c.soft = j.at("soft").get<bool>();
  c.bandwidth_prior_mean = j.at("bandwidth_prior_mean").get<double>();
  c.n_cutpoints = j.at("n_cutpoints").get<int>();
  c.sparse_splits = j.at("sparse_splits").get<bool>();
  c.sparse_alpha = j.at("sparse_alpha").get<double>();
  return c;
}

inline Json sampler_config_json(const SamplerConfig& c) {
  return Json{{"max_iter", c.max_iter},
              {"burn_in", c.burn_in},
              {"thin", c.thin},
              {"seed", c.seed},
              {"re_prior", to_string(c.re_prior)},
              {"mu_forest", forest_config_json(c.mu_forest)},
              {"tau_forest", forest_config_json(c.tau_forest)},
              {"global_scale_mode", to_string(c.global_scale_mode)},
              {"N0", c.N0},
              {"use_tau_forest", c.use_tau_forest},
              {"include_propensity_in_mu", c.include_propensity_in_mu},
              {"propensity_mode", to_string(c.propensity_mode)},
              {"sigma_nu", c.sigma_nu},
              {"sigma_quantile", c.sigma_quantile},
              {"standardize", c.standardize},
              {"fixed_sigma2", c.fixed_sigma2},
              {"sigma2_value", c.sigma2_value},
              {"fixed_Sigma_B", c.fixed_Sigma_B},
              {"Sigma_B_value",
               Json::array({c.Sigma_B_value(0, 0), c.Sigma_B_value(0, 1), c.Sigma_B_value(1, 0),
                            c.Sigma_B_value(1, 1)})},
              {"pin_alpha_zero", c.pin_alpha_zero},
              {"store_max", c.store_max},
              {"store_lambda", c.store_lambda},
              {"checkpoint_every", c.checkpoint_every},
              {"checkpoint_path", c.checkpoint_path}};
}

inline SamplerConfig sampler_config_from_json(const Json& j) {
  SamplerConfig c;
  c.max_iter = j.at("max_iter").get<long>();
  c.burn_in = j.at("burn_in").get<long>();
  c.thin = j.at("thin").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.re_prior = re_prior_from_string(j.at("re_prior").get<std::string>());
  c.mu_forest = forest_config_from_json(j.at("mu_forest"));
  c.tau_forest = forest_config_from_json(j.at("tau_forest"));
  c.global_scale_mode = global_scale_mode_from_string(j.at("global_scale_mode").get<std::string>());
  c.N0 = j.at("N0").get<int>();
  c.use_tau_forest = j.at("use_tau_forest").get<bool>();
  c.include_propensity_in_mu = j.at("include_propensity_in_mu").get<bool>();
  c.propensity_mode = propensity_mode_from_string(j.at("propensity_mode").get<std::string>());
  c.sigma_nu = j.at("sigma_nu").get<double>();
  c.sigma_quantile = j.at("sigma_quantile").get<double>();
  c.standardize = j.at("standardize").get<bool>();
  c.fixed_sigma2 = j.at("fixed_sigma2").get<bool>();
  c.sigma2_value = j.at("sigma2_value").get<double>();
  c.fixed_Sigma_B = j.at("fixed_Sigma_B").get<bool>();
  const Json& sb = j.at("Sigma_B_value");
  c.Sigma_B_value << sb[0].get<double>(), sb[1].get<double>(), sb[2].get<double>(),
      sb[3].get<double>();
  c.pin_alpha_zero = j.at("pin_alpha_zero").get<bool>();
  c.store_max = j.at("store_max").get<int>();
  c.store_lambda = j.at("store_lambda").get<bool>();
  c.checkpoint_every = j.at("checkpoint_every").get<long>();
  c.checkpoint_path = j.at("checkpoint_path").get<std::string>();
  return c;
}

namespace detail {

// reachable nodes in preorder with remapped ids; slot layout from grow/prune
// churn never leaks into the serialized form
inline void compact_nodes(const std::vector<TreeNode>& nodes, int id, int parent,
                          std::vector<TreeNode>& out) {
  int nid = static_cast<int>(out.size());
  out.push_back(nodes[id]);
  out[nid].parent = parent;
  if (nodes[id].var < 0) {
    out[nid].left = out[nid].right = -1;
    return;
  }
  int lpos = static_cast<int>(out.size());
  compact_nodes(nodes, nodes[id].left, nid, out);
  out[nid].left = lpos;
  int rpos = static_cast<int>(out.size());
  compact_nodes(nodes, nodes[id].right, nid, out);
  out[nid].right = rpos;
}

}  // namespace detail

inline Json nodes_json(const std::vector<TreeNode>& nodes) {
  std::vector<TreeNode> c;
  detail::compact_nodes(nodes, 0, -1, c);
  Json arr = Json::array();
  for (const auto& n : c)
    arr.push_back(Json::array({n.var, n.cut, n.left, n.right, n.parent, n.depth, n.leaf}));
  return arr;
}

inline std::vector<TreeNode> nodes_from_json(const Json& arr) {
  require(!arr.empty(), "tree has no nodes");
  std::vector<TreeNode> nodes(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const Json& n = arr[i];
    require(n.size() == 7, "bad tree node record");
    nodes[i].var = n[0].get<int>();
    nodes[i].cut = n[1].get<double>();
    nodes[i].left = n[2].get<int>();
    nodes[i].right = n[3].get<int>();
    nodes[i].parent = n[4].get<int>();
    nodes[i].depth = n[5].get<int>();
    nodes[i].leaf = n[6].get<double>();
  }
  return nodes;
}

inline Json frozen_forest_json(const FrozenForest& f) {
  Json trees = Json::array();
  for (const auto& t : f.trees) trees.push_back(Json{{"b", t.bandwidth}, {"n", nodes_json(t.nodes)}});
  return Json{{"soft", f.soft}, {"trees", std::move(trees)}};
}

inline FrozenForest frozen_forest_from_json(const Json& j) {
  FrozenForest f;
  f.soft = j.at("soft").get<bool>();
  for (const auto& t : j.at("trees"))
    f.trees.push_back(FrozenTree{nodes_from_json(t.at("n")), t.at("b").get<double>()});
  return f;
}

inline Json move_counts_json(const MoveCounts& c) {
  return Json{{"grow_accept", c.grow_accept},     {"grow_total", c.grow_total},
              {"prune_accept", c.prune_accept},   {"prune_total", c.prune_total},
              {"change_accept", c.change_accept}, {"change_total", c.change_total},
              {"bw_accept", c.bw_accept},         {"bw_total", c.bw_total}};
}

inline MoveCounts move_counts_from_json(const Json& j) {
  MoveCounts c;
  c.grow_accept = j.at("grow_accept").get<long>();
  c.grow_total = j.at("grow_total").get<long>();
  c.prune_accept = j.at("prune_accept").get<long>();
  c.prune_total = j.at("prune_total").get<long>();
  c.change_accept = j.at("change_accept").get<long>();
  c.change_total = j.at("change_total").get<long>();
  c.bw_accept = j.at("bw_accept").get<long>();
  c.bw_total = j.at("bw_total").get<long>();
  return c;
}

inline Json ensemble_state_json(const SoftTreeEnsemble& e) {
  Json trees = Json::array();
  for (const auto& t : e.trees)
    trees.push_back(Json{{"b", t.bandwidth}, {"n", nodes_json(t.nodes)}});
  Json sw = Json::array();
  for (Eigen::Index i = 0; i < e.split_weight.size(); ++i) sw.push_back(e.split_weight[i]);
  return Json{{"trees", std::move(trees)},
              {"split_weight", std::move(sw)},
              {"counts", move_counts_json(e.counts)}};
}

// structure only; caller must rebuild caches against the training matrix
inline void ensemble_state_from_json(const Json& j, SoftTreeEnsemble& e) {
  const Json& trees = j.at("trees");
  require(trees.size() == e.trees.size(),
          "checkpoint tree count " + std::to_string(trees.size()) + " mismatches configured " +
              std::to_string(e.trees.size()));
  for (std::size_t k = 0; k < e.trees.size(); ++k) {
    SoftTree t;
    t.nodes = nodes_from_json(trees[k].at("n"));
    t.bandwidth = trees[k].at("b").get<double>();
    t.refresh_leaf_ids();
    e.trees[k] = std::move(t);
  }
  e.split_weight = vec_from_json(j.at("split_weight"));
  e.counts = move_counts_from_json(j.at("counts"));
}

inline std::uint64_t draws_data_checksum(const PosteriorDraws& d) {
  std::uint64_t h = fnv1a64(d.y_orig.data(), sizeof(double) * d.y_orig.size());
  h = fnv1a64(d.train_t.data(), sizeof(double) * d.train_t.size(), h);
  h = fnv1a64(d.train_z.data(), sizeof(double) * d.train_z.size(), h);
  return h;
}

// ---- posterior draws directory ----

namespace detail {

inline std::vector<std::string> numbered(const std::string& prefix, Eigen::Index n) {
  std::vector<std::string> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = prefix + std::to_string(i + 1);
  return out;
}

}  // namespace detail

inline void save_draws(const std::string& dir, const PosteriorDraws& d) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto at = [&](const std::string& f) { return (fs::path(dir) / f).string(); };

  const Eigen::Index L = d.mu_mean.size();
  const int N = d.n_subjects();
  const long S = d.n_stored();

  Json manifest{{"format", 1},
                {"config", sampler_config_json(d.cfg)},
                {"std", Json{{"y_min", d.std_params.y_min}, {"y_max", d.std_params.y_max}}},
                {"n_retained", d.n_retained},
                {"subject_label", d.subject_label},
                {"z_subjects", vec_json(d.z_subjects)},
                {"last_row_of_subject", d.last_row_of_subject},
                {"train_subject_of_row", d.train_subject_of_row},
                {"stored_iters", d.stored_iters},
                {"counts", Json{{"mu", move_counts_json(d.mu_counts)},
                                {"tau", move_counts_json(d.tau_counts)}}},
                {"has_eval", d.eval_gamma_draws.size() > 0},
                {"data_checksum", draws_data_checksum(d)}};
  write_text_file(at("manifest.json"), manifest.dump(1) + "\n");

  {
    Eigen::MatrixXd rows(L, 7);
    for (Eigen::Index r = 0; r < L; ++r) {
      rows(r, 0) = static_cast<double>(d.subject_label[d.train_subject_of_row[r]]);
      rows(r, 1) = d.train_t[r];
      rows(r, 2) = d.train_z[r];
      rows(r, 3) = d.y_orig[r];
      rows(r, 4) = d.mu_mean[r];
      rows(r, 5) = d.tau_mean[r];
      rows(r, 6) = d.gamma_mean[r];
    }
    write_csv(at("rows.csv"), {"subject", "t", "z", "y", "mu_mean", "tau_mean", "gamma_mean"},
              rows);
  }

  {
    Eigen::MatrixXd am(N, 3);
    for (int s = 0; s < N; ++s) {
      am(s, 0) = static_cast<double>(d.subject_label[s]);
      am(s, 1) = d.alpha_mean(s, 0);
      am(s, 2) = d.alpha_mean(s, 1);
    }
    write_csv(at("alpha_mean.csv"), {"subject", "alpha1", "alpha2"}, am);
  }

  {
    std::vector<std::string> cols = {"subject"};
    for (Eigen::Index j = 0; j < d.W_subjects.cols(); ++j) cols.push_back("W" + std::to_string(j + 1));
    Eigen::MatrixXd ws(N, d.W_subjects.cols() + 1);
    for (int s = 0; s < N; ++s) {
      ws(s, 0) = static_cast<double>(d.subject_label[s]);
      ws.row(s).tail(d.W_subjects.cols()) = d.W_subjects.row(s);
    }
    write_csv(at("W_subjects.csv"), cols, ws);
  }

  {
    const long R = d.n_retained;
    std::vector<std::string> cols = {"sigma2"};
    int extra = 0;
    if (!d.rho.empty()) {
      cols.push_back("rho_intercept");
      cols.push_back("rho_slope");
      extra = 2;
    } else if (!d.Sigma_B.empty()) {
      cols.push_back("Sigma_B_11");
      cols.push_back("Sigma_B_12");
      cols.push_back("Sigma_B_22");
      extra = 3;
    }
    Eigen::MatrixXd sc(R, 1 + extra);
    for (long k = 0; k < R; ++k) {
      sc(k, 0) = d.sigma2[static_cast<std::size_t>(k)];
      if (!d.rho.empty()) {
        sc(k, 1) = d.rho[static_cast<std::size_t>(k)][0];
        sc(k, 2) = d.rho[static_cast<std::size_t>(k)][1];
      } else if (!d.Sigma_B.empty()) {
        sc(k, 1) = d.Sigma_B[static_cast<std::size_t>(k)](0, 0);
        sc(k, 2) = d.Sigma_B[static_cast<std::size_t>(k)](0, 1);
        sc(k, 3) = d.Sigma_B[static_cast<std::size_t>(k)](1, 1);
      }
    }
    write_csv(at("scalars.csv"), cols, sc);
  }

  write_csv(at("stored_mu.csv"), detail::numbered("r", L), d.stored_mu.topRows(S));
  write_csv(at("stored_tau.csv"), detail::numbered("r", L), d.stored_tau.topRows(S));
  write_csv(at("stored_gamma.csv"), detail::numbered("r", L), d.stored_gamma.topRows(S));

  {
    Eigen::MatrixXd sa(S, 2 * N);
    for (long k = 0; k < S; ++k)
      for (int s = 0; s < N; ++s) {
        sa(k, s) = d.stored_alpha[static_cast<std::size_t>(k)](s, 0);
        sa(k, N + s) = d.stored_alpha[static_cast<std::size_t>(k)](s, 1);
      }
    std::vector<std::string> cols = detail::numbered("alpha1_", N);
    std::vector<std::string> c2 = detail::numbered("alpha2_", N);
    cols.insert(cols.end(), c2.begin(), c2.end());
    write_csv(at("stored_alpha.csv"), cols, sa);
  }

  if (d.stored_lambda2.size() > 0) {
    std::vector<std::string> cols = detail::numbered("lambda2_1_", N);
    std::vector<std::string> c2 = detail::numbered("lambda2_2_", N);
    cols.insert(cols.end(), c2.begin(), c2.end());
    write_csv(at("stored_lambda2.csv"), cols, d.stored_lambda2.topRows(S));
  }

  if (!d.tau_forests.empty()) {
    Json forests = Json::array();
    for (std::size_t k = 0; k < d.tau_forests.size(); ++k)
      forests.push_back(frozen_forest_json(d.tau_forests[k]));
    write_text_file(at("tau_forests.json"), Json{{"forests", std::move(forests)}}.dump() + "\n");
  }

  if (d.eval_gamma_draws.size() > 0) {
    const long R = d.n_retained;
    write_csv(at("eval_mu.csv"), detail::numbered("e", d.eval_mu_draws.cols()),
              d.eval_mu_draws.topRows(R));
    write_csv(at("eval_tau.csv"), detail::numbered("e", d.eval_tau_draws.cols()),
              d.eval_tau_draws.topRows(R));
    write_csv(at("eval_gamma.csv"), detail::numbered("e", d.eval_gamma_draws.cols()),
              d.eval_gamma_draws.topRows(R));
  }
}

inline PosteriorDraws load_draws(const std::string& dir) {
  namespace fs = std::filesystem;
  auto at = [&](const std::string& f) { return (fs::path(dir) / f).string(); };
  require(fs::exists(at("manifest.json")), "'" + dir + "' is not a draws directory");

  Json manifest = Json::parse(read_text_file(at("manifest.json")));
  PosteriorDraws d;
  d.cfg = sampler_config_from_json(manifest.at("config"));
  d.std_params.y_min = manifest.at("std").at("y_min").get<double>();
  d.std_params.y_max = manifest.at("std").at("y_max").get<double>();
  d.n_retained = manifest.at("n_retained").get<long>();
  d.subject_label = manifest.at("subject_label").get<std::vector<long long>>();
  d.z_subjects = vec_from_json(manifest.at("z_subjects"));
  d.last_row_of_subject = manifest.at("last_row_of_subject").get<std::vector<int>>();
  d.train_subject_of_row = manifest.at("train_subject_of_row").get<std::vector<int>>();
  d.stored_iters = manifest.at("stored_iters").get<std::vector<long>>();
  d.mu_counts = move_counts_from_json(manifest.at("counts").at("mu"));
  d.tau_counts = move_counts_from_json(manifest.at("counts").at("tau"));

  const int N = d.n_subjects();

  {
    CsvTable rows = read_csv(at("rows.csv"));
    d.train_t = rows.values.col(rows.col("t"));
    d.train_z = rows.values.col(rows.col("z"));
    d.y_orig = rows.values.col(rows.col("y"));
    d.mu_mean = rows.values.col(rows.col("mu_mean"));
    d.tau_mean = rows.values.col(rows.col("tau_mean"));
    d.gamma_mean = rows.values.col(rows.col("gamma_mean"));
  }

  {
    CsvTable am = read_csv(at("alpha_mean.csv"));
    require(am.values.rows() == N, "alpha_mean.csv row count mismatch");
    d.alpha_mean.resize(N, 2);
    d.alpha_mean.col(0) = am.values.col(am.col("alpha1"));
    d.alpha_mean.col(1) = am.values.col(am.col("alpha2"));
  }

  {
    CsvTable ws = read_csv(at("W_subjects.csv"));
    require(ws.values.rows() == N, "W_subjects.csv row count mismatch");
    d.W_subjects = ws.values.rightCols(ws.values.cols() - 1);
  }

  {
    CsvTable sc = read_csv(at("scalars.csv"));
    const long R = sc.values.rows();
    require(R == d.n_retained, "scalars.csv row count mismatch");
    d.sigma2.resize(R);
    for (long k = 0; k < R; ++k) d.sigma2[static_cast<std::size_t>(k)] = sc.values(k, sc.col("sigma2"));
    if (sc.has_col("rho_intercept")) {
      d.rho.resize(R);
      for (long k = 0; k < R; ++k)
        d.rho[static_cast<std::size_t>(k)] = Eigen::Vector2d(
            sc.values(k, sc.col("rho_intercept")), sc.values(k, sc.col("rho_slope")));
    }
    if (sc.has_col("Sigma_B_11")) {
      d.Sigma_B.resize(R);
      for (long k = 0; k < R; ++k) {
        Eigen::Matrix2d m;
        double offdiag = sc.values(k, sc.col("Sigma_B_12"));
        m << sc.values(k, sc.col("Sigma_B_11")), offdiag, offdiag,
            sc.values(k, sc.col("Sigma_B_22"));
        d.Sigma_B[static_cast<std::size_t>(k)] = m;
      }
    }
  }

  d.stored_mu = read_csv(at("stored_mu.csv")).values;
  d.stored_tau = read_csv(at("stored_tau.csv")).values;
  d.stored_gamma = read_csv(at("stored_gamma.csv")).values;
  require(d.stored_mu.rows() == static_cast<Eigen::Index>(d.stored_iters.size()),
          "stored draw row count mismatch");

  {
    Eigen::MatrixXd sa = read_csv(at("stored_alpha.csv")).values;
    require(sa.cols() == 2 * N, "stored_alpha.csv width mismatch");
    d.stored_alpha.resize(static_cast<std::size_t>(sa.rows()));
    for (Eigen::Index k = 0; k < sa.rows(); ++k) {
      Eigen::MatrixXd a(N, 2);
      for (int s = 0; s < N; ++s) {
        a(s, 0) = sa(k, s);
        a(s, 1) = sa(k, N + s);
      }
      d.stored_alpha[static_cast<std::size_t>(k)] = std::move(a);
    }
  }

  if (fs::exists(at("stored_lambda2.csv"))) d.stored_lambda2 = read_csv(at("stored_lambda2.csv")).values;

  if (fs::exists(at("tau_forests.json"))) {
    Json forests = Json::parse(read_text_file(at("tau_forests.json")));
    for (const auto& f : forests.at("forests")) d.tau_forests.push_back(frozen_forest_from_json(f));
  }

  if (manifest.at("has_eval").get<bool>()) {
    d.eval_mu_draws = read_csv(at("eval_mu.csv")).values;
    d.eval_tau_draws = read_csv(at("eval_tau.csv")).values;
    d.eval_gamma_draws = read_csv(at("eval_gamma.csv")).values;
  }
  return d;
}

// ---- chain checkpointing ----

inline void save_checkpoint(const std::string& dir, GibbsRunner& runner) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  Json state{{"config", sampler_config_json(runner.draws().cfg)},
             {"iteration", runner.iteration()},
             {"rng", Json{{"mu", runner.rng_mu().serialize()},
                          {"tau", runner.rng_tau().serialize()},
                          {"re", runner.rng_re().serialize()}}},
             {"sigma", Json{{"sigma2", runner.sigma_state().sigma2},
                            {"nu", runner.sigma_state().nu},
                            {"lambda", runner.sigma_state().lambda}}},
             {"alpha", mat_json(runner.re_state().alpha)},
             {"horseshoe", Json{{"lambda2", mat_json(runner.horseshoe().lambda2)},
                                {"v", mat_json(runner.horseshoe().v)},
                                {"rho2", Json::array({runner.horseshoe().rho2[0],
                                                      runner.horseshoe().rho2[1]})},
                                {"xi", Json::array({runner.horseshoe().xi[0],
                                                    runner.horseshoe().xi[1]})}}},
             {"base", Json{{"Sigma_B", mat_json(runner.base_prior().Sigma_B)},
                           {"nu", runner.base_prior().nu},
                           {"Lambda", mat_json(runner.base_prior().Lambda)}}},
             {"mu_ensemble", ensemble_state_json(runner.mu_ensemble())},
             {"tau_ensemble", ensemble_state_json(runner.tau_ensemble())}};
  write_text_file((fs::path(dir) / "state.json").string(), state.dump() + "\n");
  save_draws((fs::path(dir) / "draws").string(), runner.draws());
}

inline SamplerConfig checkpoint_config(const std::string& dir) {
  Json state = Json::parse(read_text_file((std::filesystem::path(dir) / "state.json").string()));
  return sampler_config_from_json(state.at("config"));
}

// The runner must have been constructed with the checkpoint's config and the
// same panels. Storage for stored/eval draws is re-padded to the planned full
// size so recording can continue where it stopped.
inline void restore_checkpoint(const std::string& dir, GibbsRunner& runner) {
  namespace fs = std::filesystem;
  Json state = Json::parse(read_text_file((fs::path(dir) / "state.json").string()));

  runner.iteration_mutable() = state.at("iteration").get<long>();
  runner.rng_mu() = RngStream::deserialize(state.at("rng").at("mu").get<std::string>());
  runner.rng_tau() = RngStream::deserialize(state.at("rng").at("tau").get<std::string>());
  runner.rng_re() = RngStream::deserialize(state.at("rng").at("re").get<std::string>());

  runner.sigma_state().sigma2 = state.at("sigma").at("sigma2").get<double>();
  runner.sigma_state().nu = state.at("sigma").at("nu").get<double>();
  runner.sigma_state().lambda = state.at("sigma").at("lambda").get<double>();

  runner.re_state().alpha = mat_from_json(state.at("alpha"));
  runner.horseshoe().lambda2 = mat_from_json(state.at("horseshoe").at("lambda2"));
  runner.horseshoe().v = mat_from_json(state.at("horseshoe").at("v"));
  runner.horseshoe().rho2[0] = state.at("horseshoe").at("rho2")[0].get<double>();
  runner.horseshoe().rho2[1] = state.at("horseshoe").at("rho2")[1].get<double>();
  runner.horseshoe().xi[0] = state.at("horseshoe").at("xi")[0].get<double>();
  runner.horseshoe().xi[1] = state.at("horseshoe").at("xi")[1].get<double>();
  runner.base_prior().Sigma_B = mat_from_json(state.at("base").at("Sigma_B"));
  runner.base_prior().nu = state.at("base").at("nu").get<double>();
  runner.base_prior().Lambda = mat_from_json(state.at("base").at("Lambda"));

  ensemble_state_from_json(state.at("mu_ensemble"), runner.mu_ensemble());
  ensemble_state_from_json(state.at("tau_ensemble"), runner.tau_ensemble());

  PosteriorDraws loaded = load_draws((fs::path(dir) / "draws").string());
  PosteriorDraws& live = runner.draws_mutable();
  const SamplerConfig& cfg = live.cfg;
  long R = cfg.retained_count();
  long stride = std::max(1L, (R + cfg.store_max - 1) / cfg.store_max);
  long S = (R + stride - 1) / stride;

  // stored/eval matrices were written with only the filled rows; re-pad them
  // to their planned sizes so recording can continue in place
  auto pad = [&](Eigen::MatrixXd& m, long rows_total) {
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(rows_total, m.cols());
    full.topRows(m.rows()) = m;
    m = std::move(full);
  };
  pad(loaded.stored_mu, S);
  pad(loaded.stored_tau, S);
  pad(loaded.stored_gamma, S);
  if (loaded.stored_lambda2.size() > 0) pad(loaded.stored_lambda2, S);
  bool live_eval = live.eval_gamma_draws.size() > 0;
  bool ckpt_eval = loaded.eval_gamma_draws.cols() > 0;
  require(live_eval == ckpt_eval, "checkpoint and runner disagree about evaluation rows");
  if (live_eval) {
    require(loaded.eval_gamma_draws.cols() == live.eval_gamma_draws.cols(),
            "checkpoint evaluation width mismatch");
    pad(loaded.eval_mu_draws, R);
    pad(loaded.eval_tau_draws, R);
    pad(loaded.eval_gamma_draws, R);
  }
  loaded.sigma2.reserve(static_cast<std::size_t>(R));
  loaded.stored_alpha.reserve(static_cast<std::size_t>(S));
  live = std::move(loaded);

  runner.rebuild_after_restore();
}

}  // namespace bcflong
