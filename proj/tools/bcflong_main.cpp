#include <CLI11.hpp>
#include <bcflong/bcflong.hpp>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace bcflong;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

// ---- flat key=value config files ----

std::map<std::string, std::string> read_kv_file(const std::string& path) {
  std::map<std::string, std::string> kv;
  std::string content = read_text_file(path);
  std::size_t pos = 0;
  long lineno = 0;
  while (pos < content.size()) {
    std::size_t nl = content.find('\n', pos);
    std::string line = content.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? content.size() : nl + 1;
    ++lineno;
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + " is not key=value");
    std::string key = detail::trim(line.substr(0, eq));
    std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + " has an empty key");
    if (kv.count(key))
      throw ConfigError(path + ": duplicate key '" + key + "'");
    kv[key] = val;
  }
  return kv;
}

double kv_double(const std::string& key, const std::string& val) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
  if (ec != std::errc() || p != val.data() + val.size())
    throw ConfigError("key '" + key + "': '" + val + "' is not a number");
  return v;
}

long kv_long(const std::string& key, const std::string& val) {
  long v = 0;
  auto [p, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
  if (ec != std::errc() || p != val.data() + val.size())
    throw ConfigError("key '" + key + "': '" + val + "' is not an integer");
  return v;
}

int kv_int(const std::string& key, const std::string& val) {
  return static_cast<int>(kv_long(key, val));
}

std::uint64_t kv_u64(const std::string& key, const std::string& val) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
  if (ec != std::errc() || p != val.data() + val.size())
    throw ConfigError("key '" + key + "': '" + val + "' is not an unsigned integer");
  return v;
}

bool kv_bool(const std::string& key, const std::string& val) {
  if (val == "true" || val == "1" || val == "yes") return true;
  if (val == "false" || val == "0" || val == "no") return false;
  throw ConfigError("key '" + key + "': '" + val + "' is not a boolean");
}

void apply_forest_key(const std::string& which, ForestConfig& f, const std::string& field,
                      const std::string& key, const std::string& val) {
  if (field == "m")
    f.m = kv_int(key, val);
  else if (field == "eta")
    f.eta = kv_double(key, val);
  else if (field == "beta")
    f.beta = kv_double(key, val);
  else if (field == "k_leaf")
    f.k_leaf = kv_double(key, val);
  else if (field == "soft")
    f.soft = kv_bool(key, val);
  else if (field == "bandwidth_prior_mean")
    f.bandwidth_prior_mean = kv_double(key, val);
  else if (field == "n_cutpoints")
    f.n_cutpoints = kv_int(key, val);
  else if (field == "sparse_splits")
    f.sparse_splits = kv_bool(key, val);
  else if (field == "sparse_alpha")
    f.sparse_alpha = kv_double(key, val);
  else
    throw ConfigError("unknown " + which + " forest config key '" + key + "'");
}

void apply_sampler_kv(const std::map<std::string, std::string>& kv, SamplerConfig& c) {
  for (const auto& [key, val] : kv) {
    if (key == "max_iter")
      c.max_iter = kv_long(key, val);
    else if (key == "burn_in")
      c.burn_in = kv_long(key, val);
    else if (key == "thin")
      c.thin = kv_int(key, val);
    else if (key == "seed")
      c.seed = kv_u64(key, val);
    else if (key == "re_prior")
      c.re_prior = re_prior_from_string(val);
    else if (key == "global_scale_mode")
      c.global_scale_mode = global_scale_mode_from_string(val);
    else if (key == "N0")
      c.N0 = kv_int(key, val);
    else if (key == "use_tau_forest")
      c.use_tau_forest = kv_bool(key, val);
    else if (key == "include_propensity_in_mu")
      c.include_propensity_in_mu = kv_bool(key, val);
    else if (key == "propensity_mode")
      c.propensity_mode = propensity_mode_from_string(val);
    else if (key == "sigma_nu")
      c.sigma_nu = kv_double(key, val);
    else if (key == "sigma_quantile")
      c.sigma_quantile = kv_double(key, val);
    else if (key == "standardize")
      c.standardize = kv_bool(key, val);
    else if (key == "fixed_sigma2")
      c.fixed_sigma2 = kv_bool(key, val);
    else if (key == "sigma2_value")
      c.sigma2_value = kv_double(key, val);
    else if (key == "fixed_Sigma_B")
      c.fixed_Sigma_B = kv_bool(key, val);
    else if (key == "Sigma_B_11")
      c.Sigma_B_value(0, 0) = kv_double(key, val);
    else if (key == "Sigma_B_12") {
      c.Sigma_B_value(0, 1) = kv_double(key, val);
      c.Sigma_B_value(1, 0) = c.Sigma_B_value(0, 1);
    } else if (key == "Sigma_B_22")
      c.Sigma_B_value(1, 1) = kv_double(key, val);
    else if (key == "store_max")
      c.store_max = kv_int(key, val);
    else if (key == "store_lambda")
      c.store_lambda = kv_bool(key, val);
    else if (key == "checkpoint_every")
      c.checkpoint_every = kv_long(key, val);
    else if (key.rfind("mu_", 0) == 0)
      apply_forest_key("mu", c.mu_forest, key.substr(3), key, val);
    else if (key.rfind("tau_", 0) == 0)
      apply_forest_key("tau", c.tau_forest, key.substr(4), key, val);
    else
      throw ConfigError("unknown sampler config key '" + key + "'");
  }
}

void apply_fully_kv(const std::map<std::string, std::string>& kv, SyntheticConfig& c) {
  for (const auto& [key, val] : kv) {
    if (key == "N")
      c.N = kv_int(key, val);
    else if (key == "n_i")
      c.n_i = kv_int(key, val);
    else if (key == "p")
      c.p = kv_int(key, val);
    else if (key == "time_col")
      c.time_col = kv_int(key, val);
    else if (key == "sparsity")
      c.sparsity = kv_double(key, val);
    else if (key == "noise_factor")
      c.noise_factor = kv_double(key, val);
    else if (key == "seed")
      c.seed = kv_u64(key, val);
    else
      throw ConfigError("unknown fully-synthetic config key '" + key + "'");
  }
}

void apply_semi_kv(const std::map<std::string, std::string>& kv, SemiSyntheticConfig& c) {
  for (const auto& [key, val] : kv) {
    if (key == "rows")
      c.rows = kv_int(key, val);
    else if (key == "W_width")
      c.W_width = kv_int(key, val);
    else if (key == "K_width")
      c.K_width = kv_int(key, val);
    else if (key == "beta_bio_mean")
      c.beta_bio_mean = kv_double(key, val);
    else if (key == "beta_bio_sd")
      c.beta_bio_sd = kv_double(key, val);
    else if (key == "beta_nonbio_mean")
      c.beta_nonbio_mean = kv_double(key, val);
    else if (key == "beta_nonbio_sd")
      c.beta_nonbio_sd = kv_double(key, val);
    else if (key == "alpha_intercept_mean")
      c.alpha_intercept_mean = kv_double(key, val);
    else if (key == "alpha_intercept_sd")
      c.alpha_intercept_sd = kv_double(key, val);
    else if (key == "alpha_slope_mean")
      c.alpha_slope_mean = kv_double(key, val);
    else if (key == "alpha_slope_sd")
      c.alpha_slope_sd = kv_double(key, val);
    else if (key == "t_max")
      c.t_max = kv_double(key, val);
    else if (key == "sparsity")
      c.sparsity = kv_double(key, val);
    else if (key == "noise_factor")
      c.noise_factor = kv_double(key, val);
    else if (key == "seed")
      c.seed = kv_u64(key, val);
    else
      throw ConfigError("unknown semi-synthetic config key '" + key + "'");
  }
}

void apply_fit_preset(const std::string& name, SamplerConfig& c) {
  if (name.empty()) return;
  if (name == "synthetic") {
    // single prognostic ensemble, the regression-only study profile
    c.max_iter = 5000;
    c.burn_in = 1000;
    c.thin = 1;
    c.mu_forest.m = 100;
    c.use_tau_forest = false;
    c.include_propensity_in_mu = false;
  } else if (name == "semi-synthetic") {
    c.max_iter = 10000;
    c.burn_in = 3000;
    c.thin = 1;
  } else if (name == "clinical-scale") {
    c.max_iter = 100000;
    c.thin = 10;
    c.burn_in = 3000;
    c.checkpoint_every = 10000;
  } else {
    throw ConfigError("unknown preset '" + name +
                      "' (synthetic|semi-synthetic|clinical-scale)");
  }
}

std::vector<double> parse_double_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t pos = s.find(',', start);
    std::string item =
        detail::trim(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (item.empty()) throw ConfigError(what + ": empty entry in '" + s + "'");
    out.push_back(kv_double(what, item));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  require(!out.empty(), what + " list is empty");
  return out;
}

std::vector<std::string> parse_string_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t pos = s.find(',', start);
    std::string item =
        detail::trim(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (!item.empty()) out.push_back(item);
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

// ---- manifests ----

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Json input_entry(const std::string& role, const std::string& path) {
  return Json{{"role", role}, {"path", path}, {"fnv1a64", hex64(fnv1a64(read_text_file(path)))}};
}

void ensure_outdir(const std::string& out) {
  require(!out.empty(), "--out is required");
  fs::create_directories(out);
}

Json base_manifest(const std::string& subcommand) {
  return Json{{"tool", "bcflong"}, {"version", kVersion}, {"subcommand", subcommand}};
}

void finish_run(const std::string& out, const std::string& subcommand, Json manifest,
                const Timer& timer) {
  write_text_file((fs::path(out) / "manifest.json").string(), manifest.dump(1) + "\n");
  Json t{{"subcommand", subcommand}, {"seconds", timer.seconds()}};
  write_text_file((fs::path(out) / "timings.json").string(), t.dump(1) + "\n");
}

std::string resolve_draws_dir(const std::string& fit_dir) {
  if (fs::exists(fs::path(fit_dir) / "manifest.json") &&
      fs::exists(fs::path(fit_dir) / "rows.csv"))
    return fit_dir;
  if (fs::exists(fs::path(fit_dir) / "draws" / "manifest.json"))
    return (fs::path(fit_dir) / "draws").string();
  throw DataError("'" + fit_dir + "' is neither a draws directory nor a fit run directory");
}

double accept_rate(long accept, long total) {
  return total > 0 ? static_cast<double>(accept) / static_cast<double>(total) : 0.0;
}

Json counts_summary(const MoveCounts& c) {
  return Json{{"grow", accept_rate(c.grow_accept, c.grow_total)},
              {"prune", accept_rate(c.prune_accept, c.prune_total)},
              {"change", accept_rate(c.change_accept, c.change_total)},
              {"bandwidth", accept_rate(c.bw_accept, c.bw_total)}};
}

// traces grouped by length so each CSV stays rectangular; the shrinkage
// scales are recorded on the stored-draw cadence, everything else per
// retained draw
void write_trace_tables(const std::string& out, const ChainSummary& cs,
                        std::vector<std::string>& artifacts) {
  std::map<std::size_t, std::vector<const TraceSeries*>> by_len;
  for (const auto& tr : cs.traces) by_len[tr.values.size()].push_back(&tr);
  bool first = true;
  for (const auto& [len, traces] : by_len) {
    std::string name = first ? "traces.csv" : "traces_stored.csv";
    first = false;
    std::vector<std::string> cols = {"draw"};
    Eigen::MatrixXd m(static_cast<Eigen::Index>(len), 1 + 2 * traces.size());
    for (std::size_t i = 0; i < len; ++i) m(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i + 1);
    int j = 1;
    for (const auto* tr : traces) {
      cols.push_back(tr->name);
      cols.push_back(tr->name + "_running_mean");
      for (std::size_t i = 0; i < len; ++i) {
        m(static_cast<Eigen::Index>(i), j) = tr->values[i];
        m(static_cast<Eigen::Index>(i), j + 1) = tr->running_mean[i];
      }
      j += 2;
    }
    write_csv((fs::path(out) / name).string(), cols, m);
    artifacts.push_back(name);
  }
}

// ---- subcommands ----

struct SimulateArgs {
  std::string preset, out, config;
  double sparsity = 0.0;
  std::uint64_t seed = 0;
  bool sparsity_set = false, seed_set = false;
};

int cmd_simulate(const SimulateArgs& a) {
  Timer timer;
  ensure_outdir(a.out);
  std::map<std::string, std::string> kv =
      a.config.empty() ? std::map<std::string, std::string>{} : read_kv_file(a.config);

  PanelDataset d;
  GroundTruth gt;
  Json gencfg;
  if (a.preset == "fully-synthetic") {
    SyntheticConfig c;
    apply_fully_kv(kv, c);
    if (a.sparsity_set) c.sparsity = a.sparsity;
    if (a.seed_set) c.seed = a.seed;
    std::tie(d, gt) = gen_fully_synthetic(c);
    gencfg = Json{{"N", c.N},
                  {"n_i", c.n_i},
                  {"p", c.p},
                  {"time_col", c.time_col},
                  {"sparsity", c.sparsity},
                  {"noise_factor", c.noise_factor},
                  {"seed", c.seed}};
  } else if (a.preset == "semi-synthetic") {
    SemiSyntheticConfig c;
    apply_semi_kv(kv, c);
    if (a.sparsity_set) c.sparsity = a.sparsity;
    if (a.seed_set) c.seed = a.seed;
    std::tie(d, gt) = gen_semi_synthetic(c);
    gencfg = Json{{"rows", c.rows},
                  {"W_width", c.W_width},
                  {"K_width", c.K_width},
                  {"beta_bio_mean", c.beta_bio_mean},
                  {"beta_bio_sd", c.beta_bio_sd},
                  {"beta_nonbio_mean", c.beta_nonbio_mean},
                  {"beta_nonbio_sd", c.beta_nonbio_sd},
                  {"alpha_intercept_mean", c.alpha_intercept_mean},
                  {"alpha_intercept_sd", c.alpha_intercept_sd},
                  {"alpha_slope_mean", c.alpha_slope_mean},
                  {"alpha_slope_sd", c.alpha_slope_sd},
                  {"t_max", c.t_max},
                  {"sparsity", c.sparsity},
                  {"noise_factor", c.noise_factor},
                  {"seed", c.seed}};
  } else {
    throw ConfigError("unknown generator preset '" + a.preset +
                      "' (fully-synthetic|semi-synthetic)");
  }

  write_panel((fs::path(a.out) / "panel.csv").string(), d);
  write_ground_truth((fs::path(a.out) / "ground_truth.csv").string(), gt, d);
  write_alpha_truth((fs::path(a.out) / "alpha_truth.csv").string(), gt, d);

  Json manifest = base_manifest("simulate");
  manifest["preset"] = a.preset;
  manifest["config"] = gencfg;
  manifest["noise_sd"] = gt.sigma;
  manifest["rows"] = d.n_rows();
  manifest["subjects"] = d.n_subjects();
  manifest["inputs"] = Json::array();
  manifest["artifacts"] = Json::array({"panel.csv", "ground_truth.csv", "alpha_truth.csv"});
  finish_run(a.out, "simulate", std::move(manifest), timer);
  return 0;
}

struct FitArgs {
  std::string data, eval_data, out, preset, config, re_prior;
  std::uint64_t seed = 0;
  long iters = 0, burn_in = -1, checkpoint_every = -1;
  int thin = 0, chains = 1;
  bool seed_set = false, resume = false;
};

int cmd_fit(const FitArgs& a) {
  Timer timer;
  ensure_outdir(a.out);

  SamplerConfig cfg;
  apply_fit_preset(a.preset, cfg);
  if (!a.config.empty()) apply_sampler_kv(read_kv_file(a.config), cfg);
  if (a.seed_set) cfg.seed = a.seed;
  if (!a.re_prior.empty()) cfg.re_prior = re_prior_from_string(a.re_prior);
  if (a.iters > 0) cfg.max_iter = a.iters;
  if (a.burn_in >= 0) cfg.burn_in = a.burn_in;
  if (a.thin > 0) cfg.thin = a.thin;
  if (a.checkpoint_every >= 0) cfg.checkpoint_every = a.checkpoint_every;
  require(a.chains >= 1, "--chains must be positive");

  std::string ckdir = (fs::path(a.out) / "checkpoint").string();
  if (a.resume) {
    require(fs::exists(fs::path(ckdir) / "state.json"),
            "--resume: no checkpoint under " + ckdir);
    cfg = checkpoint_config(ckdir);
  }
  if (cfg.checkpoint_every > 0) cfg.checkpoint_path = ckdir;
  cfg.validate();

  PanelDataset d = load_panel(a.data);
  std::optional<PanelDataset> ev;
  if (!a.eval_data.empty()) ev = load_panel(a.eval_data);

  std::vector<std::string> artifacts;
  Json chain_summaries = Json::array();
  for (int chain = 1; chain <= a.chains; ++chain) {
    SamplerConfig ccfg = cfg;
    if (chain > 1) ccfg.seed = derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(chain));
    GibbsRunner runner(d, ccfg, ev ? &*ev : nullptr);
    if (chain == 1 && a.resume) restore_checkpoint(ckdir, runner);
    if (chain == 1 && ccfg.checkpoint_every > 0)
      runner.checkpoint_writer = [&ckdir](GibbsRunner& r) { save_checkpoint(ckdir, r); };
    runner.run();
    PosteriorDraws dr = runner.take();

    std::string ddir = chain == 1 ? "draws" : "draws" + std::to_string(chain);
    save_draws((fs::path(a.out) / ddir).string(), dr);
    artifacts.push_back(ddir + "/");

    ChainSummary cs = summarize_chain(dr);
    Json traces = Json::array();
    for (const auto& tr : cs.traces)
      traces.push_back(Json{{"name", tr.name},
                            {"ess", tr.ess},
                            {"degenerate", tr.degenerate},
                            {"n", tr.values.size()}});
    double s2_mean = 0.0;
    for (double v : dr.sigma2) s2_mean += v;
    s2_mean /= static_cast<double>(dr.sigma2.size());
    chain_summaries.push_back(Json{{"chain", chain},
                                   {"seed", ccfg.seed},
                                   {"n_retained", dr.n_retained},
                                   {"n_stored", dr.n_stored()},
                                   {"sigma2_mean", s2_mean},
                                   {"mu_grand_mean", cs.mu_mean.mean()},
                                   {"tau_grand_mean", cs.tau_mean.mean()},
                                   {"gamma_grand_mean", cs.gamma_mean.mean()},
                                   {"acceptance_mu", counts_summary(dr.mu_counts)},
                                   {"acceptance_tau", counts_summary(dr.tau_counts)},
                                   {"traces", std::move(traces)},
                                   {"warnings", cs.warnings}});
    if (chain == 1) {
      write_trace_tables(a.out, cs, artifacts);
    }
  }

  Json summary{{"chains", std::move(chain_summaries)}};
  write_text_file((fs::path(a.out) / "summary.json").string(), summary.dump(1) + "\n");
  artifacts.push_back("summary.json");

  Json manifest = base_manifest("fit");
  manifest["config"] = sampler_config_json(cfg);
  manifest["chains"] = a.chains;
  Json inputs = Json::array({input_entry("data", a.data)});
  if (!a.eval_data.empty()) inputs.push_back(input_entry("eval_data", a.eval_data));
  manifest["inputs"] = std::move(inputs);
  manifest["artifacts"] = artifacts;
  finish_run(a.out, "fit", std::move(manifest), timer);
  return 0;
}

struct PredictArgs {
  std::string fit, out, z = "both", times;
  long long subject = 0;
};

int cmd_predict(const PredictArgs& a) {
  Timer timer;
  ensure_outdir(a.out);
  std::string ddir = resolve_draws_dir(a.fit);
  PosteriorDraws dr = load_draws(ddir);

  std::vector<double> times;
  if (a.times.empty()) {
    double lo = dr.train_t.minCoeff(), hi = dr.train_t.maxCoeff();
    for (int i = 0; i < 9; ++i) times.push_back(lo + (hi - lo) * i / 8.0);
  } else {
    times = parse_double_list(a.times, "--times");
  }

  std::vector<double> arms;
  if (a.z == "both")
    arms = {-0.5, 0.5};
  else {
    double z = kv_double("--z", a.z);
    require(z == 0.5 || z == -0.5, "--z must be +0.5, -0.5 or both");
    arms = {z};
  }

  int idx = dr.subject_index(a.subject);
  Eigen::Index nt = static_cast<Eigen::Index>(times.size());
  Eigen::MatrixXd table(static_cast<Eigen::Index>(arms.size()) * nt, 6);
  Plot plot;
  plot.title = "counterfactual outcome, subject " + std::to_string(a.subject);
  plot.xlabel = "t";
  plot.ylabel = "outcome";
  for (std::size_t ai = 0; ai < arms.size(); ++ai) {
    auto traj = predict_counterfactual(dr, a.subject, arms[ai], times);
    PlotSeries line;
    PlotBand band;
    line.label = "z=" + format_double(arms[ai]);
    line.color = default_color(ai);
    band.color = line.color;
    for (Eigen::Index j = 0; j < nt; ++j) {
      Eigen::Index r = static_cast<Eigen::Index>(ai) * nt + j;
      table(r, 0) = static_cast<double>(a.subject);
      table(r, 1) = arms[ai];
      table(r, 2) = traj[j].t;
      table(r, 3) = traj[j].y.mean;
      table(r, 4) = traj[j].y.lo;
      table(r, 5) = traj[j].y.hi;
      line.x.push_back(traj[j].t);
      line.y.push_back(traj[j].y.mean);
      band.x.push_back(traj[j].t);
      band.lo.push_back(traj[j].y.lo);
      band.hi.push_back(traj[j].y.hi);
    }
    plot.bands.push_back(std::move(band));
    plot.series.push_back(std::move(line));
  }

  PlotSeries observed;
  observed.label = "observed";
  observed.color = "#333333";
  observed.line = false;
  observed.points = true;
  for (Eigen::Index r = 0; r < dr.train_t.size(); ++r)
    if (dr.train_subject_of_row[r] == idx) {
      observed.x.push_back(dr.train_t[r]);
      observed.y.push_back(dr.y_orig[r]);
    }
  plot.series.push_back(std::move(observed));

  write_csv((fs::path(a.out) / "counterfactual.csv").string(),
            {"subject", "z", "t", "mean", "lo95", "hi95"}, table);
  write_plot((fs::path(a.out) / "counterfactual.svg").string(), plot);

  Json manifest = base_manifest("predict");
  manifest["subject"] = a.subject;
  manifest["z"] = a.z;
  manifest["times"] = times;
  manifest["inputs"] = Json::array({input_entry("draws", ddir + "/manifest.json")});
  manifest["artifacts"] = Json::array({"counterfactual.csv", "counterfactual.svg"});
  finish_run(a.out, "predict", std::move(manifest), timer);
  return 0;
}

struct EffectsArgs {
  std::string fit, out;
  std::vector<double> ts;
};

std::vector<double> subject_average_tau_draws(const PosteriorDraws& dr, double t) {
  require(!dr.tau_forests.empty(), "no stored treatment-forest draws");
  const int N = dr.n_subjects();
  Eigen::RowVectorXd x(dr.W_subjects.cols() + 1);
  x[dr.W_subjects.cols()] = t;
  std::vector<double> out(dr.tau_forests.size());
  for (std::size_t s = 0; s < dr.tau_forests.size(); ++s) {
    double acc = 0.0;
    for (int i = 0; i < N; ++i) {
      x.head(dr.W_subjects.cols()) = dr.W_subjects.row(i);
      acc += dr.tau_forests[s].evaluate(x);
    }
    out[s] = acc / static_cast<double>(N);
  }
  return out;
}

int cmd_effects(const EffectsArgs& a) {
  Timer timer;
  ensure_outdir(a.out);
  std::string ddir = resolve_draws_dir(a.fit);
  PosteriorDraws dr = load_draws(ddir);
  std::vector<double> ts = a.ts.empty() ? std::vector<double>{1.0} : a.ts;

  std::vector<std::string> warnings;
  double t_lo = dr.train_t.minCoeff(), t_hi = dr.train_t.maxCoeff();
  std::string rows = "estimand,mean,lo95,hi95\n";
  std::vector<std::vector<double>> per_t;
  for (double t : ts) {
    if (t < t_lo || t > t_hi)
      warnings.push_back("t=" + format_double(t) + " is outside the observed range [" +
                         format_double(t_lo) + ", " + format_double(t_hi) + "]");
    per_t.push_back(subject_average_tau_draws(dr, t));
    EffectSummary s = summarize_draws(per_t.back());
    rows += "cate_t=" + format_double(t) + "," + format_double(s.mean) + "," +
            format_double(s.lo) + "," + format_double(s.hi) + "\n";
  }
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    std::vector<double> diff(per_t[i].size());
    for (std::size_t s = 0; s < diff.size(); ++s) diff[s] = per_t[i + 1][s] - per_t[i][s];
    EffectSummary es = summarize_draws(diff);
    rows += "longitudinal_t=" + format_double(ts[i]) + "_to_t=" + format_double(ts[i + 1]) + "," +
            format_double(es.mean) + "," + format_double(es.lo) + "," + format_double(es.hi) + "\n";
  }
  write_text_file((fs::path(a.out) / "effects.csv").string(), rows);

  Json artifacts = Json::array({"effects.csv"});
  for (std::size_t ti = 0; ti < ts.size(); ++ti) {
    std::vector<SubjectEffect> ic = icate_summary(dr, ts[ti]);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(ic.size()), 5);
    for (std::size_t i = 0; i < ic.size(); ++i) {
      m(static_cast<Eigen::Index>(i), 0) = static_cast<double>(ic[i].subject);
      m(static_cast<Eigen::Index>(i), 1) = ic[i].z;
      m(static_cast<Eigen::Index>(i), 2) = ic[i].summary.mean;
      m(static_cast<Eigen::Index>(i), 3) = ic[i].summary.lo;
      m(static_cast<Eigen::Index>(i), 4) = ic[i].summary.hi;
    }
    std::string name = "icate_t" + format_double(ts[ti]) + ".csv";
    write_csv((fs::path(a.out) / name).string(), {"subject", "z", "mean", "lo95", "hi95"}, m);
    artifacts.push_back(name);

    if (ti == 0) {
      Plot plot;
      plot.title = "subject treatment effects at t=" + format_double(ts[ti]);
      plot.xlabel = "subject rank";
      plot.ylabel = "effect";
      PlotSeries pts;
      pts.label = "posterior mean";
      pts.color = default_color(0);
      pts.line = false;
      pts.points = true;
      PlotVSegments seg;
      seg.color = "#9dbbd8";
      for (std::size_t i = 0; i < ic.size(); ++i) {
        pts.x.push_back(static_cast<double>(i + 1));
        pts.y.push_back(ic[i].summary.mean);
        seg.x.push_back(static_cast<double>(i + 1));
        seg.lo.push_back(ic[i].summary.lo);
        seg.hi.push_back(ic[i].summary.hi);
      }
      plot.vsegments.push_back(std::move(seg));
      plot.series.push_back(std::move(pts));
      write_plot((fs::path(a.out) / "effects.svg").string(), plot);
      artifacts.push_back("effects.svg");
    }
  }

  Json manifest = base_manifest("effects");
  manifest["t"] = ts;
  manifest["warnings"] = warnings;
  manifest["inputs"] = Json::array({input_entry("draws", ddir + "/manifest.json")});
  manifest["artifacts"] = std::move(artifacts);
  finish_run(a.out, "effects", std::move(manifest), timer);
  return 0;
}

struct HarmonizeArgs {
  std::string fit, data, out;
};

int cmd_harmonize(const HarmonizeArgs& a) {
  Timer timer;
  ensure_outdir(a.out);
  std::string ddir = resolve_draws_dir(a.fit);
  PosteriorDraws dr = load_draws(ddir);
  PanelDataset d = load_panel(a.data);
  require(d.n_rows() == dr.y_orig.size(), "panel row count does not match the fit");
  double scale = std::max(1.0, dr.y_orig.cwiseAbs().maxCoeff());
  require((d.y - dr.y_orig).cwiseAbs().maxCoeff() < 1e-6 * scale,
          "panel outcomes do not match the fitted data");

  HarmonizedOutcome h = harmonize(dr, d);
  double slope_pre = least_squares_slope(h.mu_hat, h.y);
  double slope_post = least_squares_slope(h.mu_hat, h.y_harm);

  Eigen::MatrixXd m(d.n_rows(), 6);
  for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
    m(r, 0) = static_cast<double>(d.subject_label[d.subject_of_row[r]]);
    m(r, 1) = d.t[r];
    m(r, 2) = d.z[r];
    m(r, 3) = h.y[r];
    m(r, 4) = h.mu_hat[r];
    m(r, 5) = h.y_harm[r];
  }
  write_csv((fs::path(a.out) / "harmonized.csv").string(),
            {"subject", "t", "z", "y", "mu_hat", "y_harm"}, m);

  Plot plot;
  plot.title = "outcome vs estimated scanner effect";
  plot.xlabel = "estimated scanner effect";
  plot.ylabel = "outcome";
  auto scatter = [&](const Eigen::VectorXd& y, const std::string& label, std::size_t color) {
    PlotSeries s;
    s.label = label;
    s.color = default_color(color);
    s.line = false;
    s.points = true;
    for (Eigen::Index r = 0; r < y.size(); ++r) {
      s.x.push_back(h.mu_hat[r]);
      s.y.push_back(y[r]);
    }
    plot.series.push_back(std::move(s));
  };
  auto ls_line = [&](double slope, const Eigen::VectorXd& y, std::size_t color) {
    double icept = y.mean() - slope * h.mu_hat.mean();
    PlotSeries s;
    s.color = default_color(color);
    double lo = h.mu_hat.minCoeff(), hi = h.mu_hat.maxCoeff();
    s.x = {lo, hi};
    s.y = {icept + slope * lo, icept + slope * hi};
    plot.series.push_back(std::move(s));
  };
  scatter(h.y, "observed", 0);
  scatter(h.y_harm, "harmonized", 1);
  ls_line(slope_pre, h.y, 0);
  ls_line(slope_post, h.y_harm, 1);
  write_plot((fs::path(a.out) / "harmonize.svg").string(), plot);

  Json summary{{"slope_pre", slope_pre},
               {"slope_post", slope_post},
               {"mu_grand_mean", h.mu_grand_mean}};
  write_text_file((fs::path(a.out) / "summary.json").string(), summary.dump(1) + "\n");

  Json manifest = base_manifest("harmonize");
  manifest["inputs"] = Json::array(
      {input_entry("draws", ddir + "/manifest.json"), input_entry("data", a.data)});
  manifest["artifacts"] = Json::array({"harmonized.csv", "harmonize.svg", "summary.json"});
  finish_run(a.out, "harmonize", std::move(manifest), timer);
  return 0;
}

struct ReplicateArgs {
  std::string generator, out, config, sparsity, variants;
  int reps = 0, workers = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_replicate(const ReplicateArgs& a) {
  Timer timer;
  ensure_outdir(a.out);

  ReplicationPlan plan;
  if (a.generator == "fully-synthetic")
    plan = ReplicationPlan::fully_synthetic_default();
  else if (a.generator == "semi-synthetic")
    plan = ReplicationPlan::semi_synthetic_default();
  else
    throw ConfigError("unknown generator '" + a.generator +
                      "' (fully-synthetic|semi-synthetic)");

  if (!a.config.empty()) apply_sampler_kv(read_kv_file(a.config), plan.sampler);
  if (a.reps > 0) plan.n_replications = a.reps;
  if (a.workers > 0) plan.n_workers = a.workers;
  if (a.seed_set) plan.seed = a.seed;
  if (!a.sparsity.empty()) plan.sparsity_grid = parse_double_list(a.sparsity, "--sparsity");
  if (!a.variants.empty()) {
    plan.variants.clear();
    for (const auto& v : parse_string_list(a.variants))
      plan.variants.push_back(re_prior_from_string(v));
  }
  plan.validate();

  MetricsReport report = run_replication_study(
      plan, [](const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); });
  report.write((fs::path(a.out) / "metrics.csv").string());

  std::string headline =
      plan.kind == GeneratorKind::fully_synthetic ? "param_rmse_gamma" : "pp_pehe";
  Plot plot;
  plot.title = headline + " by sparsity";
  plot.xlabel = "sparsity";
  plot.ylabel = headline;
  for (std::size_t v = 0; v < plan.variants.size(); ++v) {
    PlotSeries s;
    s.label = variant_name(plan.variants[v]);
    s.color = default_color(v);
    s.points = true;
    for (double sp : plan.sparsity_grid) {
      s.x.push_back(sp);
      s.y.push_back(report.value(sp, s.label, headline));
    }
    plot.series.push_back(std::move(s));
  }
  write_plot((fs::path(a.out) / "metrics.svg").string(), plot);

  Json variants = Json::array();
  for (REPrior v : plan.variants) variants.push_back(to_string(v));
  Json manifest = base_manifest("replicate");
  manifest["generator"] = a.generator;
  manifest["n_replications"] = plan.n_replications;
  manifest["sparsity_grid"] = plan.sparsity_grid;
  manifest["variants"] = std::move(variants);
  manifest["seed"] = plan.seed;
  manifest["n_workers"] = plan.n_workers;
  manifest["holdout_fraction"] = plan.holdout_fraction;
  manifest["sampler"] = sampler_config_json(plan.sampler);
  manifest["n_attempted"] = report.n_attempted;
  manifest["n_failed"] = report.n_failed;
  manifest["failures"] = report.failures;
  manifest["inputs"] = Json::array();
  manifest["artifacts"] = Json::array({"metrics.csv", "metrics.svg"});
  finish_run(a.out, "replicate", std::move(manifest), timer);
  return 0;
}

struct DiagnosticsArgs {
  std::string fit, out;
};

int cmd_diagnostics(const DiagnosticsArgs& a) {
  Timer timer;
  ensure_outdir(a.out);
  std::string ddir = resolve_draws_dir(a.fit);
  PosteriorDraws dr = load_draws(ddir);
  ChainSummary cs = summarize_chain(dr);

  std::vector<std::string> artifacts;
  write_trace_tables(a.out, cs, artifacts);

  Json traces = Json::array();
  for (const auto& tr : cs.traces) {
    traces.push_back(Json{{"name", tr.name},
                          {"ess", tr.ess},
                          {"degenerate", tr.degenerate},
                          {"n", tr.values.size()}});
    Plot plot;
    plot.title = tr.name;
    plot.xlabel = "draw";
    plot.ylabel = tr.name;
    PlotSeries vals, rm;
    vals.label = "draw";
    vals.color = default_color(0);
    rm.label = "running mean";
    rm.color = default_color(1);
    for (std::size_t i = 0; i < tr.values.size(); ++i) {
      vals.x.push_back(static_cast<double>(i + 1));
      vals.y.push_back(tr.values[i]);
      rm.x.push_back(static_cast<double>(i + 1));
      rm.y.push_back(tr.running_mean[i]);
    }
    plot.series.push_back(std::move(vals));
    plot.series.push_back(std::move(rm));
    std::string name = "trace_" + tr.name + ".svg";
    write_plot((fs::path(a.out) / name).string(), plot);
    artifacts.push_back(name);
  }

  Json summary{{"n_retained", dr.n_retained},
               {"n_stored", dr.n_stored()},
               {"traces", std::move(traces)},
               {"acceptance_mu", counts_summary(dr.mu_counts)},
               {"acceptance_tau", counts_summary(dr.tau_counts)},
               {"warnings", cs.warnings}};
  write_text_file((fs::path(a.out) / "summary.json").string(), summary.dump(1) + "\n");
  artifacts.push_back("summary.json");

  Json manifest = base_manifest("diagnostics");
  manifest["inputs"] = Json::array({input_entry("draws", ddir + "/manifest.json")});
  manifest["artifacts"] = artifacts;
  finish_run(a.out, "diagnostics", std::move(manifest), timer);
  return 0;
}

int fail_record(const std::string& type, const std::string& message, const std::string& out,
                int code) {
  Json err{{"error", Json{{"type", type}, {"message", message}, {"exit_code", code}}}};
  std::string payload = err.dump();
  std::fprintf(stderr, "%s\n", payload.c_str());
  if (!out.empty()) {
    try {
      fs::create_directories(out);
      write_text_file((fs::path(out) / "error.json").string(), payload + "\n");
    } catch (...) {
    }
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"longitudinal Bayesian causal forest toolkit"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* c_sim = app.add_subcommand("simulate", "generate a synthetic panel with ground truth");
  c_sim->add_option("--preset", sim.preset, "fully-synthetic or semi-synthetic")->required();
  c_sim->add_option("--out", sim.out, "output directory")->required();
  c_sim->add_option("--config", sim.config, "generator key=value config file");
  auto* sim_sp = c_sim->add_option("--sparsity", sim.sparsity, "zeroed random-effect proportion");
  auto* sim_seed = c_sim->add_option("--seed", sim.seed, "generator seed");

  FitArgs fit;
  CLI::App* c_fit = app.add_subcommand("fit", "run the Gibbs sampler on a panel CSV");
  c_fit->add_option("--data", fit.data, "training panel CSV")->required();
  c_fit->add_option("--eval-data", fit.eval_data, "held-out panel CSV (same subjects)");
  c_fit->add_option("--out", fit.out, "run directory")->required();
  c_fit->add_option("--preset", fit.preset, "synthetic, semi-synthetic or clinical-scale");
  c_fit->add_option("--config", fit.config, "sampler key=value config file");
  auto* fit_seed = c_fit->add_option("--seed", fit.seed, "chain seed");
  c_fit->add_option("--re-prior", fit.re_prior, "none, base or horseshoe");
  c_fit->add_option("--iters", fit.iters, "total iterations");
  c_fit->add_option("--burn-in", fit.burn_in, "burn-in (after thinning)");
  c_fit->add_option("--thin", fit.thin, "thinning interval");
  c_fit->add_option("--checkpoint-every", fit.checkpoint_every, "checkpoint interval, 0 disables");
  c_fit->add_flag("--resume", fit.resume, "resume from the run directory checkpoint");
  c_fit->add_option("--chains", fit.chains, "independent chains (seeds derived from --seed)");

  PredictArgs pred;
  CLI::App* c_pred = app.add_subcommand("predict", "counterfactual outcome trajectories");
  c_pred->add_option("--fit", pred.fit, "fit run directory")->required();
  c_pred->add_option("--out", pred.out, "output directory")->required();
  c_pred->add_option("--subject", pred.subject, "subject label")->required();
  c_pred->add_option("--z", pred.z, "+0.5, -0.5 or both");
  c_pred->add_option("--times", pred.times, "comma-separated query times");

  EffectsArgs eff;
  CLI::App* c_eff = app.add_subcommand("effects", "treatment-effect tables and figures");
  c_eff->add_option("--fit", eff.fit, "fit run directory")->required();
  c_eff->add_option("--out", eff.out, "output directory")->required();
  c_eff->add_option("--t", eff.ts, "query time (repeatable)");

  HarmonizeArgs harm;
  CLI::App* c_harm = app.add_subcommand("harmonize", "remove the estimated prognostic effect");
  c_harm->add_option("--fit", harm.fit, "fit run directory")->required();
  c_harm->add_option("--data", harm.data, "panel CSV the fit was trained on")->required();
  c_harm->add_option("--out", harm.out, "output directory")->required();

  ReplicateArgs rep;
  CLI::App* c_rep = app.add_subcommand("replicate", "replication study across generators");
  c_rep->add_option("--generator", rep.generator, "fully-synthetic or semi-synthetic")->required();
  c_rep->add_option("--out", rep.out, "output directory")->required();
  c_rep->add_option("--config", rep.config, "sampler key=value overrides");
  c_rep->add_option("--reps", rep.reps, "replications per sparsity level");
  c_rep->add_option("--sparsity", rep.sparsity, "comma-separated sparsity grid");
  c_rep->add_option("--variants", rep.variants, "comma-separated priors (none,base,horseshoe)");
  c_rep->add_option("--workers", rep.workers, "parallel workers");
  auto* rep_seed = c_rep->add_option("--seed", rep.seed, "study seed");

  DiagnosticsArgs diag;
  CLI::App* c_diag = app.add_subcommand("diagnostics", "chain traces, ESS and acceptance rates");
  c_diag->add_option("--fit", diag.fit, "fit run directory")->required();
  c_diag->add_option("--out", diag.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    if (code == 0) return 0;
    return fail_record("config", e.what(), "", 2);
  }

  sim.sparsity_set = sim_sp->count() > 0;
  sim.seed_set = sim_seed->count() > 0;
  fit.seed_set = fit_seed->count() > 0;
  rep.seed_set = rep_seed->count() > 0;

  std::string out;
  try {
    if (app.got_subcommand(c_sim)) {
      out = sim.out;
      return cmd_simulate(sim);
    }
    if (app.got_subcommand(c_fit)) {
      out = fit.out;
      return cmd_fit(fit);
    }
    if (app.got_subcommand(c_pred)) {
      out = pred.out;
      return cmd_predict(pred);
    }
    if (app.got_subcommand(c_eff)) {
      out = eff.out;
      return cmd_effects(eff);
    }
    if (app.got_subcommand(c_harm)) {
      out = harm.out;
      return cmd_harmonize(harm);
    }
    if (app.got_subcommand(c_rep)) {
      out = rep.out;
      return cmd_replicate(rep);
    }
    if (app.got_subcommand(c_diag)) {
      out = diag.out;
      return cmd_diagnostics(diag);
    }
    return fail_record("config", "no subcommand", "", 2);
  } catch (const DataError& e) {
    return fail_record("config", e.what(), out, 2);
  } catch (const std::exception& e) {
    return fail_record("runtime", e.what(), out, 1);
  }
}
