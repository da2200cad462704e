#include "pctrl/harness.hpp"

#include <chrono>
#include <filesystem>
#include <fmt/core.h>
#include <fstream>
#include <json.hpp>

#include "pctrl/error.hpp"
#include "pctrl/parallel.hpp"

namespace pctrl {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string full(double v) { return fmt::format("{:.17g}", v); }
std::string mbps(double bits) { return fmt::format("{:.2f}", bits / 1e6); }

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << text;
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

fs::path prepare_dir(const ExperimentConfig& cfg) {
  fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
  return dir;
}

RunManifest start_manifest(const ExperimentConfig& cfg, std::string command) {
  RunManifest m;
  m.command = std::move(command);
  // output_dir is where the manifest lives; leaving it out lets two output
  // directories hold identical manifests.
  for (auto& kv : config_items(cfg))
    if (kv.first != "output_dir") m.config.push_back(std::move(kv));
  return m;
}

void finish_manifest(const ExperimentConfig& cfg, const fs::path& dir, RunManifest& m,
                     Clock::time_point t0, RunManifest* out) {
  m.wall_clock_s = cfg.reproducible ? 0.0 : ms_since(t0) / 1e3;
  write_manifest(dir.string(), m);
  if (out) *out = m;
}

std::string curve_csv(const std::vector<IterationLog>& log, bool reproducible) {
  std::string s =
      "iteration,mean_reward_bps,smoothed_reward_bps,mean_kl,surrogate,j_used,accepted,"
      "critic_loss,wall_ms\n";
  for (const auto& r : log)
    s += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.iteration, full(r.mean_reward),
                     full(r.smoothed_reward), full(r.kl), full(r.surrogate), r.j_used,
                     r.accepted ? 1 : 0, full(r.critic_loss),
                     full(reproducible ? 0.0 : r.wall_ms));
  return s;
}

bool same_structure(const NetworkConfig& a, const NetworkConfig& b) {
  return a.num_cells == b.num_cells && a.users_per_cell == b.users_per_cell &&
         a.bandwidth_hz == b.bandwidth_hz && a.noise_psd_dbm_hz == b.noise_psd_dbm_hz &&
         a.noise_figure_db == b.noise_figure_db && a.ref_distance_m == b.ref_distance_m &&
         a.cell_radius_m == b.cell_radius_m && a.pathloss_exp == b.pathloss_exp &&
         a.layout == b.layout;
}

struct LoadedPolicy {
  std::string label;
  Checkpoint ckpt;
};

std::vector<LoadedPolicy> load_policies(const ExperimentConfig& cfg,
                                        const std::vector<std::string>& paths) {
  std::vector<LoadedPolicy> out;
  for (const auto& path : paths) {
    auto ckpt = load_checkpoint(path);
    if (!same_structure(ckpt.agent.net, cfg.net))
      throw ConfigError(fmt::format("checkpoint '{}' was trained on a different network", path));
    std::string label(to_string(ckpt.agent.scheme));
    std::size_t dup = 1;
    for (const auto& p : out)
      if (p.ckpt.agent.scheme == ckpt.agent.scheme) ++dup;
    if (dup > 1) label += fmt::format("_{}", dup);
    out.push_back({std::move(label), std::move(ckpt)});
  }
  for (const auto& m : cfg.eval_methods) {
    if (!is_learned_method(m)) continue;
    bool found = false;
    for (const auto& p : out) found = found || to_string(p.ckpt.agent.scheme) == m;
    if (!found) throw ConfigError(fmt::format("method '{}' needs a checkpoint", m));
  }
  return out;
}

SolverOptions solver_options(const ExperimentConfig& cfg, bool keep_iterates) {
  SolverOptions o;
  o.max_iters = cfg.solver_max_iters;
  o.tol = cfg.solver_tol;
  o.keep_iterates = keep_iterates;
  return o;
}

// Evaluates every policy and baseline at one transmit power.
std::vector<MethodResult> evaluate_at(const ExperimentConfig& cfg,
                                      const std::vector<LoadedPolicy>& policies,
                                      double pmax_dbm) {
  NetworkConfig net = cfg.net;
  net.pmax_dbm = pmax_dbm;
  const Scenario scenario(net, cfg.constraint_mode);
  std::vector<MethodResult> rows;
  for (const auto& p : policies) {
    ActOptions opts;
    opts.pmax_watts = net.pmax_watts();
    opts.output_scale = net.pmax_watts() / p.ckpt.agent.net.pmax_watts();
    rows.push_back({p.label, pmax_dbm, opts.output_scale,
                    evaluate(p.ckpt.agent, p.ckpt.theta, scenario, cfg.eval_realizations,
                             cfg.master_seed, opts)});
  }
  const auto sopts = solver_options(cfg, false);
  for (const auto& m : cfg.eval_methods) {
    if (!is_baseline_method(m)) continue;
    rows.push_back({m, pmax_dbm, 1.0,
                    evaluate_baseline(m, scenario, cfg.eval_realizations, cfg.master_seed,
                                      sopts)});
  }
  return rows;
}

std::string summary_header(bool with_scale) {
  return fmt::format(
      "method,B,K,alpha,pmax_dbm,{}n_realizations,mean_mbps,std_mbps,p05_mbps,p50_mbps,"
      "p95_mbps,mean_decision_ms\n",
      with_scale ? "output_scale," : "");
}

std::string summary_row(const ExperimentConfig& cfg, const MethodResult& r, bool with_scale) {
  const auto& s = r.summary;
  return fmt::format("{},{},{},{},{},{}{},{},{},{},{},{},{}\n", r.method, cfg.net.num_cells,
                     cfg.net.users_per_cell, fmt::format("{:.2f}", cfg.net.pathloss_exp),
                     fmt::format("{:.2f}", r.pmax_dbm),
                     with_scale ? full(r.output_scale) + "," : std::string(),
                     s.sum_rates.size(), mbps(s.mean), mbps(s.stddev), mbps(s.p05),
                     mbps(s.p50), mbps(s.p95),
                     fmt::format("{:.6f}", cfg.reproducible ? 0.0 : s.mean_decision_ms));
}

std::string records_csv(const ExperimentConfig& cfg, const std::vector<MethodResult>& rows) {
  std::string s = "method,pmax_dbm,realization,sum_rate_bps,decision_ms\n";
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.summary.sum_rates.size(); ++i)
      s += fmt::format("{},{},{},{},{}\n", r.method, full(r.pmax_dbm), i,
                       full(r.summary.sum_rates[i]),
                       full(cfg.reproducible ? 0.0 : r.summary.decision_ms[i]));
  return s;
}

// Pins the worker pool to one thread for the lifetime of the guard.
struct SingleThreaded {
  SingleThreaded() { set_worker_threads(1); }
  ~SingleThreaded() { set_worker_threads(0); }
  SingleThreaded(const SingleThreaded&) = delete;
  SingleThreaded& operator=(const SingleThreaded&) = delete;
};

}  // namespace

bool is_learned_method(std::string_view m) {
  return m == "centralized" || m == "partial" || m == "full";
}

bool is_baseline_method(std::string_view m) {
  return m == "max_power" || m == "random" || m == "fp" || m == "wmmse";
}

std::string manifest_to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "pctrl-manifest";
  j["command"] = m.command;
  j["code_version"] = m.code_version;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.config) cfg[k] = v;
  j["config"] = cfg;
  j["runs"] = nlohmann::ordered_json::array();
  for (const auto& r : m.runs) {
    nlohmann::ordered_json run;
    run["index"] = r.index;
    run["seed"] = r.seed;
    run["status"] = r.ok ? "ok" : "failed";
    run["iterations_done"] = r.iterations_done;
    run["checkpoint"] = r.checkpoint;
    run["curve"] = r.curve;
    if (!r.message.empty()) run["message"] = r.message;
    j["runs"].push_back(run);
  }
  j["result_files"] = m.result_files;
  j["wall_clock_s"] = m.wall_clock_s;
  return j.dump(2) + "\n";
}

void write_manifest(const std::string& dir, const RunManifest& m) {
  write_file(fs::path(dir) / "manifest.json", manifest_to_json(m));
}

std::uint64_t campaign_seed(std::uint64_t master_seed, std::size_t index) {
  return derive_seed(master_seed, Stream::init, {static_cast<std::uint64_t>(index)});
}

RunManifest run_training_campaign(const ExperimentConfig& cfg, const CampaignProgress& progress) {
  cfg.validate();
  const auto t0 = Clock::now();
  const auto dir = prepare_dir(cfg);
  auto manifest = start_manifest(cfg, "train");
  const Scenario scenario(cfg.net, cfg.constraint_mode);
  const std::string stem = fmt::format("{}_{}", to_string(cfg.scheme), to_string(cfg.algorithm));

  for (std::size_t s = 0; s < cfg.n_seeds; ++s) {
    SeedRun run;
    run.index = s;
    run.seed = campaign_seed(cfg.master_seed, s);
    TrainOptions opts;
    opts.algorithm = cfg.algorithm;
    opts.iterations = cfg.iterations;
    opts.a2c_step = cfg.a2c_step;
    opts.smoothing = cfg.smoothing;
    opts.hidden = cfg.hidden();
    opts.seed = run.seed;
    opts.norm_samples = cfg.norm_samples;

    std::vector<IterationLog> log;
    auto on_iter = [&](const IterationLog& r) {
      log.push_back(r);
      if (progress) progress(s, r);
    };
    run.curve = fmt::format("{}_seed{}_curve.csv", stem, s);
    try {
      auto res = train(cfg.scheme, scenario, cfg.trpo, opts, on_iter);
      run.checkpoint = fmt::format("{}_seed{}.ckpt.json", stem, s);
      save_checkpoint((dir / run.checkpoint).string(),
                      Checkpoint{std::move(res.agent), cfg.algorithm, std::move(res.theta),
                                 std::move(res.phi), res.log.size(), run.seed, false});
      run.ok = true;
    } catch (const TrainingAborted& e) {
      const auto& good = e.last_good();
      run.checkpoint = fmt::format("{}_seed{}_diagnostic.ckpt.json", stem, s);
      save_checkpoint((dir / run.checkpoint).string(),
                      Checkpoint{good.agent, cfg.algorithm, good.theta, good.phi,
                                 good.log.size(), run.seed, true});
      run.message = e.what();
    } catch (const Error& e) {
      run.message = e.what();
    }
    run.iterations_done = log.size();
    write_file(dir / run.curve, curve_csv(log, cfg.reproducible));
    manifest.result_files.push_back(run.curve);
    if (!run.checkpoint.empty()) manifest.result_files.push_back(run.checkpoint);
    manifest.runs.push_back(std::move(run));
  }
  finish_manifest(cfg, dir, manifest, t0, nullptr);
  return manifest;
}

PowerMatrix baseline_powers(std::string_view method, const ChannelTensor& h,
                            const NetworkConfig& net, ConstraintMode mode, Rng& rng,
                            const SolverOptions& opts) {
  // The solvers only know the per-user constraint; their allocations are
  // reported as-is in sum-power mode too.
  if (method == "fp") return fp(h, net, opts).final_powers();
  if (method == "wmmse") return wmmse(h, net, opts).final_powers();
  if (method == "max_power") return project_powers(max_power(net), net.pmax_watts(), mode);
  if (method == "random") return project_powers(random_power(net, rng), net.pmax_watts(), mode);
  throw ConfigError(fmt::format("unknown baseline '{}'", method));
}

EvalSummary evaluate_baseline(std::string_view method, const Scenario& scenario,
                              std::size_t n_realizations, std::uint64_t seed,
                              const SolverOptions& opts) {
  if (!is_baseline_method(method)) throw ConfigError(fmt::format("unknown baseline '{}'", method));
  std::vector<double> rates(n_realizations), ms(n_realizations);
  parallel_for(n_realizations, [&](std::size_t i) {
    const auto h = evaluation_channels(scenario, seed, i);
    Rng rng = make_rng(seed, Stream::baseline, {i});
    const auto t0 = Clock::now();
    const auto p = baseline_powers(method, h, scenario.net, scenario.mode, rng, opts);
    ms[i] = ms_since(t0);
    rates[i] = sum_rate(h, p, scenario.noise_w(), scenario.net.bandwidth_hz);
  });
  return summarize(std::move(rates), std::move(ms));
}

std::vector<MethodResult> run_evaluation(const ExperimentConfig& cfg,
                                         const std::vector<std::string>& checkpoints,
                                         RunManifest* out) {
  cfg.validate();
  const auto t0 = Clock::now();
  const auto policies = load_policies(cfg, checkpoints);
  const auto dir = prepare_dir(cfg);
  auto manifest = start_manifest(cfg, "evaluate");
  const auto rows = evaluate_at(cfg, policies, cfg.net.pmax_dbm);

  std::string table = summary_header(false);
  for (const auto& r : rows) table += summary_row(cfg, r, false);
  write_file(dir / "evaluation.csv", table);
  write_file(dir / "evaluation_records.csv", records_csv(cfg, rows));
  manifest.result_files = {"evaluation.csv", "evaluation_records.csv"};
  finish_manifest(cfg, dir, manifest, t0, out);
  return rows;
}

std::vector<MethodResult> run_power_sweep(const ExperimentConfig& cfg,
                                          const std::vector<std::string>& checkpoints,
                                          RunManifest* out) {
  cfg.validate();
  const auto t0 = Clock::now();
  const auto policies = load_policies(cfg, checkpoints);
  const auto dir = prepare_dir(cfg);
  auto manifest = start_manifest(cfg, "sweep");
  std::vector<MethodResult> rows;
  for (double dbm : cfg.pmax_sweep_dbm)
    for (auto& r : evaluate_at(cfg, policies, dbm)) rows.push_back(std::move(r));

  std::string table = summary_header(true);
  for (const auto& r : rows) table += summary_row(cfg, r, true);
  write_file(dir / "sweep.csv", table);
  write_file(dir / "sweep_records.csv", records_csv(cfg, rows));
  manifest.result_files = {"sweep.csv", "sweep_records.csv"};
  finish_manifest(cfg, dir, manifest, t0, out);
  return rows;
}

std::vector<TimingRow> run_timing(const ExperimentConfig& cfg,
                                  const std::vector<std::string>& checkpoints,
                                  RunManifest* out) {
  cfg.validate();
  const auto t0 = Clock::now();
  const auto policies = load_policies(cfg, checkpoints);
  const auto dir = prepare_dir(cfg);
  auto manifest = start_manifest(cfg, "timing");
  const Scenario scenario(cfg.net, cfg.constraint_mode);
  const std::size_t n = cfg.timing_realizations;

  std::vector<ChannelTensor> channels;
  for (std::size_t i = 0; i < n; ++i)
    channels.push_back(evaluation_channels(scenario, cfg.master_seed, i));

  SingleThreaded guard;
  std::vector<TimingRow> rows;
  auto finish_row = [&](std::string method, std::vector<double> ms) {
    TimingRow r;
    r.method = std::move(method);
    r.samples = ms.size();
    const auto s = summarize(ms, {});
    r.mean_ms = s.mean;
    r.median_ms = s.p50;
    rows.push_back(std::move(r));
  };

  for (const auto& p : policies) {
    const auto& agent = p.ckpt.agent;
    ActOptions opts;
    opts.sigma_floor = true;
    opts.output_scale = cfg.net.pmax_watts() / agent.net.pmax_watts();
    opts.pmax_watts = cfg.net.pmax_watts();
    std::vector<double> ms(n);
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng = make_rng(cfg.master_seed, Stream::timing, {i});
      if (agent.scheme == Scheme::full) {
        // Base stations decide simultaneously; latency is the slowest one.
        double worst = 0.0;
        for (std::size_t b = 0; b < cfg.net.num_cells; ++b) {
          const auto tb = Clock::now();
          const auto step = act_local(agent, p.ckpt.theta, channels[i], b, rng, opts);
          worst = std::max(worst, ms_since(tb));
          (void)step;
        }
        ms[i] = worst;
      } else {
        const auto ti = Clock::now();
        const auto ep = act(agent, p.ckpt.theta, channels[i], scenario.mode, rng, opts);
        ms[i] = ms_since(ti);
        (void)ep;
      }
    }
    finish_row(p.label, std::move(ms));
  }

  const auto sopts = solver_options(cfg, false);
  for (const auto& m : cfg.eval_methods) {
    if (!is_baseline_method(m)) continue;
    std::vector<double> ms(n);
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng = make_rng(cfg.master_seed, Stream::timing, {i});
      const auto ti = Clock::now();
      const auto pw = baseline_powers(m, channels[i], cfg.net, scenario.mode, rng, sopts);
      ms[i] = ms_since(ti);
      (void)pw;
    }
    finish_row(m, std::move(ms));
  }

  std::string table = "method,B,K,n_realizations,mean_ms,median_ms\n";
  for (const auto& r : rows)
    table += fmt::format("{},{},{},{},{},{}\n", r.method, cfg.net.num_cells,
                         cfg.net.users_per_cell, r.samples,
                         full(cfg.reproducible ? 0.0 : r.mean_ms),
                         full(cfg.reproducible ? 0.0 : r.median_ms));
  write_file(dir / "timing.csv", table);
  manifest.result_files = {"timing.csv"};
  finish_manifest(cfg, dir, manifest, t0, out);
  return rows;
}

std::vector<BaselineRun> run_baselines(const ExperimentConfig& cfg, RunManifest* out) {
  cfg.validate();
  const auto t0 = Clock::now();
  const auto dir = prepare_dir(cfg);
  auto manifest = start_manifest(cfg, "baselines");
  const Scenario scenario(cfg.net, cfg.constraint_mode);
  const auto h = evaluation_channels(scenario, cfg.master_seed, cfg.trace_realization);
  const auto sopts = solver_options(cfg, true);
  const double noise = scenario.noise_w();

  std::vector<BaselineRun> runs;
  for (const std::string m : {"max_power", "random", "fp", "wmmse"}) {
    BaselineRun run{m, {}};
    if (m == "fp") {
      run.trace = fp(h, cfg.net, sopts);
    } else if (m == "wmmse") {
      run.trace = wmmse(h, cfg.net, sopts);
    } else {
      Rng rng = make_rng(cfg.master_seed, Stream::baseline, {cfg.trace_realization});
      const auto p = m == "max_power" ? max_power(cfg.net) : random_power(cfg.net, rng);
      run.trace.iterates.push_back(p);
      run.trace.sum_rate.push_back(sum_rate(h, p, noise, cfg.net.bandwidth_hz));
      run.trace.converged = true;
    }
    runs.push_back(std::move(run));
  }

  std::string summary = "method,realization,sum_rate_mbps,iterations,converged\n";
  for (const auto& r : runs) {
    summary += fmt::format("{},{},{},{},{}\n", r.method, cfg.trace_realization,
                           mbps(r.trace.final_sum_rate()), r.trace.iterations,
                           r.trace.converged ? 1 : 0);
    if (r.method != "fp" && r.method != "wmmse") continue;
    std::string trace = "iterate,sum_rate_bps,sum_rate_mbps\n";
    for (std::size_t t = 0; t < r.trace.sum_rate.size(); ++t)
      trace += fmt::format("{},{},{}\n", t, full(r.trace.sum_rate[t]),
                           full(r.trace.sum_rate[t] / 1e6));
    const auto name = fmt::format("trace_{}.csv", r.method);
    write_file(dir / name, trace);
    manifest.result_files.push_back(name);
  }
  write_file(dir / "baselines.csv", summary);
  manifest.result_files.push_back("baselines.csv");
  finish_manifest(cfg, dir, manifest, t0, out);
  return runs;
}

ExchangeReport exchange_accounting(const NetworkConfig& net, std::string_view method) {
  const std::size_t B = net.num_cells;
  const std::size_t K = net.users_per_cell;
  ExchangeReport r;
  r.method = std::string(method);
  if (method == "centralized" || method == "fp" || method == "wmmse") {
    r.csi_to_center = K * B * B;
    r.powers_from_center = K * B;
    r.exchange_class = "O(KB^2)";
    r.csi_per_decision = K * B * B;
    r.csi_class = "O(KB^2)";
  } else if (method == "partial") {
    // The b-th base station in the acting order receives (b-1)K powers.
    for (std::size_t b = 1; b <= B; ++b) r.powers_relayed += (b - 1) * K;
    r.exchange_class = "O(KB)";
    r.csi_per_decision = K * B;
    r.csi_class = "O(KB)";
  } else if (method == "full") {
    r.exchange_class = "0";
    r.csi_per_decision = K * B;
    r.csi_class = "O(KB)";
  } else if (method == "max_power" || method == "random") {
    r.exchange_class = "0";
    r.csi_class = "0";
  } else {
    throw ConfigError(fmt::format("unknown method '{}'", method));
  }
  r.total = r.csi_to_center + r.powers_from_center + r.powers_relayed;
  return r;
}

std::vector<ExchangeReport> run_accounting(const ExperimentConfig& cfg, RunManifest* out) {
  cfg.validate();
  const auto t0 = Clock::now();
  const auto dir = prepare_dir(cfg);
  auto manifest = start_manifest(cfg, "accounting");
  std::vector<ExchangeReport> rows;
  std::string table =
      "method,B,K,csi_to_center,powers_from_center,powers_relayed,total_scalars,"
      "exchange_class,csi_per_decision,csi_class\n";
  for (const char* m : {"centralized", "partial", "full", "fp", "wmmse", "max_power", "random"}) {
    auto r = exchange_accounting(cfg.net, m);
    table += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.method, cfg.net.num_cells,
                         cfg.net.users_per_cell, r.csi_to_center, r.powers_from_center,
                         r.powers_relayed, r.total, r.exchange_class, r.csi_per_decision,
                         r.csi_class);
    rows.push_back(std::move(r));
  }
  write_file(dir / "accounting.csv", table);
  manifest.result_files = {"accounting.csv"};
  finish_manifest(cfg, dir, manifest, t0, out);
  return rows;
}

}  // namespace pctrl
