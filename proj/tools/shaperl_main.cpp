#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "shaperl/analysis.hpp"
#include "shaperl/checkpoint.hpp"
#include "shaperl/config.hpp"
#include "shaperl/dataset.hpp"
#include "shaperl/env.hpp"
#include "shaperl/errors.hpp"
#include "shaperl/tqc.hpp"

namespace fs = std::filesystem;
using namespace shaperl;

namespace {

using Digests = std::vector<std::pair<std::string, std::string>>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

// Config source resolution shared by the run-driving subcommands: exactly
// one of --config/--profile, then overrides, then full validation.
RunConfig resolve_config(const std::string& config_path,
                         const std::string& profile,
                         const std::optional<std::uint64_t>& seed_override,
                         const std::string& out_override) {
  require(!config_path.empty() || !profile.empty(),
          "provide --config FILE or --profile NAME");
  require(config_path.empty() || profile.empty(),
          "use --config or --profile, not both");
  RunConfig cfg = config_path.empty() ? profile_config(profile)
                                      : load_run_config(config_path);
  if (seed_override) cfg.seed = *seed_override;
  if (!out_override.empty()) cfg.out_dir = out_override;
  validate_run_config(cfg);
  return cfg;
}

ShapeDataset resolve_dataset(const RunConfig& cfg, Digests& digests) {
  if (cfg.dataset.mode == "file") {
    digests.emplace_back("dataset", file_digest(cfg.dataset.path));
    ShapeDataset ds = load_dataset(cfg.dataset.path);
    validate_dataset(ds);
    return ds;
  }
  CorpusParams params;
  params.n = cfg.dataset.corpus_n;
  params.seed = cfg.dataset.corpus_seed;
  params.walk_step = cfg.dataset.walk_step;
  ShapeDataset ds = build_dataset(params, cfg.env.envelope,
                                  cfg.dataset.threshold);
  validate_dataset(ds);
  return ds;
}

void add_checkpoint_digests(Digests& digests, const std::string& label,
                            const std::string& dir) {
  digests.emplace_back(label + "/" + kManifestName,
                       file_digest(dir + "/" + kManifestName));
  digests.emplace_back(label + "/" + kParamsName,
                       file_digest(dir + "/" + kParamsName));
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open for writing: " + path);
  f << j.dump(2) << "\n";
  if (!f) throw RuntimeFault("failed writing: " + path);
}

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), "cannot open: " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const std::exception& e) {
    throw ValidationError("malformed JSON in " + path + ": " + e.what());
  }
}

// Realizes an evaluation mask.  Every kind except an explicit mask file
// adopts the agent's trained dropout rate so survivors get the same
// 1/(1-p) rescale the policy saw in training; a file mask is taken
// verbatim, including its rate.
MaskSpec realize_mask(const MaskOption& opt, const SurrogateEnv& env,
                      const TqcAgent& agent,
                      const std::vector<ShapeGoal>& shapes,
                      std::uint64_t seed, std::int64_t topk_states,
                      Digests* digests) {
  const ObsSpans& spans = env.spans();
  MaskSpec mask;
  switch (opt.kind) {
    case MaskOption::Kind::kFull:
      mask = full_mask(spans, 0.0);
      break;
    case MaskOption::Kind::kFixed:
      mask = fixed_disabled_mask(spans, fixed_disabled_count(spans.maskable()),
                                 opt.seed);
      break;
    case MaskOption::Kind::kFile: {
      if (digests) digests->emplace_back("mask", file_digest(opt.path));
      mask = load_json_file(opt.path).get<MaskSpec>();
      require(static_cast<int>(mask.keep.size()) == spans.maskable(),
              "mask file " + opt.path + ": keep length " +
                  std::to_string(mask.keep.size()) + " does not match the " +
                  std::to_string(spans.maskable()) + " maskable channels");
      require(mask.dropout_p >= 0.0 && mask.dropout_p < 1.0,
              "mask file " + opt.path + ": dropout_p must be in [0, 1)");
      return mask;
    }
    case MaskOption::Kind::kTopK: {
      const MaskSpec collect = full_mask(spans, agent.cfg.dropout_p);
      const auto states =
          collect_states(env, agent, shapes, collect, topk_states, seed);
      const SensitivityReport report = gradient_sensitivity(agent, states);
      mask = topk_proportional(report.score, spans, opt.k);
      break;
    }
    case MaskOption::Kind::kRandK: {
      Rng rng = substream(seed, "randk");
      mask = random_k_mask(spans, opt.k, rng);
      break;
    }
  }
  mask.dropout_p = agent.cfg.dropout_p;
  return mask;
}

const char* mask_kind_name(MaskOption::Kind kind) {
  switch (kind) {
    case MaskOption::Kind::kFull: return "full";
    case MaskOption::Kind::kFixed: return "fixed";
    case MaskOption::Kind::kFile: return "file";
    case MaskOption::Kind::kTopK: return "topk";
    case MaskOption::Kind::kRandK: return "randk";
  }
  return "?";
}

nlohmann::json summary_json(const EvalSummary& s, const EvalConfig& ecfg,
                            const MaskSpec& mask,
                            const std::string& mask_kind) {
  nlohmann::json j = nlohmann::json::object();
  j["n_shapes"] = s.rows.size();
  j["episodes_per_shape"] = ecfg.episodes_per_shape;
  j["episode_len"] = ecfg.episode_len;
  j["random_policy"] = ecfg.random_policy;
  j["mean_reward"] = s.mean_reward;
  j["std_reward"] = s.std_reward;
  j["mean_d_shape_m"] = s.mean_d_shape;
  j["std_d_shape_m"] = s.std_d_shape;
  j["mean_d_xpt_m"] = s.mean_d_xpt;
  j["std_d_xpt_m"] = s.std_d_xpt;
  j["aux_mse"] = s.aux_mse;
  j["zero_mse"] = s.zero_mse;
  j["mask"] = {{"kind", mask_kind},
               {"masked_fraction", mask.masked_fraction()},
               {"n_masked", mask.n_masked()},
               {"dropout_p", mask.dropout_p}};
  return j;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_dataset(const RunConfig& cfg) {
  require(cfg.dataset.mode == "generate",
          "dataset command needs $.dataset.mode == \"generate\"");
  Digests digests;
  const ShapeDataset ds = resolve_dataset(cfg, digests);
  fs::create_directories(cfg.out_dir);
  save_dataset(cfg.out_dir + "/dataset.json", ds);
  write_manifest(cfg.out_dir + "/run_manifest.json",
                 make_manifest(cfg, "dataset", digests));
  const ExtremeIndices ex = find_extremes(ds.shapes);
  std::printf("selected %zu of %d corpus shapes (threshold %s m)\n",
              ds.shapes.size(), cfg.dataset.corpus_n,
              fmt17(cfg.dataset.threshold).c_str());
  std::printf("extreme shapes: min z_max #%d, max z_max #%d, "
              "min R_x #%d, max R_x #%d\n",
              ex.min_z_max, ex.max_z_max, ex.min_r_x, ex.max_r_x);
  std::printf("wrote %s/dataset.json\n", cfg.out_dir.c_str());
  return 0;
}

int cmd_train(RunConfig cfg, std::int64_t steps_override,
              const std::string& resume_dir) {
  if (steps_override >= 0) {
    cfg.tqc.total_steps = steps_override;
    validate_run_config(cfg);
  }
  const SurrogateEnv env(cfg.env);
  Digests digests;
  const ShapeDataset ds = resolve_dataset(cfg, digests);

  std::optional<TqcAgent> agent;
  if (resume_dir.empty()) {
    agent.emplace(cfg.env, cfg.tqc, cfg.seed);
  } else {
    add_checkpoint_digests(digests, "resume", resume_dir);
    agent.emplace(load_checkpoint(resume_dir));
    require(nlohmann::json(agent->env_cfg) == nlohmann::json(cfg.env),
            "resume checkpoint was trained on a different environment config");
    nlohmann::json stored = agent->cfg;
    nlohmann::json wanted = cfg.tqc;
    stored["total_steps"] = 0;
    wanted["total_steps"] = 0;
    require(stored == wanted,
            "resume checkpoint learner config differs from the run config "
            "(only total_steps may change)");
    require(cfg.tqc.total_steps >= agent->env_steps,
            "total_steps " + std::to_string(cfg.tqc.total_steps) +
                " is behind the checkpoint's " +
                std::to_string(agent->env_steps) + " completed steps");
    agent->cfg.total_steps = cfg.tqc.total_steps;
  }

  fs::create_directories(cfg.out_dir);
  write_manifest(cfg.out_dir + "/run_manifest.json",
                 make_manifest(cfg, "train", digests));
  const TrainResult result =
      train_agent(env, *agent, ds.shapes, cfg.seed,
                  cfg.out_dir + "/fault_checkpoint");
  write_metrics_csv(cfg.out_dir + "/metrics.csv", result.episodes);
  save_checkpoint(*agent, cfg.out_dir + "/checkpoint");
  std::printf("trained to %lld env steps (%lld gradient updates, "
              "%zu episodes this run)\n",
              static_cast<long long>(agent->env_steps),
              static_cast<long long>(agent->grad_steps),
              result.episodes.size());
  std::printf("wrote %s/metrics.csv and %s/checkpoint\n", cfg.out_dir.c_str(),
              cfg.out_dir.c_str());
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_dir,
             const std::string& mask_text, int episodes, int eval_len,
             bool random_policy, int workers, std::int64_t topk_states) {
  const SurrogateEnv env(cfg.env);
  Digests digests;
  add_checkpoint_digests(digests, "checkpoint", checkpoint_dir);
  const TqcAgent agent = load_checkpoint(checkpoint_dir);
  require(env.spans().total() == agent.obs_dim && cfg.env.n_act == agent.n_act,
          "checkpoint does not match the environment config");
  const ShapeDataset ds = resolve_dataset(cfg, digests);

  const MaskOption opt = parse_mask_option(mask_text);
  const MaskSpec mask = realize_mask(opt, env, agent, ds.shapes, cfg.seed,
                                     topk_states, &digests);
  EvalConfig ecfg;
  ecfg.episodes_per_shape = episodes;
  ecfg.episode_len = eval_len;
  ecfg.random_policy = random_policy;
  ecfg.workers = workers;
  const EvalSummary summary =
      evaluate_policy(env, agent, ds.shapes, mask, ecfg, cfg.seed);

  fs::create_directories(cfg.out_dir);
  write_manifest(cfg.out_dir + "/run_manifest.json",
                 make_manifest(cfg, "eval", digests));
  write_eval_csv(cfg.out_dir + "/eval.csv", summary);
  write_json_file(cfg.out_dir + "/mask.json", nlohmann::json(mask));
  write_json_file(cfg.out_dir + "/summary.json",
                  summary_json(summary, ecfg, mask, mask_kind_name(opt.kind)));
  std::printf("evaluated %zu shapes on mask %s (%d of %d channels masked)\n",
              summary.rows.size(), mask_text.c_str(), mask.n_masked(),
              env.spans().maskable());
  std::printf("mean reward %s, mean d_shape %s m, mean d_xpt %s m\n",
              fmt17(summary.mean_reward).c_str(),
              fmt17(summary.mean_d_shape).c_str(),
              fmt17(summary.mean_d_xpt).c_str());
  return 0;
}

std::vector<std::pair<std::string, std::string>> parse_sweep(
    const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::size_t eq = item.find('=');
    require(eq != std::string::npos && eq > 0 && eq + 1 < item.size(),
            "sweep entry \"" + item + "\": expected P=CHECKPOINT_DIR");
    entries.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  require(entries.size() >= 2, "sweep needs at least two P=DIR entries");
  return entries;
}

int cmd_analyze_sweep(const RunConfig& cfg, const std::string& sweep_text,
                      std::int64_t states_n, int episodes, int eval_len,
                      int workers) {
  const SurrogateEnv env(cfg.env);
  Digests digests;
  const ShapeDataset ds = resolve_dataset(cfg, digests);
  const auto entries = parse_sweep(sweep_text);

  std::vector<double> ps;
  std::string missing;
  for (const auto& [p_text, dir] : entries) {
    try {
      ps.push_back(std::stod(p_text));
    } catch (const std::exception&) {
      throw ValidationError("sweep entry \"" + p_text + "=...\": P must be a number");
    }
    if (!fs::exists(dir + "/" + kManifestName))
      missing += (missing.empty() ? "" : ", ") + ("p=" + p_text + " " + dir);
  }
  require(missing.empty(), "missing sweep checkpoints: " + missing);

  std::vector<TqcAgent> agents;
  agents.reserve(entries.size());
  for (const auto& [p_text, dir] : entries) {
    add_checkpoint_digests(digests, "checkpoint_p" + p_text, dir);
    agents.push_back(load_checkpoint(dir));
    require(env.spans().total() == agents.back().obs_dim &&
                cfg.env.n_act == agents.back().n_act,
            "sweep checkpoint p=" + p_text +
                " does not match the environment config");
  }

  // Shared deployment outage; each agent keeps its own survivor rescale.
  const MaskSpec base = fixed_disabled_mask(
      env.spans(), fixed_disabled_count(env.spans().maskable()), cfg.seed);
  EvalConfig ecfg;
  ecfg.episodes_per_shape = episodes;
  ecfg.episode_len = eval_len;
  ecfg.workers = workers;

  std::vector<EvalSummary> summaries;
  std::vector<std::vector<double>> scores;
  for (const TqcAgent& agent : agents) {
    MaskSpec mask = base;
    mask.dropout_p = agent.cfg.dropout_p;
    summaries.push_back(
        evaluate_policy(env, agent, ds.shapes, mask, ecfg, cfg.seed));
    const MaskSpec collect = full_mask(env.spans(), agent.cfg.dropout_p);
    const auto states =
        collect_states(env, agent, ds.shapes, collect, states_n, cfg.seed);
    scores.push_back(gradient_sensitivity(agent, states).score);
  }

  fs::create_directories(cfg.out_dir);
  write_manifest(cfg.out_dir + "/run_manifest.json",
                 make_manifest(cfg, "analyze", digests));
  {
    const std::string path = cfg.out_dir + "/comparison.csv";
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open for writing: " + path);
    f << "p,mean_d_shape_m,std_d_shape_m,mean_d_xpt_m,std_d_xpt_m,"
         "mean_reward,std_reward\n";
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const EvalSummary& s = summaries[i];
      f << entries[i].first << ',' << fmt17(s.mean_d_shape) << ','
        << fmt17(s.std_d_shape) << ',' << fmt17(s.mean_d_xpt) << ','
        << fmt17(s.std_d_xpt) << ',' << fmt17(s.mean_reward) << ','
        << fmt17(s.std_reward) << '\n';
    }
    if (!f) throw RuntimeFault("failed writing: " + path);
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    SensitivityReport report;
    report.score = scores[i];
    report.n_states = states_n;
    for (int c = 0; c < env.spans().total(); ++c)
      report.labels.push_back(channel_label(env.spans(), c));
    write_sensitivity_csv(
        cfg.out_dir + "/sensitivity_p" + entries[i].first + ".csv", report);
  }
  write_json_file(cfg.out_dir + "/rank_full.json",
                  rank_matrix_json(ps, spearman_matrix(scores, {})));
  const int top_n = std::min(60, env.spans().total());
  write_json_file(
      cfg.out_dir + "/rank_top60.json",
      rank_matrix_json(ps,
                       spearman_matrix(scores,
                                       top_channels_by_mean(scores, top_n))));
  std::printf("sweep over %zu agents on the fixed mask (%d channels "
              "disabled) written to %s\n",
              agents.size(), base.n_masked(), cfg.out_dir.c_str());
  return 0;
}

std::vector<int> parse_k_list(const std::string& text, int maskable) {
  std::vector<int> ks;
  if (text.empty()) {
    for (int k114 : {11, 23, 37, 58, 80, 114}) {
      int k = static_cast<int>(std::lround(maskable * k114 / 114.0));
      if (k < 1) k = 1;
      if (k > maskable) k = maskable;
      if (ks.empty() || ks.back() != k) ks.push_back(k);
    }
    return ks;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int k = 0;
    try {
      k = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == item.size() && k >= 1 && k <= maskable,
            "k-list entry \"" + item + "\": expected an integer in [1, " +
                std::to_string(maskable) + "]");
    ks.push_back(k);
  }
  require(!ks.empty(), "k-list is empty");
  return ks;
}

int cmd_analyze_kcurve(const RunConfig& cfg, const std::string& checkpoint_dir,
                       const std::string& klist_text, std::int64_t states_n,
                       int episodes, int eval_len, int workers) {
  const SurrogateEnv env(cfg.env);
  Digests digests;
  add_checkpoint_digests(digests, "checkpoint", checkpoint_dir);
  const TqcAgent agent = load_checkpoint(checkpoint_dir);
  require(env.spans().total() == agent.obs_dim && cfg.env.n_act == agent.n_act,
          "checkpoint does not match the environment config");
  const ShapeDataset ds = resolve_dataset(cfg, digests);
  const std::vector<int> ks = parse_k_list(klist_text, env.spans().maskable());

  // One sensitivity pass feeds every top-K selection.
  const MaskSpec collect = full_mask(env.spans(), agent.cfg.dropout_p);
  const auto states =
      collect_states(env, agent, ds.shapes, collect, states_n, cfg.seed);
  const SensitivityReport report = gradient_sensitivity(agent, states);

  EvalConfig ecfg;
  ecfg.episodes_per_shape = episodes;
  ecfg.episode_len = eval_len;
  ecfg.workers = workers;

  fs::create_directories(cfg.out_dir);
  write_manifest(cfg.out_dir + "/run_manifest.json",
                 make_manifest(cfg, "analyze", digests));
  const std::string path = cfg.out_dir + "/kcurve.csv";
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open for writing: " + path);
  f << "K,selection,draw,mean_reward,std_reward,mean_d_shape_m,"
       "std_d_shape_m,mean_d_xpt_m,std_d_xpt_m\n";
  auto emit = [&](int k, const char* selection, int draw,
                  const EvalSummary& s) {
    f << k << ',' << selection << ',' << draw << ',' << fmt17(s.mean_reward)
      << ',' << fmt17(s.std_reward) << ',' << fmt17(s.mean_d_shape) << ','
      << fmt17(s.std_d_shape) << ',' << fmt17(s.mean_d_xpt) << ','
      << fmt17(s.std_d_xpt) << '\n';
  };
  for (int k : ks) {
    MaskSpec top = topk_proportional(report.score, env.spans(), k);
    top.dropout_p = agent.cfg.dropout_p;
    emit(k, "topk", 0,
         evaluate_policy(env, agent, ds.shapes, top, ecfg, cfg.seed));
    Rng rng = substream(cfg.seed, "randk/" + std::to_string(k));
    for (int draw = 0; draw < 5; ++draw) {
      MaskSpec rnd = random_k_mask(env.spans(), k, rng);
      rnd.dropout_p = agent.cfg.dropout_p;
      emit(k, "randk", draw,
           evaluate_policy(env, agent, ds.shapes, rnd, ecfg, cfg.seed));
    }
  }
  if (!f) throw RuntimeFault("failed writing: " + path);
  std::printf("selection curve over %zu K values written to %s\n", ks.size(),
              path.c_str());
  return 0;
}

int cmd_analyze_sensitivity(const RunConfig& cfg,
                            const std::string& checkpoint_dir,
                            std::int64_t states_n) {
  const SurrogateEnv env(cfg.env);
  Digests digests;
  add_checkpoint_digests(digests, "checkpoint", checkpoint_dir);
  const TqcAgent agent = load_checkpoint(checkpoint_dir);
  require(env.spans().total() == agent.obs_dim && cfg.env.n_act == agent.n_act,
          "checkpoint does not match the environment config");
  const ShapeDataset ds = resolve_dataset(cfg, digests);

  const MaskSpec collect = full_mask(env.spans(), agent.cfg.dropout_p);
  const auto states =
      collect_states(env, agent, ds.shapes, collect, states_n, cfg.seed);
  const SensitivityReport report = gradient_sensitivity(agent, states);

  fs::create_directories(cfg.out_dir);
  write_manifest(cfg.out_dir + "/run_manifest.json",
                 make_manifest(cfg, "analyze", digests));
  write_sensitivity_csv(cfg.out_dir + "/sensitivity.csv", report);
  std::printf("sensitivity over %d channels from %lld states written to "
              "%s/sensitivity.csv\n",
              env.spans().total(), static_cast<long long>(report.n_states),
              cfg.out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// plotdata: reshape the tool's own CSV artifacts into one tidy table.

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), "cannot open: " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  require(rows.size() >= 2, path + ": expected a header row and data rows");
  return rows;
}

void check_header(const std::vector<std::string>& got,
                  const std::vector<std::string>& want,
                  const std::string& path, const std::string& kind) {
  require(got == want, path + ": header does not match a " + kind + " file");
}

int cmd_plotdata(const std::string& kind,
                 const std::vector<std::string>& inputs,
                 const std::string& out_dir) {
  require(!inputs.empty(), "plotdata needs at least one --in FILE");
  Digests digests;
  std::vector<std::string> lines;  // source,series,x,y,tag

  for (const std::string& path : inputs) {
    digests.emplace_back(fs::path(path).filename().string(),
                         file_digest(path));
    const std::string source = fs::path(path).filename().string();
    const auto rows = read_csv(path);
    auto tidy = [&](const std::string& series, const std::string& x,
                    const std::string& y, const std::string& tag) {
      lines.push_back(source + ',' + series + ',' + x + ',' + y + ',' + tag);
    };
    if (kind == "metrics") {
      check_header(rows[0],
                   {"episode", "steps", "mean_reward", "mean_d_shape_m",
                    "mean_d_xpt_m", "eplen", "mask_fraction"},
                   path, kind);
      for (std::size_t r = 1; r < rows.size(); ++r)
        for (std::size_t c = 2; c < rows[0].size(); ++c)
          tidy(rows[0][c], rows[r][1], rows[r][c], "");
    } else if (kind == "eval") {
      check_header(rows[0],
                   {"shape", "mean_reward", "mean_d_shape_m", "mean_d_xpt_m",
                    "aux_mse", "zero_mse"},
                   path, kind);
      for (std::size_t r = 1; r < rows.size(); ++r)
        for (std::size_t c = 1; c < rows[0].size(); ++c)
          tidy(rows[0][c], rows[r][0], rows[r][c], "");
    } else if (kind == "sensitivity") {
      check_header(rows[0], {"channel", "label", "score"}, path, kind);
      for (std::size_t r = 1; r < rows.size(); ++r)
        tidy("score", rows[r][0], rows[r][2], rows[r][1]);
    } else if (kind == "kcurve") {
      check_header(rows[0],
                   {"K", "selection", "draw", "mean_reward", "std_reward",
                    "mean_d_shape_m", "std_d_shape_m", "mean_d_xpt_m",
                    "std_d_xpt_m"},
                   path, kind);
      for (std::size_t r = 1; r < rows.size(); ++r)
        for (std::size_t c = 3; c < rows[0].size(); ++c)
          tidy(rows[r][1] + "/" + rows[0][c], rows[r][0], rows[r][c],
               rows[r][2]);
    } else {
      throw ValidationError(
          "plotdata kind \"" + kind +
          "\": expected metrics | eval | sensitivity | kcurve");
    }
  }

  fs::create_directories(out_dir);
  {
    const std::string path = out_dir + "/plot.csv";
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open for writing: " + path);
    f << "source,series,x,y,tag\n";
    for (const std::string& line : lines) f << line << '\n';
    if (!f) throw RuntimeFault("failed writing: " + path);
  }
  nlohmann::json manifest = nlohmann::json::object();
  manifest["schema_version"] = kConfigSchemaVersion;
  manifest["tool"] = "shaperl";
  manifest["tool_version"] = kToolVersion;
  manifest["command"] = "plotdata";
  manifest["kind"] = kind;
  std::string arg_blob = kind;
  for (const std::string& path : inputs) arg_blob += "\n" + path;
  manifest["config_hash"] = "fnv1a:" + fnv1a64_hex(arg_blob);
  manifest["seed"] = 0;
  nlohmann::json in = nlohmann::json::object();
  for (const auto& [name, digest] : digests) in[name] = digest;
  manifest["inputs"] = in;
  write_manifest(out_dir + "/run_manifest.json", manifest);
  std::printf("wrote %zu tidy rows to %s/plot.csv\n", lines.size(),
              out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Goal-conditioned plasma-shape control workbench: surrogate "
               "environment, distributional actor-critic training, sensor "
               "dropout, and sensitivity analysis."};
  app.require_subcommand(1);

  // Shared config-source options, registered per subcommand.
  struct Common {
    std::string config_path;
    std::string profile;
    std::string out_dir;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
  };
  auto add_common = [&](CLI::App* sub) {
    auto c = std::make_shared<Common>();
    sub->add_option("--config", c->config_path,
                    "Run config JSON file (strict schema)");
    sub->add_option("--profile", c->profile,
                    "Built-in profile: default | desk");
    sub->add_option("--out", c->out_dir, "Output directory override");
    c->seed_opt = sub->add_option("--seed", c->seed, "Root seed override");
    return c;
  };
  auto config_of = [](const Common& c) {
    std::optional<std::uint64_t> seed;
    if (c.seed_opt->count() > 0) seed = c.seed;
    return resolve_config(c.config_path, c.profile, seed, c.out_dir);
  };

  int rc = 0;

  CLI::App* ds_cmd = app.add_subcommand(
      "dataset", "Generate and curate the shape-goal dataset");
  auto ds_common = add_common(ds_cmd);
  ds_cmd->callback([&, ds_common] { rc = cmd_dataset(config_of(*ds_common)); });

  CLI::App* train_cmd =
      app.add_subcommand("train", "Train the shape-control agent");
  auto train_common = add_common(train_cmd);
  auto train_steps = std::make_shared<std::int64_t>(-1);
  auto train_resume = std::make_shared<std::string>();
  train_cmd->add_option("--steps", *train_steps,
                        "Override total environment steps (0 emits an "
                        "untrained checkpoint)");
  train_cmd->add_option("--resume", *train_resume,
                        "Continue from a checkpoint directory");
  train_cmd->callback([&, train_common, train_steps, train_resume] {
    rc = cmd_train(config_of(*train_common), *train_steps, *train_resume);
  });

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Evaluate a checkpoint over the dataset");
  auto eval_common = add_common(eval_cmd);
  auto eval_ckpt = std::make_shared<std::string>();
  auto eval_mask = std::make_shared<std::string>("full");
  auto eval_episodes = std::make_shared<int>(1);
  auto eval_len = std::make_shared<int>(250);
  auto eval_random = std::make_shared<bool>(false);
  auto eval_workers = std::make_shared<int>(1);
  auto eval_states = std::make_shared<std::int64_t>(2000);
  eval_cmd->add_option("--checkpoint", *eval_ckpt, "Checkpoint directory")
      ->required();
  eval_cmd->add_option(
      "--mask", *eval_mask,
      "Sensor mask: full | fixed:SEED | file:PATH | topk:K | randk:K");
  eval_cmd->add_option("--episodes", *eval_episodes, "Episodes per shape");
  eval_cmd->add_option("--eval-len", *eval_len, "Steps per episode");
  eval_cmd->add_flag("--random-policy", *eval_random,
                     "Uniform random actions instead of the policy");
  eval_cmd->add_option("--workers", *eval_workers,
                       "Threads for the shape fan-out");
  eval_cmd->add_option("--states", *eval_states,
                       "States for the topk sensitivity pass");
  eval_cmd->callback([&, eval_common, eval_ckpt, eval_mask, eval_episodes,
                      eval_len, eval_random, eval_workers, eval_states] {
    rc = cmd_eval(config_of(*eval_common), *eval_ckpt, *eval_mask,
                  *eval_episodes, *eval_len, *eval_random, *eval_workers,
                  *eval_states);
  });

  CLI::App* an_cmd = app.add_subcommand(
      "analyze", "Sensitivity reports, dropout sweeps, selection curves");
  auto an_common = add_common(an_cmd);
  auto an_ckpt = std::make_shared<std::string>();
  auto an_states = std::make_shared<std::int64_t>(10000);
  auto an_sweep = std::make_shared<std::string>();
  auto an_kcurve = std::make_shared<bool>(false);
  auto an_klist = std::make_shared<std::string>();
  auto an_episodes = std::make_shared<int>(1);
  auto an_eval_len = std::make_shared<int>(250);
  auto an_workers = std::make_shared<int>(1);
  an_cmd->add_option("--checkpoint", *an_ckpt,
                     "Checkpoint directory (sensitivity / k-curve modes)");
  an_cmd->add_option("--states", *an_states,
                     "States for the sensitivity expectation");
  an_cmd->add_option("--sweep", *an_sweep,
                     "Dropout sweep: P=CHECKPOINT_DIR,P=CHECKPOINT_DIR,...");
  an_cmd->add_flag("--k-curve", *an_kcurve,
                   "Top-K vs random-K selection curve");
  an_cmd->add_option("--k-list", *an_klist,
                     "Comma-separated K values for --k-curve");
  an_cmd->add_option("--episodes", *an_episodes, "Episodes per shape");
  an_cmd->add_option("--eval-len", *an_eval_len, "Steps per episode");
  an_cmd->add_option("--workers", *an_workers,
                     "Threads for the shape fan-out");
  an_cmd->callback([&, an_common, an_ckpt, an_states, an_sweep, an_kcurve,
                    an_klist, an_episodes, an_eval_len, an_workers] {
    const RunConfig cfg = config_of(*an_common);
    require(an_sweep->empty() || !*an_kcurve,
            "--sweep and --k-curve are mutually exclusive");
    if (!an_sweep->empty()) {
      rc = cmd_analyze_sweep(cfg, *an_sweep, *an_states, *an_episodes,
                             *an_eval_len, *an_workers);
    } else if (*an_kcurve) {
      require(!an_ckpt->empty(), "--k-curve needs --checkpoint");
      rc = cmd_analyze_kcurve(cfg, *an_ckpt, *an_klist, *an_states,
                              *an_episodes, *an_eval_len, *an_workers);
    } else {
      require(!an_ckpt->empty(), "analyze needs --checkpoint (or --sweep)");
      rc = cmd_analyze_sensitivity(cfg, *an_ckpt, *an_states);
    }
  });

  CLI::App* plot_cmd = app.add_subcommand(
      "plotdata", "Reshape artifact CSVs into one tidy plotting table");
  auto plot_kind = std::make_shared<std::string>();
  auto plot_inputs = std::make_shared<std::vector<std::string>>();
  auto plot_out = std::make_shared<std::string>();
  plot_cmd
      ->add_option("--kind", *plot_kind,
                   "Input kind: metrics | eval | sensitivity | kcurve")
      ->required();
  plot_cmd->add_option("--in", *plot_inputs, "Input CSV (repeatable)")
      ->required();
  plot_cmd->add_option("--out", *plot_out, "Output directory")->required();
  plot_cmd->callback([&, plot_kind, plot_inputs, plot_out] {
    rc = cmd_plotdata(*plot_kind, *plot_inputs, *plot_out);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const RuntimeFault& e) {
    std::fprintf(stderr, "fault: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fault: %s\n", e.what());
    return 3;
  }
  return rc;
}
