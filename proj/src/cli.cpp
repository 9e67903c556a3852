#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "htgrpo/harness.hpp"

namespace htgrpo {

namespace {

namespace fs = std::filesystem;

TrainConfig config_from_flags(const std::string& config_path, long long seed,
                              int cycles) {
  TrainConfig cfg = config_path.empty() ? default_config() : load_config(config_path);
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (cycles >= 0) cfg.cycles = cycles;
  return cfg;
}

double tail_mean_reward(const std::vector<MetricsRow>& rows, int first_cycle,
                        int last_cycle) {
  double sum = 0.0;
  int n = 0;
  for (const MetricsRow& r : rows) {
    if (r.cycle >= first_cycle && r.cycle <= last_cycle && r.k_s == 0 &&
        r.stage == "global") {
      sum += r.mean_reward;
      ++n;
    }
  }
  // Degenerate schedules may have no global stage; fall back to any first row.
  if (n == 0) {
    int seen_cycle = -1;
    for (const MetricsRow& r : rows) {
      if (r.cycle >= first_cycle && r.cycle <= last_cycle && r.cycle != seen_cycle) {
        sum += r.mean_reward;
        ++n;
        seen_cycle = r.cycle;
      }
    }
  }
  return n ? sum / n : 0.0;
}

int run_train(const std::string& config_path, long long seed, int cycles,
              const std::string& out_dir) {
  TrainConfig cfg = config_from_flags(config_path, seed, cycles);
  fs::create_directories(out_dir);
  if (cfg.checkpoint_every > 0 && cfg.checkpoint_dir.empty())
    cfg.checkpoint_dir = out_dir;
  TrainState state = train(cfg);
  write_metrics_csv(state.metrics, (fs::path(out_dir) / "metrics.csv").string());
  const int last = cfg.cycles - 1;
  std::printf("trained %d cycles; reward first10=%.4f last10=%.4f\n", cfg.cycles,
              tail_mean_reward(state.metrics, 0, 9),
              tail_mean_reward(state.metrics, last - 9, last));
  std::printf("metrics: %s\n", (fs::path(out_dir) / "metrics.csv").string().c_str());
  return 0;
}

int run_compare(const std::string& config_path, const std::string& preset,
                long long seed, int cycles) {
  TrainConfig base = config_from_flags(config_path, seed, cycles);
  std::vector<PresetVariant> variants;
  if (preset.empty()) {
    PresetVariant ht{"ht_grpo", base};
    ht.config.paradigm.kind = RatioContextKind::Kind::kPromptConditioned;
    PresetVariant rr{"random_remask", base};
    rr.config.paradigm.kind = RatioContextKind::Kind::kRandomRemask;
    PresetVariant tc{"trajectory", base};
    tc.config.paradigm.kind = RatioContextKind::Kind::kTrajectoryConsistent;
    variants = {ht, rr, tc};
  } else {
    variants = ablation_preset(preset, base);
  }
  std::printf("%-24s %12s %12s\n", "variant", "reward[0:10]", "reward[-10:]");
  for (const PresetVariant& v : variants) {
    TrainState state = train(v.config);
    const int last = v.config.cycles - 1;
    std::printf("%-24s %12.4f %12.4f\n", v.name.c_str(),
                tail_mean_reward(state.metrics, 0, 9),
                tail_mean_reward(state.metrics, last - 9, last));
  }
  return 0;
}

int run_verify(const std::string& config_path, const std::string& ckpt,
               int trials, int entropy_trials, int train_cycles,
               const std::string& report_path) {
  TrainConfig cfg = config_from_flags(config_path, -1, train_cycles);
  PolicyParams params;
  if (!ckpt.empty()) {
    params = load_checkpoint(ckpt);
  } else {
    TrainState state = train(cfg);
    params = state.params;
  }
  PropositionReport report = verify_all_props(params, cfg.sampler, cfg.alpha,
                                              entropy_trials, trials, cfg.seed);
  std::fputs(report.to_text().c_str(), stdout);
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    out << report.to_text();
  }
  return report.all_pass() ? 0 : 2;
}

int run_rollout_cmd(const std::string& config_path, long long seed, int prompt,
                    const std::string& ckpt) {
  TrainConfig cfg = config_from_flags(config_path, seed, -1);
  PolicyParams params =
      ckpt.empty() ? init_policy(cfg.policy, cfg.seed) : load_checkpoint(ckpt);
  Rng rng(derive_seed(cfg.seed, kStreamRollout, 0, 0));
  Rollout r = run_rollout(params, prompt, cfg.sampler, rng, true);
  std::fputs(dump_trajectory(r, cfg.seed).c_str(), stdout);
  return 0;
}

int run_export(const std::string& metrics_path, const std::string& csv_out,
               const std::string& svg_out) {
  std::vector<MetricsRow> rows = read_metrics_csv(metrics_path);
  if (!csv_out.empty()) write_metrics_csv(rows, csv_out);
  if (!svg_out.empty()) {
    std::ofstream out(svg_out);
    if (!out) throw std::runtime_error("cannot open svg output: " + svg_out);
    out << render_metrics_svg(rows);
  }
  std::printf("exported %zu rows\n", rows.size());
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"HT-GRPO desk-scale laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", preset, ckpt, report_path;
  std::string metrics_path, csv_out, svg_out = "plot.svg";
  long long seed = -1;
  int cycles = -1, prompt = 0, trials = 100000, entropy_trials = 5000,
      train_cycles = 200;

  CLI::App* train_cmd = app.add_subcommand("train", "run a training job");
  train_cmd->add_option("--config", config_path, "config file (key = value)");
  train_cmd->add_option("--seed", seed, "seed override");
  train_cmd->add_option("--cycles", cycles, "cycle-count override");
  train_cmd->add_option("--out", out_dir, "output directory");

  CLI::App* compare_cmd =
      app.add_subcommand("compare", "run paradigm or preset comparisons");
  compare_cmd->add_option("--config", config_path, "config file");
  compare_cmd->add_option("--preset", preset, "ablation preset a1..a5");
  compare_cmd->add_option("--seed", seed, "seed override");
  compare_cmd->add_option("--cycles", cycles, "cycle-count override");

  CLI::App* verify_cmd =
      app.add_subcommand("verify-props", "empirical proposition checks");
  verify_cmd->add_option("--config", config_path, "config file");
  verify_cmd->add_option("--ckpt", ckpt, "checkpoint to verify (skips training)");
  verify_cmd->add_option("--trials", trials, "contamination Monte-Carlo trials");
  verify_cmd->add_option("--entropy-trials", entropy_trials,
                         "entropy Monte-Carlo trials");
  verify_cmd->add_option("--train-cycles", train_cycles,
                         "cycles used to train the checked policy");
  verify_cmd->add_option("--report", report_path, "write the report here too");

  CLI::App* rollout_cmd = app.add_subcommand("rollout", "dump one trajectory");
  rollout_cmd->add_option("--config", config_path, "config file");
  rollout_cmd->add_option("--seed", seed, "seed override");
  rollout_cmd->add_option("--prompt", prompt, "prompt id");
  rollout_cmd->add_option("--ckpt", ckpt, "policy checkpoint (default: fresh init)");

  CLI::App* export_cmd =
      app.add_subcommand("export", "convert metrics and render the chart");
  export_cmd->add_option("--metrics", metrics_path, "metrics.csv path")->required();
  export_cmd->add_option("--csv", csv_out, "CSV output path");
  export_cmd->add_option("--svg", svg_out, "SVG chart output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train_cmd->parsed()) return run_train(config_path, seed, cycles, out_dir);
    if (compare_cmd->parsed()) return run_compare(config_path, preset, seed, cycles);
    if (verify_cmd->parsed())
      return run_verify(config_path, ckpt, trials, entropy_trials, train_cycles,
                        report_path);
    if (rollout_cmd->parsed())
      return run_rollout_cmd(config_path, seed, prompt, ckpt);
    if (export_cmd->parsed()) return run_export(metrics_path, csv_out, svg_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

}  // namespace htgrpo
