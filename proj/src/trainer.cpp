#include "htgrpo/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <stdexcept>

namespace htgrpo {

void TrainConfig::validate() const {
  policy.validate();
  sampler.validate(policy.seq_len);
  plan.validate();
  credit.validate();
  clip.validate();
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("alpha must lie in (0,1)");
  if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
  if (!(learning_rate >= 0.0))
    throw std::invalid_argument("learning_rate must be >= 0");
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
  if (cycles < 0) throw std::invalid_argument("cycles must be >= 0");
  if (paradigm.kind == RatioContextKind::Kind::kRandomRemask) {
    if (!(remask_p_min > 0.0 && remask_p_min < 1.0) ||
        !(remask_p_max > 0.0 && remask_p_max < 1.0) ||
        remask_p_min > remask_p_max)
      throw std::invalid_argument("remask schedule must satisfy 0 < p_min <= p_max < 1");
  }
  if (checkpoint_every < 0)
    throw std::invalid_argument("checkpoint_every must be >= 0");
}

GroupRollouts collect_group(const PolicyParams& params_old,
                            const TrainConfig& cfg, int cycle) {
  GroupRollouts group;
  group.prompt = cycle % cfg.policy.num_prompts;
  std::vector<double> rewards;
  for (int g = 0; g < cfg.group_size; ++g) {
    Rng rng(derive_seed(cfg.seed, kStreamRollout, static_cast<std::uint64_t>(cycle),
                        static_cast<std::uint64_t>(g)));
    Rollout r = run_rollout(params_old, group.prompt, cfg.sampler, rng, false);
    r.reward = reward(r.final, group.prompt, cfg.task);
    rewards.push_back(r.reward);
    group.parts.push_back(partition(r, cfg.alpha));
    group.rollouts.push_back(std::move(r));
  }
  group.adv = group_advantages(rewards, cfg.delta);
  return group;
}

TrainState init_train(const TrainConfig& cfg) {
  cfg.validate();
  TrainState state;
  state.params = init_policy(cfg.policy, cfg.seed);
  state.params_old = state.params;
  state.params_ref = state.params;
  return state;
}

void sync_old(TrainState& state) {
  state.params_old = state.params;
}

namespace {

struct InnerStep {
  Stage stage;
  int k_s;
  int n_stage;
  double gamma;  // sampling rate, or the remask probability for that baseline
};

std::vector<InnerStep> build_steps(const TrainConfig& cfg) {
  std::vector<InnerStep> steps;
  const bool staged =
      cfg.paradigm.kind == RatioContextKind::Kind::kPromptConditioned ||
      cfg.paradigm.kind == RatioContextKind::Kind::kRevealedStructure;
  if (staged) {
    for (const StageStep& s : stage_schedule(cfg.plan)) {
      InnerStep step;
      step.stage = s.stage;
      step.k_s = s.k_s;
      step.n_stage = cfg.plan.stage_budget(s.stage);
      step.gamma = sampling_rate(cfg.plan, s.stage, s.k_s, step.n_stage);
      steps.push_back(step);
    }
    return steps;
  }
  const int K = cfg.plan.total();
  for (int k = 0; k < K; ++k) {
    InnerStep step;
    step.stage = Stage::kGlobal;
    step.k_s = k;
    step.n_stage = K;
    if (cfg.paradigm.kind == RatioContextKind::Kind::kRandomRemask) {
      step.gamma = cfg.remask_p_min +
                   (cfg.remask_p_max - cfg.remask_p_min) *
                       (static_cast<double>(k) / static_cast<double>(std::max(1, K - 1)));
    } else {
      step.gamma = 1.0;  // trajectory baseline uses all positions
    }
    steps.push_back(step);
  }
  return steps;
}

double mean_entropy_over(const DistributionGrid& grid,
                         const std::vector<int>& positions) {
  if (positions.empty()) return 0.0;
  double h = 0.0;
  for (int i : positions) h += entropy(grid.row(i), grid.v);
  return h / static_cast<double>(positions.size());
}

}  // namespace

std::vector<MetricsRow> train_cycle(TrainState& state, const TrainConfig& cfg) {
  const int G = cfg.group_size;
  const int N = cfg.policy.seq_len;
  GroupRollouts group = collect_group(state.params_old, cfg, state.cycle);

  double reward_mean = 0.0, reward_var = 0.0;
  for (double r : group.adv.raw_rewards) reward_mean += r;
  reward_mean /= static_cast<double>(G);
  for (double r : group.adv.raw_rewards)
    reward_var += (r - reward_mean) * (r - reward_mean);
  const double reward_std = std::sqrt(reward_var / static_cast<double>(G));

  const std::vector<double> uniform_weights(static_cast<std::size_t>(N), 1.0);
  const bool hierarchical =
      cfg.paradigm.kind == RatioContextKind::Kind::kPromptConditioned ||
      cfg.paradigm.kind == RatioContextKind::Kind::kRevealedStructure;
  std::vector<std::vector<double>> weights;
  for (int g = 0; g < G; ++g) {
    weights.push_back(hierarchical ? credit_weights(group.parts[g], cfg.credit)
                                   : uniform_weights);
  }
  std::vector<int> all_positions(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) all_positions[i] = i;

  std::vector<MetricsRow> rows;
  const std::vector<InnerStep> steps = build_steps(cfg);
  std::vector<double> grad_sum;
  int step_index = 0;
  for (const InnerStep& step : steps) {
    grad_sum.assign(state.params.params.size(), 0.0);
    double loss_sum = 0.0, kl_sum = 0.0, ratio_sum = 0.0;
    int clipped = 0, tokens = 0;
    for (int g = 0; g < G; ++g) {
      const Rollout& r = group.rollouts[g];
      std::vector<int> M;
      RatioPlan plan;
      switch (cfg.paradigm.kind) {
        case RatioContextKind::Kind::kPromptConditioned:
        case RatioContextKind::Kind::kRevealedStructure: {
          Rng rng(derive_seed(cfg.seed, kStreamSupport,
                              static_cast<std::uint64_t>(state.cycle),
                              static_cast<std::uint64_t>(step_index) * 4096 + g));
          M = sample_support(group.parts[g], step.stage, step.gamma, rng);
          plan = make_ratio_plan(cfg.paradigm, r, &group.parts[g], step.stage,
                                 nullptr, nullptr);
          break;
        }
        case RatioContextKind::Kind::kRandomRemask: {
          Rng rng(derive_seed(cfg.seed, kStreamRemask,
                              static_cast<std::uint64_t>(state.cycle),
                              static_cast<std::uint64_t>(step_index) * 4096 + g));
          RatioContextKind kind = cfg.paradigm;
          kind.p_remask = step.gamma;
          plan = make_ratio_plan(kind, r, nullptr, Stage::kGlobal, &rng, &M);
          break;
        }
        case RatioContextKind::Kind::kTrajectoryConsistent: {
          M = all_positions;
          plan = make_ratio_plan(cfg.paradigm, r, nullptr, Stage::kGlobal,
                                 nullptr, nullptr);
          break;
        }
      }
      StepResult res;
      try {
        res = inner_step_loss(state.params, state.params_old, state.params_ref,
                              r, plan, M, weights[g], group.adv.advantages[g],
                              cfg.clip, true);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("cycle " + std::to_string(state.cycle) +
                                 " step " + std::to_string(step_index) +
                                 " rollout " + std::to_string(g) + ": " + e.what());
      }
      loss_sum += res.loss;
      kl_sum += res.kl;
      ratio_sum += res.mean_ratio * res.support_size;
      clipped += res.clipped_count;
      tokens += res.support_size;
      for (std::size_t p = 0; p < grad_sum.size(); ++p)
        grad_sum[p] += res.grad[p];
    }
    const double inv_g = 1.0 / static_cast<double>(G);
    for (std::size_t p = 0; p < grad_sum.size(); ++p)
      state.params.params[p] -= cfg.learning_rate * grad_sum[p] * inv_g;
    state.params.version += 1;

    MetricsRow row;
    row.cycle = state.cycle;
    row.stage = stage_name(step.stage);
    row.k_s = step.k_s;
    row.gamma = step.gamma;
    row.mean_reward = reward_mean;
    row.std_reward = reward_std;
    row.loss = loss_sum * inv_g;
    row.kl = kl_sum * inv_g;
    row.clip_fraction =
        tokens > 0 ? static_cast<double>(clipped) / static_cast<double>(tokens) : 0.0;
    row.mean_ratio = tokens > 0 ? ratio_sum / static_cast<double>(tokens) : 0.0;

    DistributionGrid grid =
        forward(state.params, MaskState::fully_masked(N), group.prompt);
    double hs = 0.0, hr = 0.0;
    for (int g = 0; g < G; ++g) {
      hs += mean_entropy_over(grid, group.parts[g].structure);
      hr += mean_entropy_over(grid, group.parts[g].refinement);
    }
    row.mean_entropy_structure = hs * inv_g;
    row.mean_entropy_refinement = hr * inv_g;
    rows.push_back(row);
    ++step_index;
  }

  sync_old(state);
  state.cycle += 1;
  for (const MetricsRow& row : rows) state.metrics.push_back(row);
  return rows;
}

TrainState train(const TrainConfig& cfg) {
  TrainState state = init_train(cfg);
  namespace fs = std::filesystem;
  const bool checkpointing = cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty();
  if (checkpointing) {
    fs::create_directories(cfg.checkpoint_dir);
    save_checkpoint(state.params_ref,
                    (fs::path(cfg.checkpoint_dir) / "ref.bin").string());
  }
  for (int c = 0; c < cfg.cycles; ++c) {
    train_cycle(state, cfg);
    if (checkpointing && (c + 1) % cfg.checkpoint_every == 0) {
      const std::string tag = std::to_string(c);
      save_checkpoint(state.params, (fs::path(cfg.checkpoint_dir) /
                                     ("ckpt_" + tag + ".bin")).string());
      save_checkpoint(state.params_old, (fs::path(cfg.checkpoint_dir) /
                                         ("ckpt_" + tag + ".old.bin")).string());
    }
  }
  return state;
}

TrainState run_paradigm(const TrainConfig& cfg) {
  if (cfg.paradigm.kind == RatioContextKind::Kind::kPromptConditioned)
    throw std::invalid_argument("run_paradigm expects a baseline paradigm");
  return train(cfg);
}

}  // namespace htgrpo
