#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "htgrpo/env.hpp"
#include "htgrpo/hierarchy.hpp"
#include "htgrpo/metrics.hpp"
#include "htgrpo/objective.hpp"
#include "htgrpo/policy.hpp"
#include "htgrpo/rollout.hpp"

namespace htgrpo {

struct TrainConfig {
  PolicyConfig policy;
  SamplerConfig sampler;
  StagePlan plan;
  CreditWeights credit;
  ClipConfig clip;
  double alpha = 0.3;
  int group_size = 9;  // G
  RatioContextKind paradigm;
  // Baseline remask schedule: p_k linear from p_min to p_max over the K steps.
  double remask_p_min = 0.3;
  double remask_p_max = 0.9;
  double learning_rate = 0.03;
  double delta = 1e-4;
  int cycles = 200;
  std::uint64_t seed = 7;
  TaskSpec task;
  int checkpoint_every = 0;  // 0 disables checkpointing
  std::string checkpoint_dir;

  void validate() const;
};

struct TrainState {
  PolicyParams params;      // theta
  PolicyParams params_old;  // theta_old, refreshed each cycle
  PolicyParams params_ref;  // pi_ref, frozen at initialization
  int cycle = 0;
  std::vector<MetricsRow> metrics;
};

// RNG stream tags used by the trainer; exposed so replays can reproduce the
// exact streams.
constexpr std::uint64_t kStreamRollout = 0x01;
constexpr std::uint64_t kStreamSupport = 0x02;
constexpr std::uint64_t kStreamRemask = 0x03;

struct GroupRollouts {
  std::vector<Rollout> rollouts;
  std::vector<TokenPartition> parts;
  AdvantageGroup adv;
  int prompt = 0;
};

// Phase 1-3 of a cycle: rollouts under theta_old, rewards, advantages,
// partitions. Pure given (params_old, cfg, cycle).
GroupRollouts collect_group(const PolicyParams& params_old,
                            const TrainConfig& cfg, int cycle);

TrainState init_train(const TrainConfig& cfg);

// One full optimization cycle; appends and returns the cycle's metric rows,
// ends with theta_old <- theta.
std::vector<MetricsRow> train_cycle(TrainState& state, const TrainConfig& cfg);

TrainState train(const TrainConfig& cfg);

// Baseline entry point: requires a non-HT-GRPO paradigm, otherwise identical
// to train.
TrainState run_paradigm(const TrainConfig& cfg);

void sync_old(TrainState& state);

}  // namespace htgrpo
