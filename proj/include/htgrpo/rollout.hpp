#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "htgrpo/policy.hpp"
#include "htgrpo/rng.hpp"

namespace htgrpo {

struct SamplerConfig {
  int steps = 8;  // T
  double temperature = 1.0;
  enum class OrderRule { kConfidence, kUniformRandom };
  OrderRule order_rule = OrderRule::kConfidence;

  void validate(int seq_len) const;
};

struct Rollout {
  std::vector<int> final;   // x^(0)
  std::vector<int> ranks;   // 1..N, permutation; rank 1 unmasked first
  int prompt = 0;
  int steps = 0;  // T used by the sampler
  double reward = 0.0;
  // pi_theta_old(v_i | C_empty, prompt), clamped to the probability floor.
  std::vector<double> behavior_probs_empty;
  // Present iff recorded: states x^(T) ... x^(1), one per unmask step.
  std::vector<MaskState> trajectory;

  int seq_len() const { return static_cast<int>(final.size()); }
};

Rollout run_rollout(const PolicyParams& params_old, int prompt,
                    const SamplerConfig& cfg, Rng& rng, bool record);

// MaskState revealing exactly {j : ranks[j] < ranks[i]}; position i masked.
MaskState context_before(const Rollout& r, int i);

// F_i = {j : ranks[j] > ranks[i]}, ascending.
std::vector<int> future_set(const Rollout& r, int i);

struct RemaskResult {
  MaskState context;         // retained tokens
  std::vector<int> support;  // remasked positions, ascending, never empty
};

// Independently remasks each position with probability p_remask.
RemaskResult remask_context(const Rollout& r, double p_remask, Rng& rng);

// Text dump: `prompt=<id> seed=<int>` then one line per step
// `t=<int> unmasked=<pos:value,...>` with t counting down from T.
std::string dump_trajectory(const Rollout& r, std::uint64_t seed);

}  // namespace htgrpo
