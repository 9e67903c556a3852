#pragma once

#include <vector>

#include "htgrpo/hierarchy.hpp"
#include "htgrpo/policy.hpp"
#include "htgrpo/rng.hpp"
#include "htgrpo/rollout.hpp"

namespace htgrpo {

struct AdvantageGroup {
  std::vector<double> raw_rewards;
  std::vector<double> advantages;
  double delta = 1e-4;
};

// A_g = (R_g - mean) / (population std + delta); requires G >= 2.
AdvantageGroup group_advantages(const std::vector<double>& rewards, double delta);

struct ClipConfig {
  double epsilon = 0.2;
  double beta = 0.01;
  void validate() const;
};

struct RatioContextKind {
  enum class Kind {
    kPromptConditioned,     // C_empty, denominator from the rollout cache
    kRandomRemask,          // retained-token context from remask_context
    kTrajectoryConsistent,  // per-token context_before
    kRevealedStructure,     // ablation: structural set revealed in refinement stage
  };
  Kind kind = Kind::kPromptConditioned;
  double p_remask = 0.5;  // kRandomRemask only
};

double contamination_probability(double p_k, int future_count);

// Conditioning contexts resolved ahead of the loss, so the loss is a pure
// function of theta (finite differences stay valid).
struct RatioPlan {
  RatioContextKind::Kind kind = RatioContextKind::Kind::kPromptConditioned;
  MaskState shared_context;           // all kinds except trajectory-consistent
  bool use_cached_denominator = false;
};

// For kRandomRemask the support set is coupled to the draw; callers take it
// from remask_context and pass the retained context here via plan_for_context.
RatioPlan make_ratio_plan(const RatioContextKind& kind, const Rollout& r,
                          const TokenPartition* part, Stage stage, Rng* rng,
                          std::vector<int>* remask_support);

std::vector<double> importance_ratios(const PolicyParams& params,
                                      const PolicyParams& params_old,
                                      const Rollout& r, const RatioPlan& plan,
                                      const std::vector<int>& M);

// Spec-surface convenience: builds the plan internally.
std::vector<double> importance_ratios(const PolicyParams& params,
                                      const PolicyParams& params_old,
                                      const Rollout& r,
                                      const RatioContextKind& kind,
                                      const std::vector<int>& M, Rng& rng);

struct SurrogateResult {
  double value = 0.0;
  std::vector<double> ratio_cotangents;  // d value / d ratio_i
  int clipped_count = 0;                 // tokens bound by the clipped branch
  double clip_fraction = 0.0;
};

// value = (1/|M|) sum_i min(r_i * adv_i, clip(r_i, 1-eps, 1+eps) * adv_i).
SurrogateResult clipped_surrogate(const std::vector<double>& ratios,
                                  const std::vector<double>& weighted_adv,
                                  const ClipConfig& clip);

// Exact categorical KL(pi_theta || pi_ref) at C_empty, averaged over M.
double kl_penalty(const PolicyParams& params, const PolicyParams& params_ref,
                  int prompt, const std::vector<int>& M);

struct StepResult {
  double loss = 0.0;       // -(surrogate - beta * kl)
  double surrogate = 0.0;
  double kl = 0.0;
  double mean_ratio = 0.0;
  int clipped_count = 0;
  int support_size = 0;
  std::vector<double> grad;  // d loss / d theta (empty unless requested)
};

StepResult inner_step_loss(const PolicyParams& params,
                           const PolicyParams& params_old,
                           const PolicyParams& params_ref, const Rollout& r,
                           const RatioPlan& plan, const std::vector<int>& M,
                           const std::vector<double>& weights, double advantage,
                           const ClipConfig& clip, bool want_grad);

}  // namespace htgrpo
