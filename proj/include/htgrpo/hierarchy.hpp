#pragma once

#include <vector>

#include "htgrpo/rng.hpp"
#include "htgrpo/rollout.hpp"

namespace htgrpo {

enum class Stage { kGlobal, kStructure, kRefinement };

const char* stage_name(Stage s);

struct TokenPartition {
  int n_s = 0;                  // N_s after clamping
  std::vector<int> structure;   // {i : rank_i <= N_s}, ascending
  std::vector<int> refinement;  // complement, ascending

  int seq_len() const {
    return static_cast<int>(structure.size() + refinement.size());
  }
};

enum class AnnealMode { kDown, kUp, kConstant };

struct StageGamma {
  double gamma_max = 1.0;
  double gamma_min = 0.5;
};

struct StagePlan {
  int n_global = 2;
  int n_structure = 4;
  int n_refinement = 2;
  StageGamma gamma[3];  // indexed by Stage
  AnnealMode mode = AnnealMode::kDown;

  int total() const { return n_global + n_structure + n_refinement; }
  int stage_budget(Stage s) const;
  void validate() const;
};

struct CreditWeights {
  double lambda_s = 1.5;
  double lambda_r = 0.5;
  void validate() const;  // lambda_s > 1 > lambda_r >= 0, or both exactly 1 (uniform ablation)
};

// N_s = clamp(floor(alpha*N), 1, N-1); sets from the rollout's own ranks.
TokenPartition partition(const Rollout& r, double alpha);

double sampling_rate(const StagePlan& plan, Stage stage, int k_s, int n_s_stage);

// Bernoulli(gamma) over the stage-eligible set; empty result re-forced to one
// uniformly chosen eligible token. Ascending order.
std::vector<int> sample_support(const TokenPartition& part, Stage stage,
                                double gamma, Rng& rng);

// w_i = lambda_s on structure, lambda_r on refinement; length N.
std::vector<double> credit_weights(const TokenPartition& part,
                                   const CreditWeights& cw);

struct StageStep {
  Stage stage;
  int k_s;
};

std::vector<StageStep> stage_schedule(const StagePlan& plan);

}  // namespace htgrpo
