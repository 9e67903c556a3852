#include "htgrpo/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace htgrpo {

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kGlobal: return "global";
    case Stage::kStructure: return "structure";
    case Stage::kRefinement: return "refinement";
  }
  return "?";
}

int StagePlan::stage_budget(Stage s) const {
  switch (s) {
    case Stage::kGlobal: return n_global;
    case Stage::kStructure: return n_structure;
    case Stage::kRefinement: return n_refinement;
  }
  return 0;
}

void StagePlan::validate() const {
  if (n_global < 0 || n_structure < 0 || n_refinement < 0)
    throw std::invalid_argument("stage budgets must be nonnegative");
  if (total() < 1) throw std::invalid_argument("stage plan requires K >= 1");
  for (const StageGamma& g : gamma) {
    if (!(g.gamma_max > 0.0 && g.gamma_max <= 1.0) ||
        !(g.gamma_min > 0.0 && g.gamma_min <= 1.0))
      throw std::invalid_argument("gamma bounds must lie in (0,1]");
    if (g.gamma_min > g.gamma_max)
      throw std::invalid_argument("gamma_min must not exceed gamma_max");
  }
}

void CreditWeights::validate() const {
  if (!(lambda_s >= 1.0)) throw std::invalid_argument("lambda_s must be >= 1");
  if (!(lambda_r >= 0.0 && lambda_r <= 1.0))
    throw std::invalid_argument("lambda_r must lie in [0,1]");
}

TokenPartition partition(const Rollout& r, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::domain_error("alpha must lie in (0,1)");
  const int N = r.seq_len();
  TokenPartition part;
  part.n_s = std::clamp(static_cast<int>(std::floor(alpha * N)), 1, N - 1);
  for (int i = 0; i < N; ++i) {
    if (r.ranks[i] <= part.n_s)
      part.structure.push_back(i);
    else
      part.refinement.push_back(i);
  }
  return part;
}

double sampling_rate(const StagePlan& plan, Stage stage, int k_s, int n_s_stage) {
  if (k_s < 0 || k_s >= n_s_stage)
    throw std::domain_error("sampling_rate: k_s out of range");
  const StageGamma& g = plan.gamma[static_cast<int>(stage)];
  const double p = static_cast<double>(k_s) /
                   static_cast<double>(std::max(1, n_s_stage - 1));
  double phi = 0.0;
  switch (plan.mode) {
    case AnnealMode::kDown: phi = 1.0 - p; break;
    case AnnealMode::kUp: phi = p; break;
    case AnnealMode::kConstant: phi = 0.5; break;
  }
  return g.gamma_min + (g.gamma_max - g.gamma_min) * phi;
}

std::vector<int> sample_support(const TokenPartition& part, Stage stage,
                                double gamma, Rng& rng) {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw std::domain_error("sample_support: gamma must lie in (0,1]");
  std::vector<int> eligible;
  switch (stage) {
    case Stage::kGlobal: {
      eligible.resize(part.seq_len());
      for (int i = 0; i < part.seq_len(); ++i) eligible[i] = i;
      break;
    }
    case Stage::kStructure: eligible = part.structure; break;
    case Stage::kRefinement: eligible = part.refinement; break;
  }
  std::vector<int> support;
  for (int i : eligible) {
    // Always draw so the stream advances identically for every gamma.
    if (rng.uniform() < gamma) support.push_back(i);
  }
  if (support.empty())
    support.push_back(eligible[rng.uniform_int(static_cast<int>(eligible.size()))]);
  return support;
}

std::vector<double> credit_weights(const TokenPartition& part,
                                   const CreditWeights& cw) {
  cw.validate();
  std::vector<double> w(part.seq_len(), 0.0);
  for (int i : part.structure) w[i] = cw.lambda_s;
  for (int i : part.refinement) w[i] = cw.lambda_r;
  return w;
}

std::vector<StageStep> stage_schedule(const StagePlan& plan) {
  plan.validate();
  std::vector<StageStep> steps;
  for (Stage s : {Stage::kGlobal, Stage::kStructure, Stage::kRefinement}) {
    for (int k = 0; k < plan.stage_budget(s); ++k) steps.push_back({s, k});
  }
  return steps;
}

}  // namespace htgrpo
