#include "htgrpo/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace htgrpo {

void ClipConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw std::invalid_argument("epsilon must lie in (0,1)");
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be >= 0");
}

AdvantageGroup group_advantages(const std::vector<double>& rewards, double delta) {
  if (rewards.size() < 2)
    throw std::domain_error("group_advantages requires G >= 2");
  if (!(delta > 0.0)) throw std::domain_error("delta must be positive");
  AdvantageGroup g;
  g.raw_rewards = rewards;
  g.delta = delta;
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std_pop = std::sqrt(var / n);
  g.advantages.resize(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i)
    g.advantages[i] = (rewards[i] - mean) / (std_pop + delta);
  return g;
}

double contamination_probability(double p_k, int future_count) {
  if (!(p_k > 0.0 && p_k < 1.0))
    throw std::domain_error("p_k must lie in (0,1)");
  if (future_count < 0) throw std::domain_error("future_count must be >= 0");
  return 1.0 - std::pow(p_k, static_cast<double>(future_count));
}

RatioPlan make_ratio_plan(const RatioContextKind& kind, const Rollout& r,
                          const TokenPartition* part, Stage stage, Rng* rng,
                          std::vector<int>* remask_support) {
  RatioPlan plan;
  plan.kind = kind.kind;
  const int N = r.seq_len();
  switch (kind.kind) {
    case RatioContextKind::Kind::kPromptConditioned:
      plan.shared_context = MaskState::fully_masked(N);
      plan.use_cached_denominator = true;
      break;
    case RatioContextKind::Kind::kRandomRemask: {
      if (!rng) throw std::invalid_argument("random remask plan needs an rng");
      RemaskResult rr = remask_context(r, kind.p_remask, *rng);
      plan.shared_context = rr.context;
      if (remask_support) *remask_support = rr.support;
      break;
    }
    case RatioContextKind::Kind::kTrajectoryConsistent:
      break;  // per-token contexts built from ranks at evaluation time
    case RatioContextKind::Kind::kRevealedStructure:
      if (stage == Stage::kRefinement) {
        if (!part)
          throw std::invalid_argument("revealed-structure plan needs a partition");
        plan.shared_context = MaskState::fully_masked(N);
        for (int i : part->structure)
          plan.shared_context.visible[i] = r.final[i];
      } else {
        plan.shared_context = MaskState::fully_masked(N);
        plan.use_cached_denominator = true;
      }
      break;
  }
  return plan;
}

namespace {

void check_support(const Rollout& r, const std::vector<int>& M) {
  if (M.empty()) throw std::domain_error("support set must be nonempty");
  for (int i : M) {
    if (i < 0 || i >= r.seq_len())
      throw std::domain_error("support index out of range");
  }
}

double cached_denominator(const Rollout& r, int i) {
  if (r.behavior_probs_empty.empty())
    throw std::runtime_error("rollout is missing cached behavior probabilities");
  return r.behavior_probs_empty[i];
}

}  // namespace

std::vector<double> importance_ratios(const PolicyParams& params,
                                      const PolicyParams& params_old,
                                      const Rollout& r, const RatioPlan& plan,
                                      const std::vector<int>& M) {
  check_support(r, M);
  std::vector<double> ratios(M.size());
  if (plan.kind == RatioContextKind::Kind::kTrajectoryConsistent) {
    for (std::size_t j = 0; j < M.size(); ++j) {
      const int i = M[j];
      MaskState ctx = context_before(r, i);
      double num = std::max(forward(params, ctx, r.prompt).at(i, r.final[i]),
                            kProbFloor);
      double den = std::max(forward(params_old, ctx, r.prompt).at(i, r.final[i]),
                            kProbFloor);
      ratios[j] = num / den;
    }
    return ratios;
  }
  DistributionGrid num_grid = forward(params, plan.shared_context, r.prompt);
  DistributionGrid den_grid;
  if (!plan.use_cached_denominator)
    den_grid = forward(params_old, plan.shared_context, r.prompt);
  for (std::size_t j = 0; j < M.size(); ++j) {
    const int i = M[j];
    double num = std::max(num_grid.at(i, r.final[i]), kProbFloor);
    double den = plan.use_cached_denominator
                     ? cached_denominator(r, i)
                     : std::max(den_grid.at(i, r.final[i]), kProbFloor);
    ratios[j] = num / den;
  }
  return ratios;
}

std::vector<double> importance_ratios(const PolicyParams& params,
                                      const PolicyParams& params_old,
                                      const Rollout& r,
                                      const RatioContextKind& kind,
                                      const std::vector<int>& M, Rng& rng) {
  RatioPlan plan = make_ratio_plan(kind, r, nullptr, Stage::kGlobal, &rng, nullptr);
  return importance_ratios(params, params_old, r, plan, M);
}

SurrogateResult clipped_surrogate(const std::vector<double>& ratios,
                                  const std::vector<double>& weighted_adv,
                                  const ClipConfig& clip) {
  clip.validate();
  if (ratios.size() != weighted_adv.size() || ratios.empty())
    throw std::domain_error("clipped_surrogate: length mismatch or empty input");
  const double lo = 1.0 - clip.epsilon, hi = 1.0 + clip.epsilon;
  const double inv_n = 1.0 / static_cast<double>(ratios.size());
  SurrogateResult out;
  out.ratio_cotangents.assign(ratios.size(), 0.0);
  for (std::size_t j = 0; j < ratios.size(); ++j) {
    const double r = ratios[j], a = weighted_adv[j];
    const double rc = std::clamp(r, lo, hi);
    const double unclipped = r * a, clipped = rc * a;
    // At the kink the unclipped branch is taken.
    if (unclipped <= clipped) {
      out.value += unclipped * inv_n;
      out.ratio_cotangents[j] = a * inv_n;
    } else {
      out.value += clipped * inv_n;
      // Clipped branch binds; gradient passes only while clip is inactive.
      out.ratio_cotangents[j] = (rc == r) ? a * inv_n : 0.0;
      if (rc != r) ++out.clipped_count;
    }
  }
  out.clip_fraction =
      static_cast<double>(out.clipped_count) / static_cast<double>(ratios.size());
  return out;
}

double kl_penalty(const PolicyParams& params, const PolicyParams& params_ref,
                  int prompt, const std::vector<int>& M) {
  if (M.empty()) throw std::domain_error("kl_penalty: empty support");
  MaskState empty = MaskState::fully_masked(params.config.seq_len);
  DistributionGrid p = forward(params, empty, prompt);
  DistributionGrid q = forward(params_ref, empty, prompt);
  return kl_rows(p, q, M);
}

StepResult inner_step_loss(const PolicyParams& params,
                           const PolicyParams& params_old,
                           const PolicyParams& params_ref, const Rollout& r,
                           const RatioPlan& plan, const std::vector<int>& M,
                           const std::vector<double>& weights, double advantage,
                           const ClipConfig& clip, bool want_grad) {
  check_support(r, M);
  clip.validate();
  const int N = r.seq_len();
  const int V = params.config.vocab_size;
  if (static_cast<int>(weights.size()) != N)
    throw std::invalid_argument("weights must have length N");
  const std::size_t n = M.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const bool trajectory =
      plan.kind == RatioContextKind::Kind::kTrajectoryConsistent;

  // Numerator forward passes under theta.
  std::vector<ForwardCache> caches;
  if (trajectory) {
    caches.reserve(n);
    for (int i : M) caches.push_back(forward_cached(params, context_before(r, i), r.prompt));
  } else {
    caches.push_back(forward_cached(params, plan.shared_context, r.prompt));
  }

  // Denominators under frozen theta_old.
  std::vector<double> denom(n);
  if (trajectory) {
    for (std::size_t j = 0; j < n; ++j)
      denom[j] = std::max(
          forward(params_old, caches[j].context, r.prompt).at(M[j], r.final[M[j]]),
          kProbFloor);
  } else if (plan.use_cached_denominator) {
    for (std::size_t j = 0; j < n; ++j) denom[j] = cached_denominator(r, M[j]);
  } else {
    DistributionGrid den_grid = forward(params_old, plan.shared_context, r.prompt);
    for (std::size_t j = 0; j < n; ++j)
      denom[j] = std::max(den_grid.at(M[j], r.final[M[j]]), kProbFloor);
  }

  std::vector<double> ratios(n), wadv(n);
  std::vector<bool> floored(n, false);
  for (std::size_t j = 0; j < n; ++j) {
    const int i = M[j];
    const double raw = trajectory ? caches[j].grid.at(i, r.final[i])
                                  : caches[0].grid.at(i, r.final[i]);
    floored[j] = raw < kProbFloor;
    ratios[j] = std::max(raw, kProbFloor) / denom[j];
    wadv[j] = advantage * weights[i];
  }

  SurrogateResult surr = clipped_surrogate(ratios, wadv, clip);

  // KL penalty at C_empty. Reuses the numerator cache when it already sits at
  // the fully masked context.
  const bool reuse_empty = !trajectory && plan.use_cached_denominator;
  ForwardCache empty_cache;
  const ForwardCache* fc0 = nullptr;
  DistributionGrid ref_grid;
  double kl = 0.0;
  if (clip.beta > 0.0) {
    if (reuse_empty) {
      fc0 = &caches[0];
    } else {
      empty_cache = forward_cached(params, MaskState::fully_masked(N), r.prompt);
      fc0 = &empty_cache;
    }
    ref_grid = forward(params_ref, MaskState::fully_masked(N), r.prompt);
    for (int i : M) {
      double row_kl = 0.0;
      for (int v = 0; v < V; ++v) {
        double pv = std::max(fc0->grid.at(i, v), kProbFloor);
        double qv = std::max(ref_grid.at(i, v), kProbFloor);
        row_kl += pv * std::log(pv / qv);
      }
      kl += std::max(row_kl, 0.0);
    }
    kl *= inv_n;
  }

  StepResult out;
  out.surrogate = surr.value;
  out.kl = kl;
  out.loss = -surr.value + clip.beta * kl;
  if (!std::isfinite(out.loss))
    throw std::runtime_error("inner_step_loss produced a non-finite loss");
  out.clipped_count = surr.clipped_count;
  out.support_size = static_cast<int>(n);
  double mr = 0.0;
  for (double x : ratios) mr += x;
  out.mean_ratio = mr * inv_n;

  if (!want_grad) return out;
  out.grad.assign(params.params.size(), 0.0);

  const std::size_t grid_size = static_cast<std::size_t>(N) * V;
  if (trajectory) {
    std::vector<double> cot(grid_size, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (surr.ratio_cotangents[j] == 0.0 || floored[j]) continue;
      std::fill(cot.begin(), cot.end(), 0.0);
      const int i = M[j];
      cot[static_cast<std::size_t>(i) * V + r.final[i]] =
          -surr.ratio_cotangents[j] / denom[j];
      backward(params, caches[j], cot, out.grad);
    }
  } else {
    std::vector<double> cot(grid_size, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (surr.ratio_cotangents[j] == 0.0 || floored[j]) continue;
      const int i = M[j];
      cot[static_cast<std::size_t>(i) * V + r.final[i]] +=
          -surr.ratio_cotangents[j] / denom[j];
    }
    if (clip.beta > 0.0 && reuse_empty) {
      // Same context: fold the KL cotangents into the one backward pass.
      for (int i : M) {
        for (int v = 0; v < V; ++v) {
          double pv = fc0->grid.at(i, v);
          if (pv < kProbFloor) continue;
          double qv = std::max(ref_grid.at(i, v), kProbFloor);
          cot[static_cast<std::size_t>(i) * V + v] +=
              clip.beta * inv_n * (std::log(pv / qv) + 1.0);
        }
      }
    }
    backward(params, caches[0], cot, out.grad);
  }
  if (clip.beta > 0.0 && !reuse_empty) {
    std::vector<double> cot(grid_size, 0.0);
    for (int i : M) {
      for (int v = 0; v < V; ++v) {
        double pv = fc0->grid.at(i, v);
        if (pv < kProbFloor) continue;
        double qv = std::max(ref_grid.at(i, v), kProbFloor);
        cot[static_cast<std::size_t>(i) * V + v] =
            clip.beta * inv_n * (std::log(pv / qv) + 1.0);
      }
    }
    backward(params, *fc0, cot, out.grad);
  }
  return out;
}

}  // namespace htgrpo
