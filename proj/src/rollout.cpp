#include "htgrpo/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace htgrpo {

void SamplerConfig::validate(int seq_len) const {
  if (steps < 1 || steps > seq_len)
    throw std::invalid_argument("sampler steps must satisfy 1 <= T <= N");
  if (!(temperature > 0.0))
    throw std::invalid_argument("temperature must be positive");
}

namespace {

// ceil(remaining / steps_left) per step; sums to N over T steps.
int batch_size(int remaining, int steps_left) {
  return (remaining + steps_left - 1) / steps_left;
}

void sample_row(const double* probs, int v, double temperature, double* out) {
  if (temperature == 1.0) {
    std::copy(probs, probs + v, out);
    return;
  }
  // p^(1/tau) renormalized == softmax(logits / tau)
  double z = 0.0;
  for (int i = 0; i < v; ++i) {
    out[i] = std::pow(std::max(probs[i], kProbFloor), 1.0 / temperature);
    z += out[i];
  }
  for (int i = 0; i < v; ++i) out[i] /= z;
}

}  // namespace

Rollout run_rollout(const PolicyParams& params_old, int prompt,
                    const SamplerConfig& cfg, Rng& rng, bool record) {
  const PolicyConfig& pc = params_old.config;
  cfg.validate(pc.seq_len);
  const int N = pc.seq_len, V = pc.vocab_size, T = cfg.steps;

  Rollout r;
  r.prompt = prompt;
  r.steps = T;
  r.final.assign(N, 0);
  r.ranks.assign(N, 0);

  MaskState state = MaskState::fully_masked(N);
  DistributionGrid empty_grid;  // C_empty grid under theta_old
  std::vector<double> row(V);
  int next_rank = 1;
  int remaining = N;

  for (int step = 0; step < T; ++step) {
    if (record) r.trajectory.push_back(state);
    DistributionGrid grid = forward(params_old, state, prompt);
    if (step == 0) empty_grid = grid;

    std::vector<int> masked;
    for (int i = 0; i < N; ++i)
      if (!state.visible[i]) masked.push_back(i);

    const int b = batch_size(remaining, T - step);
    std::vector<int> chosen;
    if (cfg.order_rule == SamplerConfig::OrderRule::kConfidence) {
      // Highest max-probability first; ties by ascending position index.
      std::stable_sort(masked.begin(), masked.end(), [&](int a, int c) {
        double pa = *std::max_element(grid.row(a), grid.row(a) + V);
        double pc2 = *std::max_element(grid.row(c), grid.row(c) + V);
        return pa > pc2;
      });
      chosen.assign(masked.begin(), masked.begin() + b);
    } else {
      std::vector<int> pool = masked;
      for (int k = 0; k < b; ++k) {
        int idx = rng.uniform_int(static_cast<int>(pool.size()));
        chosen.push_back(pool[idx]);
        pool.erase(pool.begin() + idx);
      }
    }
    // Within-step ties broken by ascending position index.
    std::sort(chosen.begin(), chosen.end());

    for (int i : chosen) {
      sample_row(grid.row(i), V, cfg.temperature, row.data());
      int value = rng.categorical(row.data(), V);
      r.final[i] = value;
      r.ranks[i] = next_rank++;
      state.visible[i] = value;
    }
    remaining -= b;
  }

  r.behavior_probs_empty.resize(N);
  for (int i = 0; i < N; ++i)
    r.behavior_probs_empty[i] = std::max(empty_grid.at(i, r.final[i]), kProbFloor);
  return r;
}

MaskState context_before(const Rollout& r, int i) {
  const int N = r.seq_len();
  if (i < 0 || i >= N) throw std::domain_error("context_before: index out of range");
  MaskState s = MaskState::fully_masked(N);
  for (int j = 0; j < N; ++j)
    if (r.ranks[j] < r.ranks[i]) s.visible[j] = r.final[j];
  return s;
}

std::vector<int> future_set(const Rollout& r, int i) {
  const int N = r.seq_len();
  if (i < 0 || i >= N) throw std::domain_error("future_set: index out of range");
  std::vector<int> f;
  for (int j = 0; j < N; ++j)
    if (r.ranks[j] > r.ranks[i]) f.push_back(j);
  return f;
}

RemaskResult remask_context(const Rollout& r, double p_remask, Rng& rng) {
  if (!(p_remask > 0.0 && p_remask < 1.0))
    throw std::domain_error("remask probability must lie in (0,1)");
  const int N = r.seq_len();
  RemaskResult out;
  out.context = MaskState::fully_masked(N);
  for (int i = 0; i < N; ++i) {
    if (rng.uniform() < p_remask) {
      out.support.push_back(i);
    } else {
      out.context.visible[i] = r.final[i];
    }
  }
  if (out.support.empty()) {
    int forced = rng.uniform_int(N);
    out.support.push_back(forced);
    out.context.visible[forced].reset();
  }
  return out;
}

std::string dump_trajectory(const Rollout& r, std::uint64_t seed) {
  const int N = r.seq_len();
  // Positions in unmask order; per-step groups follow the sampler batch rule.
  std::vector<int> by_rank(N);
  for (int i = 0; i < N; ++i) by_rank[r.ranks[i] - 1] = i;

  std::ostringstream os;
  os << "prompt=" << r.prompt << " seed=" << seed << "\n";
  int cursor = 0, remaining = N;
  for (int step = 0; step < r.steps; ++step) {
    const int b = (remaining + r.steps - step - 1) / (r.steps - step);
    os << "t=" << (r.steps - step) << " unmasked=";
    for (int k = 0; k < b; ++k) {
      int pos = by_rank[cursor++];
      os << (k ? "," : "") << pos << ":" << r.final[pos];
    }
    os << "\n";
    remaining -= b;
  }
  return os.str();
}

}  // namespace htgrpo
