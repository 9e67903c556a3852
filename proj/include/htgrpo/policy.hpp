#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "htgrpo/rng.hpp"

namespace htgrpo {

// Probabilities are clamped to this floor before entering any log, ratio
// denominator, or KL term.
constexpr double kProbFloor = 1e-12;

struct PolicyConfig {
  int vocab_size = 8;   // V
  int seq_len = 16;     // N
  int num_prompts = 4;  // P
  int embed_dim = 8;    // D
  int hidden_dim = 16;  // H
  double init_scale = 0.1;

  void validate() const;  // throws std::invalid_argument
};

// Flat parameter layout (all row-major):
//   tok_embed    V x D
//   mask_embed   D
//   pos_embed    N x D
//   prompt_embed P x D
//   w1           H x 4D
//   b1           H
//   w2           V x H
//   b2           V
struct ParamLayout {
  std::size_t tok = 0, mask = 0, pos = 0, prompt = 0;
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
  std::size_t total = 0;
  explicit ParamLayout(const PolicyConfig& cfg);
};

std::size_t param_count(const PolicyConfig& cfg);

struct PolicyParams {
  std::vector<double> params;
  PolicyConfig config;
  std::uint64_t version = 0;
};

struct MaskState {
  std::vector<std::optional<int>> visible;

  static MaskState fully_masked(int n) {
    MaskState s;
    s.visible.assign(static_cast<std::size_t>(n), std::nullopt);
    return s;
  }
  int num_visible() const {
    int c = 0;
    for (const auto& v : visible) c += v.has_value();
    return c;
  }
};

struct DistributionGrid {
  int n = 0;
  int v = 0;
  std::vector<double> probs;  // n * v, row-major

  double at(int i, int val) const {
    return probs[static_cast<std::size_t>(i) * v + val];
  }
  const double* row(int i) const {
    return probs.data() + static_cast<std::size_t>(i) * v;
  }
};

PolicyParams init_policy(const PolicyConfig& cfg, std::uint64_t seed);

DistributionGrid forward(const PolicyParams& params, const MaskState& context,
                         int prompt);

// Activations retained for reverse mode.
struct ForwardCache {
  DistributionGrid grid;
  std::vector<double> features;  // n * 4D
  std::vector<double> hidden;    // n * H (post-tanh)
  std::vector<int> visible_positions;
  MaskState context;
  int prompt = 0;
};

ForwardCache forward_cached(const PolicyParams& params, const MaskState& context,
                            int prompt);

double log_prob(const PolicyParams& params, const MaskState& context, int prompt,
                int position, int value);

double entropy(const double* row, int v);
double entropy(const std::vector<double>& row);

// Mean over `positions` of exact categorical KL(p_row || q_row).
double kl_rows(const DistributionGrid& p, const DistributionGrid& q,
               const std::vector<int>& positions);

// Accumulates dLoss/dtheta into `grad` given dLoss/dprobs cotangents
// (same shape as the cached grid, zeros where unused).
void backward(const PolicyParams& params, const ForwardCache& cache,
              const std::vector<double>& prob_cotangents,
              std::vector<double>& grad);

void save_checkpoint(const PolicyParams& params, const std::string& path);
PolicyParams load_checkpoint(const std::string& path);

}  // namespace htgrpo
