#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "htgrpo/policy.hpp"
#include "htgrpo/rng.hpp"

namespace htgrpo::testutil {

inline PolicyConfig small_config() {
  PolicyConfig cfg;
  cfg.vocab_size = 8;
  cfg.seq_len = 16;
  cfg.num_prompts = 4;
  cfg.embed_dim = 8;
  cfg.hidden_dim = 16;
  cfg.init_scale = 0.1;
  return cfg;
}

// Central finite difference of a scalar loss at one coordinate.
inline double fd_coordinate(PolicyParams params,
                            const std::function<double(const PolicyParams&)>& loss,
                            std::size_t coord, double h = 1e-5) {
  const double orig = params.params[coord];
  params.params[coord] = orig + h;
  const double hi = loss(params);
  params.params[coord] = orig - h;
  const double lo = loss(params);
  params.params[coord] = orig;
  return (hi - lo) / (2.0 * h);
}

// Checks `grad` against central differences on `n_coords` sampled coordinates.
// Returns the worst relative error (with a unit floor on the denominator).
inline double check_grad(const PolicyParams& params,
                         const std::function<double(const PolicyParams&)>& loss,
                         const std::vector<double>& grad, int n_coords,
                         Rng& rng, double h = 1e-5) {
  double worst = 0.0;
  for (int k = 0; k < n_coords; ++k) {
    const std::size_t coord = rng.uniform_int(static_cast<int>(params.params.size()));
    const double fd = fd_coordinate(params, loss, coord, h);
    const double err = std::abs(grad[coord] - fd) /
                       std::max({1.0, std::abs(fd), std::abs(grad[coord])});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace htgrpo::testutil
