#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "htgrpo/metrics.hpp"
#include "htgrpo/trainer.hpp"

namespace htgrpo {

// Line-oriented `key = value` config with `#` comments; unknown keys are
// rejected with the offending line number. Unset keys keep the struct
// defaults.
TrainConfig load_config(const std::string& path);
TrainConfig parse_config(const std::string& text);
TrainConfig default_config();

struct PropositionCheck {
  std::string name;
  double statistic = 0.0;
  double bound = 0.0;
  bool pass = false;
};

struct PropositionReport {
  std::vector<PropositionCheck> checks;
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
  std::string to_text() const;  // one line per check: name statistic bound pass|fail
};

// Entropy monotonicity: mean predictive entropy with n revealed tokens vs
// n' > n, position held masked, along sampled unmasking orders.
PropositionCheck verify_prop_c1(const PolicyParams& params,
                                const SamplerConfig& sampler, int n_revealed,
                                int n_revealed_more, int trials,
                                std::uint64_t seed);

// Contamination closed form 1 - p_k^f vs Monte-Carlo remask frequency.
std::vector<PropositionCheck> verify_prop_c2(const std::vector<double>& p_grid,
                                             const std::vector<int>& f_grid,
                                             int trials, std::uint64_t seed);

// Entropy lower bound under full masking: refinement-token entropy at C_empty
// vs with the structural set revealed.
PropositionCheck verify_prop_c3(const PolicyParams& params,
                                const SamplerConfig& sampler, double alpha,
                                int trials, std::uint64_t seed);

PropositionReport verify_all_props(const PolicyParams& params,
                                   const SamplerConfig& sampler, double alpha,
                                   int entropy_trials, int contamination_trials,
                                   std::uint64_t seed);

struct PresetVariant {
  std::string name;
  TrainConfig config;
};

// Ablation presets a1-a5 applied on top of a base config.
std::vector<PresetVariant> ablation_preset(const std::string& name,
                                           const TrainConfig& base);

// Self-contained SVG line chart of per-cycle mean reward and loss.
std::string render_metrics_svg(const std::vector<MetricsRow>& rows);

int cli_main(int argc, char** argv);

}  // namespace htgrpo
