#include "htgrpo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace htgrpo {

TrainConfig default_config() {
  TrainConfig cfg;  // the struct defaults are the documented defaults
  cfg.task = make_task(TaskSpec::Kind::kPattern, cfg.policy, 1);
  return cfg;
}

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int to_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (...) {
    throw ConfigError("config: bad integer for key '" + key + "': " + v);
  }
}

double to_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (...) {
    throw ConfigError("config: bad number for key '" + key + "': " + v);
  }
}

std::uint64_t to_u64(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (...) {
    throw ConfigError("config: bad seed for key '" + key + "': " + v);
  }
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  std::string task_kind = "pattern";
  std::uint64_t task_seed = 1;

  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string stripped = line;
    std::size_t hash = stripped.find('#');
    if (hash != std::string::npos) stripped = stripped.substr(0, hash);
    stripped = trim(stripped);
    if (stripped.empty()) continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected `key = value`: " + line);
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key or value: " + line);

    if (key == "vocab_size") cfg.policy.vocab_size = to_int(value, key);
    else if (key == "seq_len") cfg.policy.seq_len = to_int(value, key);
    else if (key == "num_prompts") cfg.policy.num_prompts = to_int(value, key);
    else if (key == "embed_dim") cfg.policy.embed_dim = to_int(value, key);
    else if (key == "hidden_dim") cfg.policy.hidden_dim = to_int(value, key);
    else if (key == "init_scale") cfg.policy.init_scale = to_double(value, key);
    else if (key == "sampler_steps") cfg.sampler.steps = to_int(value, key);
    else if (key == "temperature") cfg.sampler.temperature = to_double(value, key);
    else if (key == "order_rule") {
      if (value == "confidence")
        cfg.sampler.order_rule = SamplerConfig::OrderRule::kConfidence;
      else if (value == "uniform_random")
        cfg.sampler.order_rule = SamplerConfig::OrderRule::kUniformRandom;
      else
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": order_rule must be confidence|uniform_random");
    } else if (key == "alpha") cfg.alpha = to_double(value, key);
    else if (key == "budget_global") cfg.plan.n_global = to_int(value, key);
    else if (key == "budget_structure") cfg.plan.n_structure = to_int(value, key);
    else if (key == "budget_refinement") cfg.plan.n_refinement = to_int(value, key);
    else if (key == "gamma_max") {
      double g = to_double(value, key);
      for (auto& sg : cfg.plan.gamma) sg.gamma_max = g;
    } else if (key == "gamma_min") {
      double g = to_double(value, key);
      for (auto& sg : cfg.plan.gamma) sg.gamma_min = g;
    } else if (key == "anneal_mode") {
      if (value == "down") cfg.plan.mode = AnnealMode::kDown;
      else if (value == "up") cfg.plan.mode = AnnealMode::kUp;
      else if (value == "constant") cfg.plan.mode = AnnealMode::kConstant;
      else
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": anneal_mode must be down|up|constant");
    } else if (key == "lambda_s") cfg.credit.lambda_s = to_double(value, key);
    else if (key == "lambda_r") cfg.credit.lambda_r = to_double(value, key);
    else if (key == "epsilon") cfg.clip.epsilon = to_double(value, key);
    else if (key == "beta") cfg.clip.beta = to_double(value, key);
    else if (key == "delta") cfg.delta = to_double(value, key);
    else if (key == "group_size") cfg.group_size = to_int(value, key);
    else if (key == "learning_rate") cfg.learning_rate = to_double(value, key);
    else if (key == "cycles") cfg.cycles = to_int(value, key);
    else if (key == "seed") cfg.seed = to_u64(value, key);
    else if (key == "paradigm") {
      if (value == "ht_grpo")
        cfg.paradigm.kind = RatioContextKind::Kind::kPromptConditioned;
      else if (value == "random_remask")
        cfg.paradigm.kind = RatioContextKind::Kind::kRandomRemask;
      else if (value == "trajectory")
        cfg.paradigm.kind = RatioContextKind::Kind::kTrajectoryConsistent;
      else if (value == "revealed_structure")
        cfg.paradigm.kind = RatioContextKind::Kind::kRevealedStructure;
      else
        throw ConfigError(
            "config line " + std::to_string(lineno) +
            ": paradigm must be ht_grpo|random_remask|trajectory|revealed_structure");
    } else if (key == "remask_p_min") cfg.remask_p_min = to_double(value, key);
    else if (key == "remask_p_max") cfg.remask_p_max = to_double(value, key);
    else if (key == "task_kind") {
      if (value != "pattern" && value != "count")
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": task_kind must be pattern|count");
      task_kind = value;
    } else if (key == "task_seed") task_seed = to_u64(value, key);
    else if (key == "checkpoint_every") cfg.checkpoint_every = to_int(value, key);
    else if (key == "checkpoint_dir") cfg.checkpoint_dir = value;
    else
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": unknown key '" + key + "'");
  }

  cfg.task = make_task(task_kind == "count" ? TaskSpec::Kind::kCount
                                            : TaskSpec::Kind::kPattern,
                       cfg.policy, task_seed);
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string PropositionReport::to_text() const {
  std::ostringstream os;
  char buf[256];
  for (const auto& c : checks) {
    std::snprintf(buf, sizeof(buf), "%s %.6f %.6f %s\n", c.name.c_str(),
                  c.statistic, c.bound, c.pass ? "pass" : "fail");
    os << buf;
  }
  return os.str();
}

namespace {

struct PairedStats {
  double mean = 0.0;
  double se = 0.0;
};

PairedStats paired_stats(const std::vector<double>& diffs) {
  PairedStats s;
  const double n = static_cast<double>(diffs.size());
  for (double d : diffs) s.mean += d;
  s.mean /= n;
  double var = 0.0;
  for (double d : diffs) var += (d - s.mean) * (d - s.mean);
  if (diffs.size() > 1) var /= (n - 1.0);
  s.se = std::sqrt(var / n);
  return s;
}

MaskState reveal_by_rank(const Rollout& r, int max_rank) {
  MaskState s = MaskState::fully_masked(r.seq_len());
  for (int j = 0; j < r.seq_len(); ++j)
    if (r.ranks[j] <= max_rank) s.visible[j] = r.final[j];
  return s;
}

}  // namespace

PropositionCheck verify_prop_c1(const PolicyParams& params,
                                const SamplerConfig& sampler, int n_revealed,
                                int n_revealed_more, int trials,
                                std::uint64_t seed) {
  const int N = params.config.seq_len;
  const int P = params.config.num_prompts;
  if (n_revealed < 0 || n_revealed_more < n_revealed || n_revealed_more > N - 1)
    throw std::domain_error("verify_prop_c1: need 0 <= n <= n' <= N-1");
  std::vector<double> diffs;
  Rng rng(derive_seed(seed, 0xC1));
  for (int t = 0; t < trials; ++t) {
    const int prompt = t % P;
    Rollout r = run_rollout(params, prompt, sampler, rng, false);
    // Position still masked under both contexts.
    std::vector<int> candidates;
    for (int i = 0; i < N; ++i)
      if (r.ranks[i] > n_revealed_more) candidates.push_back(i);
    const int i = candidates[rng.uniform_int(static_cast<int>(candidates.size()))];
    MaskState ctx_a = reveal_by_rank(r, n_revealed);
    MaskState ctx_b = reveal_by_rank(r, n_revealed_more);
    double ha = entropy(forward(params, ctx_a, prompt).row(i), params.config.vocab_size);
    double hb = entropy(forward(params, ctx_b, prompt).row(i), params.config.vocab_size);
    diffs.push_back(ha - hb);
  }
  PairedStats s = paired_stats(diffs);
  PropositionCheck c;
  c.name = "C1_entropy_monotonicity_n" + std::to_string(n_revealed) + "_vs_n" +
           std::to_string(n_revealed_more);
  c.statistic = s.mean;
  c.bound = -3.0 * s.se;
  c.pass = c.statistic >= c.bound;
  return c;
}

std::vector<PropositionCheck> verify_prop_c2(const std::vector<double>& p_grid,
                                             const std::vector<int>& f_grid,
                                             int trials, std::uint64_t seed) {
  // Synthetic rollout with ascending ranks so |F_i| is controlled exactly.
  const int N = 16;
  Rollout r;
  r.final.assign(N, 0);
  r.ranks.resize(N);
  for (int i = 0; i < N; ++i) r.ranks[i] = i + 1;
  r.steps = N;
  r.behavior_probs_empty.assign(N, 1.0);

  std::vector<PropositionCheck> checks;
  for (double p : p_grid) {
    for (int f : f_grid) {
      if (f > N - 1) throw std::domain_error("verify_prop_c2: f too large");
      const int i = N - 1 - f;  // rank N-f, exactly f future tokens
      std::vector<int> fut = future_set(r, i);
      Rng rng(derive_seed(seed, 0xC2, static_cast<std::uint64_t>(p * 1e6),
                          static_cast<std::uint64_t>(f)));
      int contaminated = 0;
      for (int t = 0; t < trials; ++t) {
        RemaskResult rr = remask_context(r, p, rng);
        bool hit = false;
        for (int j : fut) hit = hit || rr.context.visible[j].has_value();
        contaminated += hit;
      }
      const double freq = static_cast<double>(contaminated) / trials;
      const double closed = contamination_probability(p, f);
      char name[64];
      std::snprintf(name, sizeof(name), "C2_contamination_p%.1f_f%d", p, f);
      PropositionCheck c;
      c.name = name;
      c.statistic = std::abs(freq - closed);
      c.bound = 0.01;
      c.pass = c.statistic <= c.bound;
      checks.push_back(c);
    }
  }
  return checks;
}

PropositionCheck verify_prop_c3(const PolicyParams& params,
                                const SamplerConfig& sampler, double alpha,
                                int trials, std::uint64_t seed) {
  const int P = params.config.num_prompts;
  const int V = params.config.vocab_size;
  std::vector<double> diffs;
  Rng rng(derive_seed(seed, 0xC3));
  MaskState empty = MaskState::fully_masked(params.config.seq_len);
  for (int t = 0; t < trials; ++t) {
    const int prompt = t % P;
    Rollout r = run_rollout(params, prompt, sampler, rng, false);
    TokenPartition part = partition(r, alpha);
    const int i = part.refinement[rng.uniform_int(
        static_cast<int>(part.refinement.size()))];
    MaskState structural = MaskState::fully_masked(params.config.seq_len);
    for (int j : part.structure) structural.visible[j] = r.final[j];
    double h0 = entropy(forward(params, empty, prompt).row(i), V);
    double h1 = entropy(forward(params, structural, prompt).row(i), V);
    diffs.push_back(h0 - h1);
  }
  PairedStats s = paired_stats(diffs);
  PropositionCheck c;
  c.name = "C3_entropy_lower_bound";
  c.statistic = s.mean;
  c.bound = -3.0 * s.se;
  c.pass = c.statistic >= c.bound;
  return c;
}

PropositionReport verify_all_props(const PolicyParams& params,
                                   const SamplerConfig& sampler, double alpha,
                                   int entropy_trials, int contamination_trials,
                                   std::uint64_t seed) {
  PropositionReport report;
  const int N = params.config.seq_len;
  report.checks.push_back(
      verify_prop_c1(params, sampler, 0, N / 2, entropy_trials, seed));
  for (auto& c : verify_prop_c2({0.3, 0.5, 0.9}, {1, 3, 10},
                                contamination_trials, seed))
    report.checks.push_back(c);
  report.checks.push_back(
      verify_prop_c3(params, sampler, alpha, entropy_trials, seed));
  return report;
}

std::vector<PresetVariant> ablation_preset(const std::string& name,
                                           const TrainConfig& base) {
  auto with_budgets = [&](const std::string& label, int g, int s, int r) {
    PresetVariant v{label, base};
    v.config.plan.n_global = g;
    v.config.plan.n_structure = s;
    v.config.plan.n_refinement = r;
    return v;
  };
  std::vector<PresetVariant> out;
  if (name == "a1") {
    out.push_back(with_budgets("single_stage_8:0:0", 8, 0, 0));
    out.push_back(with_budgets("two_stage_4:4:0", 4, 4, 0));
    out.push_back(with_budgets("two_stage_0:4:4", 0, 4, 4));
    out.push_back(with_budgets("three_stage_2:4:2", 2, 4, 2));
  } else if (name == "a2") {
    out.push_back(with_budgets("budget_2:4:2", 2, 4, 2));
    out.push_back(with_budgets("budget_2:2:4", 2, 2, 4));
    out.push_back(with_budgets("budget_4:2:2", 4, 2, 2));
  } else if (name == "a3") {
    auto with_gamma = [&](const std::string& label, double gmax, double gmin,
                          AnnealMode mode) {
      PresetVariant v{label, base};
      for (auto& sg : v.config.plan.gamma) {
        sg.gamma_max = gmax;
        sg.gamma_min = gmin;
      }
      v.config.plan.mode = mode;
      return v;
    };
    out.push_back(with_gamma("full_coverage", 1.0, 1.0, AnnealMode::kConstant));
    out.push_back(with_gamma("fixed_sparse", 0.2, 0.2, AnnealMode::kConstant));
    out.push_back(with_gamma("ascending", 1.0, 0.5, AnnealMode::kUp));
    out.push_back(with_gamma("linear_decay", 1.0, 0.5, AnnealMode::kDown));
  } else if (name == "a4") {
    for (double alpha : {0.1, 0.3, 0.5}) {
      char label[32];
      std::snprintf(label, sizeof(label), "alpha_%.1f", alpha);
      PresetVariant v{label, base};
      v.config.alpha = alpha;
      out.push_back(v);
    }
  } else if (name == "a5") {
    out.push_back({"default", base});
    PresetVariant uniform{"uniform_weights", base};
    uniform.config.credit.lambda_s = 1.0;
    uniform.config.credit.lambda_r = 1.0;
    out.push_back(uniform);
    PresetVariant revealed{"revealed_structure", base};
    revealed.config.paradigm.kind = RatioContextKind::Kind::kRevealedStructure;
    out.push_back(revealed);
  } else {
    throw std::runtime_error("unknown preset: " + name +
                             " (expected a1|a2|a3|a4|a5)");
  }
  return out;
}

std::string render_metrics_svg(const std::vector<MetricsRow>& rows) {
  // Per-cycle aggregates.
  std::map<int, std::pair<double, int>> reward_acc, loss_acc;
  for (const MetricsRow& r : rows) {
    reward_acc[r.cycle].first += r.mean_reward;
    reward_acc[r.cycle].second += 1;
    loss_acc[r.cycle].first += r.loss;
    loss_acc[r.cycle].second += 1;
  }
  std::vector<std::pair<int, double>> reward_pts, loss_pts;
  for (auto& [c, a] : reward_acc) reward_pts.push_back({c, a.first / a.second});
  for (auto& [c, a] : loss_acc) loss_pts.push_back({c, a.first / a.second});

  const double W = 720, H = 360, ml = 56, mr = 16, mt = 20, mb = 40;
  double cmin = 0, cmax = 1, vmin = 0, vmax = 1;
  if (!reward_pts.empty()) {
    cmin = reward_pts.front().first;
    cmax = std::max(reward_pts.back().first, static_cast<int>(cmin) + 1);
    vmin = vmax = reward_pts.front().second;
    for (auto& [c, v] : reward_pts) { vmin = std::min(vmin, v); vmax = std::max(vmax, v); }
    for (auto& [c, v] : loss_pts) { vmin = std::min(vmin, v); vmax = std::max(vmax, v); }
    if (vmax - vmin < 1e-9) vmax = vmin + 1.0;
  }
  auto sx = [&](double c) { return ml + (c - cmin) / (cmax - cmin) * (W - ml - mr); };
  auto sy = [&](double v) { return H - mb - (v - vmin) / (vmax - vmin) * (H - mt - mb); };
  auto polyline = [&](const std::vector<std::pair<int, double>>& pts,
                      const char* color) {
    std::ostringstream os;
    os << "<polyline fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.5\" points=\"";
    for (auto& [c, v] : pts) os << sx(c) << "," << sy(v) << " ";
    os << "\"/>\n";
    return os.str();
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
     << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << (H - mb) << "\" x2=\"" << (W - mr)
     << "\" y2=\"" << (H - mb) << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
     << "\" y2=\"" << (H - mb) << "\" stroke=\"black\"/>\n";
  os << polyline(reward_pts, "#1f77b4");
  os << polyline(loss_pts, "#d62728");
  os << "<text x=\"" << (W / 2) << "\" y=\"" << (H - 8)
     << "\" font-size=\"12\" text-anchor=\"middle\">cycle</text>\n";
  os << "<text x=\"" << (ml + 8) << "\" y=\"" << (mt + 12)
     << "\" font-size=\"12\" fill=\"#1f77b4\">mean reward</text>\n";
  os << "<text x=\"" << (ml + 8) << "\" y=\"" << (mt + 28)
     << "\" font-size=\"12\" fill=\"#d62728\">loss</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace htgrpo
