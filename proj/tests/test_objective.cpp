#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "htgrpo/objective.hpp"
#include "test_util.hpp"

using namespace htgrpo;
using testutil::small_config;

namespace {

// Tiny two-token policy whose rows are exactly controlled through b2, since
// every other parameter block is zeroed.
PolicyParams b2_policy(double logit0, double logit1) {
  PolicyConfig cfg;
  cfg.vocab_size = 2;
  cfg.seq_len = 4;
  cfg.num_prompts = 1;
  cfg.embed_dim = 2;
  cfg.hidden_dim = 2;
  PolicyParams p = init_policy(cfg, 0);
  std::fill(p.params.begin(), p.params.end(), 0.0);
  ParamLayout lay(cfg);
  p.params[lay.b2] = logit0;
  p.params[lay.b2 + 1] = logit1;
  return p;
}

Rollout make_rollout(const PolicyParams& params_old, std::uint64_t seed,
                     int prompt = 0) {
  Rng rng(seed);
  return run_rollout(params_old, prompt, SamplerConfig{}, rng, true);
}

std::vector<int> full_support(int n) {
  std::vector<int> m(static_cast<std::size_t>(n));
  std::iota(m.begin(), m.end(), 0);
  return m;
}

}  // namespace

TEST_CASE("group_advantages: frozen oracles and zero-sum") {
  AdvantageGroup g = group_advantages({0.0, 1.0}, 1e-4);
  CHECK(g.advantages[0] == doctest::Approx(-0.9998000399920016).epsilon(1e-12));
  CHECK(g.advantages[1] == doctest::Approx(0.9998000399920016).epsilon(1e-12));

  AdvantageGroup g3 = group_advantages({1.0, 2.0, 3.0}, 1e-4);
  CHECK(g3.advantages[0] == doctest::Approx(-1.2245948897605123).epsilon(1e-9));
  CHECK(g3.advantages[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(g3.advantages[2] == doctest::Approx(1.2245948897605123).epsilon(1e-9));

  // Degenerate group: identical rewards give exactly zero advantages.
  AdvantageGroup flat = group_advantages({0.7, 0.7, 0.7, 0.7}, 1e-4);
  for (double a : flat.advantages) CHECK(a == 0.0);

  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> rewards(9);
    for (double& r : rewards) r = rng.uniform();
    AdvantageGroup gg = group_advantages(rewards, 1e-4);
    double s = std::accumulate(gg.advantages.begin(), gg.advantages.end(), 0.0);
    CHECK(std::abs(s) <= 1e-10);
  }
  CHECK_THROWS(group_advantages({1.0}, 1e-4));
  CHECK_THROWS(group_advantages({1.0, 2.0}, 0.0));
}

TEST_CASE("contamination_probability closed form") {
  CHECK(contamination_probability(0.5, 3) == doctest::Approx(0.875).epsilon(1e-12));
  CHECK(contamination_probability(0.9, 1) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(contamination_probability(0.3, 0) == doctest::Approx(0.0));
  CHECK(contamination_probability(0.3, 10) ==
        doctest::Approx(1.0 - std::pow(0.3, 10)).epsilon(1e-12));
  CHECK_THROWS(contamination_probability(0.0, 3));
  CHECK_THROWS(contamination_probability(1.0, 3));
  CHECK_THROWS(contamination_probability(0.5, -1));
}

TEST_CASE("importance_ratios: exact value from controlled logits") {
  // theta: softmax([ln 4, 0]) = (0.8, 0.2); theta_old: softmax([ln(2/3), 0]) =
  // (0.4, 0.6). Ratios are exactly 2 for token 0 and 1/3 for token 1.
  PolicyParams params = b2_policy(std::log(4.0), 0.0);
  PolicyParams params_old = b2_policy(std::log(2.0 / 3.0), 0.0);
  Rollout r;
  r.final = {0, 1, 0, 1};
  r.ranks = {1, 2, 3, 4};
  r.steps = 4;
  RatioPlan plan;
  plan.kind = RatioContextKind::Kind::kRandomRemask;  // fresh denominator path
  plan.shared_context = MaskState::fully_masked(4);
  plan.use_cached_denominator = false;
  std::vector<double> ratios =
      importance_ratios(params, params_old, r, plan, full_support(4));
  CHECK(ratios[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(ratios[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(ratios[2] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(ratios[3] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("importance_ratios center at 1 when theta == theta_old") {
  PolicyParams params = init_policy(small_config(), 8);
  Rollout r = make_rollout(params, 77, 2);
  RatioContextKind kinds[3];
  kinds[0].kind = RatioContextKind::Kind::kPromptConditioned;
  kinds[1].kind = RatioContextKind::Kind::kRandomRemask;
  kinds[2].kind = RatioContextKind::Kind::kTrajectoryConsistent;
  Rng rng(99);
  for (const RatioContextKind& k : kinds) {
    std::vector<double> ratios =
        importance_ratios(params, params, r, k, full_support(16), rng);
    for (double x : ratios) CHECK(x == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("rank-1 token: trajectory context collapses to the empty context") {
  PolicyParams params_old = init_policy(small_config(), 8);
  PolicyParams params = params_old;
  for (double& p : params.params) p += 1e-3;
  Rollout r = make_rollout(params_old, 31);
  int first = -1;
  for (int i = 0; i < 16; ++i)
    if (r.ranks[static_cast<std::size_t>(i)] == 1) first = i;
  REQUIRE(first >= 0);
  Rng rng(0);
  RatioContextKind traj;
  traj.kind = RatioContextKind::Kind::kTrajectoryConsistent;
  RatioContextKind prompt_cond;  // cached-denominator path
  std::vector<double> rt =
      importance_ratios(params, params_old, r, traj, {first}, rng);
  std::vector<double> rp =
      importance_ratios(params, params_old, r, prompt_cond, {first}, rng);
  CHECK(rt[0] == doctest::Approx(rp[0]).epsilon(1e-12));
}

TEST_CASE("clipped_surrogate: branch selection, value, cotangents") {
  ClipConfig clip;  // eps = 0.2
  SUBCASE("positive advantage above the band clips and kills the gradient") {
    SurrogateResult s = clipped_surrogate({1.5}, {1.0}, clip);
    CHECK(s.value == doctest::Approx(1.2).epsilon(1e-12));
    CHECK(s.clipped_count == 1);
    CHECK(s.clip_fraction == doctest::Approx(1.0));
    CHECK(s.ratio_cotangents[0] == 0.0);
  }
  SUBCASE("negative advantage above the band keeps the unclipped branch") {
    SurrogateResult s = clipped_surrogate({1.5}, {-1.0}, clip);
    CHECK(s.value == doctest::Approx(-1.5).epsilon(1e-12));
    CHECK(s.clipped_count == 0);
    CHECK(s.ratio_cotangents[0] == doctest::Approx(-1.0));
  }
  SUBCASE("inside the band nothing clips") {
    SurrogateResult s = clipped_surrogate({0.9, 1.1}, {2.0, -0.5}, clip);
    CHECK(s.value == doctest::Approx(0.5 * (0.9 * 2.0 + 1.1 * -0.5)).epsilon(1e-12));
    CHECK(s.clipped_count == 0);
    CHECK(s.ratio_cotangents[0] == doctest::Approx(1.0));
    CHECK(s.ratio_cotangents[1] == doctest::Approx(-0.25));
  }
  SUBCASE("below the band with positive advantage stays unclipped") {
    SurrogateResult s = clipped_surrogate({0.5}, {1.0}, clip);
    CHECK(s.value == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.clipped_count == 0);
  }
  SUBCASE("below the band with negative advantage clips") {
    SurrogateResult s = clipped_surrogate({0.5}, {-1.0}, clip);
    CHECK(s.value == doctest::Approx(-0.8).epsilon(1e-12));
    CHECK(s.clipped_count == 1);
    CHECK(s.ratio_cotangents[0] == 0.0);
  }
  CHECK_THROWS(clipped_surrogate({}, {}, clip));
  CHECK_THROWS(clipped_surrogate({1.0}, {1.0, 2.0}, clip));
}

TEST_CASE("kl_penalty: zero at identity, nonnegative, frozen two-row oracle") {
  PolicyParams params = init_policy(small_config(), 4);
  PolicyParams other = init_policy(small_config(), 5);
  std::vector<int> m{0, 3, 9};
  CHECK(kl_penalty(params, params, 0, m) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(kl_penalty(params, other, 0, m) >= 0.0);
  // b2-controlled oracle: KL((.8,.2) || (.4,.6)) per position.
  PolicyParams p = b2_policy(std::log(4.0), 0.0);
  PolicyParams q = b2_policy(std::log(2.0 / 3.0), 0.0);
  const double expect =
      0.8 * std::log(0.8 / 0.4) + 0.2 * std::log(0.2 / 0.6);
  CHECK(kl_penalty(p, q, 0, {0, 1}) == doctest::Approx(expect).epsilon(1e-12));
  CHECK_THROWS(kl_penalty(params, other, 0, {}));
}

TEST_CASE("inner_step_loss: value assembles surrogate and kl") {
  PolicyParams params_old = init_policy(small_config(), 12);
  PolicyParams params = params_old;
  for (std::size_t i = 0; i < params.params.size(); ++i)
    params.params[i] += (i % 3 == 0 ? 1e-3 : -5e-4);
  PolicyParams params_ref = init_policy(small_config(), 13);
  Rollout r = make_rollout(params_old, 11, 1);
  RatioContextKind kind;  // prompt conditioned
  RatioPlan plan = make_ratio_plan(kind, r, nullptr, Stage::kGlobal, nullptr,
                                   nullptr);
  std::vector<int> m = full_support(16);
  std::vector<double> w(16, 1.0);
  ClipConfig clip;
  StepResult res = inner_step_loss(params, params_old, params_ref, r, plan, m, w,
                                   0.8, clip, false);
  std::vector<double> ratios = importance_ratios(params, params_old, r, plan, m);
  std::vector<double> wadv(16, 0.8);
  SurrogateResult surr = clipped_surrogate(ratios, wadv, clip);
  double kl = kl_penalty(params, params_ref, r.prompt, m);
  CHECK(res.surrogate == doctest::Approx(surr.value).epsilon(1e-12));
  CHECK(res.kl == doctest::Approx(kl).epsilon(1e-12));
  CHECK(res.loss == doctest::Approx(-surr.value + clip.beta * kl).epsilon(1e-12));
  CHECK(res.support_size == 16);
  CHECK(res.clipped_count == surr.clipped_count);
  double mr = std::accumulate(ratios.begin(), ratios.end(), 0.0) / 16.0;
  CHECK(res.mean_ratio == doctest::Approx(mr).epsilon(1e-12));
  CHECK(res.grad.empty());
}

TEST_CASE("inner_step_loss gradient matches finite differences (all paths)") {
  PolicyParams params_old = init_policy(small_config(), 21);
  PolicyParams params = params_old;
  Rng noise(2);
  for (double& p : params.params) p += (noise.uniform() - 0.5) * 2e-3;
  PolicyParams params_ref = init_policy(small_config(), 22);
  Rollout r = make_rollout(params_old, 51, 3);
  std::vector<double> w(16);
  for (int i = 0; i < 16; ++i) w[static_cast<std::size_t>(i)] = (i % 2) ? 0.5 : 1.5;
  ClipConfig clip;
  const double adv = 0.9;

  auto check_plan = [&](const RatioPlan& plan, const std::vector<int>& m,
                        double tol) {
    StepResult res = inner_step_loss(params, params_old, params_ref, r, plan, m,
                                     w, adv, clip, true);
    REQUIRE(res.grad.size() == params.params.size());
    auto loss = [&](const PolicyParams& th) {
      return inner_step_loss(th, params_old, params_ref, r, plan, m, w, adv,
                             clip, false)
          .loss;
    };
    Rng coords(7);
    CHECK(testutil::check_grad(params, loss, res.grad, 40, coords) <= tol);
  };

  SUBCASE("prompt-conditioned, cached denominator") {
    RatioContextKind kind;
    RatioPlan plan =
        make_ratio_plan(kind, r, nullptr, Stage::kGlobal, nullptr, nullptr);
    check_plan(plan, full_support(16), 1e-5);
  }
  SUBCASE("random remask, fresh denominator") {
    RatioContextKind kind;
    kind.kind = RatioContextKind::Kind::kRandomRemask;
    kind.p_remask = 0.5;
    Rng rng(17);
    std::vector<int> sup;
    RatioPlan plan = make_ratio_plan(kind, r, nullptr, Stage::kGlobal, &rng, &sup);
    REQUIRE(!sup.empty());
    check_plan(plan, sup, 1e-5);
  }
  SUBCASE("trajectory-consistent, per-token contexts") {
    RatioContextKind kind;
    kind.kind = RatioContextKind::Kind::kTrajectoryConsistent;
    RatioPlan plan =
        make_ratio_plan(kind, r, nullptr, Stage::kGlobal, nullptr, nullptr);
    check_plan(plan, {0, 4, 9, 15}, 1e-5);
  }
  SUBCASE("revealed structure in the refinement stage") {
    RatioContextKind kind;
    kind.kind = RatioContextKind::Kind::kRevealedStructure;
    TokenPartition part = partition(r, 0.3);
    RatioPlan plan =
        make_ratio_plan(kind, r, &part, Stage::kRefinement, nullptr, nullptr);
    check_plan(plan, part.refinement, 1e-5);
  }
}

TEST_CASE("make_ratio_plan: revealed structure switches by stage") {
  PolicyParams params = init_policy(small_config(), 8);
  Rollout r = make_rollout(params, 61);
  TokenPartition part = partition(r, 0.3);
  RatioContextKind kind;
  kind.kind = RatioContextKind::Kind::kRevealedStructure;
  RatioPlan refine =
      make_ratio_plan(kind, r, &part, Stage::kRefinement, nullptr, nullptr);
  CHECK(!refine.use_cached_denominator);
  CHECK(refine.shared_context.num_visible() ==
        static_cast<int>(part.structure.size()));
  for (int i : part.structure)
    CHECK(*refine.shared_context.visible[static_cast<std::size_t>(i)] ==
          r.final[static_cast<std::size_t>(i)]);
  RatioPlan global =
      make_ratio_plan(kind, r, &part, Stage::kGlobal, nullptr, nullptr);
  CHECK(global.use_cached_denominator);
  CHECK(global.shared_context.num_visible() == 0);
  CHECK_THROWS(
      make_ratio_plan(kind, r, nullptr, Stage::kRefinement, nullptr, nullptr));
}
