#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "htgrpo/harness.hpp"
#include "test_util.hpp"

using namespace htgrpo;

TEST_CASE("default_config carries the documented defaults") {
  TrainConfig cfg = default_config();
  CHECK(cfg.alpha == 0.3);
  CHECK(cfg.plan.n_global == 2);
  CHECK(cfg.plan.n_structure == 4);
  CHECK(cfg.plan.n_refinement == 2);
  CHECK(cfg.credit.lambda_s == 1.5);
  CHECK(cfg.credit.lambda_r == 0.5);
  CHECK(cfg.clip.epsilon == 0.2);
  CHECK(cfg.clip.beta == 0.01);
  CHECK(cfg.delta == 1e-4);
  CHECK(cfg.group_size == 9);
  CHECK(cfg.plan.mode == AnnealMode::kDown);
  for (const StageGamma& g : cfg.plan.gamma) {
    CHECK(g.gamma_max == 1.0);
    CHECK(g.gamma_min == 0.5);
  }
  CHECK(cfg.paradigm.kind == RatioContextKind::Kind::kPromptConditioned);
  CHECK(cfg.task.kind == TaskSpec::Kind::kPattern);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("parse_config applies overrides and keeps defaults elsewhere") {
  TrainConfig cfg = parse_config(
      "# experiment\n"
      "seq_len = 10\n"
      "alpha = 0.5   # inline comment\n"
      "paradigm = random_remask\n"
      "anneal_mode = constant\n"
      "cycles = 17\n"
      "task_kind = count\n"
      "seed = 99\n"
      "\n");
  CHECK(cfg.policy.seq_len == 10);
  CHECK(cfg.alpha == 0.5);
  CHECK(cfg.paradigm.kind == RatioContextKind::Kind::kRandomRemask);
  CHECK(cfg.plan.mode == AnnealMode::kConstant);
  CHECK(cfg.cycles == 17);
  CHECK(cfg.task.kind == TaskSpec::Kind::kCount);
  CHECK(cfg.seed == 99);
  // Untouched defaults survive.
  CHECK(cfg.policy.vocab_size == 8);
  CHECK(cfg.group_size == 9);
}

TEST_CASE("parse_config rejects malformed input with the line number") {
  using doctest::Contains;
  CHECK_THROWS_WITH(parse_config("seq_len = 16\nbogus_key = 3\n"),
                    Contains("line 2"));
  CHECK_THROWS_WITH(parse_config("bogus_key = 3\n"), Contains("bogus_key"));
  CHECK_THROWS(parse_config("seq_len\n"));
  CHECK_THROWS(parse_config("seq_len = twelve\n"));
  CHECK_THROWS(parse_config("paradigm = hybrid\n"));
  CHECK_THROWS(parse_config("order_rule = sideways\n"));
  CHECK_THROWS(parse_config("task_kind = maze\n"));
  CHECK_THROWS(parse_config("alpha = 2.0\n"));  // fails validation
}

TEST_CASE("load_config round-trips through a file") {
  namespace fs = std::filesystem;
  const std::string path = "test_harness_config.cfg";
  {
    std::ofstream out(path);
    out << "seq_len = 12\ncycles = 5\n";
  }
  TrainConfig cfg = load_config(path);
  CHECK(cfg.policy.seq_len == 12);
  CHECK(cfg.cycles == 5);
  fs::remove(path);
  CHECK_THROWS(load_config("no_such_file.cfg"));
}

TEST_CASE("metrics CSV round-trip preserves every field") {
  std::vector<MetricsRow> rows(2);
  rows[0].cycle = 3;
  rows[0].stage = "structure";
  rows[0].k_s = 2;
  rows[0].gamma = 0.8333333333333334;
  rows[0].mean_reward = 0.512;
  rows[0].std_reward = 0.031;
  rows[0].loss = -0.0123456789012345;
  rows[0].kl = 1.5e-5;
  rows[0].clip_fraction = 0.125;
  rows[0].mean_ratio = 1.002;
  rows[0].mean_entropy_structure = 2.0011;
  rows[0].mean_entropy_refinement = 2.0709;
  rows[1].cycle = 4;
  rows[1].stage = "global";

  std::string csv = metrics_to_csv(rows);
  CHECK(csv.rfind(kMetricsCsvHeader, 0) == 0);
  std::vector<MetricsRow> back = metrics_from_csv(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[0].cycle == 3);
  CHECK(back[0].stage == "structure");
  CHECK(back[0].k_s == 2);
  CHECK(back[0].gamma == rows[0].gamma);
  CHECK(back[0].loss == rows[0].loss);
  CHECK(back[0].kl == rows[0].kl);
  CHECK(back[0].mean_entropy_refinement == rows[0].mean_entropy_refinement);
  CHECK(back[1].stage == "global");

  CHECK_THROWS(metrics_from_csv("not,a,header\n1,global,0\n"));

  namespace fs = std::filesystem;
  const std::string path = "test_harness_metrics.csv";
  write_metrics_csv(rows, path);
  std::vector<MetricsRow> file_back = read_metrics_csv(path);
  REQUIRE(file_back.size() == 2);
  CHECK(file_back[0].loss == rows[0].loss);
  fs::remove(path);
}

TEST_CASE("contamination checks pass and the report format is stable") {
  std::vector<PropositionCheck> checks =
      verify_prop_c2({0.3, 0.5, 0.9}, {1, 3, 10}, 20000, 5);
  REQUIRE(checks.size() == 9);
  for (const PropositionCheck& c : checks) {
    CHECK(c.bound == 0.01);
    CHECK(c.pass);
  }
  PropositionReport report;
  report.checks = {checks[0], checks[1]};
  std::string text = report.to_text();
  CHECK(text.find("C2_contamination_p0.3_f1 ") != std::string::npos);
  CHECK(text.find(" pass\n") != std::string::npos);
  CHECK(report.all_pass());
  report.checks[0].pass = false;
  CHECK(!report.all_pass());
}

TEST_CASE("entropy proposition checks are well formed on a fresh policy") {
  // A fresh random policy carries little structure; here we only pin the
  // mechanics (naming, bound sign, determinism). The trained-policy claims
  // live in the acceptance suite.
  PolicyParams params = init_policy(testutil::small_config(), 7);
  SamplerConfig sampler;
  PropositionCheck c1 = verify_prop_c1(params, sampler, 0, 8, 200, 5);
  CHECK(c1.name == "C1_entropy_monotonicity_n0_vs_n8");
  CHECK(c1.bound <= 0.0);
  CHECK(std::isfinite(c1.statistic));
  PropositionCheck c1b = verify_prop_c1(params, sampler, 0, 8, 200, 5);
  CHECK(c1.statistic == c1b.statistic);

  PropositionCheck c3 = verify_prop_c3(params, sampler, 0.3, 200, 5);
  CHECK(c3.name == "C3_entropy_lower_bound");
  CHECK(c3.bound <= 0.0);
  CHECK(std::isfinite(c3.statistic));

  CHECK_THROWS(verify_prop_c1(params, sampler, 8, 4, 10, 5));
  CHECK_THROWS(verify_prop_c1(params, sampler, 0, 16, 10, 5));
}

TEST_CASE("ablation presets enumerate the documented variants") {
  TrainConfig base = default_config();
  std::vector<PresetVariant> a1 = ablation_preset("a1", base);
  REQUIRE(a1.size() == 4);
  CHECK(a1[0].config.plan.n_global == 8);
  CHECK(a1[0].config.plan.n_structure == 0);
  CHECK(a1[3].config.plan.n_structure == 4);

  std::vector<PresetVariant> a3 = ablation_preset("a3", base);
  REQUIRE(a3.size() == 4);
  CHECK(a3[0].name == "full_coverage");
  CHECK(a3[0].config.plan.gamma[0].gamma_min == 1.0);
  CHECK(a3[1].config.plan.gamma[1].gamma_max == 0.2);
  CHECK(a3[2].config.plan.mode == AnnealMode::kUp);

  std::vector<PresetVariant> a4 = ablation_preset("a4", base);
  REQUIRE(a4.size() == 3);
  CHECK(a4[0].config.alpha == 0.1);
  CHECK(a4[2].config.alpha == 0.5);

  std::vector<PresetVariant> a5 = ablation_preset("a5", base);
  REQUIRE(a5.size() == 3);
  CHECK(a5[1].config.credit.lambda_s == 1.0);
  CHECK(a5[2].config.paradigm.kind ==
        RatioContextKind::Kind::kRevealedStructure);
  // Every preset variant must be runnable as-is.
  for (const std::string& name : {"a1", "a2", "a3", "a4", "a5"})
    for (const PresetVariant& v : ablation_preset(name, base))
      CHECK_NOTHROW(v.config.validate());

  CHECK_THROWS(ablation_preset("a9", base));
}

TEST_CASE("render_metrics_svg emits a self-contained chart") {
  std::vector<MetricsRow> rows;
  for (int c = 0; c < 5; ++c) {
    MetricsRow r;
    r.cycle = c;
    r.stage = "global";
    r.mean_reward = 0.3 + 0.1 * c;
    r.loss = -0.01 * c;
    rows.push_back(r);
  }
  std::string svg = render_metrics_svg(rows);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("mean reward") != std::string::npos);
  CHECK(svg.find("loss") != std::string::npos);
  // Still well formed with no data.
  std::string empty_svg = render_metrics_svg({});
  CHECK(empty_svg.rfind("<svg", 0) == 0);
  CHECK(empty_svg.find("</svg>") != std::string::npos);
}
