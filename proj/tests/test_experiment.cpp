#include <algorithm>

#include "doctest.h"
#include "json.hpp"
#include "pivotmt/error.hpp"
#include "pivotmt/experiment.hpp"
#include "pivotmt/text.hpp"
#include "temp_dir.hpp"

using namespace pivotmt;

namespace {

const std::filesystem::path kToyConfig = std::filesystem::path(TEST_DATA_DIR) / ".." / ".." / "configs" / "toy.json";

// Small enough to run every stage in a few seconds.
ExperimentConfig tiny_config(const std::filesystem::path& out) {
  auto cfg = load_experiment_config(kToyConfig);
  cfg.sizes.baseline_n = 20;
  cfg.sizes.msm_extra_n = 20;
  cfg.sizes.synthetic_target_n = 30;
  cfg.sizes.synthetic_source_n = 30;
  cfg.sizes.combined_synthetic_source_n = 25;
  cfg.sizes.combined_msm_extra_n = 25;
  cfg.sizes.dev_n = 5;
  cfg.sizes.test_in_domain_n = 10;
  cfg.sizes.test_out_of_domain_n = 10;
  cfg.bpe_source_vocab = 60;
  cfg.bpe_target_vocab = 60;
  cfg.hyperparams.emb_dim = 4;
  cfg.hyperparams.hidden_dim = 8;
  cfg.hyperparams.epochs = 1;
  cfg.max_decode_len = 10;
  cfg.dual_source.enabled = true;
  cfg.dual_source.train_n = 20;
  cfg.dual_source.test_n = 5;
  cfg.output_dir = out;
  return cfg;
}

}  // namespace

TEST_CASE("shipped config parses and validates") {
  const auto cfg = load_experiment_config(kToyConfig);
  CHECK(cfg.sizes.baseline_n == 150);
  CHECK(cfg.sizes.synthetic_target_n == 450);
  CHECK(cfg.extra_sources.size() == 2);
  CHECK(cfg.target.suffixes == std::vector<std::string>{"at", "un"});
  CHECK(cfg.in_domain_label == "TRIP");
  CHECK(cfg.hyperparams.hidden_dim == 64);
  CHECK(cfg.schedule.batch_size == 4);
  CHECK(cfg.dual_source.enabled);
  CHECK_NOTHROW(cfg.validate());

  nlohmann::json j = cfg;
  const auto back = parse_experiment_config(j.dump());
  CHECK(nlohmann::json(back) == j);
}

TEST_CASE("defaults carry the full-scale sizes") {
  ExperimentConfig cfg;
  CHECK(cfg.sizes.baseline_n == 150000);
  CHECK(cfg.sizes.synthetic_target_n == 450000);
  CHECK(cfg.sizes.combined_synthetic_source_n == 350000);
  CHECK(cfg.sizes.combined_msm_extra_n == 500000);
  CHECK(cfg.hyperparams.emb_dim == 500);
  CHECK(cfg.hyperparams.hidden_dim == 1000);
  CHECK(cfg.hyperparams.enc_layers == 4);
  CHECK(cfg.schedule.decay_start == 10);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_experiment_config(R"({"sede": 1})"), ConfigParse);
  CHECK_THROWS_AS(parse_experiment_config(R"({"sizes": {"baseline": 3}})"), ConfigParse);
  CHECK_THROWS_AS(parse_experiment_config("{not json"), ConfigParse);
  CHECK_THROWS_AS(parse_experiment_config(R"({"domains": {"general": {"concepts": [0, 99]}}})"), ConfigParse);
  CHECK_THROWS_AS(parse_experiment_config(R"({"noise": {"pivot_to_target": 1.5}})"), ConfigParse);
  CHECK_THROWS_AS(parse_experiment_config(R"({"hyperparams": {"hidden_dim": 7}})"), ConfigParse);
  CHECK_THROWS_AS(parse_experiment_config(
                      R"({"languages": {"pivot": {"code": "ko", "grammar": "identity"}}})"),
                  ConfigParse);
  const auto partial = parse_experiment_config(R"({"seed": 9})");
  CHECK(partial.seed == 9);
  CHECK(partial.sizes.baseline_n == 150000);
  try {
    parse_experiment_config(R"({"sede": 1})");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Usage);
    CHECK(std::string(e.what()).find("sede") != std::string::npos);
  }
}

TEST_CASE("score table rendering") {
  ScoreTable t;
  t.rows = {{"(1) Baseline", "TRIP", 0.2692}, {"(1) Baseline", "TED", 0.1},
            {"(2) (1) + MSM", "TRIP", 1.0}};
  CHECK(render_score_table(t) == "model\tTRIP\tTED\n(1) Baseline\t26.92\t10.00\n(2) (1) + MSM\t100.00\t-\n");
  CHECK(t.find("(1) Baseline", "TED") == 0.1);
  CHECK_FALSE(t.find("(9)", "TED"));
  CHECK(variant_label(Variant::SyntheticSourceMsm) == "(5) (1) + Syn-Source + MSM");
}

TEST_CASE("apply_bpe joins symbols") {
  const auto m = train_bpe({Sentence("low low low lower")}, 8);
  CHECK(apply_bpe(m, Sentence("lower low")).text() == "low e r</w> low</w>");
}

TEST_CASE("a small experiment runs, reuses stages and reproduces") {
  TempDir dir("experiment");
  auto cfg = tiny_config(dir / "a");
  std::vector<std::string> messages;
  const auto first = run_experiment(cfg, [&](const std::string& m) { messages.push_back(m); });
  CHECK(first.reused_stages.empty());
  CHECK_FALSE(messages.empty());
  REQUIRE(first.table.rows.size() == 10);
  REQUIRE(first.variants.size() == 5);
  CHECK(first.variants[0].sources == 1);
  CHECK(first.variants[1].sources == 4);
  CHECK(first.variants[0].train_rows == 20);
  CHECK(first.variants[2].train_rows == 50);
  CHECK(first.dual_source.has_value());
  for (const auto& r : first.table.rows) {
    CHECK(r.bleu >= 0.0);
    CHECK(r.bleu <= 1.0);
  }
  const auto scores = read_file(dir / "a" / "scores.tsv");
  CHECK(scores == render_score_table(first.table));
  CHECK(std::filesystem::exists(dir / "a" / "summary.json"));

  const auto second = run_experiment(cfg);
  for (std::string stage : {"data", "bpe", "train/baseline"}) {
    CHECK(std::find(second.reused_stages.begin(), second.reused_stages.end(), stage) !=
          second.reused_stages.end());
  }
  CHECK(read_file(dir / "a" / "scores.tsv") == scores);

  cfg.output_dir = dir / "b";
  run_experiment(cfg);
  CHECK(read_file(dir / "b" / "scores.tsv") == scores);

  cfg.hyperparams.epochs = 2;
  cfg.output_dir = dir / "a";
  const auto third = run_experiment(cfg);
  CHECK(std::find(third.reused_stages.begin(), third.reused_stages.end(), "data") != third.reused_stages.end());
  CHECK(std::find(third.reused_stages.begin(), third.reused_stages.end(), "train/baseline") ==
        third.reused_stages.end());
}

TEST_CASE("stage failures name the stage") {
  TempDir dir("experiment-fail");
  auto cfg = tiny_config(dir / "x");
  cfg.filter.max_len = 1;  // every generated sentence has at least two words
  cfg.dual_source.enabled = false;
  try {
    run_experiment(cfg);
    FAIL("expected a data stage error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("stage data") != std::string::npos);
    CHECK(e.kind() == ErrorKind::Data);
  }
}
