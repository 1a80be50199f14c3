#pragma once

// The five-variant corpus-extension experiment on toy languages, plus the
// two-source task where the target depends on both inputs.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pivotmt/corpus.hpp"
#include "pivotmt/eval.hpp"
#include "pivotmt/nmt/types.hpp"
#include "pivotmt/subword.hpp"
#include "pivotmt/synth.hpp"

namespace pivotmt {

struct ToyLanguageConfig {
  std::string code;
  Grammar grammar = Grammar::IdentityOrder;
  std::vector<std::string> suffixes;  // appended to some words; the target's also drive scoring
  std::optional<std::filesystem::path> spec_file;  // overrides generation when set
};

struct DomainConfig {
  int concept_begin = 0;  // half-open concept id range
  int concept_end = 1;
  std::size_t min_len = 1;
  std::size_t max_len = 1;

  SamplingDomain sampling() const;
};

// Defaults are the full-scale sizes; the shipped toy config scales them down.
struct ExperimentSizes {
  std::size_t baseline_n = 150000;
  std::size_t msm_extra_n = 150000;                  // per extra language, variant (2)
  std::size_t synthetic_target_n = 450000;           // variant (3)
  std::size_t synthetic_source_n = 450000;           // variant (4)
  std::size_t combined_synthetic_source_n = 350000;  // variant (5)
  std::size_t combined_msm_extra_n = 500000;         // per extra language, variant (5)
  std::size_t dev_n = 3865;
  std::size_t test_in_domain_n = 4000;
  std::size_t test_out_of_domain_n = 2000;
  double pool_factor = 1.5;  // generated before filtering, relative to what is needed
};

struct DualSourceConfig {
  bool enabled = false;
  std::size_t train_n = 1000;
  std::size_t test_n = 200;
  DomainConfig part;  // each source renders one independently drawn part
  int epochs = 0;     // 0 keeps hyperparams.epochs
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int concept_count = 40;
  ToyLanguageConfig source{"ko", Grammar::Reversed, {}, {}};
  ToyLanguageConfig pivot{"en", Grammar::IdentityOrder, {}, {}};
  ToyLanguageConfig target{"ar", Grammar::IdentityOrder, {"at", "un"}, {}};
  std::vector<ToyLanguageConfig> extra_sources{{"ja", Grammar::Reversed, {}, {}},
                                               {"zh", Grammar::IdentityOrder, {}, {}}};
  DomainConfig in_domain{0, 20, 2, 5};      // production-like, also the baseline's domain
  DomainConfig out_of_domain{10, 40, 3, 7};  // talk-like, the extra bitexts' domain
  DomainConfig general{0, 40, 2, 7};         // large pivot-target bitext
  std::string in_domain_label = "TRIP";
  std::string out_of_domain_label = "TED";
  ExperimentSizes sizes;
  std::size_t bpe_source_vocab = 8000;
  std::size_t bpe_target_vocab = 10000;
  nmt::Hyperparams hyperparams;
  nmt::Schedule schedule;
  double target_noise = 0.3;  // token drop probability, pivot -> target translator
  double source_noise = 0.0;  // pivot -> source translator
  FilterConfig filter;
  BleuOptions bleu;
  std::size_t max_decode_len = 100;
  unsigned jobs = 1;  // variants trained at once
  std::filesystem::path output_dir = "experiment_out";
  DualSourceConfig dual_source;

  /// Throws ConfigParse on inconsistent sizes or settings.
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
/// Missing keys keep defaults; unknown keys raise ConfigParse.
void from_json(const nlohmann::json& j, ExperimentConfig& cfg);
ExperimentConfig parse_experiment_config(std::string_view json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct ScoreRow {
  std::string model;
  std::string test_set;
  double bleu = 0.0;  // ratio in [0, 1]
};

struct ScoreTable {
  std::vector<ScoreRow> rows;

  std::optional<double> find(const std::string& model, const std::string& test_set) const;
};

/// One line per model, one column per test set, BLEU as 2-decimal percentages.
std::string render_score_table(const ScoreTable& table);

enum class Variant { Baseline, Msm, SyntheticTarget, SyntheticSource, SyntheticSourceMsm };

inline constexpr Variant kAllVariants[] = {Variant::Baseline, Variant::Msm, Variant::SyntheticTarget,
                                           Variant::SyntheticSource, Variant::SyntheticSourceMsm};

std::string variant_label(Variant v);
std::string variant_id(Variant v);

struct VariantSummary {
  std::string id;
  std::size_t train_rows = 0;
  std::size_t sources = 0;
  double final_loss = 0.0;
  double dev_loss = 0.0;
};

struct DualSourceResult {
  double dual = 0.0;
  double only_first = 0.0;
  double only_second = 0.0;
};

struct ExperimentResult {
  ScoreTable table;
  std::vector<VariantSummary> variants;
  std::optional<DualSourceResult> dual_source;
  std::vector<std::string> reused_stages;  // stages whose outputs were already current
};

using Logger = std::function<void(const std::string&)>;

/// Runs every stage under cfg.output_dir, reusing stage outputs whose recorded
/// digest matches. Stage errors are rethrown with the stage name prefixed.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const Logger& log = {});

/// The two-source task alone: dual-encoder model vs each single-encoder model.
DualSourceResult run_dual_source(const ExperimentConfig& cfg, const Logger& log = {});

/// Subword-segments a sentence into a space-joined symbol sentence.
Sentence apply_bpe(const BpeModel& model, const Sentence& sentence);

}  // namespace pivotmt
