// Acceptance runner: one PASS/FAIL line per criterion, each with its measured
// runtime against the allowed budget. Exit status is nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "generators.hpp"
#include "oracles.hpp"
#include "pivotmt/corpus.hpp"
#include "pivotmt/eval.hpp"
#include "pivotmt/experiment.hpp"
#include "pivotmt/nmt/checkpoint.hpp"
#include "pivotmt/nmt/model.hpp"
#include "pivotmt/subword.hpp"
#include "pivotmt/synth.hpp"
#include "pivotmt/text.hpp"
#include "temp_dir.hpp"

using namespace pivotmt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (ok) return;
    pass = false;
    detail += (detail.empty() ? "" : "; ") + what;
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// --- 1 -------------------------------------------------------------------------

Outcome gradient_gate() {
  nmt::Hyperparams hp;
  hp.emb_dim = 4;
  hp.hidden_dim = 8;
  hp.enc_layers = 1;
  hp.vocab_size_src = {12};
  hp.vocab_size_tgt = 12;
  hp.seed = 7;
  hp.init_range = 0.5;
  auto m = nmt::init_model<double>(hp, 2);
  const std::vector<nmt::EncodedRow> rows{
      {{nmt::TokenIds{4, 5, 6, 3}, nmt::TokenIds{7, 8, 3}}, {9, 10, 4}},
      {{std::nullopt, nmt::TokenIds{11, 5, 3}}, {6, 7}},
      {{nmt::TokenIds{4, 3}, std::nullopt}, {5}},
  };
  const auto batch = nmt::make_batch(rows, 2);
  const auto lg = nmt::loss_and_gradients(m, batch);
  auto params = nmt::coefficient_pointers(m.params);
  auto grads = nmt::coefficient_pointers(lg.gradients);
  const double h = 1e-4;
  double worst = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = *params[i];
    *params[i] = keep + h;
    const double up = nmt::loss_and_gradients(m, batch, false).loss;
    *params[i] = keep - h;
    const double down = nmt::loss_and_gradients(m, batch, false).loss;
    *params[i] = keep;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - *grads[i]) / std::max({std::abs(fd), std::abs(*grads[i]), 1e-8}));
  }
  Outcome o;
  o.require(worst <= 1e-4, "relative error above 1e-4");
  o.note(std::to_string(params.size()) + " coefficients, worst relative error " + sci(worst));
  return o;
}

// --- 2 -------------------------------------------------------------------------

std::vector<Sentence> as_sentences(const std::vector<oracle::Tokens>& t) {
  std::vector<Sentence> out;
  for (const auto& x : t) out.emplace_back(gen::joined(x));
  return out;
}

Outcome bleu_gate() {
  Outcome o;
  Rng rng(99);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<oracle::Tokens> hyps, refs;
    const std::size_t segments = 1 + rng.index(5);
    const std::size_t vocab = 2 + rng.index(9);
    for (std::size_t s = 0; s < segments; ++s) {
      hyps.push_back(gen::tokens(rng, vocab, 1, 12));
      refs.push_back(gen::tokens(rng, vocab, 1, 12));
    }
    const double got = bleu4(as_sentences(hyps), as_sentences(refs), WhitespaceSegmenter{}).bleu;
    worst = std::max(worst, std::abs(got - oracle::bleu(hyps, refs)));
  }
  o.require(worst <= 1e-12, "oracle disagreement " + sci(worst));
  const std::vector<Sentence> same{Sentence("the cat sat on the mat"), Sentence("a b c d e")};
  o.require(bleu4(same, same, WhitespaceSegmenter{}).bleu == 1.0, "bleu(h,h) != 1");
  o.require(bleu4({Sentence("a b c d e")}, {Sentence("a b c x d e")}, WhitespaceSegmenter{}).bleu == 0.0,
            "zero 4-gram case nonzero");
  o.note("200 corpora, worst |scorer - oracle| " + sci(worst));
  return o;
}

// --- 3 -------------------------------------------------------------------------

std::vector<Sentence> random_corpus(Rng& rng, const std::string& alphabet, std::size_t lines) {
  std::vector<Sentence> out;
  for (std::size_t i = 0; i < lines; ++i) {
    std::vector<std::string> words;
    const std::size_t n = 1 + rng.index(6);
    for (std::size_t k = 0; k < n; ++k) words.push_back(gen::word(rng, alphabet, 6));
    out.emplace_back(gen::joined(words));
  }
  return out;
}

Outcome bpe_gate(const fs::path& data) {
  Outcome o;
  Rng rng(5);
  const auto m = train_bpe(random_corpus(rng, "abcdefgh", 300), 60);
  std::size_t round_trips = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto s = random_corpus(rng, "abcdefgh", 1).front();
    round_trips += decode(encode(m, s), m.eow_marker()) == s;
  }
  o.require(round_trips == 1000, "round trip failed");

  const auto abab = train_bpe({Sentence("abab abab")}, 100);
  o.require(render_bpe(abab) == read_file(data / "abab.bpe"), "abab golden file differs");
  const auto low = train_bpe({Sentence("low low low lower")}, 8);
  o.require(render_bpe(low) == read_file(data / "low.bpe"), "low golden file differs");
  Rng corpora(31);
  bool oracle_ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    const auto corpus = random_corpus(corpora, "abcdef", 30);
    const std::size_t target = 8 + corpora.index(40);
    oracle_ok = oracle_ok && train_bpe(corpus, target).merges() == oracle::bpe_merges(corpus, target, "</w>");
  }
  o.require(oracle_ok, "merges differ from the recount oracle");

  const auto cov_model = train_bpe({Sentence("la lo li lu"), Sentence("ma mo mi mu")}, 30);
  std::vector<Sentence> held_out;
  for (int line = 0; line < 20; ++line) {
    std::vector<std::string> words;
    for (int w = 0; w < 10; ++w) words.push_back(line == 7 && w == 3 ? "lqa" : "mila");
    held_out.emplace_back(gen::joined(words));
  }
  const double c = coverage(cov_model, held_out).coverage;
  o.require(c == 0.995, "coverage " + fixed(c, 6));
  o.note(std::to_string(round_trips) + "/1000 round trips, goldens match, coverage " + fixed(c, 3));
  return o;
}

// --- 4 -------------------------------------------------------------------------

Outcome pipeline_gate() {
  Outcome o;
  Rng rng(2024);
  FilterConfig cfg;
  cfg.max_len = 10;
  std::size_t ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = gen::parallel(rng);
    const auto l = length_filter(c, cfg);
    const auto d = dedup(c);
    const auto u = unk_filter(c, "<unk>");
    ok += length_filter(l, cfg) == l && dedup(d) == d && unk_filter(u, "<unk>") == u &&
          gen::is_subsequence(l, c) && gen::is_subsequence(d, c) && gen::is_subsequence(u, c);
  }
  o.require(ok == 100, "filter property failed");

  std::vector<ParallelCorpus> corpora;
  for (std::string lang : {"ko", "en", "ja", "zh"}) {
    ParallelCorpus c{lang, "ar", {}};
    for (int i = 0; i < 1000; ++i) c.pairs.emplace_back(Sentence(lang + std::to_string(i)), Sentence("t"));
    corpora.push_back(c);
  }
  const auto m = align_multiway(corpora, AlignMode::Disjoint);
  bool one_hot = true;
  for (std::size_t r = 0; r < m.size(); ++r) {
    const auto mask = m.rows()[r].mask();
    one_hot = one_hot && std::count(mask.begin(), mask.end(), true) == 1 && mask[r / 1000];
  }
  o.require(m.size() == 4000, "disjoint alignment has " + std::to_string(m.size()) + " rows");
  o.require(one_hot, "masks are not one-hot");
  o.note(std::to_string(ok) + "/100 fixtures, " + std::to_string(m.size()) + " aligned rows");
  return o;
}

// --- 5 -------------------------------------------------------------------------

Outcome synthetic_gate() {
  Outcome o;
  const auto ko = make_toy_language("ko", 30, Grammar::Reversed, {2, 6}, 1);
  const auto en = make_toy_language("en", 30, Grammar::IdentityOrder, {2, 6}, 2);
  const auto ar = make_toy_language("ar", 30, Grammar::IdentityOrder, {2, 6}, 3);
  const auto truth = generate_toy_multiway({ko, en}, ar, 1000, 11);
  auto column = [&](auto side_a, auto side_b, const std::string& a, const std::string& b) {
    ParallelCorpus c{a, b, {}};
    for (const auto& row : truth.rows()) c.pairs.emplace_back(side_a(row), side_b(row));
    return c;
  };
  auto src = [](const MultiWayRow& r) { return *r.sources[0]; };
  auto piv = [](const MultiWayRow& r) { return *r.sources[1]; };
  auto tgt = [](const MultiWayRow& r) { return r.target; };
  const auto pivot_tgt = column(piv, tgt, "en", "ar");
  const auto src_pivot = column(src, piv, "ko", "en");
  const auto src_tgt = column(src, tgt, "ko", "ar");

  std::size_t rows_checked = 0;
  for (double noise : {0.0, 0.3, 0.9}) {
    const auto r = build_synthetic_source(pivot_tgt, noisy_dictionary_translator(en, ko, noise, 5));
    bool same = r.corpus.size() == pivot_tgt.size();
    for (std::size_t i = 0; same && i < pivot_tgt.size(); ++i) {
      same = r.corpus.pairs[i].target().text() == pivot_tgt.pairs[i].target().text();
    }
    o.require(same, "target column changed at noise " + fixed(noise, 1));
    rows_checked += r.corpus.size();
  }
  const auto exact_source = build_synthetic_source(pivot_tgt, dictionary_translator(en, ko));
  const auto exact_target = build_synthetic_target(src_pivot, dictionary_translator(en, ar));
  o.require(exact_source.corpus.size() == src_tgt.size() && exact_target.corpus.size() == src_tgt.size(),
            "exact translator dropped rows");
  bool truthful = true;
  for (std::size_t i = 0; truthful && i < src_tgt.size(); ++i) {
    truthful = exact_source.corpus.pairs[i].source() == src_tgt.pairs[i].source() &&
               exact_source.corpus.pairs[i].target() == src_tgt.pairs[i].target() &&
               exact_target.corpus.pairs[i].source() == src_tgt.pairs[i].source() &&
               exact_target.corpus.pairs[i].target() == src_tgt.pairs[i].target();
  }
  o.require(truthful, "exact synthetic corpora differ from ground truth");
  o.note(std::to_string(rows_checked) + " noisy rows with untouched targets, exact corpora equal truth on " +
         std::to_string(src_tgt.size()) + " rows");
  return o;
}

// --- 6 -------------------------------------------------------------------------

Outcome learning_gate() {
  Outcome o;
  nmt::Hyperparams hp;
  hp.emb_dim = 16;
  hp.hidden_dim = 32;
  hp.enc_layers = 1;
  hp.vocab_size_src = {12};
  hp.vocab_size_tgt = 12;
  hp.epochs = 30;
  hp.seed = 1;
  nmt::Schedule schedule;
  schedule.batch_size = 4;
  schedule.decay_start = 25;
  Rng rng(5);
  auto sample = [&](std::size_t n) {
    std::vector<nmt::EncodedRow> rows;
    for (std::size_t i = 0; i < n; ++i) {
      nmt::TokenIds t;
      const std::size_t len = 1 + rng.index(8);
      for (std::size_t k = 0; k < len; ++k) t.push_back(4 + static_cast<int>(rng.index(8)));
      nmt::TokenIds s = t;
      s.push_back(nmt::Vocabulary::kEos);
      rows.push_back({{s}, t});
    }
    return rows;
  };
  const auto train_rows = sample(500);
  const auto test_rows = sample(200);
  auto model = nmt::init_model<double>(hp, 1);
  const auto history = nmt::train(model, train_rows, schedule);
  bool decreasing = history.size() >= 5;
  for (std::size_t e = 1; decreasing && e < 5; ++e) decreasing = history[e].mean_loss < history[e - 1].mean_loss;
  std::size_t exact = 0;
  for (const auto& r : test_rows) exact += nmt::translate(model, r.sources, 20) == r.target;
  const double accuracy = static_cast<double>(exact) / static_cast<double>(test_rows.size());
  o.require(accuracy >= 0.9, "accuracy below 90%");
  o.require(decreasing, "loss not strictly decreasing over the first 5 epochs");
  std::string losses;
  for (std::size_t e = 0; e < std::min<std::size_t>(5, history.size()); ++e) {
    losses += (e ? " " : "") + fixed(history[e].mean_loss, 3);
  }
  o.note(std::to_string(exact) + "/200 exact, first losses " + losses);
  return o;
}

// --- 7 and 8 -------------------------------------------------------------------

struct ExperimentRun {
  ExperimentResult result;
  double seconds = 0;
};

ExperimentRun run_toy(const fs::path& config, const fs::path& out, bool verbose) {
  auto cfg = load_experiment_config(config);
  cfg.output_dir = out;
  const auto start = std::chrono::steady_clock::now();
  ExperimentRun run;
  run.result = run_experiment(cfg, [&](const std::string& m) {
    if (verbose) std::fprintf(stderr, "  %s\n", m.c_str());
  });
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

double get(const ScoreTable& t, const std::string& model, const std::string& test) {
  const auto v = t.find(model, test);
  if (!v) throw std::runtime_error("missing score " + model + " / " + test);
  return *v;
}

Outcome trend_gate(const ExperimentRun& run, const ExperimentConfig& cfg) {
  Outcome o;
  const auto& t = run.result.table;
  const std::string in = cfg.in_domain_label, out = cfg.out_of_domain_label;
  const auto label = [](Variant v) { return variant_label(v); };
  for (const auto& test : {in, out}) {
    const double source = get(t, label(Variant::SyntheticSource), test);
    const double target = get(t, label(Variant::SyntheticTarget), test);
    o.require(source >= target, "(a) synthetic source < synthetic target on " + test);
    o.note("(a) " + test + " " + format_percent(source) + " vs " + format_percent(target));
  }
  if (!run.result.dual_source) {
    o.require(false, "(b) two-source task not run");
  } else {
    const auto& d = *run.result.dual_source;
    const double margin = 100.0 * (d.dual - std::max(d.only_first, d.only_second));
    o.require(margin >= 10.0, "(b) dual-encoder margin below 10 points");
    o.note("(b) " + format_percent(d.dual) + " vs " + format_percent(d.only_first) + " / " +
           format_percent(d.only_second));
  }
  const double v5 = get(t, label(Variant::SyntheticSourceMsm), out);
  const double v2 = get(t, label(Variant::Msm), out);
  const double v4 = get(t, label(Variant::SyntheticSource), out);
  o.require(v5 >= v2 && v5 >= v4, "(c) variant (5) below (2) or (4) on " + out);
  o.note("(c) " + out + " " + format_percent(v5) + " vs " + format_percent(v2) + " / " + format_percent(v4));
  return o;
}

std::vector<fs::path> hyp_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir / "hyp")) files.push_back(e.path().filename());
  std::sort(files.begin(), files.end());
  return files;
}

Outcome determinism_gate(const fs::path& config, const fs::path& a, const fs::path& b, bool verbose) {
  Outcome o;
  // b is a fresh second run; scores and every hypothesis file must match.
  run_toy(config, b, verbose);
  const auto scores_a = read_file(a / "scores.tsv");
  o.require(scores_a == read_file(b / "scores.tsv"), "scores.tsv differs between runs");
  const auto files = hyp_files(a);
  std::size_t same = 0;
  for (const auto& f : files) same += read_file(a / "hyp" / f) == read_file(b / "hyp" / f);
  o.require(same == files.size(), "hypotheses differ between runs");

  // Rerunning over a's cached stages evaluates checkpoints loaded from disk.
  std::vector<std::string> before;
  for (const auto& f : files) before.push_back(read_file(a / "hyp" / f));
  const auto reload = run_toy(config, a, verbose);
  std::size_t loaded = 0;
  for (const auto& s : reload.result.reused_stages) loaded += s.rfind("train/", 0) == 0;
  o.require(loaded == std::size(kAllVariants), "checkpoints were not reused");
  std::size_t reproduced = 0;
  for (std::size_t i = 0; i < files.size(); ++i) reproduced += read_file(a / "hyp" / files[i]) == before[i];
  o.require(reproduced == files.size(), "loaded checkpoints translate differently");
  o.require(read_file(a / "scores.tsv") == scores_a, "scores changed after reload");

  // Direct round trip of one checkpoint.
  const auto model = nmt::load_checkpoint<double>(a / "models" / "baseline" / "model.ckpt");
  const auto again = nmt::deserialize_checkpoint<double>(nmt::serialize_checkpoint(model));
  o.require(nmt::serialize_checkpoint(again) == read_file(a / "models" / "baseline" / "model.ckpt"),
            "checkpoint bytes change on round trip");
  o.note("scores.tsv identical across fresh runs, " + std::to_string(reproduced) + "/" +
         std::to_string(files.size()) + " hypothesis files reproduced from loaded checkpoints");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string config = TOY_CONFIG;
  std::string work;
  std::set<int> only;
  bool verbose = false;
  app.add_option("--config", config, "experiment config for criteria 7 and 8");
  app.add_option("--work-dir", work, "keep experiment outputs here instead of a temporary directory");
  app.add_option("--only", only, "run just these criteria");
  app.add_flag("--verbose", verbose, "stream experiment progress to stderr");
  CLI11_PARSE(app, argc, argv);

  TempDir temp("acceptance");
  const fs::path root = work.empty() ? temp.path() : fs::path(work);
  if (!work.empty()) {
    fs::remove_all(root / "run_a");
    fs::remove_all(root / "run_b");
  }
  int failures = 0;
  constexpr double kNoBudget = 0;
  auto run = [&](int id, const std::string& title, double budget_seconds, const std::function<Outcome()>& f) {
    if (!only.empty() && !only.count(id)) return;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = fixed(seconds, 1) + "s";
    if (budget_seconds != kNoBudget) {
      o.require(seconds < budget_seconds, "over the time budget");
      timing += ", budget " + fixed(budget_seconds, 0) + "s";
    }
    failures += !o.pass;
    std::printf("%s %d %s: %s [%s]\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  };

  run(1, "gradient", 120, gradient_gate);
  run(2, "bleu oracle", 30, bleu_gate);
  run(3, "bpe", kNoBudget, [] { return bpe_gate(TEST_DATA_DIR); });
  run(4, "pipeline", kNoBudget, pipeline_gate);
  run(5, "synthetic integrity", kNoBudget, synthetic_gate);
  run(6, "learning", 600, learning_gate);

  const bool need_experiment = only.empty() || only.count(7) || only.count(8);
  std::optional<ExperimentRun> first;
  std::string experiment_error;
  if (need_experiment) {
    try {
      first = run_toy(config, root / "run_a", verbose);
    } catch (const std::exception& e) {
      experiment_error = e.what();
    }
  }
  auto require_run = [&] {
    if (!first) throw std::runtime_error("experiment failed: " + experiment_error);
  };
  run(7, "trend", 1800, [&] {
    require_run();
    auto o = trend_gate(*first, load_experiment_config(config));
    o.note("experiment " + fixed(first->seconds, 1) + "s");
    o.require(first->seconds < 1800, "experiment over 30 minutes");
    return o;
  });
  run(8, "determinism", kNoBudget, [&] {
    require_run();
    return determinism_gate(config, root / "run_a", root / "run_b", verbose);
  });
  return failures == 0 ? 0 : 1;
}
