// Command-line front end. Every subcommand wraps one library operation; errors
// leave with exit status 1 (usage/config), 2 (data) or 3 (numerical) and the
// error name on stderr.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pivotmt/corpus.hpp"
#include "pivotmt/error.hpp"
#include "pivotmt/eval.hpp"
#include "pivotmt/experiment.hpp"
#include "pivotmt/nmt/checkpoint.hpp"
#include "pivotmt/nmt/pipeline.hpp"
#include "pivotmt/subword.hpp"
#include "pivotmt/synth.hpp"
#include "pivotmt/text.hpp"

namespace fs = std::filesystem;
using namespace pivotmt;

namespace {

constexpr const char* kSeedVariable = "PIVOTMT_SEED";

std::uint64_t default_seed() {
  const char* env = std::getenv(kSeedVariable);
  if (!env || !*env) return 1;
  try {
    std::size_t used = 0;
    const auto value = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument(env);
    return value;
  } catch (const std::logic_error&) {
    throw ConfigParse(std::string(kSeedVariable) + " is not an unsigned integer: " + env);
  }
}

std::vector<std::string> read_input_lines(const std::string& path) {
  if (path != "-") return read_lines(path);
  std::vector<std::string> lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(std::cin, line)) {
    ++line_no;
    if (!valid_utf8(line)) throw EncodingError(line_no);
    lines.push_back(line);
  }
  return lines;
}

void write_output_lines(const std::string& path, const std::vector<std::string>& lines) {
  if (path != "-") {
    write_lines_atomic(path, lines);
    return;
  }
  for (const auto& l : lines) std::cout << l << '\n';
}

std::vector<Sentence> to_sentences(const std::vector<std::string>& lines) {
  std::vector<Sentence> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.emplace_back(l);
  return out;
}

// --- filter -------------------------------------------------------------------

struct FilterArgs {
  std::string src, tgt, tsv, out_src, out_tgt, out_tsv;
  std::string src_lang = "src", tgt_lang = "tgt";
  FilterConfig cfg;
  std::vector<std::string> steps{"length", "dedup", "unk"};
  std::optional<std::size_t> truncate_n;
  std::optional<std::uint64_t> seed;
};

void run_filter(const FilterArgs& a) {
  a.cfg.validate();
  ParallelCorpus c;
  if (!a.tsv.empty()) {
    c = load_parallel_tsv(a.tsv);
  } else {
    if (a.src.empty() || a.tgt.empty()) throw ConfigParse("filter needs --tsv or both --src and --tgt");
    c = load_parallel(a.src, a.tgt, a.src_lang, a.tgt_lang);
  }
  const std::size_t before = c.size();
  for (const auto& step : a.steps) {
    if (step == "length") {
      c = length_filter(c, a.cfg);
    } else if (step == "dedup") {
      c = dedup(c);
    } else if (step == "unk") {
      c = unk_filter(c, a.cfg.unk_symbol);
    } else {
      throw ConfigParse("unknown filter step '" + step + "' (length, dedup, unk)");
    }
  }
  if (a.truncate_n) c = truncate(c, *a.truncate_n, a.seed.value_or(default_seed()));
  if (!a.out_tsv.empty()) {
    save_parallel_tsv(c, a.out_tsv);
  } else if (!a.out_src.empty() && !a.out_tgt.empty()) {
    save_parallel(c, a.out_src, a.out_tgt);
  } else {
    throw ConfigParse("filter needs --out or both --out-src and --out-tgt");
  }
  std::cerr << "kept " << c.size() << " of " << before << " pairs\n";
}

// --- subword -------------------------------------------------------------------

void run_bpe_train(const std::vector<std::string>& inputs, std::size_t vocab, const std::string& marker,
                   const std::string& out, bool report_coverage) {
  std::vector<Sentence> sentences;
  for (const auto& path : inputs) {
    for (auto& s : to_sentences(read_input_lines(path))) sentences.push_back(std::move(s));
  }
  auto model = train_bpe(sentences, vocab, marker);
  save_bpe(model, out);
  std::cerr << model.merges().size() << " merges, vocabulary " << model.vocab().size() << "\n";
  if (report_coverage) {
    const auto c = coverage(model, sentences);
    std::cout << "coverage\t" << format_percent(c.coverage) << "\t" << c.covered_tokens << "/" << c.total_tokens
              << "\n";
  }
}

void run_bpe_apply(const std::string& model_path, const std::string& input, const std::string& output) {
  const auto model = load_bpe(model_path);
  std::vector<std::string> out;
  for (const auto& line : read_input_lines(input)) out.push_back(apply_bpe(model, Sentence(line)).text());
  write_output_lines(output, out);
}

void run_bpe_decode(const std::string& model_path, std::string marker, const std::string& input,
                    const std::string& output) {
  if (!model_path.empty()) marker = load_bpe(model_path).eow_marker();
  std::vector<std::string> out;
  for (const auto& line : read_input_lines(input)) out.push_back(decode(split_whitespace(line), marker).text());
  write_output_lines(output, out);
}

// --- synth ---------------------------------------------------------------------

// identity | dict:<bundle> | cmd:<shell command>
std::unique_ptr<Translator> make_translator(const std::string& spec, const std::string& from,
                                            const std::string& to, double noise, std::uint64_t seed) {
  if (spec == "identity") return std::make_unique<IdentityTranslator>(from, to);
  if (spec.rfind("cmd:", 0) == 0) return std::make_unique<ProcessTranslator>(from, to, spec.substr(4));
  if (spec.rfind("dict:", 0) == 0) {
    const auto bundle = load_toy_spec_bundle(spec.substr(5));
    const ToyLanguageSpec* a = nullptr;
    const ToyLanguageSpec* b = nullptr;
    for (const auto& s : bundle) {
      if (s.lang_code == from) a = &s;
      if (s.lang_code == to) b = &s;
    }
    if (!a || !b) throw ConfigParse("spec bundle lacks language " + std::string(!a ? from : to));
    return std::make_unique<DictionaryTranslator>(*a, *b, noise, 0.0, seed);
  }
  throw ConfigParse("unknown translator '" + spec + "' (identity, dict:<specs>, cmd:<command>)");
}

struct SynthArgs {
  std::string mode;
  std::string src_pivot, pivot_tgt;
  std::string translator = "identity";
  std::string lang;
  double noise = 0.0;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  std::string out;
};

void run_synth(const SynthArgs& a) {
  const std::uint64_t seed = a.seed.value_or(default_seed());
  SynthesisResult r;
  if (a.mode == "target") {
    if (a.src_pivot.empty()) throw ConfigParse("--mode target needs --src-pivot");
    const auto c = load_parallel_tsv(a.src_pivot);
    if (a.lang.empty()) throw ConfigParse("--mode target needs --lang (the target language)");
    auto t = make_translator(a.translator, c.tgt_lang, a.lang, a.noise, seed);
    r = build_synthetic_target(c, *t, a.threads);
  } else if (a.mode == "source") {
    if (a.pivot_tgt.empty()) throw ConfigParse("--mode source needs --pivot-tgt");
    const auto c = load_parallel_tsv(a.pivot_tgt);
    if (a.lang.empty()) throw ConfigParse("--mode source needs --lang (the source language)");
    auto t = make_translator(a.translator, c.src_lang, a.lang, a.noise, seed);
    r = build_synthetic_source(c, *t, a.threads);
  } else {
    throw ConfigParse("--mode must be source or target");
  }
  save_parallel_tsv(r.corpus, a.out);
  std::cerr << r.corpus.size() << " synthetic pairs, " << r.failed_rows.size() << " translator failures\n";
}

// --- toy data ------------------------------------------------------------------

void run_toy_specs(const std::string& config_path, const std::string& out) {
  const auto cfg = load_experiment_config(config_path);
  std::string bundle;
  std::vector<ToyLanguageConfig> langs{cfg.source, cfg.pivot, cfg.target};
  langs.insert(langs.end(), cfg.extra_sources.begin(), cfg.extra_sources.end());
  for (const auto& l : langs) {
    const auto spec = l.spec_file ? load_toy_spec(*l.spec_file)
                                  : make_toy_language(l.code, cfg.concept_count, l.grammar,
                                                      {cfg.general.min_len, cfg.general.max_len},
                                                      mix_seed(cfg.seed, "language"), l.suffixes);
    bundle += render_toy_spec(spec);
  }
  write_file_atomic(out, bundle);
}

void run_toy_corpus(const std::string& bundle_path, const std::vector<std::string>& sources,
                    const std::string& target, std::size_t rows, std::uint64_t seed, const std::string& out) {
  const auto bundle = load_toy_spec_bundle(bundle_path);
  auto find = [&](const std::string& code) {
    for (const auto& s : bundle) {
      if (s.lang_code == code) return s;
    }
    throw ConfigParse("spec bundle lacks language " + code);
  };
  std::vector<ToyLanguageSpec> src;
  for (const auto& code : sources) src.push_back(find(code));
  save_multiway(generate_toy_multiway(src, find(target), rows, seed), out);
}

// --- align ---------------------------------------------------------------------

void run_align(const std::vector<std::string>& inputs, const std::string& mode, const std::string& out) {
  std::vector<ParallelCorpus> corpora;
  for (const auto& path : inputs) corpora.push_back(load_parallel_tsv(path));
  AlignMode m;
  if (mode == "disjoint") {
    m = AlignMode::Disjoint;
  } else if (mode == "by-target") {
    m = AlignMode::ByTargetKey;
  } else {
    throw ConfigParse("--mode must be disjoint or by-target");
  }
  const auto multi = align_multiway(corpora, m);
  save_multiway(multi, out);
  std::cerr << multi.size() << " rows\n";
}

// --- train / translate ---------------------------------------------------------

struct TrainArgs {
  std::string data, config, out, log;
  std::optional<int> emb, hidden, layers, epochs, batch, decay_start;
  std::optional<double> lr, clip;
  std::optional<std::uint64_t> seed;
};

void run_train(const TrainArgs& a) {
  nmt::Hyperparams hp;
  nmt::Schedule schedule;
  if (!a.config.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(a.config));
      if (j.contains("hyperparams")) nmt::from_json(j.at("hyperparams"), hp);
      if (j.contains("schedule")) nmt::from_json(j.at("schedule"), schedule);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigParse(e.what());
    }
  }
  if (a.emb) hp.emb_dim = *a.emb;
  if (a.hidden) hp.hidden_dim = *a.hidden;
  if (a.layers) hp.enc_layers = *a.layers;
  if (a.epochs) hp.epochs = *a.epochs;
  if (a.lr) hp.learning_rate = *a.lr;
  if (a.clip) hp.grad_clip_norm = *a.clip;
  if (a.batch) schedule.batch_size = *a.batch;
  if (a.decay_start) schedule.decay_start = *a.decay_start;
  hp.seed = a.seed.value_or(a.config.empty() ? default_seed() : hp.seed);

  const auto corpus = load_multiway(a.data);
  std::vector<nmt::Vocabulary> src_vocabs;
  nmt::Vocabulary tgt_vocab;
  nmt::build_vocabularies(corpus, src_vocabs, tgt_vocab);
  auto model = nmt::init_model<double>(hp, corpus.source_langs(), corpus.tgt_lang(), src_vocabs, tgt_vocab);
  const auto history = nmt::train(model, corpus, schedule, [](const nmt::EpochStats& e) {
    std::fprintf(stderr, "epoch %d\tloss %.6f\tlr %.6g\n", e.epoch, e.mean_loss, e.learning_rate);
  });
  nmt::save_checkpoint(model, a.out);
  const std::string log = nmt::render_training_log(history);
  if (a.log.empty()) {
    std::cout << log;
  } else {
    write_file_atomic(a.log, log);
  }
}

// Sources are given as LANG=FILE; an empty line leaves that source unavailable
// for the sentence.
void run_translate(const std::string& model_path, const std::vector<std::string>& sources,
                   const std::string& output, std::size_t max_len) {
  const auto model = nmt::load_checkpoint<double>(model_path);
  std::vector<std::optional<std::vector<std::string>>> columns(model.n_sources());
  std::optional<std::size_t> lines;
  for (const auto& arg : sources) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos) throw ConfigParse("--source expects LANG=FILE, got " + arg);
    const std::string lang = arg.substr(0, eq);
    const auto it = std::find(model.source_langs.begin(), model.source_langs.end(), lang);
    if (it == model.source_langs.end()) throw ConfigParse("model has no source language " + lang);
    auto col = read_input_lines(arg.substr(eq + 1));
    if (lines && *lines != col.size()) throw LineCountMismatch(*lines, col.size());
    lines = col.size();
    columns[static_cast<std::size_t>(it - model.source_langs.begin())] = std::move(col);
  }
  if (!lines) throw DataError("NoSourceProvided", "give at least one --source LANG=FILE");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < *lines; ++i) {
    std::vector<std::optional<Sentence>> row(model.n_sources());
    for (std::size_t n = 0; n < columns.size(); ++n) {
      if (columns[n] && !split_whitespace((*columns[n])[i]).empty()) row[n] = Sentence((*columns[n])[i]);
    }
    out.push_back(nmt::translate_sentence(model, row, max_len).text());
  }
  write_output_lines(output, out);
}

// --- evaluate / experiment -----------------------------------------------------

void run_evaluate(const std::string& hyp, const std::string& ref, const std::vector<std::string>& suffixes,
                  const BleuOptions& options, const std::string& format) {
  const auto hyps = to_sentences(read_input_lines(hyp));
  const auto refs = to_sentences(read_input_lines(ref));
  std::unique_ptr<Segmenter> seg;
  if (suffixes.empty()) {
    seg = std::make_unique<WhitespaceSegmenter>();
  } else {
    seg = std::make_unique<SuffixStubSegmenter>(suffixes);
  }
  const auto report = bleu4(hyps, refs, *seg, options);
  if (format == "json") {
    std::cout << render_report_json(report) << "\n";
  } else if (format == "tsv") {
    std::cout << render_report_tsv(report);
  } else {
    throw ConfigParse("--format must be tsv or json");
  }
}

void run_experiment_cmd(const std::string& config, const std::string& output_dir, std::optional<std::uint64_t> seed,
                        std::optional<unsigned> jobs, bool quiet) {
  auto cfg = load_experiment_config(config);
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  if (seed) {
    cfg.seed = *seed;
  } else if (std::getenv(kSeedVariable)) {
    cfg.seed = default_seed();
  }
  if (jobs) cfg.jobs = *jobs;
  const auto result = run_experiment(cfg, [&](const std::string& m) {
    if (!quiet) std::cerr << m << "\n";
  });
  std::cout << render_score_table(result.table);
  if (result.dual_source) {
    std::cout << "\ntwo-source task\tBLEU\n"
              << "both sources\t" << format_percent(result.dual_source->dual) << "\n"
              << "first source only\t" << format_percent(result.dual_source->only_first) << "\n"
              << "second source only\t" << format_percent(result.dual_source->only_second) << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pivot-based corpus extension and multi-source NMT on toy languages"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;

  FilterArgs filter;
  auto* f = app.add_subcommand("filter", "length filter, dedup and <unk> removal, optional truncation");
  f->add_option("--src", filter.src, "source side, one sentence per line");
  f->add_option("--tgt", filter.tgt, "target side, one sentence per line");
  f->add_option("--tsv", filter.tsv, "parallel corpus as a two-column TSV (instead of --src/--tgt)");
  f->add_option("--src-lang", filter.src_lang);
  f->add_option("--tgt-lang", filter.tgt_lang);
  f->add_option("--min-len", filter.cfg.min_len)->capture_default_str();
  f->add_option("--max-len", filter.cfg.max_len)->capture_default_str();
  f->add_option("--max-ratio", filter.cfg.max_ratio)->capture_default_str();
  f->add_option("--unk", filter.cfg.unk_symbol)->capture_default_str();
  f->add_option("--steps", filter.steps, "subset and order of: length dedup unk")->delimiter(',');
  f->add_option("--truncate", filter.truncate_n, "keep a seeded sample of this many pairs");
  f->add_option("--seed", filter.seed);
  f->add_option("--out", filter.out_tsv, "output TSV");
  f->add_option("--out-src", filter.out_src);
  f->add_option("--out-tgt", filter.out_tgt);

  std::vector<std::string> bpe_inputs;
  std::size_t bpe_vocab = 8000;
  std::string bpe_marker(kDefaultEowMarker), bpe_out;
  bool bpe_coverage = false;
  auto* bt = app.add_subcommand("bpe-train", "learn BPE merges");
  bt->add_option("--input", bpe_inputs, "training text, one sentence per line")->required();
  bt->add_option("--vocab", bpe_vocab, "target vocabulary size")->capture_default_str();
  bt->add_option("--marker", bpe_marker, "end-of-word marker")->capture_default_str();
  bt->add_option("--out", bpe_out)->required();
  bt->add_flag("--coverage", bpe_coverage, "print word coverage on the training text");

  std::string bpe_model, io_in = "-", io_out = "-";
  auto* ba = app.add_subcommand("bpe-apply", "segment text with a BPE model");
  ba->add_option("--model", bpe_model)->required();
  ba->add_option("--input", io_in)->capture_default_str();
  ba->add_option("--output", io_out)->capture_default_str();

  auto* bd = app.add_subcommand("bpe-decode", "join BPE symbols back into words");
  bd->add_option("--model", bpe_model, "model whose marker to use");
  bd->add_option("--marker", bpe_marker)->capture_default_str();
  bd->add_option("--input", io_in)->capture_default_str();
  bd->add_option("--output", io_out)->capture_default_str();

  SynthArgs synth;
  auto* sy = app.add_subcommand("synth", "build a synthetic source or synthetic target corpus");
  sy->add_option("--mode", synth.mode, "source | target")->required();
  sy->add_option("--src-pivot", synth.src_pivot, "source-pivot TSV (mode target)");
  sy->add_option("--pivot-tgt", synth.pivot_tgt, "pivot-target TSV (mode source)");
  sy->add_option("--translator", synth.translator, "identity | dict:<spec bundle> | cmd:<command>")
      ->capture_default_str();
  sy->add_option("--lang", synth.lang, "language the pivot is translated into");
  sy->add_option("--noise", synth.noise, "token drop probability of the dictionary translator");
  sy->add_option("--seed", synth.seed);
  sy->add_option("--threads", synth.threads)->capture_default_str();
  sy->add_option("--out", synth.out)->required();

  std::string toy_config, toy_out;
  auto* ts = app.add_subcommand("toy-specs", "write the toy language specs of an experiment config");
  ts->add_option("--config", toy_config)->required();
  ts->add_option("--out", toy_out)->required();

  std::string toy_bundle, toy_target;
  std::vector<std::string> toy_sources;
  std::size_t toy_rows = 100;
  auto* tc = app.add_subcommand("toy-corpus", "generate an aligned toy corpus");
  tc->add_option("--specs", toy_bundle, "spec bundle")->required();
  tc->add_option("--source", toy_sources, "source language code (repeatable)")->required();
  tc->add_option("--target", toy_target)->required();
  tc->add_option("--rows", toy_rows)->capture_default_str();
  tc->add_option("--seed", seed);
  tc->add_option("--out", toy_out)->required();

  std::vector<std::string> align_inputs;
  std::string align_mode = "disjoint", align_out;
  auto* al = app.add_subcommand("align", "combine bitexts sharing a target language");
  al->add_option("--input", align_inputs, "parallel TSV (repeatable)")->required();
  al->add_option("--mode", align_mode, "disjoint | by-target")->capture_default_str();
  al->add_option("--out", align_out)->required();

  TrainArgs train;
  auto* tr = app.add_subcommand("train", "train a multi-source model on a subword-segmented N-way TSV");
  tr->add_option("--data", train.data)->required();
  tr->add_option("--config", train.config, "JSON with hyperparams and schedule sections");
  tr->add_option("--emb", train.emb);
  tr->add_option("--hidden", train.hidden);
  tr->add_option("--layers", train.layers);
  tr->add_option("--epochs", train.epochs);
  tr->add_option("--lr", train.lr);
  tr->add_option("--clip", train.clip);
  tr->add_option("--batch", train.batch);
  tr->add_option("--decay-start", train.decay_start);
  tr->add_option("--seed", train.seed);
  tr->add_option("--out", train.out, "checkpoint path")->required();
  tr->add_option("--log", train.log, "per-epoch TSV log (stdout when omitted)");

  std::string model_path;
  std::vector<std::string> translate_sources;
  std::size_t max_len = 100;
  auto* tl = app.add_subcommand("translate", "greedy translation with a trained model");
  tl->add_option("--model", model_path)->required();
  tl->add_option("--source", translate_sources, "LANG=FILE (repeatable)")->required();
  tl->add_option("--output", io_out)->capture_default_str();
  tl->add_option("--max-len", max_len)->capture_default_str();

  std::string hyp, ref, format = "tsv";
  std::vector<std::string> suffixes;
  BleuOptions bleu;
  auto* ev = app.add_subcommand("evaluate", "corpus BLEU-4");
  ev->add_option("--hyp", hyp)->required();
  ev->add_option("--ref", ref)->required();
  ev->add_option("--suffixes", suffixes, "split these suffixes off before scoring")->delimiter(',');
  ev->add_flag("--lowercase", bleu.lowercase);
  ev->add_flag("--smooth", bleu.smooth, "add-one smoothing of 2- to 4-gram precisions");
  ev->add_option("--format", format, "tsv | json")->capture_default_str();

  std::string exp_config, exp_out;
  std::optional<unsigned> jobs;
  bool quiet = false;
  auto* ex = app.add_subcommand("experiment", "run the five-variant experiment and print the score table");
  ex->add_option("--config", exp_config)->required();
  ex->add_option("--output-dir", exp_out);
  ex->add_option("--seed", seed);
  ex->add_option("--jobs", jobs);
  ex->add_flag("--quiet", quiet);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::Usage);
  }

  try {
    if (*f) run_filter(filter);
    if (*bt) run_bpe_train(bpe_inputs, bpe_vocab, bpe_marker, bpe_out, bpe_coverage);
    if (*ba) run_bpe_apply(bpe_model, io_in, io_out);
    if (*bd) run_bpe_decode(bpe_model, bpe_marker, io_in, io_out);
    if (*sy) run_synth(synth);
    if (*ts) run_toy_specs(toy_config, toy_out);
    if (*tc) run_toy_corpus(toy_bundle, toy_sources, toy_target, toy_rows, seed.value_or(default_seed()), toy_out);
    if (*al) run_align(align_inputs, align_mode, align_out);
    if (*tr) run_train(train);
    if (*tl) run_translate(model_path, translate_sources, io_out, max_len);
    if (*ev) run_evaluate(hyp, ref, suffixes, bleu, format);
    if (*ex) run_experiment_cmd(exp_config, exp_out, seed, jobs, quiet);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: IoError: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::Data);
  } catch (const std::bad_alloc&) {
    std::cerr << "error: OutOfMemory\n";
    return static_cast<int>(ErrorKind::Numerical);
  }
  return 0;
}
