#include "pivotmt/experiment.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <future>
#include <map>
#include <memory>
#include <set>
#include <tuple>

#include "pivotmt/nmt/checkpoint.hpp"
#include "pivotmt/nmt/pipeline.hpp"
#include "pivotmt/random.hpp"
#include "pivotmt/text.hpp"

namespace pivotmt {

namespace fs = std::filesystem;
using nlohmann::json;

// --- Configuration -------------------------------------------------------------

SamplingDomain DomainConfig::sampling() const {
  SamplingDomain d;
  for (int c = concept_begin; c < concept_end; ++c) d.concepts.push_back(c);
  d.length_range = {min_len, max_len};
  return d;
}

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigParse(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigParse("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json language_json(const ToyLanguageConfig& l) {
  json j{{"code", l.code}, {"grammar", std::string(to_string(l.grammar))}, {"suffixes", l.suffixes}};
  if (l.spec_file) j["spec_file"] = l.spec_file->string();
  return j;
}

ToyLanguageConfig language_from(const json& j, ToyLanguageConfig l, const std::string& where) {
  check_keys(j, {"code", "grammar", "suffixes", "spec_file"}, where);
  read(j, "code", l.code);
  if (j.contains("grammar")) l.grammar = parse_grammar(j.at("grammar").get<std::string>());
  read(j, "suffixes", l.suffixes);
  if (j.contains("spec_file")) l.spec_file = fs::path(j.at("spec_file").get<std::string>());
  return l;
}

json domain_json(const DomainConfig& d) {
  return json{{"concepts", {d.concept_begin, d.concept_end}}, {"length", {d.min_len, d.max_len}}};
}

DomainConfig domain_from(const json& j, DomainConfig d, const std::string& where) {
  check_keys(j, {"concepts", "length"}, where);
  if (j.contains("concepts")) {
    auto c = j.at("concepts").get<std::vector<int>>();
    if (c.size() != 2) throw ConfigParse(where + ".concepts must be [begin, end]");
    d.concept_begin = c[0];
    d.concept_end = c[1];
  }
  if (j.contains("length")) {
    auto l = j.at("length").get<std::vector<std::size_t>>();
    if (l.size() != 2) throw ConfigParse(where + ".length must be [min, max]");
    d.min_len = l[0];
    d.max_len = l[1];
  }
  return d;
}

void validate_domain(const DomainConfig& d, int concept_count, const std::string& where) {
  if (d.concept_begin < 0 || d.concept_begin >= d.concept_end || d.concept_end > concept_count) {
    throw ConfigParse(where + " concept range outside [0, concept_count)");
  }
  if (d.min_len < 1 || d.min_len > d.max_len) throw ConfigParse(where + " length range invalid");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (concept_count < 1) throw ConfigParse("concept_count must be positive");
  validate_domain(in_domain, concept_count, "in_domain");
  validate_domain(out_of_domain, concept_count, "out_of_domain");
  validate_domain(general, concept_count, "general");
  if (dual_source.enabled) validate_domain(dual_source.part, concept_count, "dual_source.part");
  std::set<std::string> codes{source.code, pivot.code, target.code};
  for (const auto& l : extra_sources) codes.insert(l.code);
  if (codes.size() != 3 + extra_sources.size()) throw ConfigParse("language codes must be distinct");
  if (sizes.baseline_n == 0) throw ConfigParse("sizes.baseline_n must be positive");
  if (sizes.test_in_domain_n == 0 || sizes.test_out_of_domain_n == 0) {
    throw ConfigParse("test sets must be non-empty");
  }
  if (sizes.combined_msm_extra_n < sizes.msm_extra_n) {
    throw ConfigParse("sizes.combined_msm_extra_n must be at least sizes.msm_extra_n");
  }
  if (sizes.pool_factor < 1.0) throw ConfigParse("sizes.pool_factor must be at least 1");
  if (target_noise < 0 || target_noise > 1 || source_noise < 0 || source_noise > 1) {
    throw ConfigParse("noise levels must lie in [0, 1]");
  }
  if (jobs < 1) throw ConfigParse("jobs must be positive");
  filter.validate();
  // Vocabulary sizes are filled in from the subword models.
  nmt::Hyperparams hp = hyperparams;
  hp.vocab_size_src = {1};
  hp.vocab_size_tgt = 1;
  hp.validate();
  if (schedule.batch_size < 1) throw ConfigParse("schedule.batch_size must be positive");
}

void to_json(json& j, const ExperimentConfig& c) {
  json extras = json::array();
  for (const auto& l : c.extra_sources) extras.push_back(language_json(l));
  nmt::Hyperparams hp = c.hyperparams;
  json hyper = hp;
  hyper.erase("vocab_size_src");
  hyper.erase("vocab_size_tgt");
  j = json{
      {"seed", c.seed},
      {"concept_count", c.concept_count},
      {"languages",
       {{"source", language_json(c.source)},
        {"pivot", language_json(c.pivot)},
        {"target", language_json(c.target)},
        {"extra_sources", extras}}},
      {"domains",
       {{"in_domain", domain_json(c.in_domain)},
        {"out_of_domain", domain_json(c.out_of_domain)},
        {"general", domain_json(c.general)}}},
      {"test_labels", {c.in_domain_label, c.out_of_domain_label}},
      {"sizes",
       {{"baseline_n", c.sizes.baseline_n},
        {"msm_extra_n", c.sizes.msm_extra_n},
        {"synthetic_target_n", c.sizes.synthetic_target_n},
        {"synthetic_source_n", c.sizes.synthetic_source_n},
        {"combined_synthetic_source_n", c.sizes.combined_synthetic_source_n},
        {"combined_msm_extra_n", c.sizes.combined_msm_extra_n},
        {"dev_n", c.sizes.dev_n},
        {"test_in_domain_n", c.sizes.test_in_domain_n},
        {"test_out_of_domain_n", c.sizes.test_out_of_domain_n},
        {"pool_factor", c.sizes.pool_factor}}},
      {"bpe", {{"source_vocab", c.bpe_source_vocab}, {"target_vocab", c.bpe_target_vocab}}},
      {"hyperparams", hyper},
      {"schedule", c.schedule},
      {"noise", {{"pivot_to_target", c.target_noise}, {"pivot_to_source", c.source_noise}}},
      {"filter",
       {{"min_len", c.filter.min_len},
        {"max_len", c.filter.max_len},
        {"max_ratio", c.filter.max_ratio},
        {"unk_symbol", c.filter.unk_symbol}}},
      {"bleu", {{"lowercase", c.bleu.lowercase}, {"smooth", c.bleu.smooth}}},
      {"max_decode_len", c.max_decode_len},
      {"jobs", c.jobs},
      {"output_dir", c.output_dir.string()},
      {"dual_source",
       {{"enabled", c.dual_source.enabled},
        {"train_n", c.dual_source.train_n},
        {"test_n", c.dual_source.test_n},
        {"part", domain_json(c.dual_source.part)},
        {"epochs", c.dual_source.epochs}}},
  };
}

void from_json(const json& j, ExperimentConfig& c) {
  check_keys(j,
             {"seed", "concept_count", "languages", "domains", "test_labels", "sizes", "bpe",
              "hyperparams", "schedule", "noise", "filter", "bleu", "max_decode_len", "jobs",
              "output_dir", "dual_source"},
             "config");
  read(j, "seed", c.seed);
  read(j, "concept_count", c.concept_count);
  if (j.contains("languages")) {
    const auto& l = j.at("languages");
    check_keys(l, {"source", "pivot", "target", "extra_sources"}, "languages");
    if (l.contains("source")) c.source = language_from(l.at("source"), c.source, "languages.source");
    if (l.contains("pivot")) c.pivot = language_from(l.at("pivot"), c.pivot, "languages.pivot");
    if (l.contains("target")) c.target = language_from(l.at("target"), c.target, "languages.target");
    if (l.contains("extra_sources")) {
      c.extra_sources.clear();
      for (const auto& e : l.at("extra_sources")) {
        c.extra_sources.push_back(language_from(e, {}, "languages.extra_sources"));
      }
    }
  }
  if (j.contains("domains")) {
    const auto& d = j.at("domains");
    check_keys(d, {"in_domain", "out_of_domain", "general"}, "domains");
    if (d.contains("in_domain")) c.in_domain = domain_from(d.at("in_domain"), c.in_domain, "domains.in_domain");
    if (d.contains("out_of_domain")) {
      c.out_of_domain = domain_from(d.at("out_of_domain"), c.out_of_domain, "domains.out_of_domain");
    }
    if (d.contains("general")) c.general = domain_from(d.at("general"), c.general, "domains.general");
  }
  if (j.contains("test_labels")) {
    auto labels = j.at("test_labels").get<std::vector<std::string>>();
    if (labels.size() != 2) throw ConfigParse("test_labels must hold two names");
    c.in_domain_label = labels[0];
    c.out_of_domain_label = labels[1];
  }
  if (j.contains("sizes")) {
    const auto& s = j.at("sizes");
    check_keys(s,
               {"baseline_n", "msm_extra_n", "synthetic_target_n", "synthetic_source_n",
                "combined_synthetic_source_n", "combined_msm_extra_n", "dev_n", "test_in_domain_n",
                "test_out_of_domain_n", "pool_factor"},
               "sizes");
    read(s, "baseline_n", c.sizes.baseline_n);
    read(s, "msm_extra_n", c.sizes.msm_extra_n);
    read(s, "synthetic_target_n", c.sizes.synthetic_target_n);
    read(s, "synthetic_source_n", c.sizes.synthetic_source_n);
    read(s, "combined_synthetic_source_n", c.sizes.combined_synthetic_source_n);
    read(s, "combined_msm_extra_n", c.sizes.combined_msm_extra_n);
    read(s, "dev_n", c.sizes.dev_n);
    read(s, "test_in_domain_n", c.sizes.test_in_domain_n);
    read(s, "test_out_of_domain_n", c.sizes.test_out_of_domain_n);
    read(s, "pool_factor", c.sizes.pool_factor);
  }
  if (j.contains("bpe")) {
    const auto& b = j.at("bpe");
    check_keys(b, {"source_vocab", "target_vocab"}, "bpe");
    read(b, "source_vocab", c.bpe_source_vocab);
    read(b, "target_vocab", c.bpe_target_vocab);
  }
  if (j.contains("hyperparams")) {
    const auto& h = j.at("hyperparams");
    check_keys(h,
               {"emb_dim", "hidden_dim", "enc_layers", "learning_rate", "epochs", "grad_clip_norm",
                "seed", "init_range"},
               "hyperparams");
    nmt::from_json(h, c.hyperparams);
  }
  if (j.contains("schedule")) {
    check_keys(j.at("schedule"), {"batch_size", "decay_start", "decay", "shuffle"}, "schedule");
    nmt::from_json(j.at("schedule"), c.schedule);
  }
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    check_keys(n, {"pivot_to_target", "pivot_to_source"}, "noise");
    read(n, "pivot_to_target", c.target_noise);
    read(n, "pivot_to_source", c.source_noise);
  }
  if (j.contains("filter")) {
    const auto& f = j.at("filter");
    check_keys(f, {"min_len", "max_len", "max_ratio", "unk_symbol"}, "filter");
    read(f, "min_len", c.filter.min_len);
    read(f, "max_len", c.filter.max_len);
    read(f, "max_ratio", c.filter.max_ratio);
    read(f, "unk_symbol", c.filter.unk_symbol);
  }
  if (j.contains("bleu")) {
    const auto& b = j.at("bleu");
    check_keys(b, {"lowercase", "smooth"}, "bleu");
    read(b, "lowercase", c.bleu.lowercase);
    read(b, "smooth", c.bleu.smooth);
  }
  read(j, "max_decode_len", c.max_decode_len);
  read(j, "jobs", c.jobs);
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("dual_source")) {
    const auto& d = j.at("dual_source");
    check_keys(d, {"enabled", "train_n", "test_n", "part", "epochs"}, "dual_source");
    read(d, "enabled", c.dual_source.enabled);
    read(d, "train_n", c.dual_source.train_n);
    read(d, "test_n", c.dual_source.test_n);
    if (d.contains("part")) c.dual_source.part = domain_from(d.at("part"), c.dual_source.part, "dual_source.part");
    read(d, "epochs", c.dual_source.epochs);
  }
}

ExperimentConfig parse_experiment_config(std::string_view json_text) {
  ExperimentConfig cfg;
  try {
    from_json(json::parse(json_text), cfg);
  } catch (const json::exception& e) {
    throw ConfigParse(e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  auto cfg = parse_experiment_config(read_file(path));
  // Relative spec files resolve against the config's directory.
  auto resolve = [&](ToyLanguageConfig& l) {
    if (l.spec_file && l.spec_file->is_relative()) l.spec_file = path.parent_path() / *l.spec_file;
  };
  resolve(cfg.source);
  resolve(cfg.pivot);
  resolve(cfg.target);
  for (auto& l : cfg.extra_sources) resolve(l);
  return cfg;
}

// --- Score table ---------------------------------------------------------------

std::optional<double> ScoreTable::find(const std::string& model, const std::string& test_set) const {
  for (const auto& r : rows) {
    if (r.model == model && r.test_set == test_set) return r.bleu;
  }
  return std::nullopt;
}

std::string render_score_table(const ScoreTable& table) {
  std::vector<std::string> models;
  std::vector<std::string> tests;
  for (const auto& r : table.rows) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
    if (std::find(tests.begin(), tests.end(), r.test_set) == tests.end()) tests.push_back(r.test_set);
  }
  std::string out = "model";
  for (const auto& t : tests) out += "\t" + t;
  out += "\n";
  for (const auto& m : models) {
    out += m;
    for (const auto& t : tests) {
      auto v = table.find(m, t);
      out += "\t" + (v ? format_percent(*v) : std::string("-"));
    }
    out += "\n";
  }
  return out;
}

std::string variant_label(Variant v) {
  switch (v) {
    case Variant::Baseline: return "(1) Baseline";
    case Variant::Msm: return "(2) (1) + MSM";
    case Variant::SyntheticTarget: return "(3) (1) + Synthetic target";
    case Variant::SyntheticSource: return "(4) (1) + Synthetic source";
    case Variant::SyntheticSourceMsm: return "(5) (1) + Syn-Source + MSM";
  }
  return {};
}

std::string variant_id(Variant v) {
  switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::Msm: return "msm";
    case Variant::SyntheticTarget: return "synthetic_target";
    case Variant::SyntheticSource: return "synthetic_source";
    case Variant::SyntheticSourceMsm: return "synthetic_source_msm";
  }
  return {};
}

Sentence apply_bpe(const BpeModel& model, const Sentence& sentence) {
  return Sentence(join(encode(model, sentence), " "));
}

// --- Pipeline ------------------------------------------------------------------

namespace {

std::string hex_digest(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a(bytes));
  return buf;
}

void say(const Logger& log, const std::string& message) {
  if (log) log(message);
}

// Artifacts of a stage are current when they all exist and the sidecar digest
// written after them matches.
class StageCache {
 public:
  explicit StageCache(fs::path root) : root_(std::move(root)) {}

  bool current(const std::string& stage, const std::string& digest, const std::vector<fs::path>& artifacts) const {
    const fs::path sidecar = sidecar_path(stage);
    if (!fs::exists(sidecar)) return false;
    for (const auto& a : artifacts) {
      if (!fs::exists(a)) return false;
    }
    return read_file(sidecar) == digest + "\n";
  }

  void commit(const std::string& stage, const std::string& digest) const {
    write_file_atomic(sidecar_path(stage), digest + "\n");
  }

 private:
  fs::path sidecar_path(const std::string& stage) const {
    std::string name = stage;
    std::replace(name.begin(), name.end(), '/', '.');
    return root_ / "digests" / (name + ".digest");
  }
  fs::path root_;
};

template <typename F>
auto in_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    std::string detail = e.what();
    const std::string prefix = e.name() + ": ";
    if (detail.rfind(prefix, 0) == 0) detail.erase(0, prefix.size());
    throw Error(e.kind(), e.name(), "stage " + stage + ": " + detail);
  }
}

ToyLanguageSpec make_language(const ExperimentConfig& cfg, const ToyLanguageConfig& l) {
  if (l.spec_file) return load_toy_spec(*l.spec_file);
  return make_toy_language(l.code, cfg.concept_count, l.grammar, {cfg.general.min_len, cfg.general.max_len},
                           mix_seed(cfg.seed, "language"), l.suffixes);
}

std::size_t pool_size(const ExperimentConfig& cfg, std::size_t needed) {
  return static_cast<std::size_t>(std::ceil(static_cast<double>(needed) * cfg.sizes.pool_factor));
}

// A cleaned bitext of `n` pairs drawn from `domain`.
ParallelCorpus toy_bitext(const ExperimentConfig& cfg, const ToyLanguageSpec& src, const ToyLanguageSpec& tgt,
                          const DomainConfig& domain, std::size_t n, const std::string& salt) {
  auto multi = generate_toy_multiway({src}, tgt, domain.sampling(), pool_size(cfg, n), mix_seed(cfg.seed, salt));
  auto cleaned = clean(column(multi, 0), cfg.filter);
  if (cleaned.size() < n) {
    throw DataError("InsufficientData", salt + ": " + std::to_string(cleaned.size()) +
                                            " pairs survive filtering, " + std::to_string(n) +
                                            " needed; raise sizes.pool_factor or widen the domain");
  }
  return truncate(cleaned, n, mix_seed(cfg.seed, salt + "/truncate"));
}

ParallelCorpus slice(const ParallelCorpus& c, std::size_t begin, std::size_t end) {
  ParallelCorpus out{c.src_lang, c.tgt_lang, {}};
  out.pairs.assign(c.pairs.begin() + static_cast<std::ptrdiff_t>(begin),
                   c.pairs.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

struct Languages {
  ToyLanguageSpec source, pivot, target;
  std::vector<ToyLanguageSpec> extras;
};

Languages build_languages(const ExperimentConfig& cfg) {
  Languages l{make_language(cfg, cfg.source), make_language(cfg, cfg.pivot), make_language(cfg, cfg.target), {}};
  for (const auto& e : cfg.extra_sources) l.extras.push_back(make_language(cfg, e));
  return l;
}

struct DataSets {
  ParallelCorpus test_in, test_out, dev;
  std::map<Variant, MultiWayCorpus> variants;
  std::size_t synthetic_target_failures = 0;
  std::size_t synthetic_source_failures = 0;
};

std::vector<std::string> msm_langs(const ExperimentConfig& cfg) {
  std::vector<std::string> langs{cfg.source.code, cfg.pivot.code};
  for (const auto& e : cfg.extra_sources) langs.push_back(e.code);
  return langs;
}

DataSets build_data(const ExperimentConfig& cfg, const Languages& lang) {
  const auto& s = cfg.sizes;
  DataSets d;
  // Production bitext: test, dev and baseline training rows are disjoint.
  const std::size_t prod_n = s.test_in_domain_n + s.dev_n + s.baseline_n;
  auto prod = toy_bitext(cfg, lang.source, lang.target, cfg.in_domain, prod_n, "prod");
  std::vector<std::size_t> order(prod.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng(mix_seed(cfg.seed, "prod/split")).shuffle(order);
  auto pick = [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
    std::sort(idx.begin(), idx.end());
    ParallelCorpus out{prod.src_lang, prod.tgt_lang, {}};
    for (auto i : idx) out.pairs.push_back(prod.pairs[i]);
    return out;
  };
  d.test_in = pick(0, s.test_in_domain_n);
  d.dev = pick(s.test_in_domain_n, s.test_in_domain_n + s.dev_n);
  const auto baseline = pick(s.test_in_domain_n + s.dev_n, prod_n);
  d.test_out = toy_bitext(cfg, lang.source, lang.target, cfg.out_of_domain, s.test_out_of_domain_n, "test_out");

  // Synthetic target: in-domain source-pivot text, pivot translated to target.
  ParallelCorpus synth_tgt{lang.source.lang_code, lang.target.lang_code, {}};
  if (s.synthetic_target_n > 0) {
    auto src_pivot = toy_bitext(cfg, lang.source, lang.pivot, cfg.in_domain, pool_size(cfg, s.synthetic_target_n),
                                "source_pivot");
    DictionaryTranslator to_target(lang.pivot, lang.target, cfg.target_noise, 0.0,
                                   mix_seed(cfg.seed, "noise/target"));
    auto r = build_synthetic_target(src_pivot, to_target);
    d.synthetic_target_failures = r.failed_rows.size();
    synth_tgt = clean(r.corpus, cfg.filter);
  }

  // Synthetic source: general pivot-target text, pivot translated to source.
  ParallelCorpus synth_src{lang.source.lang_code, lang.target.lang_code, {}};
  const std::size_t synth_src_needed = std::max(s.synthetic_source_n, s.combined_synthetic_source_n);
  if (synth_src_needed > 0) {
    auto pivot_tgt = toy_bitext(cfg, lang.pivot, lang.target, cfg.general, pool_size(cfg, synth_src_needed),
                                "pivot_target");
    DictionaryTranslator to_source(lang.pivot, lang.source, cfg.source_noise, 0.0,
                                   mix_seed(cfg.seed, "noise/source"));
    auto r = build_synthetic_source(pivot_tgt, to_source);
    d.synthetic_source_failures = r.failed_rows.size();
    synth_src = clean(r.corpus, cfg.filter);
  }

  // Out-of-domain bitexts of the other source languages.
  std::vector<ParallelCorpus> extra_full;
  std::vector<const ToyLanguageSpec*> extra_specs{&lang.pivot};
  for (const auto& e : lang.extras) extra_specs.push_back(&e);
  for (const auto* spec : extra_specs) {
    extra_full.push_back(toy_bitext(cfg, *spec, lang.target, cfg.out_of_domain, s.combined_msm_extra_n,
                                    "extra/" + spec->lang_code));
  }

  auto single = [&](const ParallelCorpus& c) { return align_multiway({c}, AlignMode::Disjoint); };
  auto multi = [&](const ParallelCorpus& ko, std::size_t extra_n) {
    std::vector<ParallelCorpus> parts{ko};
    for (const auto& e : extra_full) parts.push_back(slice(e, 0, extra_n));
    return align_multiway(parts, AlignMode::Disjoint);
  };
  d.variants[Variant::Baseline] = single(baseline);
  d.variants[Variant::Msm] = multi(baseline, s.msm_extra_n);
  d.variants[Variant::SyntheticTarget] =
      single(extend(baseline, synth_tgt, s.baseline_n + s.synthetic_target_n, mix_seed(cfg.seed, "extend/target")));
  d.variants[Variant::SyntheticSource] =
      single(extend(baseline, synth_src, s.baseline_n + s.synthetic_source_n, mix_seed(cfg.seed, "extend/source")));
  d.variants[Variant::SyntheticSourceMsm] =
      multi(extend(baseline, synth_src, s.baseline_n + s.combined_synthetic_source_n,
                   mix_seed(cfg.seed, "extend/combined")),
            s.combined_msm_extra_n);
  return d;
}

// Per-language subword models trained on everything that language's side of
// any training set contains.
std::map<std::string, BpeModel> train_subwords(const ExperimentConfig& cfg,
                                               const std::vector<const MultiWayCorpus*>& corpora) {
  std::map<std::string, std::vector<Sentence>> text;
  std::string tgt_lang;
  for (const auto* c : corpora) {
    tgt_lang = c->tgt_lang();
    for (const auto& row : c->rows()) {
      for (std::size_t i = 0; i < row.sources.size(); ++i) {
        if (row.sources[i]) text[c->source_langs()[i]].push_back(*row.sources[i]);
      }
      text[c->tgt_lang()].push_back(row.target);
    }
  }
  std::map<std::string, BpeModel> models;
  for (const auto& [code, sentences] : text) {
    const std::size_t vocab = code == tgt_lang ? cfg.bpe_target_vocab : cfg.bpe_source_vocab;
    models.emplace(code, train_bpe(sentences, vocab));
  }
  return models;
}

MultiWayCorpus segment_corpus(const MultiWayCorpus& c, const std::map<std::string, BpeModel>& bpe) {
  MultiWayCorpus out(c.source_langs(), c.tgt_lang());
  const auto& tgt = bpe.at(c.tgt_lang());
  for (const auto& row : c.rows()) {
    MultiWayRow r;
    for (std::size_t i = 0; i < row.sources.size(); ++i) {
      if (row.sources[i]) {
        r.sources.emplace_back(apply_bpe(bpe.at(c.source_langs()[i]), *row.sources[i]));
      } else {
        r.sources.emplace_back(std::nullopt);
      }
    }
    r.target = apply_bpe(tgt, row.target);
    out.add_row(std::move(r));
  }
  return out;
}

nmt::Vocabulary vocabulary_of(const BpeModel& m) {
  return nmt::Vocabulary(output_symbols(m));
}

// Places a single-language bitext into the model's source layout.
MultiWayCorpus as_model_input(const ParallelCorpus& c, const std::vector<std::string>& source_langs) {
  MultiWayCorpus out(source_langs, c.tgt_lang);
  const auto it = std::find(source_langs.begin(), source_langs.end(), c.src_lang);
  if (it == source_langs.end()) throw DataError("LanguageMismatch", "model has no " + c.src_lang + " encoder");
  const auto slot = static_cast<std::size_t>(it - source_langs.begin());
  for (const auto& p : c.pairs) {
    MultiWayRow row;
    row.sources.assign(source_langs.size(), std::nullopt);
    row.sources[slot] = p.source();
    row.target = p.target();
    out.add_row(std::move(row));
  }
  return out;
}

struct TrainedModel {
  nmt::MsnmtModel<double> model;
  std::vector<nmt::EpochStats> history;
};

// Trains (or reloads) one model. `corpus` is already subword-segmented.
TrainedModel train_cached(const ExperimentConfig& cfg, const StageCache& cache, const std::string& stage,
                          const fs::path& dir, const MultiWayCorpus& corpus,
                          const std::map<std::string, BpeModel>& bpe, const nmt::Hyperparams& hp,
                          const std::string& upstream_digest, std::vector<std::string>& reused,
                          const Logger& log) {
  const fs::path checkpoint = dir / "model.ckpt";
  const fs::path log_path = dir / "train_log.tsv";
  const std::string digest =
      hex_digest(upstream_digest + json(hp).dump() + json(cfg.schedule).dump() + render_multiway(corpus));
  TrainedModel out;
  if (cache.current(stage, digest, {checkpoint, log_path})) {
    out.model = nmt::load_checkpoint<double>(checkpoint);
    for (const auto& line : read_lines(log_path)) {
      if (line.rfind("epoch", 0) == 0) continue;
      auto f = split_whitespace(line);
      out.history.push_back({std::stoi(f.at(0)), std::stod(f.at(1)), std::stod(f.at(2))});
    }
    reused.push_back(stage);
    say(log, stage + ": reused");
    return out;
  }
  std::vector<nmt::Vocabulary> src_vocabs;
  for (const auto& l : corpus.source_langs()) src_vocabs.push_back(vocabulary_of(bpe.at(l)));
  out.model = nmt::init_model<double>(hp, corpus.source_langs(), corpus.tgt_lang(), src_vocabs,
                                      vocabulary_of(bpe.at(corpus.tgt_lang())));
  out.history = nmt::train(out.model, corpus, cfg.schedule, [&](const nmt::EpochStats& e) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s: epoch %d loss %.4f lr %.4g", stage.c_str(), e.epoch, e.mean_loss,
                  e.learning_rate);
    say(log, buf);
  });
  fs::create_directories(dir);
  nmt::save_checkpoint(out.model, checkpoint);
  write_file_atomic(log_path, nmt::render_training_log(out.history));
  cache.commit(stage, digest);
  return out;
}

std::unique_ptr<Segmenter> scoring_segmenter(const ExperimentConfig& cfg) {
  if (cfg.target.suffixes.empty()) return std::make_unique<WhitespaceSegmenter>();
  return std::make_unique<SuffixStubSegmenter>(cfg.target.suffixes);
}

// Translates the test sources, writes the hypotheses and returns corpus BLEU.
double score(const ExperimentConfig& cfg, const nmt::MsnmtModel<double>& model,
             const std::map<std::string, BpeModel>& bpe, const ParallelCorpus& test, const fs::path& hyp_path) {
  const auto input = segment_corpus(as_model_input(test, model.source_langs), bpe);
  const auto& tgt_bpe = bpe.at(model.tgt_lang);
  std::vector<Sentence> hyps;
  std::vector<Sentence> refs;
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < input.size(); ++i) {
    auto out = nmt::translate_sentence(model, input.rows()[i].sources, cfg.max_decode_len);
    hyps.push_back(decode(out.tokens(), tgt_bpe.eow_marker()));
    refs.push_back(test.pairs[i].target());
    lines.push_back(hyps.back().text());
  }
  write_lines_atomic(hyp_path, lines);
  auto seg = scoring_segmenter(cfg);
  return bleu4(hyps, refs, *seg, cfg.bleu).bleu;
}

std::string config_digest(const ExperimentConfig& cfg, const Languages& lang) {
  json j = cfg;
  j.erase("output_dir");
  j.erase("jobs");
  j.erase("dual_source");
  // Later stages key on their own settings.
  for (const char* key : {"bpe", "hyperparams", "schedule", "bleu", "max_decode_len"}) j.erase(key);
  std::string specs = render_toy_spec(lang.source) + render_toy_spec(lang.pivot) + render_toy_spec(lang.target);
  for (const auto& e : lang.extras) specs += render_toy_spec(e);
  return hex_digest(j.dump() + specs);
}

}  // namespace

DualSourceResult run_dual_source(const ExperimentConfig& cfg, const Logger& log) {
  cfg.validate();
  const fs::path root = cfg.output_dir / "dual_source";
  fs::create_directories(root);
  StageCache cache(cfg.output_dir);
  std::vector<std::string> reused;
  const auto& dc = cfg.dual_source;

  auto [first, second, target] = in_stage("dual_source/data", [&] {
    return std::tuple{make_language(cfg, cfg.source), make_language(cfg, cfg.pivot), make_language(cfg, cfg.target)};
  });
  // Each row joins two independent parts: the first source renders part A,
  // the second part B, and the target renders A followed by B.
  auto build = [&](std::size_t n, const std::string& salt) {
    const auto domain = dc.part.sampling();
    auto a = sample_concepts(domain, n, mix_seed(cfg.seed, salt + "/a"));
    auto b = sample_concepts(domain, n, mix_seed(cfg.seed, salt + "/b"));
    MultiWayCorpus c({first.lang_code, second.lang_code}, target.lang_code);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<int> both = a[i];
      both.insert(both.end(), b[i].begin(), b[i].end());
      c.add_row({{render(first, a[i]), render(second, b[i])}, render(target, both)});
    }
    return c;
  };
  const auto train_raw = build(dc.train_n, "dual/train");
  const auto test_raw = build(dc.test_n, "dual/test");
  save_multiway(train_raw, root / "train.tsv");
  save_multiway(test_raw, root / "test.tsv");

  const auto bpe = in_stage("dual_source/bpe", [&] { return train_subwords(cfg, {&train_raw}); });
  nmt::Hyperparams hp = cfg.hyperparams;
  if (dc.epochs > 0) hp.epochs = dc.epochs;
  const std::string upstream = hex_digest(render_multiway(train_raw));

  auto only = [](const MultiWayCorpus& c, std::size_t keep) {
    MultiWayCorpus out({c.source_langs()[keep]}, c.tgt_lang());
    for (const auto& row : c.rows()) out.add_row({{row.sources[keep]}, row.target});
    return out;
  };
  struct Run {
    std::string name;
    MultiWayCorpus train, test;
  };
  const std::vector<Run> runs{{"dual", train_raw, test_raw},
                              {"only_first", only(train_raw, 0), only(test_raw, 0)},
                              {"only_second", only(train_raw, 1), only(test_raw, 1)}};
  auto seg = scoring_segmenter(cfg);
  std::vector<double> scores;
  for (const auto& run : runs) {
    const std::string stage = "dual_source/train/" + run.name;
    scores.push_back(in_stage(stage, [&] {
      auto trained = train_cached(cfg, cache, stage, root / run.name, segment_corpus(run.train, bpe), bpe, hp,
                                  upstream, reused, log);
      const auto input = segment_corpus(run.test, bpe);
      std::vector<Sentence> hyps;
      std::vector<Sentence> refs;
      std::vector<std::string> lines;
      for (std::size_t i = 0; i < input.size(); ++i) {
        auto out = nmt::translate_sentence(trained.model, input.rows()[i].sources, cfg.max_decode_len);
        hyps.push_back(decode(out.tokens(), bpe.at(target.lang_code).eow_marker()));
        refs.push_back(run.test.rows()[i].target);
        lines.push_back(hyps.back().text());
      }
      write_lines_atomic(root / run.name / "hyp.txt", lines);
      return bleu4(hyps, refs, *seg, cfg.bleu).bleu;
    }));
    say(log, stage + ": BLEU " + format_percent(scores.back()));
  }
  return {scores[0], scores[1], scores[2]};
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Logger& log) {
  cfg.validate();
  ExperimentResult result;
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  StageCache cache(out);
  write_file_atomic(out / "config.json", json(cfg).dump(2) + "\n");

  const Languages lang = in_stage("languages", [&] { return build_languages(cfg); });
  fs::create_directories(out / "languages");
  for (const auto* spec : {&lang.source, &lang.pivot, &lang.target}) {
    save_toy_spec(*spec, out / "languages" / (spec->lang_code + ".spec"));
  }
  for (const auto& e : lang.extras) save_toy_spec(e, out / "languages" / (e.lang_code + ".spec"));
  const std::string cfg_digest = config_digest(cfg, lang);

  // Corpora and synthetic data.
  const fs::path data_dir = out / "data";
  std::vector<fs::path> data_files{data_dir / "test_in_domain.tsv", data_dir / "test_out_of_domain.tsv",
                                   data_dir / "dev.tsv"};
  for (Variant v : kAllVariants) data_files.push_back(data_dir / ("train." + variant_id(v) + ".tsv"));
  DataSets data;
  if (cache.current("data", cfg_digest, data_files)) {
    data.test_in = load_parallel_tsv(data_files[0]);
    data.test_out = load_parallel_tsv(data_files[1]);
    data.dev = load_parallel_tsv(data_files[2]);
    std::size_t i = 3;
    for (Variant v : kAllVariants) data.variants[v] = load_multiway(data_files[i++]);
    result.reused_stages.push_back("data");
    say(log, "data: reused");
  } else {
    data = in_stage("data", [&] { return build_data(cfg, lang); });
    fs::create_directories(data_dir);
    save_parallel_tsv(data.test_in, data_files[0]);
    save_parallel_tsv(data.test_out, data_files[1]);
    save_parallel_tsv(data.dev, data_files[2]);
    std::size_t i = 3;
    for (Variant v : kAllVariants) save_multiway(data.variants.at(v), data_files[i++]);
    write_file_atomic(data_dir / "synthesis.json",
                      json{{"synthetic_target_failures", data.synthetic_target_failures},
                           {"synthetic_source_failures", data.synthetic_source_failures}}
                              .dump(2) + "\n");
    cache.commit("data", cfg_digest);
    say(log, "data: built");
  }

  // Subword models, one per language.
  std::vector<std::string> all_langs = msm_langs(cfg);
  all_langs.push_back(cfg.target.code);
  const fs::path bpe_dir = out / "bpe";
  std::vector<fs::path> bpe_files;
  for (const auto& l : all_langs) bpe_files.push_back(bpe_dir / (l + ".bpe"));
  std::string data_digest;
  for (const auto& f : data_files) data_digest += hex_digest(read_file(f));
  const std::string bpe_digest =
      hex_digest(data_digest + std::to_string(cfg.bpe_source_vocab) + "/" + std::to_string(cfg.bpe_target_vocab));
  std::map<std::string, BpeModel> bpe;
  if (cache.current("bpe", bpe_digest, bpe_files)) {
    for (std::size_t i = 0; i < all_langs.size(); ++i) bpe.emplace(all_langs[i], load_bpe(bpe_files[i]));
    result.reused_stages.push_back("bpe");
    say(log, "bpe: reused");
  } else {
    bpe = in_stage("bpe", [&] {
      std::vector<const MultiWayCorpus*> corpora;
      for (const auto& [v, c] : data.variants) corpora.push_back(&c);
      return train_subwords(cfg, corpora);
    });
    fs::create_directories(bpe_dir);
    for (std::size_t i = 0; i < all_langs.size(); ++i) save_bpe(bpe.at(all_langs[i]), bpe_files[i]);
    cache.commit("bpe", bpe_digest);
    say(log, "bpe: trained");
  }
  json coverage_report;
  for (const auto& [name, test] : {std::pair{cfg.in_domain_label, &data.test_in},
                                   std::pair{cfg.out_of_domain_label, &data.test_out}}) {
    std::vector<Sentence> src;
    std::vector<Sentence> tgt;
    for (const auto& p : test->pairs) {
      src.push_back(p.source());
      tgt.push_back(p.target());
    }
    coverage_report[name] = {{"source", coverage(bpe.at(cfg.source.code), src).coverage},
                             {"target", coverage(bpe.at(cfg.target.code), tgt).coverage}};
  }
  write_file_atomic(bpe_dir / "coverage.json", coverage_report.dump(2) + "\n");

  // Training, optionally several variants at once.
  std::map<Variant, TrainedModel> trained;
  std::map<Variant, std::vector<std::string>> reused_by;
  auto train_variant = [&](Variant v) {
    const std::string stage = "train/" + variant_id(v);
    return in_stage(stage, [&] {
      return train_cached(cfg, cache, stage, out / "models" / variant_id(v),
                          segment_corpus(data.variants.at(v), bpe), bpe, cfg.hyperparams, bpe_digest, reused_by[v],
                          log);
    });
  };
  for (Variant v : kAllVariants) reused_by[v];
  std::vector<Variant> pending(std::begin(kAllVariants), std::end(kAllVariants));
  for (std::size_t begin = 0; begin < pending.size(); begin += cfg.jobs) {
    const std::size_t end = std::min(pending.size(), begin + cfg.jobs);
    if (end - begin == 1) {
      trained[pending[begin]] = train_variant(pending[begin]);
      continue;
    }
    std::vector<std::future<TrainedModel>> futures;
    for (std::size_t i = begin; i < end; ++i) {
      futures.push_back(std::async(std::launch::async, train_variant, pending[i]));
    }
    for (std::size_t i = begin; i < end; ++i) trained[pending[i]] = futures[i - begin].get();
  }
  for (Variant v : kAllVariants) {
    for (auto& s : reused_by[v]) result.reused_stages.push_back(s);
  }

  // Evaluation.
  fs::create_directories(out / "hyp");
  for (Variant v : kAllVariants) {
    const auto& t = trained.at(v);
    const std::string stage = "evaluate/" + variant_id(v);
    in_stage(stage, [&] {
      for (const auto& [label, test, file] :
           {std::tuple{cfg.in_domain_label, &data.test_in, "in_domain"},
            std::tuple{cfg.out_of_domain_label, &data.test_out, "out_of_domain"}}) {
        const double b = score(cfg, t.model, bpe, *test, out / "hyp" / (variant_id(v) + "." + file + ".txt"));
        result.table.rows.push_back({variant_label(v), label, b});
      }
      VariantSummary s;
      s.id = variant_id(v);
      s.train_rows = data.variants.at(v).size();
      s.sources = t.model.n_sources();
      s.final_loss = t.history.empty() ? 0.0 : t.history.back().mean_loss;
      if (!data.dev.empty()) {
        s.dev_loss = nmt::corpus_loss(t.model, segment_corpus(as_model_input(data.dev, t.model.source_langs), bpe));
      }
      result.variants.push_back(s);
    });
    say(log, stage + ": done");
  }

  if (cfg.dual_source.enabled) {
    result.dual_source = run_dual_source(cfg, log);
  }

  write_file_atomic(out / "scores.tsv", render_score_table(result.table));
  json summary;
  summary["variants"] = json::array();
  for (const auto& s : result.variants) {
    summary["variants"].push_back({{"id", s.id},
                                   {"train_rows", s.train_rows},
                                   {"sources", s.sources},
                                   {"final_loss", s.final_loss},
                                   {"dev_loss", s.dev_loss}});
  }
  summary["scores"] = json::array();
  for (const auto& r : result.table.rows) {
    summary["scores"].push_back({{"model", r.model}, {"test_set", r.test_set}, {"bleu", format_percent(r.bleu)}});
  }
  if (result.dual_source) {
    summary["dual_source"] = {{"dual", format_percent(result.dual_source->dual)},
                              {"only_first", format_percent(result.dual_source->only_first)},
                              {"only_second", format_percent(result.dual_source->only_second)}};
  }
  write_file_atomic(out / "summary.json", summary.dump(2) + "\n");
  return result;
}

}  // namespace pivotmt
