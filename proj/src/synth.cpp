#include "pivotmt/synth.hpp"

#include <algorithm>
#include <cstdlib>
#include <future>
#include <set>
#include <unistd.h>

#include "pivotmt/random.hpp"
#include "pivotmt/text.hpp"

namespace pivotmt {

std::vector<std::optional<Sentence>> Translator::translate_all(
    const std::vector<Sentence>& sentences) const {
  std::vector<std::optional<Sentence>> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    try {
      out.emplace_back(translate(s));
    } catch (const TranslatorFailure&) {
      out.emplace_back(std::nullopt);
    }
  }
  return out;
}

Sentence ProcessTranslator::translate(const Sentence& sentence) const {
  auto out = translate_all({sentence});
  if (!out.front()) throw TranslatorFailure("external translator produced no output");
  return *out.front();
}

std::vector<std::optional<Sentence>> ProcessTranslator::translate_all(
    const std::vector<Sentence>& sentences) const {
  namespace fs = std::filesystem;
  const auto stem = fs::temp_directory_path() /
                    ("pivotmt-" + std::to_string(::getpid()) + "-" +
                     std::to_string(fnv1a(command_) ^ sentences.size()));
  const fs::path in = stem.string() + ".in";
  const fs::path out = stem.string() + ".out";
  std::vector<std::string> lines;
  lines.reserve(sentences.size());
  for (const auto& s : sentences) lines.push_back(s.text());
  write_lines_atomic(in, lines);
  const std::string cmd = command_ + " < '" + in.string() + "' > '" + out.string() + "'";
  const int status = std::system(cmd.c_str());
  std::vector<std::optional<Sentence>> result(sentences.size());
  if (status == 0 && fs::exists(out)) {
    auto produced = read_lines(out);
    for (std::size_t i = 0; i < result.size() && i < produced.size(); ++i) {
      if (!produced[i].empty() || sentences[i].text().empty()) result[i] = Sentence(produced[i]);
    }
  }
  std::error_code ec;
  fs::remove(in, ec);
  fs::remove(out, ec);
  return result;
}

// --- Toy languages -------------------------------------------------------------

std::string_view to_string(Grammar g) {
  return g == Grammar::Reversed ? "reversed" : "identity";
}

Grammar parse_grammar(std::string_view keyword) {
  if (keyword == "identity") return Grammar::IdentityOrder;
  if (keyword == "reversed") return Grammar::Reversed;
  throw ConfigParse("unknown grammar '" + std::string(keyword) + "'");
}

void ToyLanguageSpec::validate() const {
  if (lang_code.empty()) throw ConfigParse("toy language without a code");
  if (lexicon.empty()) throw ConfigParse(lang_code + ": empty lexicon");
  auto [lo, hi] = sentence_length_range;
  if (lo < 1 || lo > hi) throw ConfigParse(lang_code + ": bad sentence length range");
  std::set<std::string> seen;
  for (const auto& [id, token] : lexicon) {
    if (token.empty() || split_whitespace(token).size() != 1 || split_whitespace(token)[0] != token) {
      throw ConfigParse(lang_code + ": token for concept " + std::to_string(id) +
                        " is empty or has whitespace");
    }
    if (!seen.insert(token).second) {
      throw ConfigParse(lang_code + ": token '" + token + "' used for two concepts");
    }
  }
}

std::optional<int> ToyLanguageSpec::concept_of(const std::string& token) const {
  for (const auto& [id, t] : lexicon) {
    if (t == token) return id;
  }
  return std::nullopt;
}

std::vector<int> ToyLanguageSpec::concepts() const {
  std::vector<int> ids;
  for (const auto& [id, t] : lexicon) ids.push_back(id);
  return ids;
}

Sentence render(const ToyLanguageSpec& spec, const std::vector<int>& concepts) {
  std::vector<std::string> tokens;
  tokens.reserve(concepts.size());
  for (int c : concepts) {
    auto it = spec.lexicon.find(c);
    if (it == spec.lexicon.end()) {
      throw TranslatorFailure(spec.lang_code + " has no word for concept " + std::to_string(c));
    }
    tokens.push_back(it->second);
  }
  if (spec.grammar == Grammar::Reversed) std::reverse(tokens.begin(), tokens.end());
  return Sentence(join(tokens, " "));
}

std::vector<int> parse_concepts(const ToyLanguageSpec& spec, const Sentence& sentence) {
  // Linear lookups are fine for toy lexicons; build the reverse map once here.
  std::map<std::string_view, int> reverse;
  for (const auto& [id, t] : spec.lexicon) reverse.emplace(t, id);
  std::vector<int> concepts;
  for (const auto& token : sentence.tokens()) {
    auto it = reverse.find(token);
    if (it == reverse.end()) {
      throw TranslatorFailure("UnknownToken '" + token + "' for " + spec.lang_code);
    }
    concepts.push_back(it->second);
  }
  if (spec.grammar == Grammar::Reversed) std::reverse(concepts.begin(), concepts.end());
  return concepts;
}

ToyLanguageSpec parse_toy_spec(std::string_view contents) {
  ToyLanguageSpec spec;
  bool have_length = false;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < contents.size()) {
    std::size_t end = contents.find('\n', start);
    if (end == std::string_view::npos) end = contents.size();
    std::string line(contents.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (true) {
      std::size_t tab = line.find('\t', pos);
      cells.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    const auto where = " on line " + std::to_string(line_no);
    try {
      if (cells[0] == "lang" && cells.size() == 2) {
        spec.lang_code = cells[1];
      } else if (cells[0] == "grammar" && cells.size() == 2) {
        spec.grammar = parse_grammar(cells[1]);
      } else if (cells[0] == "length" && cells.size() == 3) {
        spec.sentence_length_range = {std::stoul(cells[1]), std::stoul(cells[2])};
        have_length = true;
      } else if (cells.size() == 2) {
        std::size_t used = 0;
        const int id = std::stoi(cells[0], &used);
        if (used != cells[0].size()) throw ConfigParse("bad concept id" + where);
        if (!spec.lexicon.emplace(id, cells[1]).second) {
          throw ConfigParse("duplicate concept " + cells[0] + where);
        }
      } else {
        throw ConfigParse("unrecognised entry" + where);
      }
    } catch (const std::logic_error&) {
      throw ConfigParse("bad number" + where);
    }
  }
  if (!have_length) throw ConfigParse("toy language spec lacks a length line");
  spec.validate();
  return spec;
}

std::string render_toy_spec(const ToyLanguageSpec& spec) {
  std::string out = "lang\t" + spec.lang_code + "\n";
  out += "grammar\t" + std::string(to_string(spec.grammar)) + "\n";
  out += "length\t" + std::to_string(spec.sentence_length_range.first) + "\t" +
         std::to_string(spec.sentence_length_range.second) + "\n";
  for (const auto& [id, token] : spec.lexicon) out += std::to_string(id) + "\t" + token + "\n";
  return out;
}

ToyLanguageSpec load_toy_spec(const std::filesystem::path& path) {
  return parse_toy_spec(read_file(path));
}

void save_toy_spec(const ToyLanguageSpec& spec, const std::filesystem::path& path) {
  write_file_atomic(path, render_toy_spec(spec));
}

std::vector<ToyLanguageSpec> parse_toy_spec_bundle(std::string_view contents) {
  std::vector<std::string_view> chunks;
  std::size_t chunk_start = 0;
  std::size_t start = 0;
  while (start < contents.size()) {
    std::size_t end = contents.find('\n', start);
    if (end == std::string_view::npos) end = contents.size();
    if (contents.substr(start, 5) == "lang\t" && start > chunk_start) {
      chunks.push_back(contents.substr(chunk_start, start - chunk_start));
      chunk_start = start;
    }
    start = end + 1;
  }
  chunks.push_back(contents.substr(chunk_start));
  std::vector<ToyLanguageSpec> specs;
  std::set<std::string> codes;
  for (auto chunk : chunks) {
    specs.push_back(parse_toy_spec(chunk));
    if (!codes.insert(specs.back().lang_code).second) {
      throw ConfigParse("language " + specs.back().lang_code + " appears twice in the bundle");
    }
  }
  return specs;
}

std::vector<ToyLanguageSpec> load_toy_spec_bundle(const std::filesystem::path& path) {
  return parse_toy_spec_bundle(read_file(path));
}

ToyLanguageSpec make_toy_language(std::string lang_code, int concept_count, Grammar grammar,
                                  std::pair<std::size_t, std::size_t> length_range,
                                  std::uint64_t seed, const std::vector<std::string>& suffixes) {
  static constexpr std::string_view kConsonants = "bdfghklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  Rng rng(mix_seed(seed, lang_code));
  // Each language draws from its own subset of consonants so words look distinct.
  std::vector<char> pool(kConsonants.begin(), kConsonants.end());
  rng.shuffle(pool);
  pool.resize(8);

  ToyLanguageSpec spec;
  spec.lang_code = std::move(lang_code);
  spec.grammar = grammar;
  spec.sentence_length_range = length_range;
  std::set<std::string> used;
  for (int id = 0; id < concept_count; ++id) {
    std::string word;
    do {
      word.clear();
      const std::size_t syllables = 2 + rng.index(2);
      for (std::size_t s = 0; s < syllables; ++s) {
        word.push_back(pool[rng.index(pool.size())]);
        word.push_back(kVowels[rng.index(kVowels.size())]);
      }
      if (!suffixes.empty() && rng.bernoulli(0.5)) word += suffixes[rng.index(suffixes.size())];
    } while (!used.insert(word).second);
    spec.lexicon.emplace(id, word);
  }
  spec.validate();
  return spec;
}

std::vector<std::vector<int>> sample_concepts(const SamplingDomain& domain, std::size_t n_rows,
                                              std::uint64_t seed) {
  if (domain.concepts.empty()) throw ConfigParse("sampling domain without concepts");
  auto [lo, hi] = domain.length_range;
  if (lo < 1 || lo > hi) throw ConfigParse("bad sampling length range");
  Rng rng(seed);
  std::vector<std::vector<int>> rows(n_rows);
  for (auto& row : rows) {
    const std::size_t len = lo + rng.index(hi - lo + 1);
    row.resize(len);
    for (auto& c : row) c = domain.concepts[rng.index(domain.concepts.size())];
  }
  return rows;
}

MultiWayCorpus generate_toy_multiway(const std::vector<ToyLanguageSpec>& specs,
                                     const ToyLanguageSpec& tgt_spec, std::size_t n_rows,
                                     std::uint64_t seed) {
  return generate_toy_multiway(specs, tgt_spec,
                               SamplingDomain{tgt_spec.concepts(), tgt_spec.sentence_length_range},
                               n_rows, seed);
}

MultiWayCorpus generate_toy_multiway(const std::vector<ToyLanguageSpec>& specs,
                                     const ToyLanguageSpec& tgt_spec, const SamplingDomain& domain,
                                     std::size_t n_rows, std::uint64_t seed) {
  if (n_rows < 1) throw ConfigParse("generate_toy_multiway needs n_rows >= 1");
  const auto domain_ids = tgt_spec.concepts();
  std::vector<std::string> langs;
  for (const auto& s : specs) {
    if (s.concepts() != domain_ids) {
      throw DataError("LexiconDomainMismatch", s.lang_code + " vs " + tgt_spec.lang_code);
    }
    langs.push_back(s.lang_code);
  }
  MultiWayCorpus corpus(langs, tgt_spec.lang_code);
  for (const auto& concepts : sample_concepts(domain, n_rows, seed)) {
    MultiWayRow row;
    for (const auto& s : specs) row.sources.emplace_back(render(s, concepts));
    row.target = render(tgt_spec, concepts);
    corpus.add_row(std::move(row));
  }
  return corpus;
}

DictionaryTranslator::DictionaryTranslator(ToyLanguageSpec from, ToyLanguageSpec to,
                                           double drop_prob, double substitute_prob,
                                           std::uint64_t seed)
    : Translator(from.lang_code, to.lang_code),
      from_(std::move(from)),
      to_(std::move(to)),
      to_concepts_(to_.concepts()),
      drop_prob_(drop_prob),
      substitute_prob_(substitute_prob),
      seed_(seed) {
  if (from_.concepts() != to_.concepts()) {
    throw DataError("LexiconDomainMismatch", from_.lang_code + " vs " + to_.lang_code);
  }
}

Sentence DictionaryTranslator::translate(const Sentence& sentence) const {
  auto concepts = parse_concepts(from_, sentence);
  if (drop_prob_ > 0.0 || substitute_prob_ > 0.0) {
    Rng rng(mix_seed(seed_, sentence.text()));
    std::vector<int> noisy;
    for (int c : concepts) {
      if (rng.bernoulli(drop_prob_)) continue;
      if (rng.bernoulli(substitute_prob_)) c = to_concepts_[rng.index(to_concepts_.size())];
      noisy.push_back(c);
    }
    concepts = std::move(noisy);
  }
  return render(to_, concepts);
}

DictionaryTranslator dictionary_translator(const ToyLanguageSpec& from, const ToyLanguageSpec& to) {
  return DictionaryTranslator(from, to);
}

DictionaryTranslator noisy_dictionary_translator(const ToyLanguageSpec& from,
                                                 const ToyLanguageSpec& to, double drop_prob,
                                                 std::uint64_t seed) {
  return DictionaryTranslator(from, to, drop_prob, 0.0, seed);
}

// --- Corpus extension ---------------------------------------------------------

std::vector<std::optional<Sentence>> translate_rows(const Translator& translator,
                                                    const std::vector<Sentence>& sentences,
                                                    unsigned threads) {
  if (threads <= 1 || !translator.concurrent_safe() || sentences.size() < 2 * threads) {
    return translator.translate_all(sentences);
  }
  const std::size_t chunk = (sentences.size() + threads - 1) / threads;
  std::vector<std::future<std::vector<std::optional<Sentence>>>> parts;
  for (std::size_t begin = 0; begin < sentences.size(); begin += chunk) {
    const std::size_t end = std::min(sentences.size(), begin + chunk);
    parts.push_back(std::async(std::launch::async, [&, begin, end] {
      return translator.translate_all(
          std::vector<Sentence>(sentences.begin() + static_cast<long>(begin),
                                sentences.begin() + static_cast<long>(end)));
    }));
  }
  std::vector<std::optional<Sentence>> out;
  out.reserve(sentences.size());
  for (auto& part : parts) {
    auto rows = part.get();
    out.insert(out.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
  }
  return out;
}

namespace {

enum class Side { Source, Target };

SynthesisResult synthesize(const ParallelCorpus& corpus, const Translator& translator,
                           Side pivot_side, unsigned threads) {
  const std::string& pivot_lang = pivot_side == Side::Target ? corpus.tgt_lang : corpus.src_lang;
  if (pivot_lang != translator.src_lang()) {
    throw DataError("LanguageMismatch",
                    "corpus pivot is " + pivot_lang + ", translator reads " + translator.src_lang());
  }
  std::vector<Sentence> pivots;
  pivots.reserve(corpus.size());
  for (const auto& p : corpus.pairs) {
    pivots.push_back(pivot_side == Side::Target ? p.target() : p.source());
  }
  auto translated = translate_rows(translator, pivots, threads);

  SynthesisResult result;
  if (pivot_side == Side::Target) {
    result.corpus = ParallelCorpus{corpus.src_lang, translator.tgt_lang(), {}};
  } else {
    result.corpus = ParallelCorpus{translator.tgt_lang(), corpus.tgt_lang, {}};
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!translated[i]) {
      result.failed_rows.push_back(i);
      continue;
    }
    const auto& p = corpus.pairs[i];
    if (pivot_side == Side::Target) {
      result.corpus.pairs.emplace_back(p.source(), std::move(*translated[i]),
                                       Provenance::SyntheticTarget);
    } else {
      result.corpus.pairs.emplace_back(std::move(*translated[i]), p.target(),
                                       Provenance::SyntheticSource);
    }
  }
  return result;
}

}  // namespace

SynthesisResult build_synthetic_target(const ParallelCorpus& src_pivot,
                                       const Translator& pivot_to_tgt, unsigned threads) {
  return synthesize(src_pivot, pivot_to_tgt, Side::Target, threads);
}

SynthesisResult build_synthetic_source(const ParallelCorpus& pivot_tgt,
                                       const Translator& pivot_to_src, unsigned threads) {
  return synthesize(pivot_tgt, pivot_to_src, Side::Source, threads);
}

ParallelCorpus extend(const ParallelCorpus& base, const ParallelCorpus& synthetic,
                      std::size_t total, std::uint64_t seed) {
  if (base.src_lang != synthetic.src_lang || base.tgt_lang != synthetic.tgt_lang) {
    throw DataError("LanguageMismatch", base.src_lang + "-" + base.tgt_lang + " vs " +
                                            synthetic.src_lang + "-" + synthetic.tgt_lang);
  }
  if (total < base.size()) {
    throw DataError("InvalidTotal", "total " + std::to_string(total) + " below base size " +
                                        std::to_string(base.size()));
  }
  if (base.size() + synthetic.size() < total) {
    throw DataError("InsufficientSynthetic",
                    std::to_string(base.size() + synthetic.size()) + " pairs available, " +
                        std::to_string(total) + " requested");
  }
  ParallelCorpus out = base;
  auto sampled = truncate(synthetic, total - base.size(), seed);
  out.pairs.insert(out.pairs.end(), sampled.pairs.begin(), sampled.pairs.end());
  return out;
}

}  // namespace pivotmt
