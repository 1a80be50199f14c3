#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pivotmt/corpus.hpp"
#include "pivotmt/error.hpp"

namespace pivotmt {

class TranslatorFailure : public DataError {
 public:
  explicit TranslatorFailure(const std::string& detail) : DataError("TranslatorFailure", detail) {}
};

/// A black-box sentence translator between two languages.
class Translator {
 public:
  Translator(std::string src_lang, std::string tgt_lang)
      : src_lang_(std::move(src_lang)), tgt_lang_(std::move(tgt_lang)) {}
  virtual ~Translator() = default;

  const std::string& src_lang() const noexcept { return src_lang_; }
  const std::string& tgt_lang() const noexcept { return tgt_lang_; }

  /// Throws TranslatorFailure when the sentence cannot be translated.
  virtual Sentence translate(const Sentence& sentence) const = 0;

  /// Whether translate() may be called from several threads at once.
  virtual bool concurrent_safe() const { return false; }

  /// Translates a batch; failed rows come back empty. The default calls
  /// translate() row by row.
  virtual std::vector<std::optional<Sentence>> translate_all(
      const std::vector<Sentence>& sentences) const;

 private:
  std::string src_lang_;
  std::string tgt_lang_;
};

class IdentityTranslator final : public Translator {
 public:
  using Translator::Translator;
  Sentence translate(const Sentence& sentence) const override { return sentence; }
  bool concurrent_safe() const override { return true; }
};

// Runs `command` once per batch with one sentence per line on stdin and reads
// one translation per line from stdout. Empty output lines count as failures.
class ProcessTranslator final : public Translator {
 public:
  ProcessTranslator(std::string src_lang, std::string tgt_lang, std::string command)
      : Translator(std::move(src_lang), std::move(tgt_lang)), command_(std::move(command)) {}
  Sentence translate(const Sentence& sentence) const override;
  std::vector<std::optional<Sentence>> translate_all(
      const std::vector<Sentence>& sentences) const override;

 private:
  std::string command_;
};

// --- Toy languages -------------------------------------------------------------

enum class Grammar { IdentityOrder, Reversed };

std::string_view to_string(Grammar g);
Grammar parse_grammar(std::string_view keyword);

struct ToyLanguageSpec {
  std::string lang_code;
  std::map<int, std::string> lexicon;  // concept id -> token
  std::pair<std::size_t, std::size_t> sentence_length_range{1, 1};
  Grammar grammar = Grammar::IdentityOrder;

  /// Throws ConfigParse unless the lexicon is bijective, tokens are
  /// whitespace-free and the length range is ordered and non-zero.
  void validate() const;
  std::optional<int> concept_of(const std::string& token) const;
  std::vector<int> concepts() const;

  friend bool operator==(const ToyLanguageSpec&, const ToyLanguageSpec&) = default;
};

/// Renders a canonical-order concept sequence in the language's word order.
Sentence render(const ToyLanguageSpec& spec, const std::vector<int>& concepts);

/// Canonical-order concepts of a sentence; throws TranslatorFailure on an
/// out-of-lexicon token.
std::vector<int> parse_concepts(const ToyLanguageSpec& spec, const Sentence& sentence);

// Spec file: `lang<TAB>code`, `grammar<TAB>identity|reversed`,
// `length<TAB>min<TAB>max`, then `concept_id<TAB>token` lines.
ToyLanguageSpec parse_toy_spec(std::string_view contents);
std::string render_toy_spec(const ToyLanguageSpec& spec);
ToyLanguageSpec load_toy_spec(const std::filesystem::path& path);
void save_toy_spec(const ToyLanguageSpec& spec, const std::filesystem::path& path);

/// Several specs in one file, each starting at its `lang` line.
std::vector<ToyLanguageSpec> parse_toy_spec_bundle(std::string_view contents);
std::vector<ToyLanguageSpec> load_toy_spec_bundle(const std::filesystem::path& path);

/// A lexicon of `concept_count` distinct random syllable words. Words for
/// concepts listed in `suffixed` get one of `suffixes` appended.
ToyLanguageSpec make_toy_language(std::string lang_code, int concept_count, Grammar grammar,
                                  std::pair<std::size_t, std::size_t> length_range,
                                  std::uint64_t seed, const std::vector<std::string>& suffixes = {});

/// Which concepts to draw and how long sentences are.
struct SamplingDomain {
  std::vector<int> concepts;
  std::pair<std::size_t, std::size_t> length_range{1, 1};
};

std::vector<std::vector<int>> sample_concepts(const SamplingDomain& domain, std::size_t n_rows,
                                              std::uint64_t seed);

/// Fully aligned rows drawn from the target spec's concepts and length range.
MultiWayCorpus generate_toy_multiway(const std::vector<ToyLanguageSpec>& specs,
                                     const ToyLanguageSpec& tgt_spec, std::size_t n_rows,
                                     std::uint64_t seed);
MultiWayCorpus generate_toy_multiway(const std::vector<ToyLanguageSpec>& specs,
                                     const ToyLanguageSpec& tgt_spec, const SamplingDomain& domain,
                                     std::size_t n_rows, std::uint64_t seed);

// Token-wise mapping through concept ids with word-order conversion. With
// drop_prob or substitute_prob > 0 every output token is independently dropped
// or replaced by a random target word; the noise is seeded per sentence, so
// the translator stays a pure function of its input.
class DictionaryTranslator final : public Translator {
 public:
  DictionaryTranslator(ToyLanguageSpec from, ToyLanguageSpec to, double drop_prob = 0.0,
                       double substitute_prob = 0.0, std::uint64_t seed = 0);
  Sentence translate(const Sentence& sentence) const override;
  bool concurrent_safe() const override { return true; }

 private:
  ToyLanguageSpec from_;
  ToyLanguageSpec to_;
  std::vector<int> to_concepts_;
  double drop_prob_;
  double substitute_prob_;
  std::uint64_t seed_;
};

DictionaryTranslator dictionary_translator(const ToyLanguageSpec& from, const ToyLanguageSpec& to);
DictionaryTranslator noisy_dictionary_translator(const ToyLanguageSpec& from,
                                                 const ToyLanguageSpec& to, double drop_prob,
                                                 std::uint64_t seed);

// --- Corpus extension ---------------------------------------------------------

struct SynthesisResult {
  ParallelCorpus corpus;
  std::vector<std::size_t> failed_rows;  // input indices whose translation failed
};

/// Translates a batch, fanning out over `threads` workers when the translator
/// allows it. Output order always matches input order.
std::vector<std::optional<Sentence>> translate_rows(const Translator& translator,
                                                    const std::vector<Sentence>& sentences,
                                                    unsigned threads = 1);

/// (source, pivot) -> (source, translate(pivot)), provenance SyntheticTarget.
SynthesisResult build_synthetic_target(const ParallelCorpus& src_pivot,
                                       const Translator& pivot_to_tgt, unsigned threads = 1);

/// (pivot, target) -> (translate(pivot), target), provenance SyntheticSource.
SynthesisResult build_synthetic_source(const ParallelCorpus& pivot_tgt,
                                       const Translator& pivot_to_src, unsigned threads = 1);

/// base in full followed by a seeded sample of total - |base| synthetic pairs.
ParallelCorpus extend(const ParallelCorpus& base, const ParallelCorpus& synthetic,
                      std::size_t total, std::uint64_t seed);

}  // namespace pivotmt
