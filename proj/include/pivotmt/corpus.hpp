#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pivotmt {

enum class Provenance { Original, SyntheticSource, SyntheticTarget };

std::string_view to_string(Provenance p);

/// One line of text. Never contains a line break.
class Sentence {
 public:
  Sentence() = default;
  explicit Sentence(std::string text);

  const std::string& text() const noexcept { return text_; }
  /// Whitespace tokens; the unit used by the length filter.
  std::vector<std::string> tokens() const;

  friend bool operator==(const Sentence&, const Sentence&) = default;

 private:
  std::string text_;
};

class SentencePair {
 public:
  SentencePair(Sentence source, Sentence target, Provenance provenance = Provenance::Original)
      : source_(std::move(source)), target_(std::move(target)), provenance_(provenance) {}

  const Sentence& source() const noexcept { return source_; }
  const Sentence& target() const noexcept { return target_; }
  Provenance provenance() const noexcept { return provenance_; }

  friend bool operator==(const SentencePair&, const SentencePair&) = default;

 private:
  Sentence source_;
  Sentence target_;
  Provenance provenance_;
};

struct ParallelCorpus {
  std::string src_lang;
  std::string tgt_lang;
  std::vector<SentencePair> pairs;

  std::size_t size() const noexcept { return pairs.size(); }
  bool empty() const noexcept { return pairs.empty(); }
  friend bool operator==(const ParallelCorpus&, const ParallelCorpus&) = default;
};

/// A target sentence with zero or more of its source-language renderings.
struct MultiWayRow {
  std::vector<std::optional<Sentence>> sources;
  Sentence target;

  std::vector<bool> mask() const;
  std::size_t available() const;
  friend bool operator==(const MultiWayRow&, const MultiWayRow&) = default;
};

class MultiWayCorpus {
 public:
  MultiWayCorpus() = default;
  MultiWayCorpus(std::vector<std::string> source_langs, std::string tgt_lang);

  const std::vector<std::string>& source_langs() const noexcept { return source_langs_; }
  const std::string& tgt_lang() const noexcept { return tgt_lang_; }
  const std::vector<MultiWayRow>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }

  /// Throws DataError if the row is the wrong width or has no available source.
  void add_row(MultiWayRow row);

  friend bool operator==(const MultiWayCorpus&, const MultiWayCorpus&) = default;

 private:
  std::vector<std::string> source_langs_;
  std::string tgt_lang_;
  std::vector<MultiWayRow> rows_;
};

struct FilterConfig {
  std::size_t min_len = 1;
  std::size_t max_len = 100;
  double max_ratio = 3.0;
  std::string unk_symbol = "<unk>";

  /// Throws ConfigParse when min_len is 0, min_len > max_len or max_ratio < 1.
  void validate() const;
};

// --- I/O ---------------------------------------------------------------------

ParallelCorpus load_parallel(const std::filesystem::path& src_path,
                             const std::filesystem::path& tgt_path, std::string src_lang,
                             std::string tgt_lang);
void save_parallel(const ParallelCorpus& corpus, const std::filesystem::path& src_path,
                   const std::filesystem::path& tgt_path);

// N-way TSV: header `lang1<TAB>...<TAB>langN<TAB>tgt_lang`, empty cell = unavailable.
MultiWayCorpus load_multiway(const std::filesystem::path& path);
void save_multiway(const MultiWayCorpus& corpus, const std::filesystem::path& path);
std::string render_multiway(const MultiWayCorpus& corpus);

// A parallel corpus stored as a one-source N-way TSV.
ParallelCorpus load_parallel_tsv(const std::filesystem::path& path);
void save_parallel_tsv(const ParallelCorpus& corpus, const std::filesystem::path& path);

// --- Filtering chain ---------------------------------------------------------

ParallelCorpus length_filter(const ParallelCorpus& corpus, const FilterConfig& cfg);
ParallelCorpus dedup(const ParallelCorpus& corpus);
ParallelCorpus unk_filter(const ParallelCorpus& corpus, std::string_view unk_symbol);
/// length_filter, then dedup, then unk_filter.
ParallelCorpus clean(const ParallelCorpus& corpus, const FilterConfig& cfg);

/// Seeded uniform sample of n pairs, original order kept.
ParallelCorpus truncate(const ParallelCorpus& corpus, std::size_t n, std::uint64_t seed);

// --- Alignment ---------------------------------------------------------------

enum class AlignMode { ByTargetKey, Disjoint };

/// Disjoint: every pair becomes a row with one available source.
/// ByTargetKey: one row per distinct target text present in at least
/// min(2, corpora.size()) corpora; first occurrence per corpus contributes.
MultiWayCorpus align_multiway(const std::vector<ParallelCorpus>& corpora, AlignMode mode);

/// Rows whose sources[index] is present, as a parallel corpus.
ParallelCorpus column(const MultiWayCorpus& corpus, std::size_t index);

}  // namespace pivotmt
