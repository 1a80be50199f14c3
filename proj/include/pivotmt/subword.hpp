#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pivotmt/corpus.hpp"

namespace pivotmt {

struct Merge {
  std::string left;
  std::string right;
  friend bool operator==(const Merge&, const Merge&) = default;
};

inline constexpr std::string_view kDefaultEowMarker = "</w>";

// Word-internal byte-pair encoding. Words are split into UTF-8 characters and
// merged in rule order; pairs never cross a word boundary. The end-of-word
// marker is then appended to the word's last symbol ("lo" "w</w>").
class BpeModel {
 public:
  /// Throws DataError("InvalidModel") if a merge operand is not producible from
  /// the alphabet, the marker and earlier merge products.
  BpeModel(std::string eow_marker, std::vector<std::string> alphabet, std::vector<Merge> merges);

  const std::string& eow_marker() const noexcept { return eow_marker_; }
  const std::vector<Merge>& merges() const noexcept { return merges_; }
  /// Sorted training characters.
  const std::vector<std::string>& alphabet() const noexcept { return alphabet_; }
  /// Alphabet, marker and merge products.
  const std::set<std::string>& vocab() const noexcept { return vocab_; }

  bool knows_char(std::string_view ch) const;

  std::vector<std::string> encode_word(std::string_view word) const;
  /// The symbol without a trailing end-of-word marker.
  std::string_view strip_marker(std::string_view symbol) const;

  /// A copy restricted to the first `count` merges.
  BpeModel prefix(std::size_t count) const;

  friend bool operator==(const BpeModel& a, const BpeModel& b) {
    return a.eow_marker_ == b.eow_marker_ && a.alphabet_ == b.alphabet_ && a.merges_ == b.merges_;
  }

 private:
  std::string eow_marker_;
  std::vector<std::string> alphabet_;
  std::vector<Merge> merges_;
  std::set<std::string> vocab_;
  std::unordered_map<std::string, std::size_t> rank_;  // "left right" -> merge index
};

struct CoverageReport {
  std::size_t covered_tokens = 0;
  std::size_t total_tokens = 0;
  double coverage = 1.0;
};

/// Greedy most-frequent-pair merging until the vocabulary reaches
/// target_vocab_size or no pair occurs twice. Ties go to the
/// lexicographically smallest (left, right).
BpeModel train_bpe(const std::vector<Sentence>& sentences, std::size_t target_vocab_size,
                   std::string eow_marker = std::string(kDefaultEowMarker));

std::vector<std::string> encode(const BpeModel& model, const Sentence& sentence);
Sentence decode(const std::vector<std::string>& symbols, std::string_view eow_marker);

/// Every symbol encode() can emit for words over the training alphabet: each
/// vocabulary entry with and without the trailing marker. Sorted.
std::vector<std::string> output_symbols(const BpeModel& model);

/// Fraction of words that encode without unknown characters using only the
/// vocab_limit symbols most used when encoding `sentences` (all when unset).
CoverageReport coverage(const BpeModel& model, const std::vector<Sentence>& sentences,
                        std::optional<std::size_t> vocab_limit = std::nullopt);

// File format: line 1 = marker, then one `left right` line per merge in order,
// then one line per alphabet character (single symbol, no space).
std::string render_bpe(const BpeModel& model);
BpeModel parse_bpe(std::string_view contents);
void save_bpe(const BpeModel& model, const std::filesystem::path& path);
BpeModel load_bpe(const std::filesystem::path& path);

}  // namespace pivotmt
