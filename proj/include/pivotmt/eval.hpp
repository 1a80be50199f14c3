#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "pivotmt/corpus.hpp"

namespace pivotmt {

/// Splits a sentence into scoring units. Implementations are deterministic and
/// never emit empty tokens.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual std::vector<std::string> segment(const Sentence& sentence) const = 0;
};

class WhitespaceSegmenter final : public Segmenter {
 public:
  std::vector<std::string> segment(const Sentence& sentence) const override;
};

// Rule-based morpheme splitter: after whitespace splitting, the longest
// matching suffix (strictly shorter than the word) becomes its own token.
class SuffixStubSegmenter final : public Segmenter {
 public:
  explicit SuffixStubSegmenter(std::vector<std::string> suffixes);
  std::vector<std::string> segment(const Sentence& sentence) const override;
  const std::vector<std::string>& suffixes() const noexcept { return suffixes_; }

 private:
  std::vector<std::string> suffixes_;  // longest first
};

WhitespaceSegmenter whitespace_segmenter();
SuffixStubSegmenter suffix_stub_segmenter(std::vector<std::string> suffixes);

inline constexpr int kBleuOrder = 4;

/// Clipped n-gram matches and totals; corpus statistics are sums of these.
struct BleuStats {
  std::array<std::size_t, kBleuOrder> matches{};
  std::array<std::size_t, kBleuOrder> totals{};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;

  BleuStats& operator+=(const BleuStats& other);
};

BleuStats sentence_stats(const std::vector<std::string>& hyp, const std::vector<std::string>& ref);

struct BleuOptions {
  bool lowercase = false;
  // Add-one smoothing of the 2- to 4-gram precisions.
  bool smooth = false;
};

struct BleuReport {
  double bleu = 0.0;
  std::array<double, kBleuOrder> precisions{};
  double brevity_penalty = 1.0;
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
};

BleuReport bleu_from_stats(const BleuStats& stats, bool smooth = false);

/// Corpus-level BLEU-4 against a single reference per hypothesis.
BleuReport bleu4(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references,
                 const Segmenter& seg, const BleuOptions& options = {});

std::string render_report_tsv(const BleuReport& report);
std::string render_report_json(const BleuReport& report);

}  // namespace pivotmt
