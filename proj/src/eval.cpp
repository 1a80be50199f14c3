#include "pivotmt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "json.hpp"
#include "pivotmt/error.hpp"
#include "pivotmt/text.hpp"

namespace pivotmt {

std::vector<std::string> WhitespaceSegmenter::segment(const Sentence& sentence) const {
  return sentence.tokens();
}

SuffixStubSegmenter::SuffixStubSegmenter(std::vector<std::string> suffixes)
    : suffixes_(std::move(suffixes)) {
  std::erase_if(suffixes_, [](const std::string& s) { return s.empty(); });
  std::stable_sort(suffixes_.begin(), suffixes_.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
}

std::vector<std::string> SuffixStubSegmenter::segment(const Sentence& sentence) const {
  std::vector<std::string> out;
  for (auto& word : sentence.tokens()) {
    const std::string* hit = nullptr;
    for (const auto& suffix : suffixes_) {
      if (word.size() > suffix.size() && word.ends_with(suffix)) {
        hit = &suffix;
        break;
      }
    }
    if (hit) {
      out.push_back(word.substr(0, word.size() - hit->size()));
      out.push_back(*hit);
    } else {
      out.push_back(std::move(word));
    }
  }
  return out;
}

WhitespaceSegmenter whitespace_segmenter() { return {}; }

SuffixStubSegmenter suffix_stub_segmenter(std::vector<std::string> suffixes) {
  return SuffixStubSegmenter(std::move(suffixes));
}

BleuStats& BleuStats::operator+=(const BleuStats& other) {
  for (int n = 0; n < kBleuOrder; ++n) {
    matches[n] += other.matches[n];
    totals[n] += other.totals[n];
  }
  hyp_len += other.hyp_len;
  ref_len += other.ref_len;
  return *this;
}

BleuStats sentence_stats(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  BleuStats stats;
  stats.hyp_len = hyp.size();
  stats.ref_len = ref.size();
  for (int n = 1; n <= kBleuOrder; ++n) {
    std::map<std::vector<std::string>, std::size_t> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) {
      ++ref_counts[std::vector<std::string>(ref.begin() + i, ref.begin() + i + n)];
    }
    std::map<std::vector<std::string>, std::size_t> hyp_counts;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
      ++hyp_counts[std::vector<std::string>(hyp.begin() + i, hyp.begin() + i + n)];
    }
    std::size_t matched = 0;
    for (const auto& [gram, count] : hyp_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matched += std::min(count, it->second);
    }
    stats.matches[n - 1] = matched;
    stats.totals[n - 1] = hyp.size() >= static_cast<std::size_t>(n) ? hyp.size() - n + 1 : 0;
  }
  return stats;
}

BleuReport bleu_from_stats(const BleuStats& stats, bool smooth) {
  BleuReport report;
  report.hyp_len = stats.hyp_len;
  report.ref_len = stats.ref_len;
  double log_sum = 0.0;
  bool zero = false;
  for (int n = 0; n < kBleuOrder; ++n) {
    double m = static_cast<double>(stats.matches[n]);
    double t = static_cast<double>(stats.totals[n]);
    if (smooth && n > 0) {
      m += 1.0;
      t += 1.0;
    }
    const double p = t > 0.0 ? m / t : 0.0;
    report.precisions[n] = p;
    if (p > 0.0) {
      log_sum += std::log(p);
    } else {
      zero = true;
    }
  }
  if (stats.hyp_len == 0) {
    report.brevity_penalty = stats.ref_len == 0 ? 1.0 : 0.0;
    report.bleu = 0.0;
    return report;
  }
  const double ratio = static_cast<double>(stats.ref_len) / static_cast<double>(stats.hyp_len);
  report.brevity_penalty = ratio > 1.0 ? std::exp(1.0 - ratio) : 1.0;
  report.bleu = zero ? 0.0 : report.brevity_penalty * std::exp(log_sum / kBleuOrder);
  return report;
}

BleuReport bleu4(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references,
                 const Segmenter& seg, const BleuOptions& options) {
  if (hypotheses.size() != references.size()) {
    throw DataError("LengthMismatch", std::to_string(hypotheses.size()) + " hypotheses vs " +
                                          std::to_string(references.size()) + " references");
  }
  if (hypotheses.empty()) throw DataError("EmptyCorpus", "no segments to score");
  auto prepare = [&](const Sentence& s) {
    return seg.segment(options.lowercase ? Sentence(to_lower_ascii(s.text())) : s);
  };
  BleuStats total;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    total += sentence_stats(prepare(hypotheses[i]), prepare(references[i]));
  }
  return bleu_from_stats(total, options.smooth);
}

std::string render_report_tsv(const BleuReport& report) {
  std::string out = "bleu\t" + format_percent(report.bleu) + "\n";
  char buf[64];
  for (int n = 0; n < kBleuOrder; ++n) {
    std::snprintf(buf, sizeof buf, "p%d\t%.6f\n", n + 1, report.precisions[n]);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "bp\t%.6f\n", report.brevity_penalty);
  out += buf;
  out += "hyp_len\t" + std::to_string(report.hyp_len) + "\n";
  out += "ref_len\t" + std::to_string(report.ref_len) + "\n";
  return out;
}

std::string render_report_json(const BleuReport& report) {
  nlohmann::json j;
  j["bleu"] = report.bleu;
  j["bleu_percent"] = format_percent(report.bleu);
  j["precisions"] = report.precisions;
  j["brevity_penalty"] = report.brevity_penalty;
  j["hyp_len"] = report.hyp_len;
  j["ref_len"] = report.ref_len;
  return j.dump(2) + "\n";
}

}  // namespace pivotmt
