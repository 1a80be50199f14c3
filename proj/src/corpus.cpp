#include "pivotmt/corpus.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "pivotmt/error.hpp"
#include "pivotmt/random.hpp"
#include "pivotmt/text.hpp"

namespace pivotmt {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Original:
      return "original";
    case Provenance::SyntheticSource:
      return "synthetic-source";
    case Provenance::SyntheticTarget:
      return "synthetic-target";
  }
  return "unknown";
}

Sentence::Sentence(std::string text) : text_(std::move(text)) {
  if (text_.find_first_of("\r\n") != std::string::npos) {
    throw DataError("InvalidSentence", "line break inside sentence text");
  }
}

std::vector<std::string> Sentence::tokens() const { return split_whitespace(text_); }

std::vector<bool> MultiWayRow::mask() const {
  std::vector<bool> m(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) m[i] = sources[i].has_value();
  return m;
}

std::size_t MultiWayRow::available() const {
  return static_cast<std::size_t>(
      std::count_if(sources.begin(), sources.end(), [](const auto& s) { return s.has_value(); }));
}

MultiWayCorpus::MultiWayCorpus(std::vector<std::string> source_langs, std::string tgt_lang)
    : source_langs_(std::move(source_langs)), tgt_lang_(std::move(tgt_lang)) {
  std::set<std::string> seen;
  for (const auto& lang : source_langs_) {
    if (!seen.insert(lang).second) throw DataError("LanguageCollision", "duplicate source " + lang);
  }
}

void MultiWayCorpus::add_row(MultiWayRow row) {
  if (row.sources.size() != source_langs_.size()) {
    throw DataError("DimensionMismatch", "row has " + std::to_string(row.sources.size()) +
                                             " sources, corpus has " +
                                             std::to_string(source_langs_.size()));
  }
  if (row.available() == 0) throw DataError("NoSourceProvided", "row without any source");
  rows_.push_back(std::move(row));
}

void FilterConfig::validate() const {
  if (min_len < 1) throw ConfigParse("min_len must be at least 1");
  if (min_len > max_len) throw ConfigParse("min_len exceeds max_len");
  if (!(max_ratio >= 1.0)) throw ConfigParse("max_ratio must be >= 1");
}

// --- I/O ---------------------------------------------------------------------

ParallelCorpus load_parallel(const std::filesystem::path& src_path,
                             const std::filesystem::path& tgt_path, std::string src_lang,
                             std::string tgt_lang) {
  auto src = read_lines(src_path);
  auto tgt = read_lines(tgt_path);
  if (src.size() != tgt.size()) throw LineCountMismatch(src.size(), tgt.size());
  ParallelCorpus corpus{std::move(src_lang), std::move(tgt_lang), {}};
  corpus.pairs.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    corpus.pairs.emplace_back(Sentence(std::move(src[i])), Sentence(std::move(tgt[i])));
  }
  return corpus;
}

void save_parallel(const ParallelCorpus& corpus, const std::filesystem::path& src_path,
                   const std::filesystem::path& tgt_path) {
  std::vector<std::string> src, tgt;
  src.reserve(corpus.size());
  tgt.reserve(corpus.size());
  for (const auto& p : corpus.pairs) {
    src.push_back(p.source().text());
    tgt.push_back(p.target().text());
  }
  write_lines_atomic(src_path, src);
  write_lines_atomic(tgt_path, tgt);
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t end = line.find('\t', start);
    if (end == std::string::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, end - start));
    start = end + 1;
  }
}

void check_cell(const std::string& text) {
  if (text.find('\t') != std::string::npos) {
    throw DataError("InvalidSentence", "tab inside sentence cannot be stored as TSV");
  }
}

}  // namespace

std::string render_multiway(const MultiWayCorpus& corpus) {
  std::string out;
  for (const auto& lang : corpus.source_langs()) {
    out += lang;
    out += '\t';
  }
  out += corpus.tgt_lang();
  out += '\n';
  for (const auto& row : corpus.rows()) {
    for (const auto& src : row.sources) {
      if (src) {
        check_cell(src->text());
        out += src->text();
      }
      out += '\t';
    }
    check_cell(row.target.text());
    out += row.target.text();
    out += '\n';
  }
  return out;
}

void save_multiway(const MultiWayCorpus& corpus, const std::filesystem::path& path) {
  write_file_atomic(path, render_multiway(corpus));
}

MultiWayCorpus load_multiway(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw DataError("MissingHeader", path.string() + " has no header row");
  auto header = split_tabs(lines.front());
  if (header.size() < 2) throw DataError("MissingHeader", "header needs >= 2 columns");
  std::string tgt_lang = header.back();
  header.pop_back();
  MultiWayCorpus corpus(header, tgt_lang);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto cells = split_tabs(lines[i]);
    if (cells.size() != header.size() + 1) {
      throw DataError("DimensionMismatch", "line " + std::to_string(i + 1) + " has " +
                                               std::to_string(cells.size()) + " columns");
    }
    MultiWayRow row;
    row.target = Sentence(cells.back());
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (cells[c].empty()) {
        row.sources.emplace_back(std::nullopt);
      } else {
        row.sources.emplace_back(Sentence(cells[c]));
      }
    }
    corpus.add_row(std::move(row));
  }
  return corpus;
}

ParallelCorpus load_parallel_tsv(const std::filesystem::path& path) {
  auto multi = load_multiway(path);
  if (multi.source_langs().size() != 1) {
    throw DataError("DimensionMismatch", path.string() + " is not a two-column corpus");
  }
  return column(multi, 0);
}

void save_parallel_tsv(const ParallelCorpus& corpus, const std::filesystem::path& path) {
  MultiWayCorpus multi({corpus.src_lang}, corpus.tgt_lang);
  for (const auto& p : corpus.pairs) multi.add_row(MultiWayRow{{p.source()}, p.target()});
  save_multiway(multi, path);
}

// --- Filtering chain ---------------------------------------------------------

namespace {

template <typename Keep>
ParallelCorpus keep_if(const ParallelCorpus& corpus, Keep keep) {
  ParallelCorpus out{corpus.src_lang, corpus.tgt_lang, {}};
  for (const auto& p : corpus.pairs) {
    if (keep(p)) out.pairs.push_back(p);
  }
  return out;
}

}  // namespace

ParallelCorpus length_filter(const ParallelCorpus& corpus, const FilterConfig& cfg) {
  cfg.validate();
  return keep_if(corpus, [&](const SentencePair& p) {
    const double s = static_cast<double>(p.source().tokens().size());
    const double t = static_cast<double>(p.target().tokens().size());
    const double lo = static_cast<double>(cfg.min_len);
    const double hi = static_cast<double>(cfg.max_len);
    if (s < lo || s > hi || t < lo || t > hi) return false;
    return std::max(s / t, t / s) <= cfg.max_ratio;
  });
}

ParallelCorpus dedup(const ParallelCorpus& corpus) {
  std::set<std::pair<std::string_view, std::string_view>> seen;
  return keep_if(corpus, [&](const SentencePair& p) {
    return seen.emplace(p.source().text(), p.target().text()).second;
  });
}

ParallelCorpus unk_filter(const ParallelCorpus& corpus, std::string_view unk_symbol) {
  if (unk_symbol.empty()) return corpus;
  return keep_if(corpus, [&](const SentencePair& p) {
    return p.source().text().find(unk_symbol) == std::string::npos &&
           p.target().text().find(unk_symbol) == std::string::npos;
  });
}

ParallelCorpus clean(const ParallelCorpus& corpus, const FilterConfig& cfg) {
  return unk_filter(dedup(length_filter(corpus, cfg)), cfg.unk_symbol);
}

ParallelCorpus truncate(const ParallelCorpus& corpus, std::size_t n, std::uint64_t seed) {
  if (n >= corpus.size()) return corpus;
  Rng rng(seed);
  ParallelCorpus out{corpus.src_lang, corpus.tgt_lang, {}};
  out.pairs.reserve(n);
  for (std::size_t i : rng.sample_sorted(corpus.size(), n)) out.pairs.push_back(corpus.pairs[i]);
  return out;
}

// --- Alignment ---------------------------------------------------------------

MultiWayCorpus align_multiway(const std::vector<ParallelCorpus>& corpora, AlignMode mode) {
  if (corpora.empty()) throw DataError("EmptyCorpus", "no corpora to align");
  std::vector<std::string> langs;
  for (const auto& c : corpora) {
    if (c.tgt_lang != corpora.front().tgt_lang) {
      throw DataError("TargetMismatch", c.tgt_lang + " vs " + corpora.front().tgt_lang);
    }
    langs.push_back(c.src_lang);
  }
  MultiWayCorpus out(langs, corpora.front().tgt_lang);
  const std::size_t n = corpora.size();

  if (mode == AlignMode::Disjoint) {
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& p : corpora[i].pairs) {
        MultiWayRow row;
        row.sources.assign(n, std::nullopt);
        row.sources[i] = p.source();
        row.target = p.target();
        out.add_row(std::move(row));
      }
    }
    return out;
  }

  // ByTargetKey. Key order is first appearance scanning corpora in order.
  std::vector<std::string> keys;
  std::unordered_map<std::string, std::vector<const Sentence*>> joined;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& p : corpora[i].pairs) {
      auto [it, inserted] = joined.try_emplace(p.target().text());
      if (inserted) {
        it->second.assign(n, nullptr);
        keys.push_back(p.target().text());
      }
      if (it->second[i] == nullptr) it->second[i] = &p.source();
    }
  }
  const std::size_t required = std::min<std::size_t>(2, n);
  for (const auto& key : keys) {
    const auto& sources = joined.at(key);
    MultiWayRow row;
    row.target = Sentence(key);
    for (const Sentence* s : sources) {
      row.sources.push_back(s ? std::optional<Sentence>(*s) : std::nullopt);
    }
    if (row.available() >= required) out.add_row(std::move(row));
  }
  return out;
}

ParallelCorpus column(const MultiWayCorpus& corpus, std::size_t index) {
  if (index >= corpus.source_langs().size()) {
    throw DataError("DimensionMismatch", "no source column " + std::to_string(index));
  }
  ParallelCorpus out{corpus.source_langs()[index], corpus.tgt_lang(), {}};
  for (const auto& row : corpus.rows()) {
    if (row.sources[index]) out.pairs.emplace_back(*row.sources[index], row.target);
  }
  return out;
}

}  // namespace pivotmt
