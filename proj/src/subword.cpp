#include "pivotmt/subword.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "pivotmt/error.hpp"
#include "pivotmt/text.hpp"

namespace pivotmt {

namespace {

std::string pair_key(std::string_view left, std::string_view right) {
  std::string key;
  key.reserve(left.size() + right.size() + 1);
  key.append(left);
  key.push_back(' ');
  key.append(right);
  return key;
}

// Merges every non-overlapping (left, right) occurrence, scanning left to right.
template <typename Sym>
bool merge_in_place(std::vector<Sym>& symbols, const Sym& left, const Sym& right, const Sym& merged) {
  bool changed = false;
  std::size_t out = 0;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
      symbols[out++] = merged;
      ++i;
      changed = true;
    } else {
      symbols[out++] = symbols[i];
    }
  }
  symbols.resize(out);
  return changed;
}

}  // namespace

BpeModel::BpeModel(std::string eow_marker, std::vector<std::string> alphabet,
                   std::vector<Merge> merges)
    : eow_marker_(std::move(eow_marker)), alphabet_(std::move(alphabet)), merges_(std::move(merges)) {
  if (eow_marker_.empty() || eow_marker_.find_first_of(" \t\n") != std::string::npos) {
    throw DataError("InvalidModel", "end-of-word marker must be non-empty and space-free");
  }
  std::sort(alphabet_.begin(), alphabet_.end());
  alphabet_.erase(std::unique(alphabet_.begin(), alphabet_.end()), alphabet_.end());
  vocab_.insert(alphabet_.begin(), alphabet_.end());
  vocab_.insert(eow_marker_);
  for (std::size_t i = 0; i < merges_.size(); ++i) {
    const auto& m = merges_[i];
    if (!vocab_.count(m.left) || !vocab_.count(m.right)) {
      throw DataError("InvalidModel", "merge " + std::to_string(i + 1) + " (" + m.left + " " +
                                          m.right + ") uses an unknown operand");
    }
    vocab_.insert(m.left + m.right);
    rank_.try_emplace(pair_key(m.left, m.right), i);
  }
}

bool BpeModel::knows_char(std::string_view ch) const {
  return std::binary_search(alphabet_.begin(), alphabet_.end(), ch);
}

std::vector<std::string> BpeModel::encode_word(std::string_view word) const {
  std::vector<std::string> symbols = utf8_chars(word);
  while (symbols.size() > 1) {
    std::size_t best = merges_.size();
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = rank_.find(pair_key(symbols[i], symbols[i + 1]));
      if (it != rank_.end() && it->second < best) best = it->second;
    }
    if (best == merges_.size()) break;
    const auto& m = merges_[best];
    merge_in_place(symbols, m.left, m.right, m.left + m.right);
  }
  if (!symbols.empty()) symbols.back() += eow_marker_;
  return symbols;
}

std::string_view BpeModel::strip_marker(std::string_view symbol) const {
  if (symbol.size() > eow_marker_.size() && symbol.ends_with(eow_marker_)) {
    symbol.remove_suffix(eow_marker_.size());
  }
  return symbol;
}

BpeModel BpeModel::prefix(std::size_t count) const {
  count = std::min(count, merges_.size());
  return BpeModel(eow_marker_, alphabet_,
                  std::vector<Merge>(merges_.begin(), merges_.begin() + static_cast<long>(count)));
}

BpeModel train_bpe(const std::vector<Sentence>& sentences, std::size_t target_vocab_size,
                   std::string eow_marker) {
  std::map<std::string, std::size_t> word_freq;
  for (const auto& s : sentences) {
    for (auto& w : s.tokens()) ++word_freq[std::move(w)];
  }
  if (word_freq.empty()) throw DataError("EmptyCorpus", "no words to learn merges from");

  // Symbols are interned; comparisons for tie-breaking use their strings.
  std::vector<std::string> names;
  std::unordered_map<std::string, int> ids;
  auto intern = [&](const std::string& s) {
    auto [it, inserted] = ids.try_emplace(s, static_cast<int>(names.size()));
    if (inserted) names.push_back(s);
    return it->second;
  };

  std::vector<std::vector<int>> words;
  std::vector<std::size_t> freqs;
  std::set<std::string> alphabet;
  for (const auto& [word, freq] : word_freq) {
    std::vector<int> symbols;
    for (const auto& ch : utf8_chars(word)) {
      alphabet.insert(ch);
      symbols.push_back(intern(ch));
    }
    words.push_back(std::move(symbols));
    freqs.push_back(freq);
  }
  if (target_vocab_size <= alphabet.size()) throw TargetTooSmall(alphabet.size());

  using Pair = std::pair<int, int>;
  std::map<Pair, long> counts;
  std::map<Pair, std::set<std::size_t>> where;
  // Best pair first: higher count, then lexicographically smaller strings.
  auto cmp = [&](const std::pair<long, Pair>& a, const std::pair<long, Pair>& b) {
    if (a.first != b.first) return a.first > b.first;
    return std::tie(names[a.second.first], names[a.second.second]) <
           std::tie(names[b.second.first], names[b.second.second]);
  };
  std::set<std::pair<long, Pair>, decltype(cmp)> queue(cmp);

  auto adjust = [&](const Pair& p, long delta) {
    long& c = counts[p];
    if (c > 0) queue.erase({c, p});
    c += delta;
    if (c > 0) queue.insert({c, p});
  };
  auto add_word = [&](std::size_t w, long sign) {
    const auto& sym = words[w];
    for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
      Pair p{sym[i], sym[i + 1]};
      adjust(p, sign * static_cast<long>(freqs[w]));
      if (sign > 0) where[p].insert(w);
    }
  };
  for (std::size_t w = 0; w < words.size(); ++w) add_word(w, +1);

  std::set<std::string> vocab(alphabet.begin(), alphabet.end());
  vocab.insert(eow_marker);
  std::vector<Merge> merges;
  while (vocab.size() < target_vocab_size && !queue.empty()) {
    auto [count, best] = *queue.begin();
    if (count < 2) break;
    const std::string product = names[best.first] + names[best.second];
    const int merged = intern(product);
    merges.push_back({names[best.first], names[best.second]});
    vocab.insert(product);

    auto affected = std::move(where[best]);
    where.erase(best);
    for (std::size_t w : affected) {
      auto& sym = words[w];
      bool present = false;
      for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
        if (sym[i] == best.first && sym[i + 1] == best.second) present = true;
      }
      if (!present) continue;
      add_word(w, -1);
      merge_in_place(sym, best.first, best.second, merged);
      add_word(w, +1);
    }
  }
  return BpeModel(std::move(eow_marker), {alphabet.begin(), alphabet.end()}, std::move(merges));
}

std::vector<std::string> encode(const BpeModel& model, const Sentence& sentence) {
  std::vector<std::string> out;
  for (const auto& word : sentence.tokens()) {
    auto symbols = model.encode_word(word);
    out.insert(out.end(), std::make_move_iterator(symbols.begin()),
               std::make_move_iterator(symbols.end()));
  }
  return out;
}

Sentence decode(const std::vector<std::string>& symbols, std::string_view eow_marker) {
  std::string text;
  for (const auto& s : symbols) text += s;
  if (!eow_marker.empty()) {
    std::string replaced;
    std::size_t pos = 0;
    while (true) {
      std::size_t hit = text.find(eow_marker, pos);
      if (hit == std::string::npos) {
        replaced.append(text, pos, std::string::npos);
        break;
      }
      replaced.append(text, pos, hit - pos);
      replaced.push_back(' ');
      pos = hit + eow_marker.size();
    }
    text = std::move(replaced);
  }
  while (!text.empty() && text.back() == ' ') text.pop_back();
  return Sentence(std::move(text));
}

std::vector<std::string> output_symbols(const BpeModel& model) {
  std::set<std::string> out;
  for (const auto& sym : model.vocab()) {
    if (sym == model.eow_marker()) continue;
    out.insert(sym);
    out.insert(sym + model.eow_marker());
  }
  return {out.begin(), out.end()};
}

CoverageReport coverage(const BpeModel& model, const std::vector<Sentence>& sentences,
                        std::optional<std::size_t> vocab_limit) {
  struct WordInfo {
    std::vector<std::string> symbols;
    bool unknown = false;
  };
  std::vector<WordInfo> words;
  std::map<std::string, std::size_t> usage;
  for (const auto& s : sentences) {
    for (const auto& w : s.tokens()) {
      WordInfo info;
      for (const auto& ch : utf8_chars(w)) info.unknown |= !model.knows_char(ch);
      for (const auto& sym : model.encode_word(w)) info.symbols.emplace_back(model.strip_marker(sym));
      for (const auto& sym : info.symbols) {
        if (model.vocab().count(sym)) ++usage[sym];
      }
      words.push_back(std::move(info));
    }
  }

  std::set<std::string> allowed;
  if (vocab_limit) {
    std::vector<std::pair<std::size_t, std::string>> ranked;
    for (const auto& [sym, n] : usage) ranked.emplace_back(n, sym);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; i < ranked.size() && i < *vocab_limit; ++i) {
      allowed.insert(ranked[i].second);
    }
  }

  CoverageReport report;
  report.total_tokens = words.size();
  for (const auto& info : words) {
    if (info.unknown) continue;
    const bool ok = std::all_of(info.symbols.begin(), info.symbols.end(), [&](const auto& sym) {
      return vocab_limit ? allowed.count(sym) > 0 : model.vocab().count(sym) > 0;
    });
    if (ok) ++report.covered_tokens;
  }
  report.coverage = report.total_tokens == 0 ? 1.0
                                             : static_cast<double>(report.covered_tokens) /
                                                   static_cast<double>(report.total_tokens);
  return report;
}

std::string render_bpe(const BpeModel& model) {
  std::string out = model.eow_marker() + "\n";
  for (const auto& m : model.merges()) out += m.left + " " + m.right + "\n";
  for (const auto& ch : model.alphabet()) out += ch + "\n";
  return out;
}

BpeModel parse_bpe(std::string_view contents) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < contents.size()) {
    std::size_t end = contents.find('\n', start);
    if (end == std::string_view::npos) end = contents.size();
    lines.emplace_back(contents.substr(start, end - start));
    start = end + 1;
  }
  if (lines.empty() || lines.front().empty()) {
    throw DataError("InvalidModel", "missing end-of-word marker line");
  }
  std::vector<Merge> merges;
  std::vector<std::string> alphabet;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& line = lines[i];
    const auto space = line.find(' ');
    if (space == std::string::npos) {
      if (line.empty()) throw DataError("InvalidModel", "empty line " + std::to_string(i + 1));
      alphabet.push_back(line);
    } else if (space == 0 || space + 1 >= line.size() ||
               line.find(' ', space + 1) != std::string::npos) {
      throw DataError("InvalidModel", "malformed merge on line " + std::to_string(i + 1));
    } else {
      merges.push_back({line.substr(0, space), line.substr(space + 1)});
    }
  }
  if (alphabet.empty()) {
    // Merge-only files: recover the characters the merges are built from.
    for (const auto& m : merges) {
      for (const auto* operand : {&m.left, &m.right}) {
        if (*operand != lines.front() && utf8_chars(*operand).size() == 1) {
          alphabet.push_back(*operand);
        }
      }
    }
  }
  return BpeModel(lines.front(), std::move(alphabet), std::move(merges));
}

void save_bpe(const BpeModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, render_bpe(model));
}

BpeModel load_bpe(const std::filesystem::path& path) { return parse_bpe(read_file(path)); }

}  // namespace pivotmt
