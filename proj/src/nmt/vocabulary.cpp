#include <algorithm>
#include <cmath>
#include <set>

#include "pivotmt/error.hpp"
#include "pivotmt/nmt/types.hpp"

namespace pivotmt::nmt {

void Hyperparams::validate() const {
  if (emb_dim < 1 || hidden_dim < 1 || enc_layers < 1 || epochs < 0) {
    throw ConfigParse("model dimensions must be positive");
  }
  if (hidden_dim % 2 != 0) throw ConfigParse("hidden_dim must be even (two directions)");
  if (vocab_size_src.empty()) throw ConfigParse("need at least one source vocabulary");
  for (int v : vocab_size_src) {
    if (v < 1) throw ConfigParse("source vocabulary size must be positive");
  }
  if (vocab_size_tgt < 1) throw ConfigParse("target vocabulary size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigParse("learning_rate must be positive");
  if (!(grad_clip_norm > 0.0)) throw ConfigParse("grad_clip_norm must be positive");
}

double Schedule::learning_rate(double base, int epoch) const {
  if (epoch < decay_start) return base;
  return base * std::pow(decay, epoch - decay_start + 1);
}

Vocabulary::Vocabulary() : symbols_{"<pad>", "<unk>", "<s>", "</s>"} {
  for (int i = 0; i < size(); ++i) index_.emplace(symbols_[static_cast<std::size_t>(i)], i);
}

Vocabulary::Vocabulary(const std::vector<std::string>& symbols) : Vocabulary() {
  std::set<std::string> sorted(symbols.begin(), symbols.end());
  for (const auto& s : sorted) {
    if (index_.count(s)) continue;
    index_.emplace(s, size());
    symbols_.push_back(s);
  }
}

int Vocabulary::id(const std::string& symbol) const {
  auto it = index_.find(symbol);
  return it == index_.end() ? kUnk : it->second;
}

TokenIds Vocabulary::encode(const std::vector<std::string>& symbols) const {
  TokenIds ids;
  ids.reserve(symbols.size());
  for (const auto& s : symbols) ids.push_back(id(s));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const TokenIds& ids) const {
  std::vector<std::string> out;
  for (int id : ids) {
    if (id > kEos && id < size()) out.push_back(symbols_[static_cast<std::size_t>(id)]);
  }
  return out;
}

}  // namespace pivotmt::nmt
