#include <cstdio>

#include "pivotmt/nmt/checkpoint.hpp"
#include "pivotmt/nmt/pipeline.hpp"

namespace pivotmt::nmt {

void to_json(nlohmann::json& j, const Hyperparams& hp) {
  j = nlohmann::json{{"emb_dim", hp.emb_dim},
                     {"hidden_dim", hp.hidden_dim},
                     {"enc_layers", hp.enc_layers},
                     {"vocab_size_src", hp.vocab_size_src},
                     {"vocab_size_tgt", hp.vocab_size_tgt},
                     {"learning_rate", hp.learning_rate},
                     {"epochs", hp.epochs},
                     {"grad_clip_norm", hp.grad_clip_norm},
                     {"seed", hp.seed},
                     {"init_range", hp.init_range}};
}

// Missing keys keep their defaults so configs only list what they change.
void from_json(const nlohmann::json& j, Hyperparams& hp) {
  hp.emb_dim = j.value("emb_dim", hp.emb_dim);
  hp.hidden_dim = j.value("hidden_dim", hp.hidden_dim);
  hp.enc_layers = j.value("enc_layers", hp.enc_layers);
  hp.vocab_size_src = j.value("vocab_size_src", hp.vocab_size_src);
  hp.vocab_size_tgt = j.value("vocab_size_tgt", hp.vocab_size_tgt);
  hp.learning_rate = j.value("learning_rate", hp.learning_rate);
  hp.epochs = j.value("epochs", hp.epochs);
  hp.grad_clip_norm = j.value("grad_clip_norm", hp.grad_clip_norm);
  hp.seed = j.value("seed", hp.seed);
  hp.init_range = j.value("init_range", hp.init_range);
}

void to_json(nlohmann::json& j, const Schedule& s) {
  j = nlohmann::json{{"batch_size", s.batch_size},
                     {"decay_start", s.decay_start},
                     {"decay", s.decay},
                     {"shuffle", s.shuffle}};
}

void from_json(const nlohmann::json& j, Schedule& s) {
  s.batch_size = j.value("batch_size", s.batch_size);
  s.decay_start = j.value("decay_start", s.decay_start);
  s.decay = j.value("decay", s.decay);
  s.shuffle = j.value("shuffle", s.shuffle);
}

std::string render_training_log(const std::vector<EpochStats>& history) {
  std::string out = "epoch\tmean_loss\tlr\n";
  char buf[96];
  for (const auto& e : history) {
    std::snprintf(buf, sizeof buf, "%d\t%.9g\t%.9g\n", e.epoch, e.mean_loss, e.learning_rate);
    out += buf;
  }
  return out;
}

void build_vocabularies(const MultiWayCorpus& corpus, std::vector<Vocabulary>& src_vocabs,
                        Vocabulary& tgt_vocab) {
  const std::size_t n = corpus.source_langs().size();
  std::vector<std::vector<std::string>> src_symbols(n);
  std::vector<std::string> tgt_symbols;
  for (const auto& row : corpus.rows()) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!row.sources[i]) continue;
      for (auto& t : row.sources[i]->tokens()) src_symbols[i].push_back(std::move(t));
    }
    for (auto& t : row.target.tokens()) tgt_symbols.push_back(std::move(t));
  }
  src_vocabs.clear();
  for (const auto& symbols : src_symbols) src_vocabs.emplace_back(symbols);
  tgt_vocab = Vocabulary(tgt_symbols);
}

}  // namespace pivotmt::nmt
