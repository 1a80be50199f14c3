#pragma once

// Sentence-level entry points. Input text is already subword-segmented:
// whitespace-separated symbols are looked up in the model's vocabularies.

#include <optional>
#include <string>
#include <vector>

#include "pivotmt/corpus.hpp"
#include "pivotmt/nmt/model.hpp"
#include "pivotmt/text.hpp"

namespace pivotmt::nmt {

/// Vocabularies from the symbols the corpus uses, per source column and target.
void build_vocabularies(const MultiWayCorpus& corpus, std::vector<Vocabulary>& src_vocabs,
                        Vocabulary& tgt_vocab);

/// Initializes a model for the corpus languages; vocabulary sizes in hp are
/// overwritten from the given vocabularies.
template <typename Scalar = double>
MsnmtModel<Scalar> init_model(Hyperparams hp, std::vector<std::string> source_langs,
                              std::string tgt_lang, std::vector<Vocabulary> src_vocabs,
                              Vocabulary tgt_vocab) {
  if (source_langs.size() != src_vocabs.size()) {
    throw DataError("DimensionMismatch", "one vocabulary per source language required");
  }
  hp.vocab_size_src.clear();
  for (const auto& v : src_vocabs) hp.vocab_size_src.push_back(v.size());
  hp.vocab_size_tgt = tgt_vocab.size();
  auto model = init_model<Scalar>(hp, source_langs.size());
  model.source_langs = std::move(source_langs);
  model.tgt_lang = std::move(tgt_lang);
  model.src_vocabs = std::move(src_vocabs);
  model.tgt_vocab = std::move(tgt_vocab);
  return model;
}

/// Source ids get a trailing EOS; an unavailable source stays empty.
template <typename Scalar>
std::vector<std::optional<TokenIds>> encode_sources(const MsnmtModel<Scalar>& model,
                                                    const std::vector<std::optional<Sentence>>& sources) {
  if (sources.size() != model.n_sources()) {
    throw DataError("DimensionMismatch", "expected " + std::to_string(model.n_sources()) +
                                             " sources, got " + std::to_string(sources.size()));
  }
  std::vector<std::optional<TokenIds>> ids(sources.size());
  for (std::size_t n = 0; n < sources.size(); ++n) {
    if (!sources[n]) continue;
    ids[n] = model.src_vocabs.at(n).encode(sources[n]->tokens());
    ids[n]->push_back(Vocabulary::kEos);
  }
  return ids;
}

template <typename Scalar>
std::vector<EncodedRow> encode_corpus(const MsnmtModel<Scalar>& model, const MultiWayCorpus& corpus) {
  if (corpus.source_langs() != model.source_langs || corpus.tgt_lang() != model.tgt_lang) {
    throw DataError("LanguageMismatch", "corpus languages differ from the model's");
  }
  std::vector<EncodedRow> rows;
  rows.reserve(corpus.size());
  for (const auto& row : corpus.rows()) {
    rows.push_back({encode_sources(model, row.sources), model.tgt_vocab.encode(row.target.tokens())});
  }
  return rows;
}

template <typename Scalar>
std::vector<EpochStats> train(MsnmtModel<Scalar>& model, const MultiWayCorpus& corpus,
                              const Schedule& schedule,
                              const std::function<void(const EpochStats&)>& on_epoch = {}) {
  if (corpus.size() == 0) throw DataError("EmptyCorpus", "no training rows");
  return train(model, encode_corpus(model, corpus), schedule, on_epoch);
}

template <typename Scalar>
Sentence translate_sentence(const MsnmtModel<Scalar>& model,
                            const std::vector<std::optional<Sentence>>& sources, std::size_t max_len) {
  const auto ids = translate(model, encode_sources(model, sources), max_len);
  return Sentence(join(model.tgt_vocab.decode(ids), " "));
}

/// Mean token cross-entropy over a corpus, without updating the model.
template <typename Scalar>
double corpus_loss(const MsnmtModel<Scalar>& model, const MultiWayCorpus& corpus,
                   std::size_t batch_size = 64) {
  const auto rows = encode_corpus(model, corpus);
  double nll = 0;
  std::size_t tokens = 0;
  for (std::size_t begin = 0; begin < rows.size(); begin += batch_size) {
    const std::size_t end = std::min(rows.size(), begin + batch_size);
    auto batch = make_batch(std::span<const EncodedRow>(rows.data() + begin, end - begin), model.n_sources());
    auto lg = loss_and_gradients(model, batch, false);
    nll += static_cast<double>(lg.loss) * static_cast<double>(lg.tokens);
    tokens += lg.tokens;
  }
  return tokens ? nll / static_cast<double>(tokens) : 0.0;
}

}  // namespace pivotmt::nmt
