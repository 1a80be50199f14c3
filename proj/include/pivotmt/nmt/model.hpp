#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pivotmt/error.hpp"
#include "pivotmt/nmt/network.hpp"
#include "pivotmt/random.hpp"

namespace pivotmt::nmt {

template <typename Scalar>
struct MsnmtModel {
  Hyperparams hp;
  Parameters<Scalar> params;
  // Filled in by the corpus-level entry points; empty for id-level use.
  std::vector<std::string> source_langs;
  std::string tgt_lang;
  std::vector<Vocabulary> src_vocabs;
  Vocabulary tgt_vocab;

  std::size_t n_sources() const { return params.encoders.size(); }
};

template <typename Scalar = double>
MsnmtModel<Scalar> init_model(const Hyperparams& hp, std::size_t n_sources) {
  MsnmtModel<Scalar> m;
  m.hp = hp;
  m.params = init_parameters<Scalar>(hp, n_sources);
  return m;
}

/// One example at id level; target excludes BOS/EOS.
struct EncodedRow {
  std::vector<std::optional<TokenIds>> sources;
  TokenIds target;
};

using IdMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Padded id matrices. Source rows hold the raw ids; target rows hold
/// BOS, ids, EOS. Padding uses Vocabulary::kPad.
struct TrainingBatch {
  std::vector<IdMatrix> sources;                 // per language: rows x max_len
  std::vector<std::vector<int>> source_lengths;  // per language, per row
  std::vector<std::vector<bool>> mask;           // per row, per language
  IdMatrix target;
  std::vector<int> target_lengths;

  Index rows() const { return target.rows(); }
  std::span<const int> source(std::size_t lang, Index row) const {
    return {sources[lang].row(row).data(), static_cast<std::size_t>(source_lengths[lang][row])};
  }
  std::span<const int> target_row(Index row) const {
    return {target.row(row).data(), static_cast<std::size_t>(target_lengths[row])};
  }
};

TrainingBatch make_batch(std::span<const EncodedRow> rows, std::size_t n_sources);

template <typename Scalar>
struct LossAndGradients {
  Scalar loss = 0;  // mean cross-entropy per target token
  std::size_t tokens = 0;
  Parameters<Scalar> gradients;
};

/// Per-row encoder states (empty for unavailable sources).
template <typename Scalar>
std::vector<Matrix<Scalar>> encode(const MsnmtModel<Scalar>& model, const TrainingBatch& batch,
                                   std::size_t lang_index) {
  if (lang_index >= model.n_sources() || lang_index >= batch.sources.size()) {
    throw DataError("DimensionMismatch", "no source " + std::to_string(lang_index));
  }
  std::vector<Matrix<Scalar>> out(static_cast<std::size_t>(batch.rows()));
  for (Index r = 0; r < batch.rows(); ++r) {
    if (!batch.mask[static_cast<std::size_t>(r)][lang_index]) continue;
    out[static_cast<std::size_t>(r)] =
        encode_sequence(model.params.encoders[lang_index], batch.source(lang_index, r)).states;
  }
  return out;
}

template <typename Scalar>
std::vector<std::span<const int>> row_sources(const TrainingBatch& batch, Index r) {
  std::vector<std::span<const int>> spans(batch.sources.size());
  for (std::size_t n = 0; n < batch.sources.size(); ++n) {
    if (batch.mask[static_cast<std::size_t>(r)][n]) spans[n] = batch.source(n, r);
  }
  return spans;
}

/// Mean token cross-entropy of the batch; with_gradients also fills
/// out.gradients, reusing its storage when already shaped like the model.
/// Throws DataError("EmptyTargetError") when no row has a token after BOS.
template <typename Scalar>
void loss_and_gradients(const MsnmtModel<Scalar>& model, const TrainingBatch& batch,
                        LossAndGradients<Scalar>& out, bool with_gradients = true) {
  std::size_t tokens = 0;
  for (int len : batch.target_lengths) tokens += len > 1 ? static_cast<std::size_t>(len - 1) : 0;
  if (tokens == 0) throw DataError("EmptyTargetError", "batch has no target tokens to predict");
  out.tokens = tokens;
  if (with_gradients) {
    if (out.gradients.encoders.size() == model.params.encoders.size()) {
      for_each_tensor(out.gradients, [](const std::string&, auto& t) { t.setZero(); });
    } else {
      out.gradients = zeros_like(model.params);
    }
  }
  const Scalar scale = Scalar(1) / static_cast<Scalar>(tokens);
  Scalar total = 0;
  for (Index r = 0; r < batch.rows(); ++r) {
    auto loss = sentence_loss<Scalar>(model.params, row_sources<Scalar>(batch, r), batch.target_row(r),
                                      scale, with_gradients ? &out.gradients : nullptr);
    total += loss.nll;
  }
  out.loss = total * scale;
  if (!std::isfinite(static_cast<double>(out.loss))) throw NonFiniteLoss(0, 0);
}

template <typename Scalar>
LossAndGradients<Scalar> loss_and_gradients(const MsnmtModel<Scalar>& model,
                                            const TrainingBatch& batch, bool with_gradients = true) {
  LossAndGradients<Scalar> out;
  loss_and_gradients(model, batch, out, with_gradients);
  return out;
}

/// Clips the global gradient norm to clip_norm, then theta -= lr * g.
/// Returns the norm before clipping.
template <typename Scalar>
Scalar sgd_step(MsnmtModel<Scalar>& model, const Parameters<Scalar>& gradients, double lr,
                double clip_norm) {
  const Scalar norm = std::sqrt(squared_norm(gradients));
  Scalar factor = static_cast<Scalar>(lr);
  if (norm > static_cast<Scalar>(clip_norm)) factor *= static_cast<Scalar>(clip_norm) / norm;
  if (factor == Scalar(0)) return norm;
  const auto grads = tensor_spans(gradients);
  const auto params = tensor_spans(model.params);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Eigen::Map<Vector<Scalar>>(params[k].data(), static_cast<Index>(params[k].size())) -=
        factor * Eigen::Map<const Vector<Scalar>>(grads[k].data(), static_cast<Index>(grads[k].size()));
  }
  return norm;
}

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0;
  double learning_rate = 0;
};

/// Trains on id-level rows. Rows are shuffled every epoch with a generator
/// seeded from hp.seed; the callback sees each finished epoch.
template <typename Scalar>
std::vector<EpochStats> train(MsnmtModel<Scalar>& model, const std::vector<EncodedRow>& rows,
                              const Schedule& schedule,
                              const std::function<void(const EpochStats&)>& on_epoch = {}) {
  std::vector<EpochStats> history;
  if (model.hp.epochs <= 0) return history;
  if (rows.empty()) throw DataError("EmptyCorpus", "no training rows");
  if (schedule.batch_size < 1) throw ConfigParse("batch_size must be positive");
  Rng rng(mix_seed(model.hp.seed, "shuffle"));
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t batch_size = static_cast<std::size_t>(schedule.batch_size);
  std::vector<EncodedRow> chunk;
  LossAndGradients<Scalar> lg;
  for (int epoch = 1; epoch <= model.hp.epochs; ++epoch) {
    if (schedule.shuffle) rng.shuffle(order);
    const double lr = schedule.learning_rate(model.hp.learning_rate, epoch);
    double nll = 0;
    std::size_t tokens = 0;
    std::size_t step = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size, ++step) {
      chunk.clear();
      for (std::size_t i = begin; i < std::min(order.size(), begin + batch_size); ++i) {
        chunk.push_back(rows[order[i]]);
      }
      auto batch = make_batch(chunk, model.n_sources());
      try {
        loss_and_gradients(model, batch, lg);
      } catch (const NonFiniteLoss&) {
        throw NonFiniteLoss(epoch, step);
      }
      nll += static_cast<double>(lg.loss) * static_cast<double>(lg.tokens);
      tokens += lg.tokens;
      sgd_step(model, lg.gradients, lr, model.hp.grad_clip_norm);
      if (!all_finite(model.params)) throw NonFiniteLoss(epoch, step);
    }
    EpochStats stats{epoch, tokens ? nll / static_cast<double>(tokens) : 0.0, lr};
    history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return history;
}

/// Greedy translation; unavailable sources are nullopt or empty.
template <typename Scalar>
TokenIds translate(const MsnmtModel<Scalar>& model, const std::vector<std::optional<TokenIds>>& sources,
                   std::size_t max_len) {
  std::vector<std::span<const int>> spans(sources.size());
  bool any = false;
  for (std::size_t n = 0; n < sources.size(); ++n) {
    if (sources[n] && !sources[n]->empty()) {
      spans[n] = *sources[n];
      any = true;
    }
  }
  if (!any) throw DataError("NoSourceProvided", "translate needs at least one source");
  if (max_len == 0) return {};
  return greedy_decode(model.params, spans, max_len, Vocabulary::kBos, Vocabulary::kEos);
}

}  // namespace pivotmt::nmt
