#pragma once

// Forward and reverse-mode passes of the multi-source attentional
// encoder-decoder. Every forward routine here has a matching *_backward that
// accumulates into a Parameters-shaped gradient.

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "pivotmt/error.hpp"
#include "pivotmt/nmt/parameters.hpp"

namespace pivotmt::nmt {

// --- LSTM cell -------------------------------------------------------------------

template <typename Scalar>
struct LstmStep {
  Vector<Scalar> x, h_prev, c_prev;
  Vector<Scalar> i, f, o, g;  // gate activations
  Vector<Scalar> c, tanh_c, h;
};

template <typename Scalar>
Vector<Scalar> sigmoid(const Vector<Scalar>& z) {
  return (Scalar(1) / (Scalar(1) + (-z.array()).exp())).matrix();
}

template <typename Scalar>
void lstm_forward(const LstmParams<Scalar>& p, const Vector<Scalar>& x, const Vector<Scalar>& h_prev,
                  const Vector<Scalar>& c_prev, LstmStep<Scalar>& st) {
  const Index n = p.hidden();
  Vector<Scalar> z = p.b;
  z.noalias() += p.W * x;
  z.noalias() += p.U * h_prev;
  st.x = x;
  st.h_prev = h_prev;
  st.c_prev = c_prev;
  st.i = sigmoid<Scalar>(z.segment(0, n));
  st.f = sigmoid<Scalar>(z.segment(n, n));
  st.o = sigmoid<Scalar>(z.segment(2 * n, n));
  st.g = z.segment(3 * n, n).array().tanh().matrix();
  st.c = st.f.cwiseProduct(c_prev) + st.i.cwiseProduct(st.g);
  st.tanh_c = st.c.array().tanh().matrix();
  st.h = st.o.cwiseProduct(st.tanh_c);
}

// dc holds dL/dc on entry and dL/dc_prev on exit.
template <typename Scalar>
void lstm_backward(const LstmParams<Scalar>& p, const LstmStep<Scalar>& st, const Vector<Scalar>& dh,
                   Vector<Scalar>& dc, LstmParams<Scalar>& grad, Vector<Scalar>& dx,
                   Vector<Scalar>& dh_prev) {
  const Index n = p.hidden();
  const auto one = Scalar(1);
  Vector<Scalar> dct =
      dc + (dh.array() * st.o.array() * (one - st.tanh_c.array().square())).matrix();
  Vector<Scalar> dz(4 * n);
  dz.segment(0, n) = (dct.array() * st.g.array() * st.i.array() * (one - st.i.array())).matrix();
  dz.segment(n, n) =
      (dct.array() * st.c_prev.array() * st.f.array() * (one - st.f.array())).matrix();
  dz.segment(2 * n, n) =
      (dh.array() * st.tanh_c.array() * st.o.array() * (one - st.o.array())).matrix();
  dz.segment(3 * n, n) = (dct.array() * st.i.array() * (one - st.g.array().square())).matrix();
  dc = dct.cwiseProduct(st.f);
  grad.W.noalias() += dz * st.x.transpose();
  grad.U.noalias() += dz * st.h_prev.transpose();
  grad.b += dz;
  dx.noalias() = p.W.transpose() * dz;
  dh_prev.noalias() = p.U.transpose() * dz;
}

// --- Bidirectional encoder -------------------------------------------------------

template <typename Scalar>
struct EncoderCache {
  std::vector<int> ids;
  std::vector<std::vector<LstmStep<Scalar>>> fwd;  // [layer][position]
  std::vector<std::vector<LstmStep<Scalar>>> bwd;  // [layer][position]
  Matrix<Scalar> states;                            // hidden x length, top layer
};

/// Encodes one unpadded token sequence. Column s of the result is
/// [forward half; backward half] at position s.
template <typename Scalar>
EncoderCache<Scalar> encode_sequence(const EncoderParams<Scalar>& enc, std::span<const int> ids) {
  const Index len = static_cast<Index>(ids.size());
  if (len == 0) throw DataError("DimensionMismatch", "cannot encode an empty sequence");
  const Index vocab = enc.embedding.cols();
  EncoderCache<Scalar> cache;
  cache.ids.assign(ids.begin(), ids.end());
  Matrix<Scalar> input(enc.embedding.rows(), len);
  for (Index s = 0; s < len; ++s) {
    const int id = ids[static_cast<std::size_t>(s)];
    if (id < 0 || id >= vocab) {
      throw DataError("DimensionMismatch", "source id " + std::to_string(id) + " outside vocabulary");
    }
    input.col(s) = enc.embedding.col(id);
  }
  for (const auto& layer : enc.layers) {
    const Index half = layer.fwd.hidden();
    std::vector<LstmStep<Scalar>> fwd(static_cast<std::size_t>(len));
    std::vector<LstmStep<Scalar>> bwd(static_cast<std::size_t>(len));
    Matrix<Scalar> out(2 * half, len);
    Vector<Scalar> h = Vector<Scalar>::Zero(half), c = Vector<Scalar>::Zero(half);
    for (Index s = 0; s < len; ++s) {
      auto& st = fwd[static_cast<std::size_t>(s)];
      lstm_forward<Scalar>(layer.fwd, input.col(s), h, c, st);
      h = st.h;
      c = st.c;
      out.col(s).head(half) = st.h;
    }
    h.setZero();
    c.setZero();
    for (Index s = len - 1; s >= 0; --s) {
      auto& st = bwd[static_cast<std::size_t>(s)];
      lstm_forward<Scalar>(layer.bwd, input.col(s), h, c, st);
      h = st.h;
      c = st.c;
      out.col(s).tail(half) = st.h;
    }
    cache.fwd.push_back(std::move(fwd));
    cache.bwd.push_back(std::move(bwd));
    input = std::move(out);
  }
  cache.states = std::move(input);
  return cache;
}

template <typename Scalar>
void encoder_backward(const EncoderParams<Scalar>& enc, const EncoderCache<Scalar>& cache,
                      Matrix<Scalar> d_states, EncoderParams<Scalar>& grad) {
  const Index len = d_states.cols();
  for (std::size_t l = enc.layers.size(); l-- > 0;) {
    const auto& layer = enc.layers[l];
    auto& g = grad.layers[l];
    const Index half = layer.fwd.hidden();
    Matrix<Scalar> d_input = Matrix<Scalar>::Zero(layer.fwd.input(), len);
    Vector<Scalar> dx, dh_prev;

    Vector<Scalar> dh_next = Vector<Scalar>::Zero(half), dc = Vector<Scalar>::Zero(half);
    for (Index s = len - 1; s >= 0; --s) {
      Vector<Scalar> dh = d_states.col(s).head(half) + dh_next;
      lstm_backward(layer.fwd, cache.fwd[l][static_cast<std::size_t>(s)], dh, dc, g.fwd, dx, dh_prev);
      d_input.col(s) += dx;
      dh_next = dh_prev;
    }
    dh_next.setZero();
    dc.setZero();
    for (Index s = 0; s < len; ++s) {
      Vector<Scalar> dh = d_states.col(s).tail(half) + dh_next;
      lstm_backward(layer.bwd, cache.bwd[l][static_cast<std::size_t>(s)], dh, dc, g.bwd, dx, dh_prev);
      d_input.col(s) += dx;
      dh_next = dh_prev;
    }
    d_states = std::move(d_input);
  }
  for (Index s = 0; s < len; ++s) grad.embedding.col(cache.ids[static_cast<std::size_t>(s)]) += d_states.col(s);
}

// --- Global attention --------------------------------------------------------------

template <typename Scalar>
struct Attention {
  Vector<Scalar> query;    // A^T d
  Vector<Scalar> weights;  // simplex over positions; masked positions are 0
  Vector<Scalar> context;  // states * weights
};

/// score_s = d^T A e_s, softmax over unmasked positions. An empty mask means
/// every position is visible.
template <typename Scalar>
Attention<Scalar> global_attention(const Vector<Scalar>& decoder_state, const Matrix<Scalar>& states,
                                   const Matrix<Scalar>& attn_matrix,
                                   const std::vector<bool>& mask = {}) {
  if (decoder_state.size() != attn_matrix.rows() || states.rows() != attn_matrix.cols() ||
      (!mask.empty() && static_cast<Index>(mask.size()) != states.cols())) {
    throw DataError("DimensionMismatch", "attention operand shapes disagree");
  }
  auto visible = [&](Index s) { return mask.empty() || mask[static_cast<std::size_t>(s)]; };
  Attention<Scalar> a;
  a.query.noalias() = attn_matrix.transpose() * decoder_state;
  Vector<Scalar> scores = states.transpose() * a.query;
  // NaN scores propagate so the loss check upstream can report them.
  Scalar best = -std::numeric_limits<Scalar>::infinity();
  bool any = false;
  for (Index s = 0; s < scores.size(); ++s) {
    if (!visible(s)) continue;
    best = any ? std::max(best, scores(s)) : scores(s);
    any = true;
  }
  if (!any) throw DataError("AllPositionsMasked", "attention has no visible position");
  a.weights = Vector<Scalar>::Zero(scores.size());
  Scalar total = 0;
  for (Index s = 0; s < scores.size(); ++s) {
    if (!visible(s)) continue;
    a.weights(s) = std::exp(scores(s) - best);
    total += a.weights(s);
  }
  a.weights /= total;
  a.context.noalias() = states * a.weights;
  return a;
}

template <typename Scalar>
void attention_backward(const Vector<Scalar>& decoder_state, const Matrix<Scalar>& states,
                        const Matrix<Scalar>& attn_matrix, const Attention<Scalar>& a,
                        const Vector<Scalar>& d_context, Vector<Scalar>& d_decoder_state,
                        Matrix<Scalar>& d_states, Matrix<Scalar>& d_attn_matrix) {
  const Vector<Scalar> d_weights = states.transpose() * d_context;
  d_states.noalias() += d_context * a.weights.transpose();
  const Scalar mean = a.weights.dot(d_weights);
  const Vector<Scalar> d_scores =
      (a.weights.array() * (d_weights.array() - mean)).matrix();
  d_states.noalias() += a.query * d_scores.transpose();
  const Vector<Scalar> d_query = states * d_scores;
  d_attn_matrix.noalias() += decoder_state * d_query.transpose();
  d_decoder_state.noalias() += attn_matrix * d_query;
}

// --- Decoder ---------------------------------------------------------------------

template <typename Scalar>
struct DecoderState {
  std::vector<Vector<Scalar>> h;
  std::vector<Vector<Scalar>> c;
};

template <typename Scalar>
DecoderState<Scalar> initial_decoder_state(const Parameters<Scalar>& p) {
  DecoderState<Scalar> s;
  for (const auto& layer : p.decoder) {
    s.h.push_back(Vector<Scalar>::Zero(layer.hidden()));
    s.c.push_back(Vector<Scalar>::Zero(layer.hidden()));
  }
  return s;
}

/// Encoder output of one source for the current sentence; `states` is null
/// when that source is unavailable.
template <typename Scalar>
struct SourceMemory {
  const Matrix<Scalar>* states = nullptr;
  std::vector<bool> mask;  // empty: all positions visible
};

template <typename Scalar>
struct DecoderStepCache {
  int prev_id = 0;
  std::vector<LstmStep<Scalar>> layers;
  std::vector<std::optional<Attention<Scalar>>> attention;  // per source
  Vector<Scalar> features;  // [decoder top; context_1; ...; context_N]
  Vector<Scalar> combined;  // tanh(combination * features)
  Vector<Scalar> logits;
};

template <typename Scalar>
void decoder_step_forward(const Parameters<Scalar>& p, int prev_id,
                          const DecoderState<Scalar>& state,
                          const std::vector<SourceMemory<Scalar>>& memory,
                          DecoderStepCache<Scalar>& cache, DecoderState<Scalar>& next) {
  if (static_cast<Index>(memory.size()) != p.n_sources()) {
    throw DataError("DimensionMismatch", "expected " + std::to_string(p.n_sources()) +
                                             " sources, got " + std::to_string(memory.size()));
  }
  if (prev_id < 0 || prev_id >= p.tgt_embedding.cols()) {
    throw DataError("DimensionMismatch", "target id " + std::to_string(prev_id) + " outside vocabulary");
  }
  if (state.h.size() != p.decoder.size()) {
    throw DataError("DimensionMismatch", "decoder state depth does not match the model");
  }
  cache.prev_id = prev_id;
  cache.layers.resize(p.decoder.size());
  next.h.resize(p.decoder.size());
  next.c.resize(p.decoder.size());
  Vector<Scalar> x = p.tgt_embedding.col(prev_id);
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    lstm_forward(p.decoder[l], x, state.h[l], state.c[l], cache.layers[l]);
    next.h[l] = cache.layers[l].h;
    next.c[l] = cache.layers[l].c;
    x = cache.layers[l].h;
  }
  const Index hidden = x.size();
  cache.features = Vector<Scalar>::Zero(hidden * (1 + p.n_sources()));
  cache.features.head(hidden) = x;
  cache.attention.assign(memory.size(), std::nullopt);
  for (std::size_t n = 0; n < memory.size(); ++n) {
    if (!memory[n].states) continue;
    cache.attention[n] =
        global_attention(x, *memory[n].states, p.encoders[n].attention, memory[n].mask);
    cache.features.segment(hidden * static_cast<Index>(n + 1), hidden) = cache.attention[n]->context;
  }
  cache.combined = (p.combination * cache.features).array().tanh().matrix();
  cache.logits = p.output_bias;
  cache.logits.noalias() += p.output * cache.combined;
}

template <typename Scalar>
struct StepOutput {
  Vector<Scalar> logits;
  DecoderState<Scalar> state;
  std::vector<Vector<Scalar>> attention;  // per source; empty when unavailable
};

template <typename Scalar>
StepOutput<Scalar> decode_step(const Parameters<Scalar>& p, int prev_id,
                               const DecoderState<Scalar>& state,
                               const std::vector<SourceMemory<Scalar>>& memory) {
  DecoderStepCache<Scalar> cache;
  StepOutput<Scalar> out;
  decoder_step_forward(p, prev_id, state, memory, cache, out.state);
  out.logits = std::move(cache.logits);
  for (auto& a : cache.attention) {
    out.attention.push_back(a ? std::move(a->weights) : Vector<Scalar>());
  }
  return out;
}

template <typename Scalar>
Vector<Scalar> log_softmax(const Vector<Scalar>& logits) {
  const Scalar m = logits.maxCoeff();
  const Scalar lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

// --- Whole sentence ----------------------------------------------------------------

/// One training example: per-source token ids (empty span = unavailable) and a
/// target sequence that starts with BOS and ends with EOS.
template <typename Scalar>
struct SentenceLoss {
  Scalar nll = 0;         // summed over predicted positions
  std::size_t tokens = 0;  // predicted positions (target length - 1)
};

/// Teacher-forced negative log-likelihood of one sentence. When grad is not
/// null, adds scale * dNLL/dtheta into it.
template <typename Scalar>
SentenceLoss<Scalar> sentence_loss(const Parameters<Scalar>& p,
                                   const std::vector<std::span<const int>>& sources,
                                   std::span<const int> target, Scalar scale,
                                   Parameters<Scalar>* grad) {
  if (static_cast<Index>(sources.size()) != p.n_sources()) {
    throw DataError("DimensionMismatch", "expected " + std::to_string(p.n_sources()) +
                                             " sources, got " + std::to_string(sources.size()));
  }
  std::vector<std::optional<EncoderCache<Scalar>>> encoded(sources.size());
  std::vector<SourceMemory<Scalar>> memory(sources.size());
  bool any = false;
  for (std::size_t n = 0; n < sources.size(); ++n) {
    if (sources[n].empty()) continue;
    encoded[n] = encode_sequence(p.encoders[n], sources[n]);
    memory[n].states = &encoded[n]->states;
    any = true;
  }
  if (!any) throw DataError("NoSourceProvided", "sentence without any available source");

  SentenceLoss<Scalar> result;
  if (target.size() < 2) return result;
  const std::size_t steps = target.size() - 1;
  const Index vocab = p.output.rows();
  std::vector<DecoderStepCache<Scalar>> caches(steps);
  std::vector<Vector<Scalar>> probs(steps);
  DecoderState<Scalar> state = initial_decoder_state(p), next;
  for (std::size_t t = 0; t < steps; ++t) {
    decoder_step_forward(p, target[t], state, memory, caches[t], next);
    state = std::move(next);
    const int gold = target[t + 1];
    if (gold < 0 || gold >= vocab) {
      throw DataError("DimensionMismatch", "target id " + std::to_string(gold) + " outside vocabulary");
    }
    Vector<Scalar> logp = log_softmax(caches[t].logits);
    result.nll -= logp(gold);
    if (grad) probs[t] = logp.array().exp().matrix();
  }
  result.tokens = steps;
  if (!grad) return result;

  const Index hidden = p.combination.rows();
  std::vector<Matrix<Scalar>> d_states(sources.size());
  for (std::size_t n = 0; n < sources.size(); ++n) {
    if (encoded[n]) d_states[n] = Matrix<Scalar>::Zero(hidden, encoded[n]->states.cols());
  }
  const std::size_t depth = p.decoder.size();
  std::vector<Vector<Scalar>> dh_next(depth), dc(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    dh_next[l] = Vector<Scalar>::Zero(p.decoder[l].hidden());
    dc[l] = Vector<Scalar>::Zero(p.decoder[l].hidden());
  }
  Vector<Scalar> dx, dh_prev;
  for (std::size_t t = steps; t-- > 0;) {
    const auto& cache = caches[t];
    Vector<Scalar> d_logits = probs[t];
    d_logits(target[t + 1]) -= Scalar(1);
    d_logits *= scale;
    grad->output.noalias() += d_logits * cache.combined.transpose();
    grad->output_bias += d_logits;
    Vector<Scalar> d_pre = p.output.transpose() * d_logits;
    d_pre.array() *= (Scalar(1) - cache.combined.array().square());
    grad->combination.noalias() += d_pre * cache.features.transpose();
    const Vector<Scalar> d_features = p.combination.transpose() * d_pre;

    Vector<Scalar> d_top = d_features.head(hidden);
    const Vector<Scalar>& top = cache.layers.back().h;
    for (std::size_t n = 0; n < sources.size(); ++n) {
      if (!cache.attention[n]) continue;
      attention_backward<Scalar>(top, encoded[n]->states, p.encoders[n].attention, *cache.attention[n],
                                 d_features.segment(hidden * static_cast<Index>(n + 1), hidden),
                                 d_top, d_states[n], grad->encoders[n].attention);
    }

    Vector<Scalar> dh = d_top + dh_next[depth - 1];
    for (std::size_t l = depth; l-- > 0;) {
      lstm_backward(p.decoder[l], cache.layers[l], dh, dc[l], grad->decoder[l], dx, dh_prev);
      dh_next[l] = dh_prev;
      if (l > 0) dh = dx + dh_next[l - 1];
    }
    grad->tgt_embedding.col(cache.prev_id) += dx;
  }
  for (std::size_t n = 0; n < sources.size(); ++n) {
    if (encoded[n]) encoder_backward(p.encoders[n], *encoded[n], std::move(d_states[n]), grad->encoders[n]);
  }
  return result;
}

/// Greedy decoding from BOS until EOS or max_len symbols. The EOS is not
/// included in the result.
template <typename Scalar>
TokenIds greedy_decode(const Parameters<Scalar>& p, const std::vector<std::span<const int>>& sources,
                       std::size_t max_len, int bos, int eos) {
  if (static_cast<Index>(sources.size()) != p.n_sources()) {
    throw DataError("DimensionMismatch", "expected " + std::to_string(p.n_sources()) +
                                             " sources, got " + std::to_string(sources.size()));
  }
  std::vector<std::optional<EncoderCache<Scalar>>> encoded(sources.size());
  std::vector<SourceMemory<Scalar>> memory(sources.size());
  bool any = false;
  for (std::size_t n = 0; n < sources.size(); ++n) {
    if (sources[n].empty()) continue;
    encoded[n] = encode_sequence(p.encoders[n], sources[n]);
    memory[n].states = &encoded[n]->states;
    any = true;
  }
  if (!any) throw DataError("NoSourceProvided", "translate needs at least one source");
  TokenIds out;
  DecoderState<Scalar> state = initial_decoder_state(p);
  int prev = bos;
  while (out.size() < max_len) {
    auto step = decode_step(p, prev, state, memory);
    Index best = 0;
    step.logits.maxCoeff(&best);
    if (static_cast<int>(best) == eos) break;
    out.push_back(static_cast<int>(best));
    prev = static_cast<int>(best);
    state = std::move(step.state);
  }
  return out;
}

}  // namespace pivotmt::nmt
