#pragma once

#include <cmath>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "pivotmt/error.hpp"
#include "pivotmt/nmt/types.hpp"
#include "pivotmt/random.hpp"

namespace pivotmt::nmt {

// Gate order in the stacked weights: input, forget, output, candidate.
template <typename Scalar>
struct LstmParams {
  Matrix<Scalar> W;  // 4h x in
  Matrix<Scalar> U;  // 4h x h
  Vector<Scalar> b;  // 4h

  LstmParams() = default;
  LstmParams(Index in, Index hidden)
      : W(Matrix<Scalar>::Zero(4 * hidden, in)),
        U(Matrix<Scalar>::Zero(4 * hidden, hidden)),
        b(Vector<Scalar>::Zero(4 * hidden)) {}

  Index hidden() const { return U.cols(); }
  Index input() const { return W.cols(); }
};

template <typename Scalar>
struct BiLstmLayer {
  LstmParams<Scalar> fwd;
  LstmParams<Scalar> bwd;
};

template <typename Scalar>
struct EncoderParams {
  Matrix<Scalar> embedding;  // emb x vocab, one column per token
  std::vector<BiLstmLayer<Scalar>> layers;
  Matrix<Scalar> attention;  // hidden x hidden, score = d^T A e
};

template <typename Scalar>
struct Parameters {
  std::vector<EncoderParams<Scalar>> encoders;
  Matrix<Scalar> tgt_embedding;  // emb x vocab_tgt
  std::vector<LstmParams<Scalar>> decoder;
  Matrix<Scalar> combination;  // hidden x (hidden + N * hidden)
  Matrix<Scalar> output;       // vocab_tgt x hidden
  Vector<Scalar> output_bias;  // vocab_tgt

  Index n_sources() const { return static_cast<Index>(encoders.size()); }
};

/// Calls f(name, tensor) for every tensor in a fixed order. Works on const
/// and mutable parameter sets.
template <typename P, typename F>
void for_each_tensor(P& params, F&& f) {
  auto lstm = [&](const std::string& prefix, auto& p) {
    f(prefix + ".W", p.W);
    f(prefix + ".U", p.U);
    f(prefix + ".b", p.b);
  };
  for (std::size_t e = 0; e < params.encoders.size(); ++e) {
    auto& enc = params.encoders[e];
    const std::string base = "encoder" + std::to_string(e);
    f(base + ".embedding", enc.embedding);
    for (std::size_t l = 0; l < enc.layers.size(); ++l) {
      lstm(base + ".layer" + std::to_string(l) + ".fwd", enc.layers[l].fwd);
      lstm(base + ".layer" + std::to_string(l) + ".bwd", enc.layers[l].bwd);
    }
    f(base + ".attention", enc.attention);
  }
  f(std::string("decoder.embedding"), params.tgt_embedding);
  for (std::size_t l = 0; l < params.decoder.size(); ++l) {
    lstm("decoder.layer" + std::to_string(l), params.decoder[l]);
  }
  f(std::string("combination"), params.combination);
  f(std::string("output"), params.output);
  f(std::string("output_bias"), params.output_bias);
}

/// Zero-filled parameters shaped by hp for n_sources encoders.
template <typename Scalar>
Parameters<Scalar> zero_parameters(const Hyperparams& hp, std::size_t n_sources) {
  hp.validate();
  if (n_sources < 1) throw ConfigParse("need at least one source encoder");
  const Index emb = hp.emb_dim;
  const Index hidden = hp.hidden_dim;
  const Index half = hidden / 2;
  Parameters<Scalar> p;
  for (std::size_t e = 0; e < n_sources; ++e) {
    const int vocab = hp.vocab_size_src.size() == 1 ? hp.vocab_size_src[0] : hp.vocab_size_src.at(e);
    EncoderParams<Scalar> enc;
    enc.embedding = Matrix<Scalar>::Zero(emb, vocab);
    for (int l = 0; l < hp.enc_layers; ++l) {
      const Index in = l == 0 ? emb : hidden;
      enc.layers.push_back({LstmParams<Scalar>(in, half), LstmParams<Scalar>(in, half)});
    }
    enc.attention = Matrix<Scalar>::Zero(hidden, hidden);
    p.encoders.push_back(std::move(enc));
  }
  p.tgt_embedding = Matrix<Scalar>::Zero(emb, hp.vocab_size_tgt);
  for (int l = 0; l < hp.enc_layers; ++l) {
    p.decoder.emplace_back(l == 0 ? emb : hidden, hidden);
  }
  p.combination = Matrix<Scalar>::Zero(hidden, hidden * static_cast<Index>(1 + n_sources));
  p.output = Matrix<Scalar>::Zero(hp.vocab_size_tgt, hidden);
  p.output_bias = Vector<Scalar>::Zero(hp.vocab_size_tgt);
  return p;
}

template <typename Scalar>
Parameters<Scalar> zeros_like(const Parameters<Scalar>& like) {
  Parameters<Scalar> z = like;
  for_each_tensor(z, [](const std::string&, auto& t) { t.setZero(); });
  return z;
}

/// Uniform draws from [-hp.init_range, hp.init_range], seeded by hp.seed.
template <typename Scalar>
Parameters<Scalar> init_parameters(const Hyperparams& hp, std::size_t n_sources) {
  auto p = zero_parameters<Scalar>(hp, n_sources);
  Rng rng(hp.seed);
  for_each_tensor(p, [&](const std::string&, auto& t) {
    for (Index i = 0; i < t.size(); ++i) {
      t.data()[i] = static_cast<Scalar>(rng.uniform(-hp.init_range, hp.init_range));
    }
  });
  return p;
}

template <typename Scalar>
std::size_t parameter_count(const Parameters<Scalar>& p) {
  std::size_t n = 0;
  for_each_tensor(p, [&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

template <typename Scalar>
Scalar squared_norm(const Parameters<Scalar>& p) {
  Scalar sum = 0;
  for_each_tensor(p, [&](const std::string&, const auto& t) { sum += t.squaredNorm(); });
  return sum;
}

/// Flattened pointers into every coefficient, in for_each_tensor order.
template <typename P>
auto coefficient_pointers(P& p) {
  std::vector<decltype(p.output_bias.data())> out;
  for_each_tensor(p, [&](const std::string&, auto& t) {
    for (Index i = 0; i < t.size(); ++i) out.push_back(t.data() + i);
  });
  return out;
}

/// (data, size) of every tensor, in for_each_tensor order.
template <typename P>
auto tensor_spans(P& p) {
  std::vector<std::span<std::remove_pointer_t<decltype(p.output_bias.data())>>> out;
  for_each_tensor(p, [&](const std::string&, auto& t) {
    out.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
  });
  return out;
}

template <typename Scalar>
bool all_finite(const Parameters<Scalar>& p) {
  bool ok = true;
  for_each_tensor(p, [&](const std::string&, const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

}  // namespace pivotmt::nmt
