#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pivotmt::nmt {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;
using TokenIds = std::vector<int>;

struct Hyperparams {
  int emb_dim = 500;
  int hidden_dim = 1000;  // total bidirectional width; each direction gets half
  int enc_layers = 4;     // also the decoder depth
  std::vector<int> vocab_size_src;
  int vocab_size_tgt = 0;
  double learning_rate = 1.0;
  int epochs = 20;
  double grad_clip_norm = 5.0;
  std::uint64_t seed = 1;
  double init_range = 0.1;

  /// Throws ConfigParse on non-positive sizes, odd hidden_dim or lr <= 0.
  void validate() const;
  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

/// Training-loop settings the model shape does not depend on.
struct Schedule {
  int batch_size = 32;
  int decay_start = 10;  // first (1-based) epoch trained at a decayed rate
  double decay = 0.5;    // applied once per epoch from decay_start on
  bool shuffle = true;

  double learning_rate(double base, int epoch) const;
};

/// Symbol table with the four specials at fixed indices.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;

  Vocabulary();
  /// Specials followed by the distinct given symbols in sorted order.
  explicit Vocabulary(const std::vector<std::string>& symbols);

  int size() const noexcept { return static_cast<int>(symbols_.size()); }
  const std::vector<std::string>& symbols() const noexcept { return symbols_; }
  int id(const std::string& symbol) const;
  const std::string& symbol(int id) const { return symbols_.at(static_cast<std::size_t>(id)); }

  TokenIds encode(const std::vector<std::string>& symbols) const;
  /// Drops specials.
  std::vector<std::string> decode(const TokenIds& ids) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.symbols_ == b.symbols_;
  }

 private:
  std::vector<std::string> symbols_;
  std::map<std::string, int> index_;
};

}  // namespace pivotmt::nmt
