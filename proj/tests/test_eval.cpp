#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "generators.hpp"
#include "oracles.hpp"
#include "json.hpp"
#include "pivotmt/error.hpp"
#include "pivotmt/eval.hpp"

using namespace pivotmt;

namespace {

using Tokens = std::vector<std::string>;

std::vector<Sentence> as_sentences(const std::vector<Tokens>& t) {
  std::vector<Sentence> out;
  for (const auto& x : t) out.emplace_back(gen::joined(x));
  return out;
}

}  // namespace

TEST_CASE("identical corpora score 1") {
  const std::vector<Sentence> h{Sentence("the cat sat on the mat"), Sentence("a b c d e")};
  const auto r = bleu4(h, h, WhitespaceSegmenter{});
  CHECK(r.bleu == 1.0);
  for (double p : r.precisions) CHECK(p == 1.0);
  CHECK(r.brevity_penalty == 1.0);
  CHECK(r.hyp_len == 11);
}

TEST_CASE("hand-enumerated example") {
  // hyp: the cat sat on the mat / ref: the cat is on the mat
  // 1-grams: the x2, cat, sat, on, mat -> 5/6 matched (sat missing)
  // 2-grams: the-cat, cat-sat, sat-on, on-the, the-mat -> 3/5
  // 3-grams: the-cat-sat, cat-sat-on, sat-on-the, on-the-mat -> 1/4
  // 4-grams: 3 in the hypothesis, none in the reference -> 0/3
  const std::vector<Sentence> h{Sentence("the cat sat on the mat")};
  const std::vector<Sentence> r{Sentence("the cat is on the mat")};
  const auto plain = bleu4(h, r, WhitespaceSegmenter{});
  CHECK(plain.precisions[0] == doctest::Approx(5.0 / 6.0));
  CHECK(plain.precisions[1] == doctest::Approx(3.0 / 5.0));
  CHECK(plain.precisions[2] == doctest::Approx(1.0 / 4.0));
  CHECK(plain.precisions[3] == 0.0);
  CHECK(plain.bleu == 0.0);
  CHECK(plain.bleu == oracle::bleu({{"the", "cat", "sat", "on", "the", "mat"}},
                                  {{"the", "cat", "is", "on", "the", "mat"}}));

  BleuOptions smooth;
  smooth.smooth = true;
  const auto s = bleu4(h, r, WhitespaceSegmenter{}, smooth);
  const double expected = std::exp((std::log(5.0 / 6.0) + std::log(4.0 / 6.0) + std::log(2.0 / 5.0) +
                                    std::log(1.0 / 4.0)) / 4.0);
  CHECK(s.bleu == doctest::Approx(expected).epsilon(1e-12));
  CHECK(s.bleu == doctest::Approx(oracle::bleu({{"the", "cat", "sat", "on", "the", "mat"}},
                                              {{"the", "cat", "is", "on", "the", "mat"}}, true))
                      .epsilon(1e-12));
}

TEST_CASE("scorer equals the brute-force oracle on 200 random corpora") {
  Rng rng(99);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t segments = 1 + rng.index(5);
    const std::size_t vocab = 2 + rng.index(9);
    std::vector<Tokens> hyps, refs;
    for (std::size_t s = 0; s < segments; ++s) {
      hyps.push_back(gen::tokens(rng, vocab, 1, 12));
      refs.push_back(gen::tokens(rng, vocab, 1, 12));
    }
    for (bool smooth : {false, true}) {
      BleuOptions o;
      o.smooth = smooth;
      const double got = bleu4(as_sentences(hyps), as_sentences(refs), WhitespaceSegmenter{}, o).bleu;
      worst = std::max(worst, std::abs(got - oracle::bleu(hyps, refs, smooth)));
    }
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("no shared 4-gram gives 0 without smoothing") {
  const std::vector<Sentence> h{Sentence("a b c d e")};
  const std::vector<Sentence> r{Sentence("a b c x d e")};
  CHECK(bleu4(h, r, WhitespaceSegmenter{}).bleu == 0.0);
  BleuOptions o;
  o.smooth = true;
  CHECK(bleu4(h, r, WhitespaceSegmenter{}, o).bleu > 0.0);
}

TEST_CASE("brevity penalty") {
  const std::vector<Sentence> h{Sentence("a b c d")};
  const std::vector<Sentence> r{Sentence("a b c d e f g h")};
  const auto rep = bleu4(h, r, WhitespaceSegmenter{});
  CHECK(rep.brevity_penalty == doctest::Approx(std::exp(1.0 - 2.0)));
  CHECK(rep.bleu == doctest::Approx(std::exp(-1.0)));
  CHECK(bleu4({Sentence("")}, {Sentence("a")}, WhitespaceSegmenter{}).bleu == 0.0);
}

TEST_CASE("argument errors") {
  CHECK_THROWS_AS(bleu4({Sentence("a")}, {}, WhitespaceSegmenter{}), DataError);
  CHECK_THROWS_AS(bleu4({}, {}, WhitespaceSegmenter{}), DataError);
}

TEST_CASE("bleu is within [0, 1] and invariant to joint permutation") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Tokens> hyps, refs;
    const std::size_t segments = 2 + rng.index(6);
    for (std::size_t s = 0; s < segments; ++s) {
      hyps.push_back(gen::tokens(rng, 4, 1, 10));
      refs.push_back(gen::tokens(rng, 4, 1, 10));
    }
    const auto base = bleu4(as_sentences(hyps), as_sentences(refs), WhitespaceSegmenter{});
    CHECK(base.bleu >= 0.0);
    CHECK(base.bleu <= 1.0);
    std::vector<std::size_t> order(segments);
    for (std::size_t i = 0; i < segments; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<Tokens> ph, pr;
    for (auto i : order) {
      ph.push_back(hyps[i]);
      pr.push_back(refs[i]);
    }
    CHECK(bleu4(as_sentences(ph), as_sentences(pr), WhitespaceSegmenter{}).bleu == doctest::Approx(base.bleu).epsilon(1e-14));
  }
}

TEST_CASE("replacing tokens never raises matched n-gram counts") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const auto ref = gen::tokens(rng, 5, 1, 12);
    auto hyp = gen::tokens(rng, 5, 1, 12);
    auto before = sentence_stats(hyp, ref);
    const std::size_t k = rng.index(hyp.size() + 1);
    for (std::size_t i = 0; i < k; ++i) {
      hyp[rng.index(hyp.size())] = "oov" + std::to_string(i);
      const auto after = sentence_stats(hyp, ref);
      for (int n = 0; n < kBleuOrder; ++n) CHECK(after.matches[n] <= before.matches[n]);
      before = after;
    }
  }
}

TEST_CASE("segmenters") {
  WhitespaceSegmenter ws;
  CHECK(ws.segment(Sentence("a  b")) == Tokens{"a", "b"});
  CHECK(ws.segment(Sentence("")).empty());
  const Sentence toy("rofu dodenaun gado");
  CHECK(ws.segment(Sentence(gen::joined(ws.segment(toy)))) == ws.segment(toy));

  SuffixStubSegmenter s({"s"});
  CHECK(s.segment(Sentence("cats sat")) == Tokens{"cat", "s", "sat"});
  SuffixStubSegmenter longer({"un", "at", "aun"});
  CHECK(longer.segment(Sentence("dodenaun at gado")) == Tokens{"doden", "aun", "at", "gado"});
  CHECK(SuffixStubSegmenter({"xyz"}).segment(Sentence("ab")) == Tokens{"ab"});
  CHECK(SuffixStubSegmenter({}).segment(toy) == ws.segment(toy));
}

TEST_CASE("reports render the percentage with two decimals") {
  BleuReport r;
  r.bleu = 0.2692;
  r.precisions = {0.5, 0.25, 0.125, 0.0625};
  r.brevity_penalty = 1.0;
  r.hyp_len = 10;
  r.ref_len = 9;
  const auto tsv = render_report_tsv(r);
  CHECK(tsv.rfind("bleu\t26.92\n", 0) == 0);
  CHECK(tsv.find("hyp_len\t10\n") != std::string::npos);
  const auto j = nlohmann::json::parse(render_report_json(r));
  CHECK(j.at("bleu_percent") == "26.92");
  CHECK(j.at("precisions").size() == 4);
  CHECK(j.at("ref_len") == 9);
}
