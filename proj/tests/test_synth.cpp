#include <algorithm>
#include <atomic>

#include "doctest.h"
#include "pivotmt/error.hpp"
#include "pivotmt/synth.hpp"
#include "pivotmt/text.hpp"
#include "temp_dir.hpp"

using namespace pivotmt;

namespace {

ToyLanguageSpec lang(const std::string& code, Grammar g, std::uint64_t seed) {
  return make_toy_language(code, 30, g, {2, 6}, seed);
}

// Ground truth by construction: every language rendered from the same concepts.
struct Fixture {
  ToyLanguageSpec ko = lang("ko", Grammar::Reversed, 1);
  ToyLanguageSpec en = lang("en", Grammar::IdentityOrder, 2);
  ToyLanguageSpec ar = lang("ar", Grammar::IdentityOrder, 3);
  MultiWayCorpus truth = generate_toy_multiway({ko, en}, ar, 300, 11);

  ParallelCorpus pair(std::size_t a, std::size_t b) const {
    const std::vector<std::string> codes{"ko", "en", "ar"};
    ParallelCorpus c{codes[a], codes[b], {}};
    for (const auto& row : truth.rows()) {
      auto side = [&](std::size_t i) { return i == 2 ? row.target : *row.sources[i]; };
      c.pairs.emplace_back(side(a), side(b));
    }
    return c;
  }
};

// Fails on every sentence containing `poison`; counts concurrent callers.
class FlakyTranslator final : public Translator {
 public:
  FlakyTranslator(std::string poison, bool safe)
      : Translator("en", "xx"), poison_(std::move(poison)), safe_(safe) {}
  Sentence translate(const Sentence& s) const override {
    const int now = ++active_;
    peak_ = std::max(peak_.load(), now);
    struct Leave {
      std::atomic<int>& a;
      ~Leave() { --a; }
    } leave{active_};
    if (s.text().find(poison_) != std::string::npos) throw TranslatorFailure("poisoned");
    return Sentence("T(" + s.text() + ")");
  }
  bool concurrent_safe() const override { return safe_; }
  int peak() const { return peak_; }

 private:
  std::string poison_;
  bool safe_;
  mutable std::atomic<int> active_{0};
  mutable std::atomic<int> peak_{0};
};

}  // namespace

TEST_CASE("synthetic target keeps the source and translates the pivot") {
  Fixture f;
  const auto src_pivot = f.pair(0, 1);
  const auto identity = build_synthetic_target(src_pivot, IdentityTranslator("en", "ar"));
  REQUIRE(identity.corpus.size() == src_pivot.size());
  for (std::size_t i = 0; i < src_pivot.size(); ++i) {
    CHECK(identity.corpus.pairs[i].source() == src_pivot.pairs[i].source());
    CHECK(identity.corpus.pairs[i].target() == src_pivot.pairs[i].target());
    CHECK(identity.corpus.pairs[i].provenance() == Provenance::SyntheticTarget);
  }
  CHECK(identity.corpus.src_lang == "ko");
  CHECK(identity.corpus.tgt_lang == "ar");

  const auto exact = build_synthetic_target(src_pivot, dictionary_translator(f.en, f.ar));
  const auto truth = f.pair(0, 2);
  REQUIRE(exact.corpus.size() == truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    CHECK(exact.corpus.pairs[i].source() == truth.pairs[i].source());
    CHECK(exact.corpus.pairs[i].target() == truth.pairs[i].target());
  }
  CHECK_THROWS_AS(build_synthetic_target(src_pivot, IdentityTranslator("ja", "ar")), DataError);
}

TEST_CASE("synthetic source never touches the target column") {
  Fixture f;
  const auto pivot_tgt = f.pair(1, 2);
  for (double noise : {0.0, 0.3, 0.9}) {
    const auto r = build_synthetic_source(pivot_tgt, noisy_dictionary_translator(f.en, f.ko, noise, 5));
    REQUIRE(r.corpus.size() == pivot_tgt.size());
    for (std::size_t i = 0; i < pivot_tgt.size(); ++i) {
      CHECK(r.corpus.pairs[i].target().text() == pivot_tgt.pairs[i].target().text());
      CHECK(r.corpus.pairs[i].provenance() == Provenance::SyntheticSource);
    }
  }
  const auto exact = build_synthetic_source(pivot_tgt, dictionary_translator(f.en, f.ko));
  const auto truth = f.pair(0, 2);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    CHECK(exact.corpus.pairs[i].source() == truth.pairs[i].source());
  }
  const auto identity = build_synthetic_source(pivot_tgt, IdentityTranslator("en", "ko"));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    CHECK(identity.corpus.pairs[i].source() == pivot_tgt.pairs[i].source());
  }
}

TEST_CASE("translator failures drop rows and are counted") {
  ParallelCorpus c{"en", "ar", {}};
  for (int i = 0; i < 350; ++i) {
    c.pairs.emplace_back(Sentence(i % 50 == 7 ? "bad " + std::to_string(i) : "ok " + std::to_string(i)),
                         Sentence("t" + std::to_string(i)));
  }
  for (unsigned threads : {1u, 4u}) {
    FlakyTranslator t("bad", true);
    const auto r = build_synthetic_source(c, t, threads);
    CHECK(r.failed_rows.size() == 7);
    CHECK(r.corpus.size() == 343);
    CHECK(r.failed_rows.front() == 7);
    for (const auto& p : r.corpus.pairs) {
      const auto n = p.target().text().substr(1);
      CHECK(p.source().text() == "T(ok " + n + ")");
    }
  }
}

TEST_CASE("translate_rows keeps input order and serializes unsafe translators") {
  std::vector<Sentence> rows;
  for (int i = 0; i < 200; ++i) rows.emplace_back("s" + std::to_string(i));
  FlakyTranslator safe("never", true);
  const auto out = translate_rows(safe, rows, 4);
  for (int i = 0; i < 200; ++i) CHECK(out[static_cast<std::size_t>(i)]->text() == "T(s" + std::to_string(i) + ")");
  FlakyTranslator unsafe("never", false);
  CHECK(translate_rows(unsafe, rows, 4) == out);
  CHECK(unsafe.peak() == 1);
}

TEST_CASE("process translator") {
  ProcessTranslator upper("en", "xx", "tr a-z A-Z");
  const std::vector<Sentence> rows{Sentence("ab c"), Sentence("d")};
  const auto out = upper.translate_all(rows);
  REQUIRE(out.size() == 2);
  CHECK(out[0]->text() == "AB C");
  CHECK(out[1]->text() == "D");
  CHECK(upper.translate(Sentence("q")).text() == "Q");
  ProcessTranslator broken("en", "xx", "exit 3");
  const auto failed = broken.translate_all(rows);
  CHECK_FALSE(failed[0].has_value());
  CHECK_FALSE(failed[1].has_value());
}

TEST_CASE("extend keeps the base and samples the rest") {
  ParallelCorpus base{"ko", "ar", {}}, synth{"ko", "ar", {}};
  for (int i = 0; i < 150000; ++i) base.pairs.emplace_back(Sentence("b"), Sentence("x"));
  for (int i = 0; i < 450000; ++i) {
    synth.pairs.emplace_back(Sentence("s" + std::to_string(i)), Sentence("y"), Provenance::SyntheticTarget);
  }
  const auto ext = extend(base, synth, 600000, 1);
  CHECK(ext.size() == 600000);
  CHECK(std::equal(base.pairs.begin(), base.pairs.end(), ext.pairs.begin()));

  synth.pairs.erase(synth.pairs.begin() + 350000, synth.pairs.end());
  const auto five = extend(base, synth, 500000, 1);
  CHECK(five.size() == 500000);
  CHECK(extend(base, synth, 500000, 1) == five);
  CHECK(extend(base, synth, 150000, 1) == base);
  CHECK_THROWS_AS(extend(base, synth, 500001, 1), DataError);
  CHECK_THROWS(extend(base, synth, 100, 1));
  ParallelCorpus other = synth;
  other.src_lang = "ja";
  CHECK_THROWS(extend(base, other, 160000, 1));
}

TEST_CASE("toy multiway corpora") {
  Fixture f;
  const auto m = generate_toy_multiway({f.ko, f.en}, f.ar, 100, 4);
  CHECK(m.size() == 100);
  for (const auto& row : m.rows()) {
    CHECK(row.available() == 2);
    // Reversed and identity-order renderings of one concept sequence.
    const auto ko_concepts = parse_concepts(f.ko, *row.sources[0]);
    CHECK(ko_concepts == parse_concepts(f.en, *row.sources[1]));
    auto ko_tokens = row.sources[0]->tokens();
    std::reverse(ko_tokens.begin(), ko_tokens.end());
    std::vector<std::string> en_as_ko;
    for (const auto& t : row.sources[1]->tokens()) en_as_ko.push_back(f.ko.lexicon.at(*f.en.concept_of(t)));
    CHECK(ko_tokens == en_as_ko);
  }
  CHECK(render_multiway(generate_toy_multiway({f.ko, f.en}, f.ar, 100, 4)) == render_multiway(m));
  CHECK_FALSE(render_multiway(generate_toy_multiway({f.ko, f.en}, f.ar, 100, 5)) == render_multiway(m));

  auto small = make_toy_language("zz", 10, Grammar::IdentityOrder, {2, 3}, 9);
  try {
    generate_toy_multiway({small}, f.ar, 10, 1);
    FAIL("expected LexiconDomainMismatch");
  } catch (const DataError& e) {
    CHECK(e.name() == "LexiconDomainMismatch");
  }
}

TEST_CASE("dictionary translation is invertible and rejects unknown tokens") {
  Fixture f;
  const auto there = dictionary_translator(f.ko, f.ar);
  const auto back = dictionary_translator(f.ar, f.ko);
  for (const auto& row : f.truth.rows()) {
    CHECK(back.translate(there.translate(*row.sources[0])) == *row.sources[0]);
  }
  CHECK_THROWS_AS(there.translate(Sentence("zzzunknown")), TranslatorFailure);
}

TEST_CASE("noisy translation is a seeded pure function") {
  Fixture f;
  const auto a = noisy_dictionary_translator(f.en, f.ar, 0.3, 7);
  const auto b = noisy_dictionary_translator(f.en, f.ar, 0.3, 7);
  std::size_t dropped = 0, total = 0;
  for (const auto& row : f.truth.rows()) {
    const auto s = *row.sources[1];
    CHECK(a.translate(s) == b.translate(s));
    CHECK(a.translate(s) == a.translate(s));
    dropped += s.tokens().size() - a.translate(s).tokens().size();
    total += s.tokens().size();
  }
  const double rate = static_cast<double>(dropped) / static_cast<double>(total);
  CHECK(rate > 0.2);
  CHECK(rate < 0.4);
}

TEST_CASE("toy language generation") {
  const auto spec = make_toy_language("ar", 40, Grammar::IdentityOrder, {2, 7}, 3, {"at", "un"});
  spec.validate();
  CHECK(spec.lexicon.size() == 40);
  std::size_t suffixed = 0;
  for (const auto& [id, tok] : spec.lexicon) suffixed += tok.ends_with("at") || tok.ends_with("un");
  CHECK(suffixed > 5);
  CHECK(make_toy_language("ar", 40, Grammar::IdentityOrder, {2, 7}, 3, {"at", "un"}) == spec);
  CHECK_FALSE(make_toy_language("ar", 40, Grammar::IdentityOrder, {2, 7}, 4, {"at", "un"}) == spec);

  ToyLanguageSpec bad = spec;
  bad.lexicon[1] = bad.lexicon[0];
  CHECK_THROWS_AS(bad.validate(), ConfigParse);
  bad = spec;
  bad.lexicon[1] = "two words";
  CHECK_THROWS_AS(bad.validate(), ConfigParse);
}

TEST_CASE("spec files and bundles round trip") {
  const auto ko = make_toy_language("ko", 12, Grammar::Reversed, {2, 4}, 1);
  const auto en = make_toy_language("en", 12, Grammar::IdentityOrder, {2, 4}, 2);
  CHECK(parse_toy_spec(render_toy_spec(ko)) == ko);
  TempDir dir("spec");
  save_toy_spec(ko, dir / "ko.spec");
  CHECK(load_toy_spec(dir / "ko.spec") == ko);
  write_file_atomic(dir / "bundle.cfg", render_toy_spec(ko) + render_toy_spec(en));
  const auto bundle = load_toy_spec_bundle(dir / "bundle.cfg");
  REQUIRE(bundle.size() == 2);
  CHECK(bundle[0] == ko);
  CHECK(bundle[1] == en);
  CHECK_THROWS_AS(parse_toy_spec_bundle(render_toy_spec(ko) + render_toy_spec(ko)), ConfigParse);
  CHECK_THROWS_AS(parse_toy_spec("lang\tko\ngrammar\tsideways\nlength\t1\t2\n0\ta\n"), ConfigParse);
}
