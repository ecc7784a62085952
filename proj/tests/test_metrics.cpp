#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ape/metrics.hpp"
#include "ter_oracle.hpp"

using namespace ape;

TEST_CASE("bleu hand values") {
  // identity
  std::vector<std::string> refs = {"der mann geht nach hause", "sie liest ein buch"};
  CHECK(bleu_corpus_text(refs, refs) == doctest::Approx(100.0));

  // empty hypothesis scores zero
  CHECK(bleu_corpus_text({""}, {"ein buch"}) == doctest::Approx(0.0));

  // brevity penalty closed form: precisions all 1, BP = e^(1 - 5/4)
  const double b = bleu_corpus_text({"a b c d"}, {"a b c d e"});
  CHECK(b == doctest::Approx(100.0 * std::exp(1.0 - 5.0 / 4.0)).epsilon(1e-4));
  CHECK(std::abs(b - 77.8801) < 0.01);
}

TEST_CASE("bleu is asymmetric") {
  std::vector<std::string> h = {"a b"};
  std::vector<std::string> r = {"a b c d"};
  CHECK(bleu_corpus_text(h, r) != bleu_corpus_text(r, h));
}

TEST_CASE("bleu rejects bad inputs") {
  CHECK_THROWS_AS(bleu_corpus_text({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(bleu_corpus_text({"a"}, {"a", "b"}), std::invalid_argument);
}

TEST_CASE("bleu without smoothing zeroes on missing high-order grams") {
  // one trigram match missing, no smoothing -> 0
  CHECK(bleu_corpus_text({"a b x"}, {"a b c"}, 3, false) == doctest::Approx(0.0));
  CHECK(bleu_corpus_text({"a b x"}, {"a b c"}, 3, true) > 0.0);
}

TEST_CASE("ter hand values") {
  auto T = [](const char* s) { return tokenize_whitespace(s); };

  TerBreakdown same = ter(T("a b c"), T("a b c"));
  CHECK(same.total_edits() == 0);
  CHECK(same.score() == doctest::Approx(0.0));

  // one block move
  TerBreakdown sh = ter(T("a c b"), T("a b c"));
  CHECK(sh.shifts == 1);
  CHECK(sh.insertions == 0);
  CHECK(sh.deletions == 0);
  CHECK(sh.substitutions == 0);
  CHECK(sh.score() == doctest::Approx(1.0 / 3.0));

  // one insertion
  TerBreakdown in = ter(T("a b"), T("a b c"));
  CHECK(in.insertions == 1);
  CHECK(in.total_edits() == 1);
  CHECK(in.score() == doctest::Approx(1.0 / 3.0));

  // one deletion
  TerBreakdown de = ter(T("a b c x"), T("a b c"));
  CHECK(de.deletions == 1);
  CHECK(de.score() == doctest::Approx(1.0 / 3.0));

  CHECK_THROWS_AS(ter(T("a"), T("")), std::invalid_argument);
}

TEST_CASE("ter decomposition always sums to the numerator") {
  ape::testing::Seq alphabet = {"a", "b", "c"};
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    Tokens h, r;
    const int hl = 1 + static_cast<int>(rng.below(6));
    const int rl = 1 + static_cast<int>(rng.below(6));
    for (int i = 0; i < hl; ++i) h.push_back(alphabet[rng.below(3)]);
    for (int i = 0; i < rl; ++i) r.push_back(alphabet[rng.below(3)]);
    TerBreakdown b = ter(h, r);
    CHECK(b.insertions + b.deletions + b.substitutions + b.shifts == b.total_edits());
    CHECK(b.score() == doctest::Approx(static_cast<double>(b.total_edits()) / rl));
  }
}

TEST_CASE("shifts never make TER worse than pure Levenshtein") {
  ape::testing::Seq alphabet = {"a", "b", "c"};
  Rng rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    Tokens h, r;
    const int hl = static_cast<int>(rng.below(7));
    const int rl = 1 + static_cast<int>(rng.below(6));
    for (int i = 0; i < hl; ++i) h.push_back(alphabet[rng.below(3)]);
    for (int i = 0; i < rl; ++i) r.push_back(alphabet[rng.below(3)]);
    CHECK(ter(h, r).total_edits() <= ape::testing::oracle_levenshtein(h, r));
  }
}

TEST_CASE("greedy TER never beats the exhaustive minimum (length <= 4)") {
  // the acceptance suite runs the full length-5 sweep; this is the fast mirror
  std::vector<std::string> alphabet = {"a", "b", "c"};
  std::vector<Tokens> seqs = {{}};
  std::vector<Tokens> frontier = {{}};
  for (int len = 1; len <= 4; ++len) {
    std::vector<Tokens> next;
    for (const auto& s : frontier)
      for (const auto& a : alphabet) {
        Tokens t = s;
        t.push_back(a);
        next.push_back(t);
        seqs.push_back(t);
      }
    frontier = next;
  }
  long checked = 0, discrepancies = 0;
  for (const auto& h : seqs) {
    for (const auto& r : seqs) {
      if (r.empty()) continue;
      const long greedy = ter(h, r).total_edits();
      const long oracle = ape::testing::exhaustive_min_edits(h, r);
      CHECK(greedy >= oracle);
      ++checked;
      if (greedy != oracle) ++discrepancies;
    }
  }
  MESSAGE("pairs checked: ", checked, ", greedy above the true minimum on ", discrepancies);
  CHECK(checked == 120 * 121);
}

TEST_CASE("edit reduction corner cases") {
  std::vector<std::string> pe = {"der mann geht heim", "sie liest das buch", "ich sehe den hund"};
  std::vector<std::string> mt = {"der mann gehz heim", "sie liest buch das", "ich sehe den katze"};

  // perfect APE: 100% for every op with a non-zero baseline
  EditReduction perfect = edit_reduction_report(mt, pe, pe);
  CHECK(perfect.sub.has_value());
  CHECK(*perfect.sub == doctest::Approx(100.0));
  CHECK(perfect.shift.has_value());
  CHECK(*perfect.shift == doctest::Approx(100.0));
  CHECK_FALSE(perfect.ins.has_value());  // baseline has no insertions: undefined
  CHECK_FALSE(perfect.del.has_value());

  // identity APE: 0% everywhere defined
  EditReduction identity = edit_reduction_report(mt, pe, mt);
  CHECK(*identity.sub == doctest::Approx(0.0));
  CHECK(*identity.shift == doctest::Approx(0.0));

  const std::string tsv = edit_report_tsv(perfect, "toy");
  CHECK(tsv.find("%In") != std::string::npos);
  CHECK(tsv.find("n/a") != std::string::npos);
  CHECK(edit_report_text(identity, "toy").find("+0.0") != std::string::npos);
}

TEST_CASE("edit reduction with an APE fixing exactly half the substitutions") {
  // 4 substitution errors in mt, the system repairs 2 of them
  std::vector<std::string> pe = {"a b c d", "e f g h", "i j k l"};
  std::vector<std::string> mt = {"a b x d", "e y g z", "i j k q"};
  std::vector<std::string> hyp = {"a b c d", "e y g z", "i j k l"};
  EditReduction r = edit_reduction_report(mt, pe, hyp);
  CHECK(r.baseline.substitutions == 4);
  CHECK(r.system.substitutions == 2);
  CHECK(*r.sub == doctest::Approx(50.0));
}

TEST_CASE("negative reductions are representable") {
  std::vector<std::string> pe = {"a b c d"};
  std::vector<std::string> mt = {"a b x d"};
  std::vector<std::string> hyp = {"a y x d"};  // APE adds an error
  EditReduction r = edit_reduction_report(mt, pe, hyp);
  CHECK(*r.sub == doctest::Approx(-100.0));
}

TEST_CASE("corpus TER aggregates per-sentence breakdowns") {
  std::vector<std::string> refs = {"a b c", "d e f"};
  std::vector<std::string> hyps = {"a x c", "d e"};
  TerBreakdown t = corpus_ter_text(hyps, refs);
  CHECK(t.substitutions == 1);
  CHECK(t.insertions == 1);
  CHECK(t.ref_length == 6);
  CHECK(t.score() == doctest::Approx(2.0 / 6.0));
}
