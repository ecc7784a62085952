#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "ape/bpe.hpp"

using namespace ape;

TEST_CASE("first merge on 'aaaa aaaa' is (a,a)") {
  MergeTable t = MergeTable::learn({"aaaa aaaa"}, 1);
  CHECK(t.num_merges() == 1);
  CHECK(t.num_base_chars() == 1);
  // merged symbol surface is "aa"
  CHECK(t.symbol_text(t.vocab_size() - 1) == "aa");
}

TEST_CASE("zero merges yields a character vocabulary") {
  MergeTable t = MergeTable::learn({"abc cba"}, 0);
  CHECK(t.num_merges() == 0);
  CHECK(t.num_base_chars() == 3);
  CHECK(t.vocab_size() == MergeTable::kNumSpecialSymbols + 3);
  std::vector<int> ids = t.encode("abc");
  REQUIRE(ids.size() == 4);  // a b c </w>
  CHECK(ids.back() == MergeTable::kEowId);
  CHECK(t.decode(ids) == "abc");
}

TEST_CASE("vocabulary accounting is exact") {
  std::vector<std::string> corpus = {"der alte mann", "die alte frau", "mann und frau",
                                     "alte manner reden", "und der mann redet"};
  for (int merges : {0, 3, 10, 40}) {
    MergeTable t = MergeTable::learn(corpus, merges);
    CHECK(t.vocab_size() ==
          t.num_merges() + t.num_base_chars() + MergeTable::kNumSpecialSymbols);
    if (merges <= 10) CHECK(t.num_merges() == merges);  // enough pairs exist
  }
}

TEST_CASE("pooled learning covers tokens seen only on one side") {
  std::vector<std::string> src_side = {"house tree", "tree house"};
  std::vector<std::string> pe_side = {"haus baum", "baum haus"};
  std::vector<std::string> pooled;
  pooled.insert(pooled.end(), src_side.begin(), src_side.end());
  pooled.insert(pooled.end(), pe_side.begin(), pe_side.end());
  MergeTable t = MergeTable::learn(pooled, 30);
  // a word appearing only in pe still encodes without unknowns on the src side
  std::vector<int> ids = t.encode("baum house");
  for (int id : ids) CHECK(id != kUnkId);
}

TEST_CASE("round trip is identity on normalized sentences") {
  std::vector<std::string> corpus = {"ein kleines haus .", "das haus, bitte!",
                                     "kleine dinge bleiben klein", "haus und hof"};
  MergeTable t = MergeTable::learn(corpus, 25);
  for (const auto& s : corpus) CHECK(t.decode(t.encode(s)) == s);
  // punctuation attached to a word round-trips too
  CHECK(t.decode(t.encode("haus, und hof!")) == "haus, und hof!");
}

TEST_CASE("encoding is deterministic") {
  std::vector<std::string> corpus = {"banane ananas", "ananas banane banane"};
  MergeTable t = MergeTable::learn(corpus, 12);
  CHECK(t.encode("banane ananas banane") == t.encode("banane ananas banane"));
}

TEST_CASE("unseen characters become a visible unknown") {
  MergeTable t = MergeTable::learn({"abc abd", "bcd cda"}, 5);
  std::vector<int> ids = t.encode("abz");
  CHECK(std::count(ids.begin(), ids.end(), kUnkId) == 1);
  CHECK(t.decode(ids).find("<unk>") != std::string::npos);
}

TEST_CASE("decode rejects out-of-range ids") {
  MergeTable t = MergeTable::learn({"ab ab"}, 1);
  CHECK_THROWS_AS(t.decode({t.vocab_size()}), std::invalid_argument);
  CHECK_THROWS_AS(t.decode({-1}), std::invalid_argument);
  CHECK_THROWS_AS(MergeTable::learn({"ab"}, -1), std::invalid_argument);
  CHECK_THROWS_AS(MergeTable::learn({"", "   "}, 1), std::invalid_argument);
}

TEST_CASE("serialization round trip is bit-exact") {
  std::vector<std::string> corpus = {"manche worte, sind lang!", "kurze worte sind gut",
                                     "worte bleiben worte"};
  MergeTable t = MergeTable::learn(corpus, 18);
  const std::string text = t.serialize();
  MergeTable back = MergeTable::deserialize(text);
  CHECK(back.serialize() == text);
  CHECK(back.vocab_size() == t.vocab_size());
  CHECK(back.encode("kurze worte!") == t.encode("kurze worte!"));

  CHECK_THROWS_AS(MergeTable::deserialize("bogus"), std::invalid_argument);
}

TEST_CASE("same-language sides overlap more than cross-language sides") {
  // mt and pe share a lexicon; src uses different consonants
  std::vector<std::string> pe = {"kala meno tipu", "meno kala rasu", "tipu rasu kala"};
  std::vector<std::string> mt = {"kala meno tipa", "meno kalu rasu", "tipu rasu kale"};
  std::vector<std::string> src = {"gebo dafi vozu", "dafi gebo zuve", "vozu zuve gebo"};
  std::vector<std::string> pooled;
  for (auto* side : {&src, &mt, &pe})
    pooled.insert(pooled.end(), side->begin(), side->end());
  MergeTable t = MergeTable::learn(pooled, 60);

  auto used_ids = [&](const std::vector<std::string>& side) {
    std::set<int> ids;
    for (const auto& s : side)
      for (int id : t.encode(s)) ids.insert(id);
    return ids;
  };
  auto overlap = [](const std::set<int>& a, const std::set<int>& b) {
    int n = 0;
    for (int x : a)
      if (b.count(x)) ++n;
    return n;
  };
  const auto s = used_ids(src), m = used_ids(mt), p = used_ids(pe);
  CHECK(overlap(m, p) > overlap(s, p));
}
