#include <doctest.h>

#include "hrchunk/corpus.hpp"
#include "hrchunk/error.hpp"
#include "hrchunk/rng.hpp"
#include "oracles.hpp"

using namespace hrchunk;

namespace {
TagSeq T(const char* s) { return tags_from_string(s); }
}  // namespace

TEST_CASE("conll: three-field lines map to forms, POS and untyped tags") {
  auto r = read_conll2000("He PRP B-NP\nruns VBZ B-VP\n. . O\n");
  REQUIRE(r.sentences.size() == 1);
  const auto& ls = r.sentences[0];
  CHECK(ls.sentence.forms() == std::vector<std::string>{"He", "runs", "."});
  CHECK(ls.sentence.tokens[1].pos == "VBZ");
  CHECK(ls.tags == T("BBO"));
  CHECK(r.normalized == 0);
  CHECK(ls.sentence.id == "s0");
}

TEST_CASE("conll: two-field lines are accepted without POS") {
  auto r = read_conll2000("He B-NP\nruns B-VP\n. O\n");
  REQUIRE(r.sentences.size() == 1);
  CHECK(r.sentences[0].tags == T("BBO"));
  CHECK_FALSE(r.sentences[0].sentence.tokens[0].pos.has_value());
}

TEST_CASE("conll: empty input gives no sentences") {
  CHECK(read_conll2000("").sentences.empty());
  CHECK(read_conll2000("\n\n").sentences.empty());
}

TEST_CASE("conll: leading I is normalized and counted") {
  auto r = read_conll2000("a DT I-NP\n");
  REQUIRE(r.sentences.size() == 1);
  CHECK(r.sentences[0].tags == T("B"));
  CHECK(r.normalized == 1);
  auto r2 = read_conll2000("a DT B-NP\n, , O\nb NN I-NP\n");
  CHECK(r2.sentences[0].tags == T("BOB"));
  CHECK(r2.normalized == 1);
}

TEST_CASE("conll: malformed lines name the line") {
  try {
    read_conll2000("a DT B-NP\nb c d e\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(read_conll2000("a DT X-NP\n"), ParseError);
}

TEST_CASE("conll: provenance lines are skipped and blocks keep order") {
  auto r = read_conll2000("## tool 1\na X B\nb X I\n\nc X B\n");
  REQUIRE(r.sentences.size() == 2);
  CHECK(r.sentences[1].sentence.id == "s1");
  CHECK(r.sentences[1].sentence.forms() == std::vector<std::string>{"c"});
}

TEST_CASE("conll: write then read reproduces the normalized input") {
  const std::string text = "He PRP B\nruns VBZ B\nfast RB I\n. . O\n\nOk UH B\n\n";
  auto r = read_conll2000(text);
  CHECK(write_conll2000(r.sentences) == text);
  // Typed input comes back untyped and normalized.
  auto r2 = read_conll2000("a DT I-NP\nb NN I-NP\n");
  CHECK(write_conll2000(r2.sentences) == "a DT B\nb NN I\n\n");
}

TEST_CASE("spans: documented conversions") {
  CHECK(tags_to_spans(T("BIB")) == ChunkSet{{0, 1}, {2, 2}});
  CHECK(tags_to_spans(T("BOBI")) == ChunkSet{{0, 0}, {2, 3}});
  CHECK(tags_to_spans(T("BIII")) == ChunkSet{{0, 3}});
  CHECK(spans_to_tags({{0, 1}}, 2, {}) == T("BI"));
  CHECK(spans_to_tags({{0, 0}, {2, 2}}, 3, OMask{false, true, false}) == T("BOB"));
}

TEST_CASE("spans: coverage errors name the index") {
  try {
    spans_to_tags({{0, 0}}, 2, {});
    FAIL("expected CoverageError");
  } catch (const CoverageError& e) {
    CHECK(e.index() == 1);
  }
  CHECK_THROWS_AS(spans_to_tags({{0, 1}, {1, 2}}, 3, {}), CoverageError);
  CHECK_THROWS_AS(spans_to_tags({{0, 3}}, 3, {}), CoverageError);
  CHECK_THROWS_AS(spans_to_tags({{0, 1}}, 2, OMask{false, true}), CoverageError);
}

TEST_CASE("spans: round trips over random valid sequences") {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(15);
    TagSeq t = oracle::random_tags(rng, n);
    REQUIRE(is_valid_tags(t));
    ChunkSet c = tags_to_spans(t);
    CHECK(spans_to_tags(c, n, o_mask(t)) == t);
    CHECK(tags_to_spans(spans_to_tags(c, n, o_mask(t))) == c);
    std::set<std::pair<std::size_t, std::size_t>> s;
    for (auto& sp : c) s.insert({sp.start, sp.end});
    CHECK(s == oracle::spans(t));
  }
}

TEST_CASE("tags: validator and normalizer agree") {
  CHECK(is_valid_tags(T("BIOB")));
  CHECK(is_valid_tags(T("OOB")));
  CHECK_FALSE(is_valid_tags(T("IB")));
  CHECK_FALSE(is_valid_tags(T("BOI")));
  TagSeq t = T("IOIB");
  CHECK(normalize_tags(t) == 2);
  CHECK(t == T("BOBB"));
  CHECK(apply_mask(T("BII"), OMask{false, true, false}) == T("BOB"));
}

TEST_CASE("partition check") {
  CHECK(is_partition({{0, 1}, {2, 2}}, 3));
  CHECK_FALSE(is_partition({{0, 1}}, 3));
  CHECK_FALSE(is_partition({{0, 1}, {1, 2}}, 3));
  CHECK_FALSE(is_partition({{1, 2}, {0, 0}}, 3));
}
