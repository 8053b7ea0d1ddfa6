#include "nbcloze/corpus.hpp"
#include "nbcloze/errors.hpp"

#include "support/tmpfiles.hpp"

#include <doctest.h>

using namespace nbcloze;
using testutil::TempFile;

namespace {

TokenSeq toks(std::initializer_list<const char*> words) {
    TokenSeq out;
    for (const char* w : words) out.push_back(Token{w});
    return out;
}

} // namespace

TEST_CASE("tokenize splits on whitespace runs") {
    CHECK(tokenize("think he rarely need it") == toks({"think", "he", "rarely", "need", "it"}));
    CHECK(tokenize("  a\t b \n c  ") == toks({"a", "b", "c"}));
    CHECK(tokenize("one") == toks({"one"}));
}

TEST_CASE("tokenize lowercase option folds case") {
    CHECK(tokenize("Think HE It", {true}) == toks({"think", "he", "it"}));
    CHECK(tokenize("Think HE It", {false}) == toks({"Think", "HE", "It"}));
}

TEST_CASE("tokenize rejects empty and reserved input") {
    CHECK_THROWS_AS(tokenize(""), EmptyUtteranceError);
    CHECK_THROWS_AS(tokenize("  \t\n "), EmptyUtteranceError);
    CHECK_THROWS_AS(tokenize("a <NULL> b"), ReservedTokenError);
    CHECK_THROWS_AS(tokenize("<NULL>"), ReservedTokenError);
    // Only the standalone token is reserved.
    CHECK_NOTHROW(tokenize("a <NULL>x b"));
}

TEST_CASE("join_tokens inverts tokenize") {
    const std::string text = "the consensus was that";
    CHECK(join_tokens(tokenize(text)) == text);
    CHECK(join_tokens({}) == "");
}

TEST_CASE("Token null sentinel") {
    CHECK(Token::null().is_null());
    CHECK(Token::null().text == "<NULL>");
    CHECK_FALSE(Token{"null"}.is_null());
}

TEST_CASE("load_jsonl reads the bundled fixture") {
    Dataset ds = load_jsonl(std::string(TESTS_DATA_DIR) + "/chime4_examples.jsonl");
    REQUIRE(ds.utterances.size() == 4);
    CHECK(ds.n_best == 5);
    CHECK(ds.name == std::string(TESTS_DATA_DIR) + "/chime4_examples.jsonl");

    const Utterance& first = ds.utterances[0];
    CHECK(first.id == "F06_443C0212_CAF");
    CHECK(first.n_best() == 5);
    CHECK(first.hypotheses[0] ==
          toks({"yesterday", "is", "losers", "included", "automobiles"}));
    CHECK(first.hypotheses[4] ==
          toks({"yesterday", "is", "losers", "included", "automakers"}));
    REQUIRE(first.reference.has_value());
    CHECK(*first.reference == first.hypotheses[0]);
    REQUIRE(first.speech_units.has_value());
    CHECK(*first.speech_units == std::vector<int>{12, 7, 403, 88, 21, 5});

    // Later records omit speech units.
    CHECK_FALSE(ds.utterances[2].speech_units.has_value());
    CHECK(ds.utterances[3].id == "M05_443C020R_STR");
}

TEST_CASE("to_jsonl_line uses the canonical key order and compact form") {
    Utterance utt;
    utt.id = "u1";
    utt.hypotheses = {toks({"a", "b"}), toks({"a"})};
    utt.reference = toks({"a", "b"});
    utt.speech_units = std::vector<int>{3, 17};
    CHECK(to_jsonl_line(utt) ==
          R"({"id":"u1","hypotheses":["a b","a"],"reference":"a b","speech_units":[3,17]})");

    Utterance bare;
    bare.id = "u2";
    bare.hypotheses = {toks({"x"})};
    CHECK(to_jsonl_line(bare) == R"({"id":"u2","hypotheses":["x"]})");
}

TEST_CASE("save(load(x)) round-trips the fixture byte-identically") {
    const std::string src = std::string(TESTS_DATA_DIR) + "/chime4_examples.jsonl";
    Dataset ds = load_jsonl(src);

    TempFile copy("roundtrip.jsonl");
    save_jsonl(ds, copy.path());
    CHECK(copy.read() == testutil::read_file(src));

    // And the copy parses back to the same data.
    Dataset again = load_jsonl(copy.path());
    REQUIRE(again.utterances.size() == ds.utterances.size());
    for (std::size_t i = 0; i < ds.utterances.size(); ++i)
        CHECK(to_jsonl_line(again.utterances[i]) == to_jsonl_line(ds.utterances[i]));
}

TEST_CASE("load_jsonl error messages carry the line number") {
    SUBCASE("malformed JSON") {
        TempFile f("bad.jsonl", "{\"id\":\"a\",\"hypotheses\":[\"x\"]}\n{not json\n");
        CHECK_THROWS_WITH_AS(load_jsonl(f.path()), doctest::Contains(":2:"), JsonlError);
    }
    SUBCASE("missing id") {
        TempFile f("noid.jsonl", "{\"hypotheses\":[\"x\"]}\n");
        CHECK_THROWS_WITH_AS(load_jsonl(f.path()), doctest::Contains(":1:"), JsonlError);
    }
    SUBCASE("empty hypotheses") {
        TempFile f("nohyp.jsonl", "{\"id\":\"a\",\"hypotheses\":[]}\n");
        CHECK_THROWS_AS(load_jsonl(f.path()), JsonlError);
    }
    SUBCASE("reserved token inside a hypothesis") {
        TempFile f("resv.jsonl", "{\"id\":\"a\",\"hypotheses\":[\"x <NULL> y\"]}\n");
        CHECK_THROWS_WITH_AS(load_jsonl(f.path()), doctest::Contains(":1:"), JsonlError);
    }
    SUBCASE("negative speech unit") {
        TempFile f("neg.jsonl", "{\"id\":\"a\",\"hypotheses\":[\"x\"],\"speech_units\":[-1]}\n");
        CHECK_THROWS_AS(load_jsonl(f.path()), JsonlError);
    }
}

TEST_CASE("load_jsonl rejects inconsistent hypothesis counts") {
    TempFile f("mixed.jsonl",
               "{\"id\":\"a\",\"hypotheses\":[\"x\",\"y\"]}\n"
               "{\"id\":\"b\",\"hypotheses\":[\"x\"]}\n");
    CHECK_THROWS_WITH_AS(load_jsonl(f.path()), doctest::Contains(":2:"), InconsistentNError);
}

TEST_CASE("load_jsonl rejects empty inputs and skips blank lines") {
    TempFile empty("empty.jsonl", "\n\n");
    CHECK_THROWS_AS(load_jsonl(empty.path()), JsonlError);

    TempFile gaps("gaps.jsonl",
                  "{\"id\":\"a\",\"hypotheses\":[\"x\"]}\n\n{\"id\":\"b\",\"hypotheses\":[\"y\"]}\n");
    CHECK(load_jsonl(gaps.path()).utterances.size() == 2);

    CHECK_THROWS_AS(load_jsonl("/nonexistent/nope.jsonl"), Error);
}

TEST_CASE("load_jsonl applies the tokenize config") {
    TempFile f("case.jsonl", "{\"id\":\"a\",\"hypotheses\":[\"Think HE\"]}\n");
    Dataset lower = load_jsonl(f.path(), {true});
    CHECK(lower.utterances[0].hypotheses[0] == toks({"think", "he"}));
    Dataset kept = load_jsonl(f.path());
    CHECK(kept.utterances[0].hypotheses[0] == toks({"Think", "HE"}));
}
