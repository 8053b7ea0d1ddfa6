#include "nbcloze/pipeline.hpp"
#include "nbcloze/corpus.hpp"
#include "nbcloze/errors.hpp"
#include "nbcloze/eval.hpp"
#include "nbcloze/rng.hpp"

#include "support/oracles.hpp"
#include "support/tmpfiles.hpp"

#include <doctest.h>
#include <json.hpp>

#include <map>
#include <string>

using namespace nbcloze;
using ordered_json = nlohmann::ordered_json;

namespace {

Utterance utt_of(const std::string& id, std::initializer_list<const char*> hyps,
                 const char* ref = nullptr) {
    Utterance utt;
    utt.id = id;
    for (const char* h : hyps) utt.hypotheses.push_back(tokenize(h));
    if (ref) utt.reference = tokenize(ref);
    return utt;
}

Dataset dataset_of(std::vector<Utterance> utts) {
    Dataset ds;
    ds.name = "inline";
    ds.n_best = utts.front().n_best();
    ds.utterances = std::move(utts);
    return ds;
}

Dataset canonical_dataset() {
    return dataset_of({utt_of("c1",
                              {"Think he rarely need it", "Think he really need it",
                               "he rally need it"},
                              "Think he rarely need it")});
}

// Always prefers the first candidate by a wide margin.
class AlwaysFirst : public Scorer {
public:
    OptionLogits score_options(const ScoreRequest& request) override {
        std::vector<double> logp(request.candidates.size());
        for (std::size_t i = 0; i < logp.size(); ++i) logp[i] = -2.0 * static_cast<double>(i);
        return OptionLogits{log_softmax(logp)};
    }
    std::string generate(const std::string&, const GenerateParams&) override {
        return "unused";
    }
};

// Fails on any utterance whose prompt mentions the poison token.
class Poisoned : public AlwaysFirst {
public:
    OptionLogits score_options(const ScoreRequest& request) override {
        if (request.prompt.find("poison") != std::string::npos)
            throw ScorerError("poisoned utterance");
        return AlwaysFirst::score_options(request);
    }
};

SyntheticScorer content_scorer(std::vector<double> bias,
                               const std::string& favored = "") {
    SyntheticScorerSpec spec;
    spec.bias = std::move(bias);
    if (!favored.empty())
        spec.quality = [favored](const std::string& c) { return c == favored ? 9.0 : 1.0; };
    return SyntheticScorer(std::move(spec));
}

} // namespace

TEST_CASE("run_clozeger with a first-choice scorer returns the 1-best") {
    Dataset ds = load_jsonl(std::string(TESTS_DATA_DIR) + "/chime4_examples.jsonl");
    AlwaysFirst scorer;
    RunResult result = run_clozeger(ds, scorer, std::nullopt, {});
    REQUIRE(result.utterances.size() == ds.utterances.size());
    for (std::size_t i = 0; i < result.utterances.size(); ++i) {
        const auto& r = result.utterances[i];
        CHECK(r.id == ds.utterances[i].id);
        CHECK(r.output == ds.utterances[i].hypotheses[0]);
        CHECK_FALSE(r.degraded);
        REQUIRE(r.answers.has_value());
        for (int choice : r.answers->choices) CHECK(choice == 0);
    }
}

TEST_CASE("run_clozeger picks quality over rank when the scorer says so") {
    Dataset ds = canonical_dataset();
    SyntheticScorer scorer = content_scorer({1.0, 1.0, 1.0}, "really");
    RunResult result = run_clozeger(ds, scorer, std::nullopt, {});
    REQUIRE(result.utterances.size() == 1);
    CHECK(result.utterances[0].n_blanks == 2);
    CHECK(result.utterances[0].answers->letters() == "A B");
    CHECK(join_tokens(result.utterances[0].output) == "Think he really need it");
}

TEST_CASE("run_clozeger passes blank-free utterances through untouched") {
    Dataset ds = dataset_of({utt_of("only", {"one single hypothesis"})});
    AlwaysFirst scorer;
    RunResult result = run_clozeger(ds, scorer, std::nullopt, {});
    CHECK(result.utterances[0].n_blanks == 0);
    CHECK(join_tokens(result.utterances[0].output) == "one single hypothesis");
    CHECK(result.utterances[0].answers->choices.empty());
    CHECK_FALSE(result.utterances[0].degraded);
}

TEST_CASE("run_clozeger degrades failed utterances and keeps going") {
    Dataset ds = dataset_of({utt_of("ok1", {"a b", "a c"}),
                             utt_of("bad", {"x poison y", "x toxin y"}),
                             utt_of("ok2", {"d e", "d f"})});
    Poisoned scorer;
    RunResult result = run_clozeger(ds, scorer, std::nullopt, {});
    REQUIRE(result.utterances.size() == 3);

    CHECK_FALSE(result.utterances[0].degraded);
    CHECK(result.utterances[2].degraded == false);
    CHECK(join_tokens(result.utterances[0].output) == "a b");
    CHECK(join_tokens(result.utterances[2].output) == "d e");

    const auto& bad = result.utterances[1];
    CHECK(bad.degraded);
    CHECK(join_tokens(bad.output) == "x poison y"); // fell back to the 1-best
    CHECK(bad.note.find("poisoned") != std::string::npos);
    CHECK_FALSE(bad.answers.has_value());
}

TEST_CASE("run_clozeger validates calibration inputs") {
    Dataset ds = canonical_dataset();
    AlwaysFirst scorer;
    RunOptions options;
    options.calibrate = true;
    CHECK_THROWS_AS(run_clozeger(ds, scorer, std::nullopt, options), Error);

    Prior wrong = Prior::uniform(5); // dataset has N = 3
    CHECK_THROWS_AS(run_clozeger(ds, scorer, wrong, options), Error);

    Prior right = Prior::uniform(3);
    CHECK_NOTHROW(run_clozeger(ds, scorer, right, options));
}

TEST_CASE("calibration flips decisions the prior explains away") {
    // The scorer leans toward A by a factor the prior exactly documents, so
    // calibrate() should undo it and surface the content signal.
    Dataset ds = canonical_dataset();
    SyntheticScorer scorer = content_scorer({16.0, 1.0, 1.0}, "really");

    RunOptions plain;
    RunResult uncal = run_clozeger(ds, scorer, std::nullopt, plain);
    CHECK(uncal.utterances[0].answers->letters() == "A A"); // bias drowns quality

    Prior prior;
    prior.p = softmax({std::log(16.0), std::log(1.0), std::log(1.0)});
    RunOptions cal;
    cal.calibrate = true;
    RunResult calibrated = run_clozeger(ds, scorer, prior, cal);
    CHECK(calibrated.utterances[0].answers->letters() == "A B");
    CHECK(join_tokens(calibrated.utterances[0].output) == "Think he really need it");
}

TEST_CASE("run_ger tokenizes whatever the generator returns") {
    Dataset ds = canonical_dataset();
    SyntheticScorer scorer = content_scorer({1.0, 1.0, 1.0});
    RunResult result = run_ger(ds, scorer, {});
    REQUIRE(result.utterances.size() == 1);
    // The synthetic generator echoes the 1-best hypothesis.
    CHECK(join_tokens(result.utterances[0].output) == "Think he rarely need it");
    CHECK(result.utterances[0].n_blanks == 0);
    CHECK_FALSE(result.utterances[0].answers.has_value());
}

TEST_CASE("run_ger requires units when asked to use speech") {
    Dataset ds = canonical_dataset(); // no speech_units
    SyntheticScorer scorer = content_scorer({1.0, 1.0, 1.0});
    RunOptions options;
    options.use_speech = true;
    RunResult result = run_ger(ds, scorer, options);
    CHECK(result.utterances[0].degraded); // missing units degrade, not crash
    CHECK(result.utterances[0].note.find("speech units") != std::string::npos);
}

TEST_CASE("post_process returns the corrected text or the input on failure") {
    Utterance utt = utt_of("u", {"a b"});
    SyntheticScorer scorer = content_scorer({1.0});

    // The synthetic scorer echoes the candidate section back.
    CHECK(post_process("he rally need it", utt, scorer, {}, false) == "he rally need it");

    GenerateParams dead;
    dead.max_tokens = 0; // EmptyGenerationError inside, swallowed
    CHECK(post_process("he rally need it", utt, scorer, dead, false) == "he rally need it");

    // use_speech without units also degrades to identity.
    CHECK(post_process("text", utt, scorer, {}, true) == "text");
}

TEST_CASE("export tasks serialize and parse") {
    for (const char* name : {"ger", "ger_speech", "cloze", "post"})
        CHECK(to_string(export_task_from_string(name)) == name);
    CHECK_THROWS_AS(export_task_from_string("nope"), Error);
}

TEST_CASE("export_finetune_data renders prompt/target pairs") {
    Dataset ds = load_jsonl(std::string(TESTS_DATA_DIR) + "/chime4_examples.jsonl");

    SUBCASE("ger targets the reference") {
        auto records = export_finetune_data(ds, ExportTask::Ger);
        REQUIRE(records.size() == 4);
        CHECK(records[0].prompt.find("### Candidates:") != std::string::npos);
        CHECK(records[0].prompt.find("<sosp>") == std::string::npos);
        CHECK(records[0].target == join_tokens(*ds.utterances[0].reference));
    }

    SUBCASE("ger_speech needs units on every record") {
        // Records 3 and 4 of the fixture carry no units.
        CHECK_THROWS_AS(export_finetune_data(ds, ExportTask::GerSpeech), Error);

        Dataset with_units = ds;
        with_units.utterances.resize(2);
        auto records = export_finetune_data(with_units, ExportTask::GerSpeech);
        CHECK(records[0].prompt.find("### Speech:<sosp> <u12> <u7> <u403> <u88> <u21> <u5> "
                                     "<eosp>.") != std::string::npos);
        CHECK(records[0].target == join_tokens(*with_units.utterances[0].reference));
    }

    SUBCASE("cloze targets gold answer letters") {
        auto records = export_finetune_data(ds, ExportTask::Cloze);
        CHECK(records[0].target == "A");
        CHECK(records[1].target == "B B");
        CHECK(records[2].target == "A");
        CHECK(records[3].target == "C");
        CHECK(records[0].prompt.find("### Cloze test: ") != std::string::npos);
        // Records with units render the speech variant.
        CHECK(records[0].prompt.find("### Speech:") != std::string::npos);
        CHECK(records[2].prompt.find("### Speech:") == std::string::npos);
    }

    SUBCASE("post takes intermediates when given") {
        std::map<std::string, std::string> intermediates{
            {"F06_443C0212_CAF", "yesterday his losers included automobiles"}};
        auto records = export_finetune_data(ds, ExportTask::Post, std::nullopt, &intermediates);
        CHECK(records[0].prompt.find("### Candidate:yesterday his losers included automobiles.") !=
              std::string::npos);
        // Everyone else falls back to their 1-best.
        CHECK(records[1].prompt.find(join_tokens(ds.utterances[1].hypotheses[0])) !=
              std::string::npos);
        CHECK(records[1].target == join_tokens(*ds.utterances[1].reference));
    }

    SUBCASE("references are mandatory") {
        Dataset no_ref = dataset_of({utt_of("u", {"a b", "a c"})});
        CHECK_THROWS_AS(export_finetune_data(no_ref, ExportTask::Ger), Error);
    }
}

TEST_CASE("shuffled cloze export spreads the gold labels") {
    // Rank 1 always matches the reference, so the unshuffled gold is all A.
    Rng rng(8088);
    std::vector<Utterance> utts;
    for (int i = 0; i < 200; ++i) {
        TokenSeq base = oracle::random_sentence(rng, 6, 10, 40);
        Utterance utt;
        utt.id = "gen-" + std::to_string(i);
        utt.reference = base;
        utt.hypotheses.push_back(base);
        for (int k = 1; k < 5; ++k) utt.hypotheses.push_back(oracle::mutate(base, rng, 40, 4, 12));
        utts.push_back(std::move(utt));
    }
    Dataset ds = dataset_of(std::move(utts));

    auto plain = export_finetune_data(ds, ExportTask::Cloze);
    int blanks = 0;
    for (const auto& rec : plain)
        for (char c : rec.target)
            if (c >= 'A' && c <= 'E') {
                CHECK(c == 'A');
                ++blanks;
            }
    REQUIRE(blanks > 100);

    auto shuffled = export_finetune_data(ds, ExportTask::Cloze, 1234);
    std::vector<int> counts(5, 0);
    int total = 0;
    for (const auto& rec : shuffled)
        for (char c : rec.target)
            if (c >= 'A' && c <= 'E') {
                ++counts[c - 'A'];
                ++total;
            }
    CHECK(total == blanks);
    for (int id = 0; id < 5; ++id) {
        double share = static_cast<double>(counts[id]) / total;
        CHECK(share > 0.08);
        CHECK(share < 0.36);
    }

    // Same seed, same export; different seed, different assignment somewhere.
    auto again = export_finetune_data(ds, ExportTask::Cloze, 1234);
    for (std::size_t i = 0; i < shuffled.size(); ++i) {
        CHECK(again[i].prompt == shuffled[i].prompt);
        CHECK(again[i].target == shuffled[i].target);
    }
    auto reseeded = export_finetune_data(ds, ExportTask::Cloze, 4321);
    bool differs = false;
    for (std::size_t i = 0; i < shuffled.size() && !differs; ++i)
        differs = reseeded[i].prompt != shuffled[i].prompt;
    CHECK(differs);
}

TEST_CASE("save_export_jsonl writes one record per line") {
    std::vector<ExportRecord> records{{"id1", "prompt text", "target text"},
                                      {"id2", "p2", "t2"}};
    testutil::TempFile f("export.jsonl");
    save_export_jsonl(records, f.path());
    std::string content = f.read();
    CHECK(content == "{\"id\":\"id1\",\"prompt\":\"prompt text\",\"target\":\"target text\"}\n"
                     "{\"id\":\"id2\",\"prompt\":\"p2\",\"target\":\"t2\"}\n");
}

TEST_CASE("collect_validation_scores walks blanks in order") {
    Dataset ds = canonical_dataset();
    SyntheticScorer scorer = content_scorer({3.0, 2.0, 1.0});

    auto scored = collect_validation_scores(ds, scorer, PermutationSet::Cyclic, 100, false);
    REQUIRE(scored.size() == 2); // only two blanks exist
    for (const auto& blank : scored) {
        CHECK(blank.utterance_id == "c1");
        CHECK(blank.per_permutation.size() == 3); // cyclic set of a 3-option blank
        for (const auto& logits : blank.per_permutation) CHECK(logits.n() == 3);
    }

    auto one = collect_validation_scores(ds, scorer, PermutationSet::Cyclic, 1, false);
    CHECK(one.size() == 1);

    auto full = collect_validation_scores(ds, scorer, PermutationSet::Full, 2, false);
    CHECK(full[0].per_permutation.size() == 6);

    CHECK_THROWS_AS(collect_validation_scores(ds, scorer, PermutationSet::Cyclic, 0, false),
                    Error);

    Dataset blankless = dataset_of({utt_of("u", {"a b"})});
    CHECK_THROWS_AS(
        collect_validation_scores(blankless, scorer, PermutationSet::Cyclic, 5, false), Error);
}

TEST_CASE("estimating a prior from synthetic scores recovers the bias") {
    Dataset ds = canonical_dataset();
    SyntheticScorer scorer = content_scorer({3.0, 2.0, 1.0}, "really");

    auto scored = collect_validation_scores(ds, scorer, PermutationSet::Cyclic, 2, false);
    Prior prior = estimate_prior(std::move(scored), PermutationSet::Cyclic, "canon");

    auto expected = softmax({std::log(3.0), std::log(2.0), std::log(1.0)});
    REQUIRE(prior.n() == 3);
    for (int i = 0; i < 3; ++i)
        CHECK(prior.p[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    CHECK(prior.sample_count == 2);
}

TEST_CASE("parallel execution matches the sequential result") {
    Rng rng(24601);
    std::vector<Utterance> utts;
    for (int i = 0; i < 24; ++i) utts.push_back(oracle::random_utterance(rng, 4, 20, 3, 10, false));
    Dataset ds = dataset_of(std::move(utts));
    SyntheticScorerSpec spec;
    spec.bias = {2.0, 1.5, 1.0, 0.5};
    spec.noise_seed = 5; // request-keyed, so thread order cannot matter
    SyntheticScorer scorer(spec);

    RunOptions seq;
    seq.parallel = 1;
    RunResult a = run_clozeger(ds, scorer, std::nullopt, seq);

    RunOptions par;
    par.parallel = 4;
    RunResult b = run_clozeger(ds, scorer, std::nullopt, par);

    REQUIRE(a.utterances.size() == b.utterances.size());
    for (std::size_t i = 0; i < a.utterances.size(); ++i) {
        CHECK(a.utterances[i].id == b.utterances[i].id);
        CHECK(a.utterances[i].output == b.utterances[i].output);
        CHECK(a.utterances[i].answers->choices == b.utterances[i].answers->choices);
        CHECK(a.utterances[i].degraded == b.utterances[i].degraded);
    }
}

TEST_CASE("file_hash_hex fingerprints file bytes") {
    testutil::TempFile f("hash.txt", "foobar");
    CHECK(file_hash_hex(f.path()) == "85944171f73967e8"); // FNV-1a of the content

    testutil::TempFile g("hash2.txt", "foobaz");
    CHECK(file_hash_hex(g.path()) != file_hash_hex(f.path()));
    CHECK_THROWS_AS(file_hash_hex("/nonexistent/file"), Error);
}

TEST_CASE("manifest_json records everything needed to rerun") {
    testutil::TempFile data("data.jsonl", "{\"id\":\"a\",\"hypotheses\":[\"x\"]}\n");

    ManifestInfo info;
    info.dataset_path = data.path();
    info.mode = "clozeger";
    info.options.use_speech = true;
    info.options.calibrate = true;
    info.options.parallel = 8;
    info.scorer = "synthetic(bias=uniform)";
    info.prior_file = "prior.json";
    info.noise_seed = 99;
    info.n_best = 5;
    info.utterances = 1;

    ordered_json j = ordered_json::parse(manifest_json(info));
    CHECK(j.at("dataset_path").get<std::string>() == data.path());
    CHECK(j.at("dataset_hash").get<std::string>() == file_hash_hex(data.path()));
    CHECK(j.at("mode") == "clozeger");
    CHECK(j.at("use_speech") == true);
    CHECK(j.at("calibrate") == true);
    CHECK(j.at("post_process") == false);
    CHECK(j.at("parallel") == 8);
    CHECK(j.at("scorer") == "synthetic(bias=uniform)");
    CHECK(j.at("prior_file") == "prior.json");
    CHECK(j.at("noise_seed") == 99);
    CHECK_FALSE(j.contains("shuffle_seed"));
    CHECK(j.at("n_best") == 5);
    CHECK(j.at("utterances") == 1);

    // Decode defaults are spelled out.
    CHECK(j.at("decode").at("max_tokens") == 256);
    CHECK(j.at("decode").at("temperature").get<double>() == doctest::Approx(0.1));
    CHECK(j.at("decode").at("top_k") == 40);
    CHECK(j.at("decode").at("top_p").get<double>() == doctest::Approx(0.75));
    CHECK(j.at("decode").at("beams") == 4);
}
