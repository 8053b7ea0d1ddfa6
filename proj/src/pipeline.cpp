#include "nbcloze/pipeline.hpp"

#include "nbcloze/errors.hpp"
#include "nbcloze/rng.hpp"

#include <json.hpp>

#include <atomic>
#include <fstream>
#include <thread>

namespace nbcloze {

using ordered_json = nlohmann::ordered_json;

namespace {

std::optional<std::vector<int>> units_for(const Utterance& utt, bool use_speech) {
    if (!use_speech) return std::nullopt;
    if (!utt.speech_units)
        throw Error("utterance " + utt.id + " carries no speech units");
    return utt.speech_units;
}

UtteranceResult degraded_result(const Utterance& utt, const std::string& why) {
    UtteranceResult r;
    r.id = utt.id;
    r.output = utt.hypotheses.at(0);
    r.degraded = true;
    r.note = why;
    return r;
}

std::vector<std::string> letter_candidates(int n) {
    std::vector<std::string> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.emplace_back(1, option_letter(i));
    return out;
}

UtteranceResult correct_one_cloze(const Utterance& utt,
                                  Scorer& scorer,
                                  const std::optional<Prior>& prior,
                                  const RunOptions& options) {
    UtteranceResult r;
    r.id = utt.id;

    auto units = units_for(utt, options.use_speech);
    ClozeTest cloze = build_cloze(build_network(utt));
    r.n_blanks = cloze.blank_count();

    AnswerSheet answers;
    if (r.n_blanks > 0) {
        const std::string prompt = render_cloze_prompt(cloze, units);
        std::string prefix;
        for (int b = 0; b < r.n_blanks; ++b) {
            ScoreRequest req;
            req.prompt = prompt;
            req.answer_prefix = prefix;
            req.candidates = letter_candidates(cloze.blank(b).n_options());
            OptionLogits logits = scorer.score_options(req);
            std::vector<double> probs =
                options.calibrate ? calibrate(logits, *prior) : softmax(logits.logp);
            int choice = answer_blank(probs);
            answers.choices.push_back(choice);
            prefix += option_letter(choice);
            prefix += ' ';
        }
    }
    r.answers = answers;
    r.output = reconstruct(cloze, answers);

    if (options.post_process) {
        std::string corrected =
            post_process(join_tokens(r.output), utt, scorer, options.decode, options.use_speech);
        r.output = tokenize(corrected);
    }
    return r;
}

UtteranceResult correct_one_ger(const Utterance& utt, Scorer& scorer, const RunOptions& options) {
    UtteranceResult r;
    r.id = utt.id;

    auto units = units_for(utt, options.use_speech);
    std::string prompt = render_ger_prompt(utt.hypotheses, units, options.use_speech);
    std::string text = scorer.generate(prompt, options.decode);
    r.output = tokenize(text);

    if (options.post_process) {
        std::string corrected =
            post_process(join_tokens(r.output), utt, scorer, options.decode, options.use_speech);
        r.output = tokenize(corrected);
    }
    return r;
}

template <typename PerUtterance>
RunResult run_batch(const Dataset& dataset, int parallel, PerUtterance&& correct) {
    RunResult result;
    result.utterances.resize(dataset.utterances.size());

    auto work = [&](std::size_t i) {
        const Utterance& utt = dataset.utterances[i];
        try {
            result.utterances[i] = correct(utt);
        } catch (const Error& e) {
            result.utterances[i] = degraded_result(utt, e.what());
        }
    };

    if (parallel <= 1 || dataset.utterances.size() < 2) {
        for (std::size_t i = 0; i < dataset.utterances.size(); ++i) work(i);
        return result;
    }

    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const int n_threads = std::min<std::size_t>(parallel, dataset.utterances.size());
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < dataset.utterances.size();
                 i = next.fetch_add(1))
                work(i);
        });
    for (auto& th : pool) th.join();
    return result;
}

} // namespace

RunResult run_clozeger(const Dataset& dataset,
                       Scorer& scorer,
                       const std::optional<Prior>& prior,
                       const RunOptions& options) {
    if (options.calibrate && !prior)
        throw Error("calibration requested without a prior");
    if (options.calibrate && prior->n() != dataset.n_best)
        throw Error("prior dimension does not match the dataset's N");
    return run_batch(dataset, options.parallel, [&](const Utterance& utt) {
        return correct_one_cloze(utt, scorer, prior, options);
    });
}

RunResult run_ger(const Dataset& dataset, Scorer& scorer, const RunOptions& options) {
    return run_batch(dataset, options.parallel, [&](const Utterance& utt) {
        return correct_one_ger(utt, scorer, options);
    });
}

std::string post_process(const std::string& text,
                         const Utterance& utterance,
                         Scorer& scorer,
                         const GenerateParams& params,
                         bool use_speech) {
    try {
        auto units = units_for(utterance, use_speech);
        std::string prompt = render_post_prompt(text, units);
        return scorer.generate(prompt, params);
    } catch (const Error&) {
        return text; // second pass is best-effort
    }
}

ExportTask export_task_from_string(const std::string& name) {
    if (name == "ger") return ExportTask::Ger;
    if (name == "ger_speech") return ExportTask::GerSpeech;
    if (name == "cloze") return ExportTask::Cloze;
    if (name == "post") return ExportTask::Post;
    throw Error("unknown export task: " + name);
}

std::string to_string(ExportTask task) {
    switch (task) {
    case ExportTask::Ger: return "ger";
    case ExportTask::GerSpeech: return "ger_speech";
    case ExportTask::Cloze: return "cloze";
    case ExportTask::Post: return "post";
    }
    throw Error("unknown export task");
}

std::vector<ExportRecord> export_finetune_data(
    const Dataset& dataset,
    ExportTask task,
    std::optional<std::uint64_t> shuffle_seed,
    const std::map<std::string, std::string>* intermediates) {
    std::vector<ExportRecord> records;
    records.reserve(dataset.utterances.size());

    for (const auto& utt : dataset.utterances) {
        if (!utt.reference)
            throw Error("export needs a reference for every utterance; " + utt.id + " has none");
        ExportRecord rec;
        rec.id = utt.id;

        switch (task) {
        case ExportTask::Ger:
            rec.prompt = render_ger_prompt(utt.hypotheses, std::nullopt, false);
            rec.target = join_tokens(*utt.reference);
            break;
        case ExportTask::GerSpeech: {
            auto units = units_for(utt, true);
            rec.prompt = render_ger_prompt(utt.hypotheses, units, true);
            rec.target = join_tokens(*utt.reference);
            break;
        }
        case ExportTask::Cloze: {
            ClozeTest cloze = build_cloze(build_network(utt));
            cloze.gold = derive_gold_answers(cloze, *utt.reference);
            if (shuffle_seed)
                cloze = shuffle_options(cloze, splitmix64(*shuffle_seed ^ fnv1a64(utt.id)));
            rec.prompt = render_cloze_prompt(cloze, utt.speech_units);
            rec.target = cloze.gold->sheet.letters();
            break;
        }
        case ExportTask::Post: {
            std::string candidate = join_tokens(utt.hypotheses.at(0));
            if (intermediates) {
                auto it = intermediates->find(utt.id);
                if (it != intermediates->end()) candidate = it->second;
            }
            rec.prompt = render_post_prompt(candidate, utt.speech_units);
            rec.target = join_tokens(*utt.reference);
            break;
        }
        }
        records.push_back(std::move(rec));
    }
    return records;
}

void save_export_jsonl(const std::vector<ExportRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write export file: " + path);
    for (const auto& rec : records) {
        ordered_json j;
        j["id"] = rec.id;
        j["prompt"] = rec.prompt;
        j["target"] = rec.target;
        out << j.dump() << '\n';
    }
}

std::vector<ScoredBlank> collect_validation_scores(const Dataset& dataset,
                                                   Scorer& scorer,
                                                   PermutationSet set,
                                                   int validation_blanks,
                                                   bool use_speech) {
    if (validation_blanks < 1) throw Error("validation size must be positive");
    std::vector<ScoredBlank> collected;

    for (const auto& utt : dataset.utterances) {
        if (static_cast<int>(collected.size()) >= validation_blanks) break;
        auto units = units_for(utt, use_speech);
        ClozeTest cloze = build_cloze(build_network(utt));
        const int n_blanks = cloze.blank_count();
        if (n_blanks == 0) continue;

        auto perms = make_permutations(set, cloze.blank(0).n_options());
        std::string prefix;
        for (int b = 0;
             b < n_blanks && static_cast<int>(collected.size()) < validation_blanks; ++b) {
            auto candidates = letter_candidates(cloze.blank(b).n_options());
            ScoredBlank sample;
            sample.utterance_id = utt.id;
            OptionLogits identity_logits;
            for (const auto& perm : perms) {
                ClozeTest permuted = permute_blank(cloze, b, perm.mapping());
                ScoreRequest req;
                req.prompt = render_cloze_prompt(permuted, units);
                req.answer_prefix = prefix;
                req.candidates = candidates;
                OptionLogits logits = scorer.score_options(req);
                if (perm == Permutation::identity(perm.n())) identity_logits = logits;
                sample.per_permutation.push_back(std::move(logits));
            }
            collected.push_back(std::move(sample));
            // The prefix mirrors a plain uncalibrated decode.
            prefix += option_letter(answer_blank(softmax(identity_logits.logp)));
            prefix += ' ';
        }
    }
    if (collected.empty())
        throw Error("dataset produced no blanks to validate on");
    return collected;
}

std::string file_hash_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read file for hashing: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes)));
    return buf;
}

std::string manifest_json(const ManifestInfo& info) {
    ordered_json j;
    j["dataset_path"] = info.dataset_path;
    j["dataset_hash"] = file_hash_hex(info.dataset_path);
    j["mode"] = info.mode;
    j["use_speech"] = info.options.use_speech;
    j["calibrate"] = info.options.calibrate;
    j["post_process"] = info.options.post_process;
    j["parallel"] = info.options.parallel;
    j["scorer"] = info.scorer;
    j["prior_file"] = info.prior_file;
    j["decode"] = {{"max_tokens", info.options.decode.max_tokens},
                   {"temperature", info.options.decode.temperature},
                   {"top_k", info.options.decode.top_k},
                   {"top_p", info.options.decode.top_p},
                   {"beams", info.options.decode.beams}};
    if (info.noise_seed) j["noise_seed"] = *info.noise_seed;
    if (info.shuffle_seed) j["shuffle_seed"] = *info.shuffle_seed;
    j["n_best"] = info.n_best;
    j["utterances"] = info.utterances;
    return j.dump(2);
}

} // namespace nbcloze
