#include "nbcloze/calibration.hpp"
#include "nbcloze/cloze.hpp"
#include "nbcloze/corpus.hpp"
#include "nbcloze/errors.hpp"
#include "nbcloze/eval.hpp"
#include "nbcloze/pipeline.hpp"
#include "nbcloze/rng.hpp"
#include "nbcloze/scorer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

using namespace nbcloze;
using ordered_json = nlohmann::ordered_json;

namespace {

// Files created by the running command; removed if it fails so a crash never
// leaves half-written artifacts behind.
class OutputGuard {
public:
    std::ofstream& open(const std::string& path) {
        auto stream = std::make_unique<std::ofstream>(path, std::ios::binary);
        if (!*stream) throw Error("cannot write output file: " + path);
        paths_.push_back(path);
        streams_.push_back(std::move(stream));
        return *streams_.back();
    }

    void commit() { committed_ = true; }

    ~OutputGuard() {
        streams_.clear(); // flush and close before any unlink
        if (committed_) return;
        for (const auto& p : paths_) std::remove(p.c_str());
    }

private:
    std::vector<std::string> paths_;
    std::vector<std::unique_ptr<std::ofstream>> streams_;
    bool committed_ = false;
};

struct ScorerFlags {
    std::string url;
    bool synthetic = false;
    std::string bias_csv;
    std::uint64_t quality_seed = 0;
    bool has_quality_seed = false;
    std::uint64_t noise_seed = 0;
    bool has_noise_seed = false;
    double noise_scale = 1.0;
    int timeout_ms = 30000;
    int max_attempts = 3;
    int backoff_ms = 100;

    CLI::Option* quality_opt = nullptr;
    CLI::Option* noise_opt = nullptr;

    void attach(CLI::App* cmd) {
        cmd->add_option("--scorer", url, "scorer endpoint URL (default: $NBCLOZE_SCORER_URL)");
        cmd->add_flag("--synthetic", synthetic, "use the built-in synthetic scorer");
        cmd->add_option("--bias", bias_csv, "synthetic ID bias weights, e.g. 8,2,1,0.5,0.25");
        quality_opt = cmd->add_option("--quality-seed", quality_seed,
                                      "seed for synthetic content quality");
        noise_opt = cmd->add_option("--noise-seed", noise_seed, "seed for synthetic Gumbel noise");
        cmd->add_option("--noise-scale", noise_scale, "synthetic noise scale");
        cmd->add_option("--timeout-ms", timeout_ms, "HTTP timeout per request");
        cmd->add_option("--max-attempts", max_attempts, "HTTP retry attempts");
        cmd->add_option("--backoff-ms", backoff_ms, "base backoff between retries");
    }

    void finalize() {
        has_quality_seed = quality_opt && quality_opt->count() > 0;
        has_noise_seed = noise_opt && noise_opt->count() > 0;
    }

    std::string describe() const {
        if (!synthetic) return url.empty() ? std::string("env:") + kScorerUrlEnv : url;
        std::string d = "synthetic(bias=" + (bias_csv.empty() ? "uniform" : bias_csv);
        if (has_quality_seed) d += ",quality_seed=" + std::to_string(quality_seed);
        if (has_noise_seed) d += ",noise_seed=" + std::to_string(noise_seed);
        d += ")";
        return d;
    }

    std::unique_ptr<Scorer> build(int n_best) const {
        if (synthetic) {
            SyntheticScorerSpec spec;
            if (bias_csv.empty()) {
                spec.bias.assign(n_best, 1.0);
            } else {
                std::stringstream ss(bias_csv);
                std::string part;
                while (std::getline(ss, part, ','))
                    spec.bias.push_back(std::stod(part));
            }
            if (has_quality_seed) {
                const std::uint64_t seed = quality_seed;
                spec.quality = [seed](const std::string& content) {
                    std::uint64_t h = splitmix64(fnv1a64(content) ^ seed);
                    return 0.5 + static_cast<double>(h >> 11) * 0x1.0p-53;
                };
            }
            if (has_noise_seed) spec.noise_seed = noise_seed;
            spec.noise_scale = noise_scale;
            return std::make_unique<SyntheticScorer>(std::move(spec));
        }
        if (url.empty()) return HttpScorer::from_env();
        HttpScorerConfig config;
        config.base_url = url;
        config.timeout_ms = timeout_ms;
        config.max_attempts = max_attempts;
        config.backoff_base_ms = backoff_ms;
        return std::make_unique<HttpScorer>(std::move(config));
    }
};

void attach_decode(CLI::App* cmd, GenerateParams& decode) {
    cmd->add_option("--max-tokens", decode.max_tokens, "generation length cap");
    cmd->add_option("--temperature", decode.temperature, "sampling temperature");
    cmd->add_option("--top-k", decode.top_k, "top-k sampling cutoff");
    cmd->add_option("--top-p", decode.top_p, "top-p sampling cutoff");
    cmd->add_option("--beams", decode.beams, "beam count");
}

std::ostream& pick(std::ostream& fallback, std::ofstream* file) {
    return file ? static_cast<std::ostream&>(*file) : fallback;
}

int cmd_align(const std::string& input, const std::string& only_id, const std::string& output,
              bool lowercase) {
    Dataset ds = load_jsonl(input, {lowercase});
    OutputGuard guard;
    std::ofstream* file = output.empty() ? nullptr : &guard.open(output);
    std::ostream& out = pick(std::cout, file);
    for (const auto& utt : ds.utterances) {
        if (!only_id.empty() && utt.id != only_id) continue;
        out << "# " << utt.id << "\n" << format_grid(build_network(utt)) << "\n";
    }
    guard.commit();
    return 0;
}

int cmd_build_cloze(const std::string& input, const std::string& only_id,
                    const std::string& output, bool lowercase, bool dedupe, bool with_gold) {
    Dataset ds = load_jsonl(input, {lowercase});
    OutputGuard guard;
    std::ofstream* file = output.empty() ? nullptr : &guard.open(output);
    std::ostream& out = pick(std::cout, file);
    for (const auto& utt : ds.utterances) {
        if (!only_id.empty() && utt.id != only_id) continue;
        ClozeTest cloze = build_cloze(build_network(utt), dedupe);
        out << "# " << utt.id << "\n" << render_cloze_prompt(cloze, utt.speech_units) << "\n";
        if (with_gold) {
            if (!utt.reference) throw Error("gold answers need a reference; " + utt.id + " has none");
            GoldAnswers gold = derive_gold_answers(cloze, *utt.reference);
            out << "gold: " << (gold.sheet.choices.empty() ? "(no blanks)" : gold.sheet.letters())
                << "\n";
        }
        out << "\n";
    }
    guard.commit();
    return 0;
}

int cmd_export(const std::string& input, const std::string& task_name, const std::string& output,
               bool lowercase, std::optional<std::uint64_t> shuffle_seed) {
    Dataset ds = load_jsonl(input, {lowercase});
    auto records = export_finetune_data(ds, export_task_from_string(task_name), shuffle_seed);
    OutputGuard guard;
    std::ofstream& out = guard.open(output);
    for (const auto& rec : records) {
        ordered_json j;
        j["id"] = rec.id;
        j["prompt"] = rec.prompt;
        j["target"] = rec.target;
        out << j.dump() << '\n';
    }
    guard.commit();
    std::cerr << "exported " << records.size() << " records to " << output << "\n";
    return 0;
}

int cmd_estimate_prior(const std::string& input, const ScorerFlags& flags, int validation_size,
                       const std::string& set_name, const std::string& dataset_name,
                       const std::string& output, bool lowercase, bool use_speech) {
    Dataset ds = load_jsonl(input, {lowercase});
    auto scorer = flags.build(ds.n_best);
    PermutationSet set = permutation_set_from_string(set_name);
    auto scored = collect_validation_scores(ds, *scorer, set, validation_size, use_speech);
    Prior prior = estimate_prior(std::move(scored),
                                 set, dataset_name.empty() ? ds.name : dataset_name);
    OutputGuard guard;
    guard.open(output) << to_json(prior) << '\n';
    guard.commit();
    std::cerr << "prior over " << prior.n() << " IDs from " << prior.sample_count
              << " blanks written to " << output << "\n";
    return 0;
}

int cmd_run(const std::string& input, const std::string& mode, const ScorerFlags& flags,
            const RunOptions& options, const std::string& prior_path, const std::string& output,
            const std::string& manifest_path, bool lowercase) {
    Dataset ds = load_jsonl(input, {lowercase});
    auto scorer = flags.build(ds.n_best);

    std::optional<Prior> prior;
    if (!prior_path.empty()) prior = load_prior(prior_path);

    RunResult result;
    if (mode == "clozeger") {
        result = run_clozeger(ds, *scorer, prior, options);
    } else if (mode == "ger") {
        result = run_ger(ds, *scorer, options);
    } else {
        throw Error("unknown run mode: " + mode + " (expected ger|clozeger)");
    }

    OutputGuard guard;
    std::ofstream& out = guard.open(output);
    int degraded = 0;
    for (const auto& r : result.utterances) {
        ordered_json j;
        j["id"] = r.id;
        j["output"] = join_tokens(r.output);
        j["n_blanks"] = r.n_blanks;
        if (r.answers) j["answers"] = r.answers->letters();
        j["degraded"] = r.degraded;
        if (r.degraded) { j["note"] = r.note; ++degraded; }
        out << j.dump() << '\n';
    }

    if (!manifest_path.empty()) {
        ManifestInfo info;
        info.dataset_path = input;
        info.mode = mode;
        info.options = options;
        info.scorer = flags.describe();
        info.prior_file = prior_path;
        if (flags.has_noise_seed) info.noise_seed = flags.noise_seed;
        info.n_best = ds.n_best;
        info.utterances = static_cast<int>(ds.utterances.size());
        guard.open(manifest_path) << manifest_json(info) << '\n';
    }
    guard.commit();
    std::cerr << "corrected " << result.utterances.size() << " utterances ("
              << degraded << " degraded) -> " << output << "\n";
    return 0;
}

int cmd_evaluate(const std::string& input, const std::string& hyp_path,
                 const std::string& output, const std::string& diagnostics, bool lowercase) {
    Dataset ds = load_jsonl(input, {lowercase});

    // Run outputs, keyed by utterance id.
    std::map<std::string, ordered_json> runs;
    {
        std::ifstream in(hyp_path, std::ios::binary);
        if (!in) throw Error("cannot read run output: " + hyp_path);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            ordered_json j = ordered_json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("id"))
                throw Error("bad run output at " + hyp_path + ":" + std::to_string(line_no));
            std::string id = j["id"].get<std::string>();
            runs[std::move(id)] = std::move(j);
        }
    }

    long long sys_err = 0, base_err = 0, nb_err = 0, cp_err = 0, ref_total = 0;
    std::vector<AnswerSheet> predicted;
    std::vector<GoldAnswers> gold;
    int degraded = 0;

    OutputGuard guard;
    std::ofstream* diag = diagnostics.empty() ? nullptr : &guard.open(diagnostics);

    for (const auto& utt : ds.utterances) {
        if (!utt.reference) throw Error("evaluation needs references; " + utt.id + " has none");
        auto it = runs.find(utt.id);
        if (it == runs.end()) throw Error("run output is missing utterance " + utt.id);

        TokenSeq out_tokens = tokenize(it->second.at("output").get<std::string>());
        WerBreakdown sys = wer(out_tokens, *utt.reference);
        WerBreakdown base = wer(utt.hypotheses.at(0), *utt.reference);
        WerBreakdown nb = nbest_oracle(utt);
        WerBreakdown cp = compositional_oracle(utt);
        sys_err += sys.errors();
        base_err += base.errors();
        nb_err += nb.errors();
        cp_err += cp.errors();
        ref_total += sys.ref_len;
        if (it->second.value("degraded", false)) ++degraded;

        std::string answers = it->second.value("answers", "");
        ClozeTest cloze = build_cloze(build_network(utt));
        if (cloze.blank_count() > 0 && !answers.empty() && !it->second.value("degraded", false)) {
            predicted.push_back(parse_answers(answers, cloze.blank_count(), ds.n_best));
            gold.push_back(derive_gold_answers(cloze, *utt.reference));
        }

        if (diag) {
            ordered_json j;
            j["id"] = utt.id;
            j["wer"] = sys.wer();
            j["o_nb"] = nb.wer();
            j["o_cp"] = cp.wer();
            j["n_blanks"] = cloze.blank_count();
            if (!answers.empty()) j["answers"] = answers;
            *diag << j.dump() << '\n';
        }
    }

    ordered_json metrics;
    metrics["utterances"] = ds.utterances.size();
    metrics["ref_tokens"] = ref_total;
    metrics["wer"] = static_cast<double>(sys_err) / ref_total;
    metrics["baseline_wer"] = static_cast<double>(base_err) / ref_total;
    metrics["o_nb"] = static_cast<double>(nb_err) / ref_total;
    metrics["o_cp"] = static_cast<double>(cp_err) / ref_total;
    metrics["degraded"] = degraded;
    if (!predicted.empty()) {
        AccuracyReport acc = cloze_accuracy(predicted, gold, ds.n_best);
        metrics["cloze_accuracy"] = acc.overall;
        metrics["answerable_blanks"] = acc.counted;
        metrics["predicted_distribution"] = acc.predicted_distribution;
    }

    if (output.empty()) {
        std::cout << metrics.dump(2) << "\n";
    } else {
        guard.open(output) << metrics.dump(2) << '\n';
    }
    guard.commit();
    return 0;
}

int cmd_report(const std::string& input, const std::string& markdown_path,
               const std::string& tsv_path) {
    std::ifstream in(input, std::ios::binary);
    if (!in) throw Error("cannot read report input: " + input);

    std::string header;
    if (!std::getline(in, header)) throw Error("report input is empty");
    std::vector<std::string> columns;
    {
        std::stringstream ss(header);
        std::string col;
        while (std::getline(ss, col, '\t')) columns.push_back(col);
    }
    if (columns.size() < 2 || columns[0] != "dataset" || columns[1] != "baseline")
        throw Error("report input must start with 'dataset<TAB>baseline' columns");

    Report report;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::vector<std::string> cells;
        std::string cell;
        while (std::getline(ss, cell, '\t')) cells.push_back(cell);
        if (cells.size() != columns.size())
            throw Error("report row has " + std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(columns.size()));
        ReportRow row;
        row.dataset = cells[0];
        row.baseline = std::stod(cells[1]);
        for (std::size_t c = 2; c < cells.size(); ++c) {
            if (columns[c] == "o_nb") row.o_nb = std::stod(cells[c]);
            else if (columns[c] == "o_cp") row.o_cp = std::stod(cells[c]);
            else row.systems.emplace_back(columns[c], std::stod(cells[c]));
        }
        report.rows.push_back(std::move(row));
    }

    OutputGuard guard;
    if (!markdown_path.empty()) guard.open(markdown_path) << render_report_markdown(report);
    if (!tsv_path.empty()) guard.open(tsv_path) << render_report_tsv(report);
    if (markdown_path.empty() && tsv_path.empty()) std::cout << render_report_markdown(report);
    guard.commit();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"N-best cloze correction toolkit"};
    app.require_subcommand(1);

    std::string input, output, manifest, only_id, task, mode = "clozeger", prior_path;
    std::string set_name = "cyclic", dataset_name, hyp_path, diagnostics, markdown_path, tsv_path;
    bool lowercase = false, dedupe = false, with_gold = false;
    std::uint64_t shuffle_seed = 0;
    bool has_shuffle_seed = false;
    int validation_size = 100;
    ScorerFlags scorer_flags;
    RunOptions options;

    auto* align = app.add_subcommand("align", "print confusion-network grids");
    align->add_option("--input", input)->required();
    align->add_option("--id", only_id, "only this utterance");
    align->add_option("--output", output);
    align->add_flag("--lowercase", lowercase);

    auto* build = app.add_subcommand("build-cloze", "print rendered cloze prompts");
    build->add_option("--input", input)->required();
    build->add_option("--id", only_id, "only this utterance");
    build->add_option("--output", output);
    build->add_flag("--lowercase", lowercase);
    build->add_flag("--dedupe", dedupe, "drop duplicate option contents");
    build->add_flag("--gold", with_gold, "also derive gold answers");

    auto* exp = app.add_subcommand("export-train", "emit fine-tune prompt/target JSONL");
    exp->add_option("--input", input)->required();
    exp->add_option("--task", task, "ger|ger_speech|cloze|post")->required();
    exp->add_option("--output", output)->required();
    exp->add_flag("--lowercase", lowercase);
    auto* shuffle_opt =
        exp->add_option("--shuffle-seed", shuffle_seed, "shuffle option contents (cloze task)");

    auto* prior_cmd = app.add_subcommand("estimate-prior", "estimate the option-ID prior");
    prior_cmd->add_option("--input", input)->required();
    prior_cmd->add_option("--output", output)->required();
    prior_cmd->add_option("--validation-size", validation_size, "blanks to score (default 100)");
    prior_cmd->add_option("--permutation-set", set_name, "cyclic|full");
    prior_cmd->add_option("--dataset-name", dataset_name);
    prior_cmd->add_flag("--lowercase", lowercase);
    prior_cmd->add_flag("--use-speech", options.use_speech);
    scorer_flags.attach(prior_cmd);

    auto* run = app.add_subcommand("run", "correct a dataset");
    run->add_option("--input", input)->required();
    run->add_option("--mode", mode, "ger|clozeger");
    run->add_option("--output", output)->required();
    run->add_option("--manifest", manifest, "write a reproducibility manifest");
    run->add_option("--prior", prior_path, "prior file for --calibrate");
    run->add_flag("--calibrate", options.calibrate);
    run->add_flag("--post-process", options.post_process);
    run->add_flag("--use-speech", options.use_speech);
    run->add_flag("--lowercase", lowercase);
    run->add_option("--parallel", options.parallel, "concurrent utterances");
    attach_decode(run, options.decode);
    scorer_flags.attach(run);

    auto* eval_cmd = app.add_subcommand("evaluate", "score run outputs against references");
    eval_cmd->add_option("--input", input)->required();
    eval_cmd->add_option("--hyp", hyp_path, "run output JSONL")->required();
    eval_cmd->add_option("--output", output, "metrics JSON (default: stdout)");
    eval_cmd->add_option("--diagnostics", diagnostics, "per-utterance JSONL");
    eval_cmd->add_flag("--lowercase", lowercase);

    auto* report_cmd = app.add_subcommand("report", "render WER tables with reductions");
    report_cmd->add_option("--input", input, "TSV: dataset, baseline, systems...")->required();
    report_cmd->add_option("--markdown", markdown_path);
    report_cmd->add_option("--tsv", tsv_path);

    CLI11_PARSE(app, argc, argv);
    scorer_flags.finalize();
    has_shuffle_seed = shuffle_opt->count() > 0;

    try {
        if (align->parsed()) return cmd_align(input, only_id, output, lowercase);
        if (build->parsed())
            return cmd_build_cloze(input, only_id, output, lowercase, dedupe, with_gold);
        if (exp->parsed())
            return cmd_export(input, task, output, lowercase,
                              has_shuffle_seed ? std::optional<std::uint64_t>(shuffle_seed)
                                               : std::nullopt);
        if (prior_cmd->parsed())
            return cmd_estimate_prior(input, scorer_flags, validation_size, set_name,
                                      dataset_name, output, lowercase, options.use_speech);
        if (run->parsed())
            return cmd_run(input, mode, scorer_flags, options, prior_path, output, manifest,
                           lowercase);
        if (eval_cmd->parsed())
            return cmd_evaluate(input, hyp_path, output, diagnostics, lowercase);
        if (report_cmd->parsed()) return cmd_report(input, markdown_path, tsv_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
