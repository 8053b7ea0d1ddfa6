#pragma once

#include "nbcloze/calibration.hpp"
#include "nbcloze/cloze.hpp"
#include "nbcloze/corpus.hpp"
#include "nbcloze/scorer.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nbcloze {

struct RunOptions {
    bool use_speech = false;
    bool calibrate = false;
    bool post_process = false;
    int parallel = 1;
    GenerateParams decode;
};

struct UtteranceResult {
    std::string id;
    TokenSeq output;
    int n_blanks = 0;
    std::optional<AnswerSheet> answers; // cloze path only
    bool degraded = false;              // fell back to the 1-best
    std::string note;                   // what went wrong, if anything
};

struct RunResult {
    std::vector<UtteranceResult> utterances;
};

// Cloze-style correction: confusion network -> cloze -> sequential
// blank scoring (optionally calibrated) -> reconstruction. Per-utterance
// failures degrade to the 1-best hypothesis and are noted, never fatal.
RunResult run_clozeger(const Dataset& dataset,
                       Scorer& scorer,
                       const std::optional<Prior>& prior,
                       const RunOptions& options);

// Free-form revision of the N-best list through generate().
RunResult run_ger(const Dataset& dataset, Scorer& scorer, const RunOptions& options);

// Second-pass correction of a candidate transcription. Generation failures
// return the input unchanged.
std::string post_process(const std::string& text,
                         const Utterance& utterance,
                         Scorer& scorer,
                         const GenerateParams& params,
                         bool use_speech);

enum class ExportTask { Ger, GerSpeech, Cloze, Post };

ExportTask export_task_from_string(const std::string& name);
std::string to_string(ExportTask task);

struct ExportRecord {
    std::string id;
    std::string prompt;
    std::string target;
};

// Fine-tune pairs. Cloze targets are gold answer letters ("A A"); shuffle_seed
// permutes option contents per blank (and remaps the gold) to fight ID bias.
// Post prompts take the candidate from `intermediates` when provided, else
// the 1-best.
std::vector<ExportRecord> export_finetune_data(
    const Dataset& dataset,
    ExportTask task,
    std::optional<std::uint64_t> shuffle_seed = std::nullopt,
    const std::map<std::string, std::string>* intermediates = nullptr);

void save_export_jsonl(const std::vector<ExportRecord>& records, const std::string& path);

// Scores the first `validation_blanks` blanks of the dataset under every
// permutation of the set, with answer prefixes from an uncalibrated greedy
// decode, ready for estimate_prior.
std::vector<ScoredBlank> collect_validation_scores(const Dataset& dataset,
                                                   Scorer& scorer,
                                                   PermutationSet set,
                                                   int validation_blanks,
                                                   bool use_speech);

struct ManifestInfo {
    std::string dataset_path;
    std::string mode; // "ger" | "clozeger"
    RunOptions options;
    std::string scorer;     // endpoint URL or synthetic descriptor
    std::string prior_file; // empty when uncalibrated
    std::optional<std::uint64_t> noise_seed;
    std::optional<std::uint64_t> shuffle_seed;
    int n_best = 0;
    int utterances = 0;
};

// FNV-1a of the file bytes, 16 hex digits.
std::string file_hash_hex(const std::string& path);

std::string manifest_json(const ManifestInfo& info);

} // namespace nbcloze
