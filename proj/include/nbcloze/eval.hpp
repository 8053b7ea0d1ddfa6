#pragma once

#include "nbcloze/cloze.hpp"
#include "nbcloze/corpus.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace nbcloze {

struct WerBreakdown {
    int substitutions = 0;
    int deletions = 0;
    int insertions = 0;
    int ref_len = 0;

    int errors() const { return substitutions + deletions + insertions; }
    double wer() const { return static_cast<double>(errors()) / ref_len; }
};

// Levenshtein with unit costs; counts come from the same deterministic
// backtrace as align_pair. The reference must be non-empty.
WerBreakdown wer(const TokenSeq& hyp, const TokenSeq& ref);

// Best single hypothesis; ties go to the lower rank.
WerBreakdown nbest_oracle(const Utterance& utterance);

// Best WER over all confusion-network lattice paths: each column emits one of
// its distinct cell tokens, NULL emits nothing.
WerBreakdown compositional_oracle(const Utterance& utterance);

struct AccuracyReport {
    double overall = 0.0;
    std::vector<double> per_id_accuracy;       // accuracy among blanks whose gold is this ID
    std::vector<double> predicted_distribution; // frequency of predicted IDs
    int counted = 0;                            // blanks included
};

// Pairs predicted sheets with gold sheets test by test, blank by blank.
// answerable_only drops blanks whose reference span matched no option.
AccuracyReport cloze_accuracy(const std::vector<AnswerSheet>& predicted,
                              const std::vector<GoldAnswers>& gold,
                              int n_ids,
                              bool answerable_only = true);

// Normalized frequency of gold option IDs in exported cloze data.
std::vector<double> label_distribution(const std::vector<GoldAnswers>& gold, int n_ids);

struct ReportRow {
    std::string dataset;
    double baseline = 0.0; // WER, percent
    std::vector<std::pair<std::string, double>> systems;
    std::optional<double> o_nb;
    std::optional<double> o_cp;
};

struct Report {
    std::vector<ReportRow> rows;
};

// Signed relative change (system - baseline) / baseline as a one-decimal
// percent: 4.2 -> 2.4 renders "-42.9%", equal values render "-0.0%".
std::string format_reduction(double baseline, double system);

std::string render_report_markdown(const Report& report);
std::string render_report_tsv(const Report& report);

} // namespace nbcloze
