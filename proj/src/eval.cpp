#include "nbcloze/eval.hpp"

#include "nbcloze/alignment.hpp"
#include "nbcloze/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>

namespace nbcloze {

WerBreakdown wer(const TokenSeq& hyp, const TokenSeq& ref) {
    if (ref.empty()) throw Error("WER needs a non-empty reference");
    WerBreakdown out;
    out.ref_len = static_cast<int>(ref.size());
    for (const auto& step : align_pair(ref, hyp)) {
        switch (step.op) {
        case EditOp::Match: break;
        case EditOp::Substitute: ++out.substitutions; break;
        case EditOp::Delete: ++out.deletions; break;
        case EditOp::Insert: ++out.insertions; break;
        }
    }
    return out;
}

WerBreakdown nbest_oracle(const Utterance& utterance) {
    if (!utterance.reference) throw Error("oracle needs a reference: " + utterance.id);
    if (utterance.hypotheses.empty()) throw Error("oracle needs hypotheses: " + utterance.id);
    WerBreakdown best = wer(utterance.hypotheses[0], *utterance.reference);
    for (std::size_t k = 1; k < utterance.hypotheses.size(); ++k) {
        WerBreakdown cand = wer(utterance.hypotheses[k], *utterance.reference);
        if (cand.errors() < best.errors()) best = cand;
    }
    return best;
}

namespace {

std::vector<Token> distinct_cells(const AlignmentColumn& col) {
    std::vector<Token> out;
    for (const auto& cell : col.cells)
        if (std::find(out.begin(), out.end(), cell) == out.end()) out.push_back(cell);
    return out;
}

} // namespace

WerBreakdown compositional_oracle(const Utterance& utterance) {
    if (!utterance.reference) throw Error("oracle needs a reference: " + utterance.id);
    const TokenSeq& ref = *utterance.reference;
    if (ref.empty()) throw Error("WER needs a non-empty reference");

    ConfusionNetwork network = build_network(utterance);
    const int C = static_cast<int>(network.columns.size());
    const int R = static_cast<int>(ref.size());
    const int INF = std::numeric_limits<int>::max() / 2;

    std::vector<std::vector<Token>> choices(C);
    for (int c = 0; c < C; ++c) choices[c] = distinct_cells(network.columns[c]);

    // dp[c][j]: min edit cost after c columns and j consumed reference tokens.
    std::vector<std::vector<int>> dp(C + 1, std::vector<int>(R + 1, INF));
    dp[0][0] = 0;
    for (int c = 0; c <= C; ++c) {
        for (int j = 1; j <= R; ++j)
            dp[c][j] = std::min(dp[c][j], dp[c][j - 1] + 1); // reference token deleted
        if (c == C) break;
        for (int j = 0; j <= R; ++j) {
            if (dp[c][j] >= INF) continue;
            for (const auto& t : choices[c]) {
                if (t.is_null()) {
                    dp[c + 1][j] = std::min(dp[c + 1][j], dp[c][j]);
                } else {
                    dp[c + 1][j] = std::min(dp[c + 1][j], dp[c][j] + 1); // inserted
                    if (j < R)
                        dp[c + 1][j + 1] =
                            std::min(dp[c + 1][j + 1], dp[c][j] + (t == ref[j] ? 0 : 1));
                }
            }
        }
    }

    // Backtrace for the breakdown; preference match > sub > null-skip >
    // insert > delete keeps it deterministic.
    WerBreakdown out;
    out.ref_len = R;
    int c = C, j = R;
    while (c > 0 || j > 0) {
        bool has_match = false, has_other = false, has_null = false;
        if (c > 0) {
            for (const auto& t : choices[c - 1]) {
                if (t.is_null()) has_null = true;
                else if (j > 0 && t == ref[j - 1]) has_match = true;
                else has_other = true;
            }
        }
        if (c > 0 && j > 0 && has_match && dp[c][j] == dp[c - 1][j - 1]) {
            --c; --j;
        } else if (c > 0 && j > 0 && has_other && dp[c][j] == dp[c - 1][j - 1] + 1) {
            ++out.substitutions; --c; --j;
        } else if (c > 0 && has_null && dp[c][j] == dp[c - 1][j]) {
            --c;
        } else if (c > 0 && (has_match || has_other) && dp[c][j] == dp[c - 1][j] + 1) {
            ++out.insertions; --c;
        } else if (j > 0 && dp[c][j] == dp[c][j - 1] + 1) {
            ++out.deletions; --j;
        } else {
            throw Error("oracle backtrace lost the optimal path");
        }
    }
    return out;
}

AccuracyReport cloze_accuracy(const std::vector<AnswerSheet>& predicted,
                              const std::vector<GoldAnswers>& gold,
                              int n_ids,
                              bool answerable_only) {
    if (predicted.size() != gold.size())
        throw Error("predicted and gold sheet counts differ");
    if (n_ids < 1) throw Error("n_ids must be positive");

    AccuracyReport report;
    report.per_id_accuracy.assign(n_ids, 0.0);
    report.predicted_distribution.assign(n_ids, 0.0);
    std::vector<int> gold_counts(n_ids, 0), gold_hits(n_ids, 0);
    int hits = 0;

    for (std::size_t t = 0; t < predicted.size(); ++t) {
        const auto& pred = predicted[t].choices;
        const auto& gd = gold[t].sheet.choices;
        if (pred.size() != gd.size())
            throw Error("blank count mismatch in test " + std::to_string(t));
        for (std::size_t b = 0; b < pred.size(); ++b) {
            if (answerable_only && !gold[t].answerable[b]) continue;
            if (pred[b] < 0 || pred[b] >= n_ids || gd[b] < 0 || gd[b] >= n_ids)
                throw Error("answer ID outside [0, n_ids)");
            ++report.counted;
            report.predicted_distribution[pred[b]] += 1.0;
            ++gold_counts[gd[b]];
            if (pred[b] == gd[b]) { ++hits; ++gold_hits[gd[b]]; }
        }
    }

    if (report.counted > 0) {
        report.overall = static_cast<double>(hits) / report.counted;
        for (double& x : report.predicted_distribution) x /= report.counted;
    }
    for (int i = 0; i < n_ids; ++i)
        if (gold_counts[i] > 0)
            report.per_id_accuracy[i] = static_cast<double>(gold_hits[i]) / gold_counts[i];
    return report;
}

std::vector<double> label_distribution(const std::vector<GoldAnswers>& gold, int n_ids) {
    std::vector<double> dist(n_ids, 0.0);
    int total = 0;
    for (const auto& g : gold)
        for (int choice : g.sheet.choices) {
            if (choice < 0 || choice >= n_ids) throw Error("label outside [0, n_ids)");
            dist[choice] += 1.0;
            ++total;
        }
    if (total > 0)
        for (double& x : dist) x /= total;
    return dist;
}

namespace {

std::string percent1(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", value);
    return buf;
}

} // namespace

std::string format_reduction(double baseline, double system) {
    if (!(baseline > 0.0)) throw Error("relative reduction needs a positive baseline");
    double change = -((baseline - system) / baseline * 100.0);
    std::string body = percent1(change);
    if (!body.empty() && body[0] != '-') body.insert(body.begin(), '+');
    return body + "%";
}

std::string render_report_markdown(const Report& report) {
    if (report.rows.empty()) throw Error("report has no rows");
    const auto& first = report.rows.front();

    std::string out = "| Dataset | Baseline |";
    for (const auto& [name, _] : first.systems) out += " " + name + " |";
    out += " o_nb | o_cp |\n|---|---|";
    for (std::size_t i = 0; i < first.systems.size(); ++i) out += "---|";
    out += "---|---|\n";

    for (const auto& row : report.rows) {
        if (row.systems.size() != first.systems.size())
            throw Error("report rows disagree on system columns");
        out += "| " + row.dataset + " | " + percent1(row.baseline) + " |";
        for (const auto& [_, value] : row.systems)
            out += " " + percent1(value) + " (" + format_reduction(row.baseline, value) + ") |";
        out += row.o_nb ? " " + percent1(*row.o_nb) + " |" : " - |";
        out += row.o_cp ? " " + percent1(*row.o_cp) + " |" : " - |";
        out += "\n";
    }
    return out;
}

std::string render_report_tsv(const Report& report) {
    if (report.rows.empty()) throw Error("report has no rows");
    const auto& first = report.rows.front();

    std::string out = "dataset\tbaseline";
    for (const auto& [name, _] : first.systems) out += "\t" + name + "\t" + name + "_reduction";
    out += "\to_nb\to_cp\n";

    for (const auto& row : report.rows) {
        if (row.systems.size() != first.systems.size())
            throw Error("report rows disagree on system columns");
        out += row.dataset + "\t" + percent1(row.baseline);
        for (const auto& [_, value] : row.systems)
            out += "\t" + percent1(value) + "\t" + format_reduction(row.baseline, value);
        out += "\t" + (row.o_nb ? percent1(*row.o_nb) : std::string("-"));
        out += "\t" + (row.o_cp ? percent1(*row.o_cp) : std::string("-"));
        out += "\n";
    }
    return out;
}

} // namespace nbcloze
