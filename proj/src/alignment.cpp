#include "nbcloze/alignment.hpp"

#include "nbcloze/errors.hpp"

#include <algorithm>
#include <sstream>

namespace nbcloze {

std::vector<EditStep> align_pair(const TokenSeq& anchor, const TokenSeq& other) {
    const int m = static_cast<int>(anchor.size());
    const int n = static_cast<int>(other.size());

    // suffix[i][j] = minimal cost of aligning anchor[i..m) with other[j..n).
    std::vector<std::vector<int>> suffix(m + 1, std::vector<int>(n + 1, 0));
    for (int i = 0; i <= m; ++i) suffix[i][n] = m - i;
    for (int j = 0; j <= n; ++j) suffix[m][j] = n - j;
    for (int i = m - 1; i >= 0; --i) {
        for (int j = n - 1; j >= 0; --j) {
            int diag = suffix[i + 1][j + 1] + (anchor[i] == other[j] ? 0 : 1);
            suffix[i][j] = std::min({diag, suffix[i + 1][j] + 1, suffix[i][j + 1] + 1});
        }
    }

    // Forward walk from (0,0): at each step take the highest-preference op
    // that still lies on an optimal path. This realizes the leftmost-first
    // tie-break.
    std::vector<EditStep> script;
    script.reserve(static_cast<std::size_t>(std::max(m, n)));
    int i = 0, j = 0;
    while (i < m || j < n) {
        const int here = suffix[i][j];
        if (i < m && j < n && anchor[i] == other[j] && here == suffix[i + 1][j + 1]) {
            script.push_back({EditOp::Match, i, j});
            ++i, ++j;
        } else if (i < m && j < n && here == suffix[i + 1][j + 1] + 1) {
            script.push_back({EditOp::Substitute, i, j});
            ++i, ++j;
        } else if (i < m && here == suffix[i + 1][j] + 1) {
            script.push_back({EditOp::Delete, i, -1});
            ++i;
        } else {
            script.push_back({EditOp::Insert, -1, j});
            ++j;
        }
    }
    return script;
}

int edit_cost(const std::vector<EditStep>& script) {
    int cost = 0;
    for (const auto& step : script) {
        if (step.op != EditOp::Match) ++cost;
    }
    return cost;
}

bool AlignmentColumn::unanimous() const {
    for (std::size_t k = 1; k < cells.size(); ++k) {
        if (!(cells[k] == cells[0])) return false;
    }
    return true;
}

TokenSeq ConfusionNetwork::row(int k) const {
    TokenSeq out;
    for (const auto& col : columns) {
        if (!col.cells[k].is_null()) out.push_back(col.cells[k]);
    }
    return out;
}

ConfusionNetwork build_network(const Utterance& utterance) {
    if (utterance.hypotheses.empty()) throw Error("utterance has no hypotheses");

    ConfusionNetwork net;
    net.n_best = utterance.n_best();
    for (const Token& t : utterance.hypotheses[0]) {
        net.columns.push_back(AlignmentColumn{{t}});
    }

    for (int k = 1; k < net.n_best; ++k) {
        const TokenSeq& hyp = utterance.hypotheses[k];

        // The anchor is row 0 with NULL padding skipped, i.e. the original
        // 1-best; anchor_cols maps anchor positions back to column indices.
        TokenSeq anchor;
        std::vector<int> anchor_cols;
        for (int c = 0; c < static_cast<int>(net.columns.size()); ++c) {
            if (!net.columns[c].cells[0].is_null()) {
                anchor.push_back(net.columns[c].cells[0]);
                anchor_cols.push_back(c);
            }
        }

        const auto script = align_pair(anchor, hyp);

        std::vector<AlignmentColumn> merged;
        merged.reserve(net.columns.size() + hyp.size());
        std::size_t old_idx = 0;
        auto flush_old = [&](std::size_t upto, const Token& cell_at_upto) {
            while (old_idx < upto) {
                AlignmentColumn col = net.columns[old_idx++];
                col.cells.push_back(Token::null());
                merged.push_back(std::move(col));
            }
            AlignmentColumn col = net.columns[old_idx++];
            col.cells.push_back(cell_at_upto);
            merged.push_back(std::move(col));
        };

        for (const EditStep& step : script) {
            switch (step.op) {
            case EditOp::Match:
            case EditOp::Substitute:
                flush_old(anchor_cols[step.anchor_pos], hyp[step.other_pos]);
                break;
            case EditOp::Delete:
                flush_old(anchor_cols[step.anchor_pos], Token::null());
                break;
            case EditOp::Insert: {
                AlignmentColumn col;
                col.cells.assign(static_cast<std::size_t>(k), Token::null());
                col.cells.push_back(hyp[step.other_pos]);
                merged.push_back(std::move(col));
                break;
            }
            }
        }
        while (old_idx < net.columns.size()) {
            AlignmentColumn col = net.columns[old_idx++];
            col.cells.push_back(Token::null());
            merged.push_back(std::move(col));
        }
        net.columns = std::move(merged);
    }
    return net;
}

std::string format_grid(const ConfusionNetwork& network) {
    std::vector<std::size_t> widths(network.columns.size(), 0);
    for (std::size_t c = 0; c < network.columns.size(); ++c) {
        for (const Token& t : network.columns[c].cells) {
            widths[c] = std::max(widths[c], t.text.size());
        }
    }
    std::ostringstream out;
    for (int k = 0; k < network.n_best; ++k) {
        out << "rank" << (k + 1) << ":";
        for (std::size_t c = 0; c < network.columns.size(); ++c) {
            const std::string& text = network.columns[c].cells[k].text;
            out << ' ' << text << std::string(widths[c] - text.size(), ' ');
        }
        out << '\n';
    }
    return out.str();
}

} // namespace nbcloze
