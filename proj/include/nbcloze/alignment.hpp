#pragma once

#include "nbcloze/corpus.hpp"

#include <string>
#include <vector>

namespace nbcloze {

enum class EditOp { Match, Substitute, Delete, Insert };

// One step of an edit script transforming `anchor` into `other`.
// Delete consumes an anchor token, Insert consumes an other token,
// Match/Substitute consume one of each.
struct EditStep {
    EditOp op;
    int anchor_pos = -1; // index into anchor, -1 for Insert
    int other_pos = -1;  // index into other, -1 for Delete
};

// Minimal-cost script with unit costs (match 0, sub/del/ins 1).
// Ties are resolved leftmost-first with preference match > sub > del > ins,
// so the output is deterministic.
std::vector<EditStep> align_pair(const TokenSeq& anchor, const TokenSeq& other);

int edit_cost(const std::vector<EditStep>& script);

// One alignment column: cell k is the token hypothesis rank k contributes,
// possibly the NULL sentinel. At least one cell is non-NULL.
struct AlignmentColumn {
    std::vector<Token> cells;

    bool unanimous() const;
};

struct ConfusionNetwork {
    std::vector<AlignmentColumn> columns;
    int n_best = 0;

    // Non-NULL cells of row k, left to right. Equals hypothesis k exactly.
    TokenSeq row(int k) const;
};

// Progressive alignment anchored on the 1-best hypothesis: each further
// hypothesis is aligned against the anchor row; insertions relative to the
// anchor open a fresh column (NULL in all previously placed rows) immediately
// after the last consumed anchor column.
ConfusionNetwork build_network(const Utterance& utterance);

// Plain-text grid, rows = ranks, columns = network columns, NULL rendered
// as "<NULL>", cells padded to column width.
std::string format_grid(const ConfusionNetwork& network);

} // namespace nbcloze
