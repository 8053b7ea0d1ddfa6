#pragma once

#include "nbcloze/alignment.hpp"
#include "nbcloze/corpus.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace nbcloze {

// Option contents for one blank, in hypothesis rank order (option A = rank 1).
// An empty token sequence is the NULL option. Duplicate contents are
// preserved unless the cloze was deduplicated for display.
struct Blank {
    std::vector<TokenSeq> options;

    int n_options() const { return static_cast<int>(options.size()); }
};

struct ContextSegment {
    TokenSeq tokens;
};

using Segment = std::variant<ContextSegment, Blank>;

// 0-based option index <-> ID letter.
char option_letter(int index);
int option_index(char letter);

struct AnswerSheet {
    std::vector<int> choices; // 0-based option indices, one per blank

    std::string letters() const; // "A B C" style
};

struct GoldAnswers {
    AnswerSheet sheet;
    std::vector<bool> answerable; // per blank: an option matched the reference span exactly
};

struct ClozeTest {
    std::vector<Segment> segments; // alternating context / blank
    int n_best = 0;
    std::optional<GoldAnswers> gold;

    int blank_count() const;
    const Blank& blank(int index) const;
    Blank& blank(int index);
    TokenSeq context_tokens() const; // all context segments concatenated
};

// Maximal runs of non-unanimous columns become blanks; unanimous columns
// become context. dedupe keeps only the first occurrence of each option
// content (display parity; breaks the one-option-per-rank mapping).
ClozeTest build_cloze(const ConfusionNetwork& network, bool dedupe = false);

ClozeTest dedupe_options(const ClozeTest& cloze);

// Reorders one blank's contents: new option at position p is the old option
// content_at[p]. Gold answers, if attached, are remapped.
ClozeTest permute_blank(const ClozeTest& cloze, int blank_index, const std::vector<int>& content_at);

// Uniformly permutes every blank's option contents (IDs keep their order);
// deterministic given the seed. Attached gold answers are remapped.
ClozeTest shuffle_options(const ClozeTest& cloze, std::uint64_t seed);

enum class PromptTemplate { Cloze, Ger, GerSpeech, Post };

// "<sosp> <u3> <u17> <eosp>"
std::string render_units(const std::vector<int>& units);

// Byte-exact template instantiation. Cloze and Post use their speech variant
// iff units are supplied; GerSpeech requires units; Ger ignores them.
std::string render_prompt(const ClozeTest& cloze,
                          const std::optional<std::vector<int>>& speech_units,
                          PromptTemplate tmpl);

std::string render_cloze_prompt(const ClozeTest& cloze,
                                const std::optional<std::vector<int>>& units);
std::string render_ger_prompt(const std::vector<TokenSeq>& hypotheses,
                              const std::optional<std::vector<int>>& units,
                              bool with_speech);
std::string render_post_prompt(const std::string& candidate,
                               const std::optional<std::vector<int>>& units);

// Extracts the first n_blanks standalone uppercase ID letters from generated
// text. A standalone letter outside A..(A+n_options-1), or running out of
// text, throws MalformedAnswerError.
AnswerSheet parse_answers(const std::string& text, int n_blanks, int n_options);

// Context with each blank replaced by the chosen option; NULL options
// contribute nothing.
TokenSeq reconstruct(const ClozeTest& cloze, const AnswerSheet& answers);

// Aligns the reference against the cloze lattice; each blank's gold is the
// lowest-ID option equal to its assigned reference span, else (unanswerable)
// the option with minimal edit distance to the span, ties to the lowest ID.
GoldAnswers derive_gold_answers(const ClozeTest& cloze, const TokenSeq& reference);

} // namespace nbcloze
