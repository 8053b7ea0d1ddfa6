#include "nbcloze/cloze.hpp"

#include "nbcloze/errors.hpp"
#include "nbcloze/rng.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <utility>

namespace nbcloze {

char option_letter(int index) {
    if (index < 0 || index >= 26)
        throw Error("option index out of range: " + std::to_string(index));
    return static_cast<char>('A' + index);
}

int option_index(char letter) {
    if (letter < 'A' || letter > 'Z')
        throw Error(std::string("not an option letter: ") + letter);
    return letter - 'A';
}

std::string AnswerSheet::letters() const {
    std::string out;
    for (std::size_t i = 0; i < choices.size(); ++i) {
        if (i) out += ' ';
        out += option_letter(choices[i]);
    }
    return out;
}

int ClozeTest::blank_count() const {
    int n = 0;
    for (const auto& seg : segments)
        if (std::holds_alternative<Blank>(seg)) ++n;
    return n;
}

const Blank& ClozeTest::blank(int index) const {
    int seen = 0;
    for (const auto& seg : segments) {
        if (const auto* b = std::get_if<Blank>(&seg)) {
            if (seen == index) return *b;
            ++seen;
        }
    }
    throw Error("blank index out of range: " + std::to_string(index));
}

Blank& ClozeTest::blank(int index) {
    return const_cast<Blank&>(std::as_const(*this).blank(index));
}

TokenSeq ClozeTest::context_tokens() const {
    TokenSeq out;
    for (const auto& seg : segments)
        if (const auto* c = std::get_if<ContextSegment>(&seg))
            out.insert(out.end(), c->tokens.begin(), c->tokens.end());
    return out;
}

ClozeTest build_cloze(const ConfusionNetwork& network, bool dedupe) {
    ClozeTest cloze;
    cloze.n_best = network.n_best;

    ContextSegment ctx;
    // Option contents for the blank under construction, one per rank.
    std::vector<TokenSeq> pending;

    auto flush_blank = [&] {
        if (pending.empty()) return;
        cloze.segments.emplace_back(Blank{std::move(pending)});
        pending.clear();
    };
    auto flush_context = [&] {
        if (ctx.tokens.empty()) return;
        cloze.segments.emplace_back(std::move(ctx));
        ctx = ContextSegment{};
    };

    for (const auto& col : network.columns) {
        if (col.unanimous()) {
            flush_blank();
            if (!col.cells[0].is_null()) ctx.tokens.push_back(col.cells[0]);
        } else {
            flush_context();
            if (pending.empty()) pending.resize(network.n_best);
            for (int k = 0; k < network.n_best; ++k)
                if (!col.cells[k].is_null()) pending[k].push_back(col.cells[k]);
        }
    }
    flush_blank();
    flush_context();

    return dedupe ? dedupe_options(cloze) : cloze;
}

ClozeTest dedupe_options(const ClozeTest& cloze) {
    ClozeTest out = cloze;
    int blank_idx = 0;
    for (auto& seg : out.segments) {
        auto* b = std::get_if<Blank>(&seg);
        if (!b) continue;
        std::vector<TokenSeq> kept;
        std::vector<int> first_of(b->options.size()); // old index -> new index
        for (std::size_t i = 0; i < b->options.size(); ++i) {
            auto it = std::find(kept.begin(), kept.end(), b->options[i]);
            if (it == kept.end()) {
                first_of[i] = static_cast<int>(kept.size());
                kept.push_back(b->options[i]);
            } else {
                first_of[i] = static_cast<int>(it - kept.begin());
            }
        }
        b->options = std::move(kept);
        if (out.gold)
            out.gold->sheet.choices[blank_idx] = first_of[out.gold->sheet.choices[blank_idx]];
        ++blank_idx;
    }
    return out;
}

ClozeTest permute_blank(const ClozeTest& cloze, int blank_index, const std::vector<int>& content_at) {
    ClozeTest out = cloze;
    Blank& b = out.blank(blank_index);
    const int n = b.n_options();
    if (static_cast<int>(content_at.size()) != n)
        throw Error("permutation size does not match option count");

    std::vector<TokenSeq> reordered(n);
    std::vector<int> seen(n, 0);
    for (int pos = 0; pos < n; ++pos) {
        int src = content_at[pos];
        if (src < 0 || src >= n || seen[src]++)
            throw Error("invalid permutation");
        reordered[pos] = b.options[src];
    }
    b.options = std::move(reordered);

    if (out.gold) {
        int& g = out.gold->sheet.choices[blank_index];
        for (int pos = 0; pos < n; ++pos)
            if (content_at[pos] == g) { g = pos; break; }
    }
    return out;
}

ClozeTest shuffle_options(const ClozeTest& cloze, std::uint64_t seed) {
    Rng rng(seed);
    ClozeTest out = cloze;
    for (int i = 0; i < out.blank_count(); ++i) {
        std::vector<int> perm(out.blank(i).n_options());
        for (std::size_t p = 0; p < perm.size(); ++p) perm[p] = static_cast<int>(p);
        shuffle_in_place(perm, rng);
        out = permute_blank(out, i, perm);
    }
    return out;
}

namespace {

constexpr const char* kClozeSpeechTemplate =
    "Below is a speech and its candidate transcriptions from a speech recognition system. "
    "The candidates are formatted as a cloze test, where the blanks to fill are indicated by "
    "`[Blank1]', `[Blank2]', etc.\n"
    "Each blank is provided with several options indicated by ID letters `A', `B', `C', etc., "
    "where `<NULL>' denotes the null token.\n"
    "To generate a better final recognition result, please listen to the speech and write an "
    "answer choice for each blank.\n"
    "### Speech:{speech units}.\n"
    "### Cloze test: {cloze test}.\n"
    "### Options: {options}.\n"
    "### Answer choices: ";

constexpr const char* kClozeTextTemplate =
    "Below are candidate transcriptions from a speech recognition system. "
    "The candidates are formatted as a cloze test, where the blanks to fill are indicated by "
    "`[Blank1]', `[Blank2]', etc.\n"
    "Each blank is provided with several options indicated by ID letters `A', `B', `C', etc., "
    "where `<NULL>' denotes the null token.\n"
    "To generate a better final recognition result, please write an answer choice for each blank.\n"
    "### Cloze test: {cloze test}.\n"
    "### Options: {options}.\n"
    "### Answer choices: ";

constexpr const char* kGerSpeechTemplate =
    "Below is a speech and its candidate transcriptions from a speech recognition system.\n"
    "Please listen to the speech and revise the candidate transcriptions to generate better "
    "final recognition results.\n"
    "### Speech:{speech units}.\n"
    "### Candidates:{N-best hypotheses}.\n"
    "### Response: ";

constexpr const char* kGerTextTemplate =
    "Below are candidate transcriptions from a speech recognition system.\n"
    "Please revise the candidate transcriptions to generate better final recognition results.\n"
    "### Candidates:{N-best hypotheses}.\n"
    "### Response: ";

constexpr const char* kPostSpeechTemplate =
    "Below is a speech and its candidate transcription from a speech recognition system.\n"
    "Please listen to the speech and correct the candidate transcription.\n"
    "### Speech:{speech units}.\n"
    "### Candidate:{cloze result}.\n"
    "### Response: ";

constexpr const char* kPostTextTemplate =
    "Below is a candidate transcription from a speech recognition system.\n"
    "Please correct the candidate transcription.\n"
    "### Candidate:{cloze result}.\n"
    "### Response: ";

std::string expand(std::string tmpl, std::string_view key, std::string_view value) {
    const std::string needle = "{" + std::string(key) + "}";
    for (std::size_t pos = tmpl.find(needle); pos != std::string::npos;
         pos = tmpl.find(needle, pos + value.size()))
        tmpl.replace(pos, needle.size(), value);
    return tmpl;
}

std::string option_content(const TokenSeq& option) {
    return option.empty() ? std::string(kNullToken) : join_tokens(option);
}

std::string cloze_body(const ClozeTest& cloze) {
    std::string out;
    int blank_no = 0;
    for (const auto& seg : cloze.segments) {
        std::string piece;
        if (const auto* c = std::get_if<ContextSegment>(&seg)) {
            piece = join_tokens(c->tokens);
        } else {
            piece = "[Blank" + std::to_string(++blank_no) + "]";
        }
        if (!out.empty()) out += ' ';
        out += piece;
    }
    return out;
}

std::string options_body(const ClozeTest& cloze) {
    std::string out;
    int blank_no = 0;
    for (const auto& seg : cloze.segments) {
        const auto* b = std::get_if<Blank>(&seg);
        if (!b) continue;
        if (!out.empty()) out += ". ";
        out += "[Blank" + std::to_string(++blank_no) + "]: ";
        for (int i = 0; i < b->n_options(); ++i) {
            if (i) out += "; ";
            out += option_letter(i);
            out += ". ";
            out += option_content(b->options[i]);
        }
    }
    return out;
}

std::string hypotheses_body(const std::vector<TokenSeq>& hypotheses) {
    std::string out;
    for (std::size_t k = 0; k < hypotheses.size(); ++k) {
        if (k) out += "; ";
        out += join_tokens(hypotheses[k]);
    }
    return out;
}

std::vector<TokenSeq> rebuild_hypotheses(const ClozeTest& cloze) {
    std::vector<TokenSeq> hyps;
    for (int k = 0; k < cloze.n_best; ++k) {
        AnswerSheet rank_k;
        for (const auto& seg : cloze.segments) {
            const auto* b = std::get_if<Blank>(&seg);
            if (!b) continue;
            if (k >= b->n_options())
                throw Error("cannot rebuild hypotheses: blank has fewer options than ranks");
            rank_k.choices.push_back(k);
        }
        hyps.push_back(reconstruct(cloze, rank_k));
    }
    return hyps;
}

} // namespace

std::string render_units(const std::vector<int>& units) {
    std::string out = "<sosp>";
    for (int u : units) {
        out += " <u";
        out += std::to_string(u);
        out += '>';
    }
    out += " <eosp>";
    return out;
}

std::string render_cloze_prompt(const ClozeTest& cloze,
                                const std::optional<std::vector<int>>& units) {
    std::string tmpl = units ? kClozeSpeechTemplate : kClozeTextTemplate;
    if (units) tmpl = expand(std::move(tmpl), "speech units", render_units(*units));
    tmpl = expand(std::move(tmpl), "cloze test", cloze_body(cloze));
    return expand(std::move(tmpl), "options", options_body(cloze));
}

std::string render_ger_prompt(const std::vector<TokenSeq>& hypotheses,
                              const std::optional<std::vector<int>>& units,
                              bool with_speech) {
    if (with_speech && !units)
        throw Error("speech template requires speech units");
    std::string tmpl = with_speech ? kGerSpeechTemplate : kGerTextTemplate;
    if (with_speech) tmpl = expand(std::move(tmpl), "speech units", render_units(*units));
    return expand(std::move(tmpl), "N-best hypotheses", hypotheses_body(hypotheses));
}

std::string render_post_prompt(const std::string& candidate,
                               const std::optional<std::vector<int>>& units) {
    std::string tmpl = units ? kPostSpeechTemplate : kPostTextTemplate;
    if (units) tmpl = expand(std::move(tmpl), "speech units", render_units(*units));
    return expand(std::move(tmpl), "cloze result", candidate);
}

std::string render_prompt(const ClozeTest& cloze,
                          const std::optional<std::vector<int>>& speech_units,
                          PromptTemplate tmpl) {
    switch (tmpl) {
    case PromptTemplate::Cloze:
        return render_cloze_prompt(cloze, speech_units);
    case PromptTemplate::Ger:
        return render_ger_prompt(rebuild_hypotheses(cloze), std::nullopt, false);
    case PromptTemplate::GerSpeech:
        return render_ger_prompt(rebuild_hypotheses(cloze), speech_units, true);
    case PromptTemplate::Post:
        return render_post_prompt(join_tokens(cloze.context_tokens()), speech_units);
    }
    throw Error("unknown prompt template");
}

AnswerSheet parse_answers(const std::string& text, int n_blanks, int n_options) {
    AnswerSheet sheet;
    std::size_t i = 0;
    while (i < text.size() && static_cast<int>(sheet.choices.size()) < n_blanks) {
        if (!std::isalnum(static_cast<unsigned char>(text[i]))) { ++i; continue; }
        std::size_t j = i;
        while (j < text.size() && std::isalnum(static_cast<unsigned char>(text[j]))) ++j;
        if (j - i == 1 && text[i] >= 'A' && text[i] <= 'Z') {
            int idx = option_index(text[i]);
            if (idx >= n_options)
                throw MalformedAnswerError("answer letter out of range: " + std::string(1, text[i]));
            sheet.choices.push_back(idx);
        }
        i = j;
    }
    if (static_cast<int>(sheet.choices.size()) < n_blanks)
        throw MalformedAnswerError("expected " + std::to_string(n_blanks) + " answers, found " +
                                   std::to_string(sheet.choices.size()));
    return sheet;
}

TokenSeq reconstruct(const ClozeTest& cloze, const AnswerSheet& answers) {
    if (static_cast<int>(answers.choices.size()) != cloze.blank_count())
        throw Error("answer count does not match blank count");
    TokenSeq out;
    int blank_idx = 0;
    for (const auto& seg : cloze.segments) {
        if (const auto* c = std::get_if<ContextSegment>(&seg)) {
            out.insert(out.end(), c->tokens.begin(), c->tokens.end());
        } else {
            const auto& b = std::get<Blank>(seg);
            int choice = answers.choices[blank_idx++];
            if (choice < 0 || choice >= b.n_options())
                throw Error("answer choice out of range for blank " + std::to_string(blank_idx));
            const auto& opt = b.options[choice];
            out.insert(out.end(), opt.begin(), opt.end());
        }
    }
    return out;
}

namespace {

// Edit distance between an option and every reference span starting at a
// fixed position: row[e] = lev(option, ref[start .. start+e)).
std::vector<int> option_span_costs(const TokenSeq& option, const TokenSeq& ref, int start) {
    const int maxlen = static_cast<int>(ref.size()) - start;
    std::vector<int> prev(maxlen + 1), cur(maxlen + 1);
    for (int e = 0; e <= maxlen; ++e) prev[e] = e;
    for (int o = 1; o <= static_cast<int>(option.size()); ++o) {
        cur[0] = o;
        for (int e = 1; e <= maxlen; ++e) {
            int sub = prev[e - 1] + (option[o - 1] == ref[start + e - 1] ? 0 : 1);
            cur[e] = std::min({sub, prev[e] + 1, cur[e - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev;
}

struct BlankUnit {
    int blank_index;
};
struct TokenUnit {
    Token token;
};
using LatticeUnit = std::variant<TokenUnit, BlankUnit>;

} // namespace

GoldAnswers derive_gold_answers(const ClozeTest& cloze, const TokenSeq& reference) {
    std::vector<LatticeUnit> units;
    std::vector<const Blank*> blanks;
    for (const auto& seg : cloze.segments) {
        if (const auto* c = std::get_if<ContextSegment>(&seg)) {
            for (const auto& t : c->tokens) units.push_back(TokenUnit{t});
        } else {
            units.push_back(BlankUnit{static_cast<int>(blanks.size())});
            blanks.push_back(&std::get<Blank>(seg));
        }
    }

    const int U = static_cast<int>(units.size());
    const int R = static_cast<int>(reference.size());
    const int INF = std::numeric_limits<int>::max() / 2;

    // Per blank, per reference start: cost of each span end, minimized over
    // options (and the full per-option rows, for picking the gold option).
    std::vector<std::vector<std::vector<std::vector<int>>>> opt_costs(blanks.size());
    for (std::size_t b = 0; b < blanks.size(); ++b) {
        opt_costs[b].resize(R + 1);
        for (int s = 0; s <= R; ++s)
            for (const auto& opt : blanks[b]->options)
                opt_costs[b][s].push_back(option_span_costs(opt, reference, s));
    }
    auto blank_cost = [&](int b, int s, int e) {
        int best = INF;
        for (const auto& row : opt_costs[b][s]) best = std::min(best, row[e - s]);
        return best;
    };

    std::vector<std::vector<int>> dp(U + 1, std::vector<int>(R + 1, INF));
    for (int j = 0; j <= R; ++j) dp[0][j] = j;
    for (int u = 1; u <= U; ++u) {
        if (const auto* tok = std::get_if<TokenUnit>(&units[u - 1])) {
            dp[u][0] = dp[u - 1][0] + 1;
            for (int j = 1; j <= R; ++j) {
                int sub = dp[u - 1][j - 1] + (tok->token == reference[j - 1] ? 0 : 1);
                dp[u][j] = std::min({sub, dp[u - 1][j] + 1, dp[u][j - 1] + 1});
            }
        } else {
            int b = std::get<BlankUnit>(units[u - 1]).blank_index;
            for (int j = 0; j <= R; ++j)
                for (int s = 0; s <= j; ++s)
                    dp[u][j] = std::min(dp[u][j], dp[u - 1][s] + blank_cost(b, s, j));
        }
    }

    // Backtrace; ties resolve toward match, then substitute, then delete,
    // then insert, and blanks take the shortest span that stays optimal.
    std::vector<std::pair<int, int>> spans(blanks.size(), {0, 0});
    int u = U, j = R;
    while (u > 0) {
        if (const auto* tok = std::get_if<TokenUnit>(&units[u - 1])) {
            bool eq = j > 0 && tok->token == reference[j - 1];
            if (j > 0 && eq && dp[u][j] == dp[u - 1][j - 1]) {
                --u; --j;
            } else if (j > 0 && !eq && dp[u][j] == dp[u - 1][j - 1] + 1) {
                --u; --j;
            } else if (dp[u][j] == dp[u - 1][j] + 1) {
                --u;
            } else {
                --j;
            }
        } else {
            int b = std::get<BlankUnit>(units[u - 1]).blank_index;
            for (int s = j; s >= 0; --s) {
                if (dp[u][j] == dp[u - 1][s] + blank_cost(b, s, j)) {
                    spans[b] = {s, j};
                    j = s;
                    break;
                }
            }
            --u;
        }
    }

    GoldAnswers gold;
    gold.sheet.choices.resize(blanks.size());
    gold.answerable.resize(blanks.size());
    for (std::size_t b = 0; b < blanks.size(); ++b) {
        auto [s, e] = spans[b];
        TokenSeq span(reference.begin() + s, reference.begin() + e);
        int exact = -1;
        for (int i = 0; i < blanks[b]->n_options() && exact < 0; ++i)
            if (blanks[b]->options[i] == span) exact = i;
        if (exact >= 0) {
            gold.sheet.choices[b] = exact;
            gold.answerable[b] = true;
        } else {
            int best = 0;
            for (int i = 1; i < blanks[b]->n_options(); ++i)
                if (opt_costs[b][s][i][e - s] < opt_costs[b][s][best][e - s]) best = i;
            gold.sheet.choices[b] = best;
            gold.answerable[b] = false;
        }
    }
    return gold;
}

} // namespace nbcloze
