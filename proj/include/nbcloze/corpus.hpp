#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nbcloze {

// Sentinel used to pad alignment columns. Never appears in ingested text.
inline constexpr std::string_view kNullToken = "<NULL>";

struct Token {
    std::string text;

    bool is_null() const { return text == kNullToken; }
    static Token null() { return Token{std::string(kNullToken)}; }

    friend bool operator==(const Token&, const Token&) = default;
};

using TokenSeq = std::vector<Token>;

std::string join_tokens(const TokenSeq& tokens);

struct TokenizeConfig {
    bool lowercase = false;
};

// Splits on runs of whitespace. Throws EmptyUtteranceError if nothing is
// left, ReservedTokenError if "<NULL>" appears in the input.
TokenSeq tokenize(std::string_view raw, const TokenizeConfig& config = {});

// One sample: ranked hypotheses (index 0 = 1-best), optional reference,
// optional discrete speech unit ids. Hypothesis order is the ASR rank order
// and is never re-sorted.
struct Utterance {
    std::string id;
    std::vector<TokenSeq> hypotheses;
    std::optional<TokenSeq> reference;
    std::optional<std::vector<int>> speech_units;

    int n_best() const { return static_cast<int>(hypotheses.size()); }
};

struct Dataset {
    std::string name;
    std::vector<Utterance> utterances;
    int n_best = 0;
};

// Line-delimited JSON, one record per line:
//   {"id": str, "hypotheses": [str; N], "reference": str?, "speech_units": [int]?}
// All records must share the same N. Errors carry the offending line number.
Dataset load_jsonl(const std::string& path, const TokenizeConfig& config = {});

// Canonical serialization: fixed key order, compact JSON, tokens joined with
// single spaces. load(save(load(x))) round-trips byte-identically.
std::string to_jsonl_line(const Utterance& utt);
void save_jsonl(const Dataset& dataset, const std::string& path);

} // namespace nbcloze
