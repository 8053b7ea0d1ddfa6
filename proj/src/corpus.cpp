#include "nbcloze/corpus.hpp"

#include "nbcloze/errors.hpp"

#include <json.hpp>

#include <cctype>
#include <fstream>
#include <sstream>

namespace nbcloze {

using ordered_json = nlohmann::ordered_json;

std::string join_tokens(const TokenSeq& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) out += ' ';
        out += tokens[i].text;
    }
    return out;
}

TokenSeq tokenize(std::string_view raw, const TokenizeConfig& config) {
    TokenSeq tokens;
    std::size_t i = 0;
    while (i < raw.size()) {
        while (i < raw.size() && std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
        std::size_t start = i;
        while (i < raw.size() && !std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
        if (i > start) {
            std::string text(raw.substr(start, i - start));
            if (config.lowercase) {
                for (char& c : text) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            }
            if (text == kNullToken) {
                throw ReservedTokenError("reserved token \"" + std::string(kNullToken) + "\" in input text");
            }
            tokens.push_back(Token{std::move(text)});
        }
    }
    if (tokens.empty()) {
        throw EmptyUtteranceError("text is empty after tokenization");
    }
    return tokens;
}

namespace {

Utterance parse_record(const ordered_json& rec, const TokenizeConfig& config) {
    Utterance utt;
    if (!rec.is_object()) throw JsonlError("record is not a JSON object");
    if (!rec.contains("id") || !rec["id"].is_string()) throw JsonlError("missing string field \"id\"");
    utt.id = rec["id"].get<std::string>();
    if (!rec.contains("hypotheses") || !rec["hypotheses"].is_array() || rec["hypotheses"].empty()) {
        throw JsonlError("missing non-empty array field \"hypotheses\"");
    }
    for (const auto& hyp : rec["hypotheses"]) {
        if (!hyp.is_string()) throw JsonlError("hypothesis is not a string");
        utt.hypotheses.push_back(tokenize(hyp.get<std::string>(), config));
    }
    if (rec.contains("reference") && !rec["reference"].is_null()) {
        if (!rec["reference"].is_string()) throw JsonlError("\"reference\" is not a string");
        utt.reference = tokenize(rec["reference"].get<std::string>(), config);
    }
    if (rec.contains("speech_units") && !rec["speech_units"].is_null()) {
        if (!rec["speech_units"].is_array()) throw JsonlError("\"speech_units\" is not an array");
        std::vector<int> units;
        for (const auto& u : rec["speech_units"]) {
            if (!u.is_number_integer() || u.get<long long>() < 0) {
                throw JsonlError("speech unit is not a non-negative integer");
            }
            units.push_back(u.get<int>());
        }
        utt.speech_units = std::move(units);
    }
    return utt;
}

} // namespace

Dataset load_jsonl(const std::string& path, const TokenizeConfig& config) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);

    Dataset ds;
    ds.name = path;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json rec;
        try {
            rec = ordered_json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw JsonlError(path + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        Utterance utt;
        try {
            utt = parse_record(rec, config);
        } catch (const Error& e) {
            throw JsonlError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (ds.utterances.empty()) {
            ds.n_best = utt.n_best();
        } else if (utt.n_best() != ds.n_best) {
            throw InconsistentNError(path + ":" + std::to_string(line_no) + ": record has " +
                                     std::to_string(utt.n_best()) + " hypotheses, dataset has " +
                                     std::to_string(ds.n_best));
        }
        ds.utterances.push_back(std::move(utt));
    }
    if (ds.utterances.empty()) throw JsonlError(path + ": no records");
    return ds;
}

std::string to_jsonl_line(const Utterance& utt) {
    ordered_json rec;
    rec["id"] = utt.id;
    ordered_json hyps = ordered_json::array();
    for (const auto& h : utt.hypotheses) hyps.push_back(join_tokens(h));
    rec["hypotheses"] = std::move(hyps);
    if (utt.reference) rec["reference"] = join_tokens(*utt.reference);
    if (utt.speech_units) rec["speech_units"] = *utt.speech_units;
    return rec.dump();
}

void save_jsonl(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    for (const auto& utt : dataset.utterances) {
        out << to_jsonl_line(utt) << '\n';
    }
    if (!out) throw Error("write failed: " + path);
}

} // namespace nbcloze
