#include "nbcloze/scorer.hpp"

#include "nbcloze/errors.hpp"
#include "nbcloze/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

namespace nbcloze {

void validate_request(const ScoreRequest& request) {
    if (request.candidates.empty())
        throw ScorerError("score request carries no candidates");
    std::set<std::string> seen(request.candidates.begin(), request.candidates.end());
    if (seen.size() != request.candidates.size())
        throw ScorerError("score request candidates are not distinct");
}

int count_answer_letters(const std::string& prefix) {
    int count = 0;
    std::size_t i = 0;
    while (i < prefix.size()) {
        if (!std::isalnum(static_cast<unsigned char>(prefix[i]))) { ++i; continue; }
        std::size_t j = i;
        while (j < prefix.size() && std::isalnum(static_cast<unsigned char>(prefix[j]))) ++j;
        if (j - i == 1 && prefix[i] >= 'A' && prefix[i] <= 'Z') ++count;
        i = j;
    }
    return count;
}

std::vector<std::vector<std::string>> parse_prompt_options(const std::string& prompt) {
    const std::string marker = "### Options: ";
    std::size_t start = prompt.find(marker);
    if (start == std::string::npos)
        throw ScorerError("prompt carries no options section");
    start += marker.size();
    std::size_t end = prompt.find('\n', start);
    if (end == std::string::npos) end = prompt.size();
    // The rendered line ends with a closing period.
    std::string line = prompt.substr(start, end - start);
    if (!line.empty() && line.back() == '.') line.pop_back();

    std::vector<std::vector<std::string>> groups;
    std::size_t pos = 0;
    while (true) {
        std::size_t open = line.find("[Blank", pos);
        if (open == std::string::npos) break;
        std::size_t colon = line.find("]: ", open);
        if (colon == std::string::npos)
            throw ScorerError("malformed options section");
        std::size_t next = line.find("[Blank", colon);
        std::size_t group_end = next == std::string::npos ? line.size() : next;
        std::string body = line.substr(colon + 3, group_end - colon - 3);
        // Strip the ". " joining this group to the next one (exactly one of
        // each; a content's own trailing period must survive).
        if (next != std::string::npos) {
            if (!body.empty() && body.back() == ' ') body.pop_back();
            if (!body.empty() && body.back() == '.') body.pop_back();
        }

        std::vector<std::string> contents;
        std::size_t at = 0;
        char letter = 'A';
        while (at < body.size()) {
            std::string head{letter, '.', ' '};
            if (body.compare(at, head.size(), head) != 0)
                throw ScorerError("malformed option list in prompt");
            at += head.size();
            // The content runs until the next "; X. " separator.
            std::string sep = std::string("; ") + static_cast<char>(letter + 1) + ". ";
            std::size_t stop = body.find(sep, at);
            if (stop == std::string::npos) {
                contents.push_back(body.substr(at));
                at = body.size();
            } else {
                contents.push_back(body.substr(at, stop - at));
                at = stop + 2;
            }
            ++letter;
        }
        if (contents.empty())
            throw ScorerError("blank with no options in prompt");
        groups.push_back(std::move(contents));
        pos = group_end;
    }
    if (groups.empty())
        throw ScorerError("prompt options section is empty");
    return groups;
}

SyntheticScorer::SyntheticScorer(SyntheticScorerSpec spec) : spec_(std::move(spec)) {
    if (spec_.bias.empty())
        throw ScorerError("synthetic scorer needs at least one bias weight");
    for (double b : spec_.bias)
        if (!(b > 0.0) || !std::isfinite(b))
            throw ScorerError("synthetic scorer bias weights must be positive and finite");
    if (!spec_.quality) spec_.quality = [](const std::string&) { return 1.0; };
}

OptionLogits SyntheticScorer::score_options(const ScoreRequest& request) {
    validate_request(request);
    const int n = static_cast<int>(request.candidates.size());
    if (n > static_cast<int>(spec_.bias.size()))
        throw ScorerError("request has more candidates than configured bias weights");

    auto groups = parse_prompt_options(request.prompt);
    const int target = count_answer_letters(request.answer_prefix);
    if (target >= static_cast<int>(groups.size()))
        throw ScorerError("answer prefix points past the last blank");
    const auto& contents = groups[target];
    if (static_cast<int>(contents.size()) != n)
        throw ScorerError("candidate count does not match the prompt's option count");

    std::vector<double> logits(n);
    for (int i = 0; i < n; ++i) {
        double q = spec_.quality(contents[i]);
        if (!(q > 0.0) || !std::isfinite(q))
            throw ScorerError("synthetic quality weight must be positive and finite");
        logits[i] = std::log(spec_.bias[i]) + std::log(q);
    }

    if (spec_.noise_seed) {
        // Keyed on the request so identical calls perturb identically.
        std::uint64_t key = fnv1a64(request.prompt, fnv1a64(request.answer_prefix));
        Rng rng(splitmix64(*spec_.noise_seed ^ key));
        for (double& x : logits) {
            double u = uniform_unit(rng);
            if (u <= 0.0) u = 0x1.0p-53;
            x += spec_.noise_scale * -std::log(-std::log(u));
        }
    }

    return OptionLogits{log_softmax(logits)};
}

namespace {

std::string truncate_tokens(const std::string& text, int max_tokens) {
    std::istringstream in(text);
    std::string word, out;
    int kept = 0;
    while (kept < max_tokens && in >> word) {
        if (kept) out += ' ';
        out += word;
        ++kept;
    }
    return out;
}

// Body of "### <section>:" up to the closing ".\n".
std::string section_body(const std::string& prompt, const std::string& section) {
    const std::string marker = "### " + section + ":";
    std::size_t start = prompt.find(marker);
    if (start == std::string::npos) return {};
    start += marker.size();
    std::size_t end = prompt.find(".\n", start);
    if (end == std::string::npos) end = prompt.size();
    std::string body = prompt.substr(start, end - start);
    while (!body.empty() && body.front() == ' ') body.erase(body.begin());
    return body;
}

} // namespace

std::string SyntheticScorer::generate(const std::string& prompt, const GenerateParams& params) {
    if (params.max_tokens <= 0)
        throw EmptyGenerationError("max_tokens is zero");

    if (prompt.find("### Answer choices: ") != std::string::npos) {
        auto groups = parse_prompt_options(prompt);
        std::string prefix;
        for (const auto& group : groups) {
            ScoreRequest req;
            req.prompt = prompt;
            req.answer_prefix = prefix;
            for (std::size_t i = 0; i < group.size(); ++i)
                req.candidates.push_back(std::string(1, static_cast<char>('A' + i)));
            auto probs = softmax(score_options(req).logp);
            prefix += static_cast<char>('A' + answer_blank(probs));
            prefix += ' ';
        }
        if (!prefix.empty()) prefix.pop_back();
        return truncate_tokens(prefix, params.max_tokens);
    }

    if (std::string body = section_body(prompt, "Candidates"); !body.empty()) {
        std::size_t semi = body.find("; ");
        return truncate_tokens(semi == std::string::npos ? body : body.substr(0, semi),
                               params.max_tokens);
    }
    if (std::string body = section_body(prompt, "Candidate"); !body.empty())
        return truncate_tokens(body, params.max_tokens);

    throw ScorerError("synthetic scorer cannot interpret this prompt");
}

} // namespace nbcloze
