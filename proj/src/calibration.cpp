#include "nbcloze/calibration.hpp"

#include "nbcloze/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace nbcloze {

using ordered_json = nlohmann::ordered_json;

std::vector<double> log_softmax(const std::vector<double>& logits) {
    if (logits.empty()) throw Error("log_softmax of empty vector");
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double x : logits) sum += std::exp(x - mx);
    double lse = mx + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
    return out;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    auto out = log_softmax(logits);
    for (double& x : out) x = std::exp(x);
    return out;
}

Permutation::Permutation(std::vector<int> content_at)
    : content_at_(std::move(content_at)), position_of_(content_at_.size(), -1) {
    const int size = n();
    for (int pos = 0; pos < size; ++pos) {
        int c = content_at_[pos];
        if (c < 0 || c >= size || position_of_[c] != -1)
            throw Error("permutation mapping is not a bijection");
        position_of_[c] = pos;
    }
}

Permutation Permutation::identity(int n) {
    std::vector<int> m(n);
    std::iota(m.begin(), m.end(), 0);
    return Permutation(std::move(m));
}

std::string to_string(PermutationSet set) {
    return set == PermutationSet::Cyclic ? "cyclic" : "full";
}

PermutationSet permutation_set_from_string(const std::string& name) {
    if (name == "cyclic") return PermutationSet::Cyclic;
    if (name == "full") return PermutationSet::Full;
    throw Error("unknown permutation set: " + name);
}

std::vector<Permutation> full_permutations(int n) {
    if (n < 1) throw Error("permutation size must be >= 1");
    if (n > 6)
        throw ComplexityGuardError("full permutation set requested for n=" + std::to_string(n) +
                                   "; the guard allows n <= 6");
    std::vector<int> m(n);
    std::iota(m.begin(), m.end(), 0);
    std::vector<Permutation> out;
    do {
        out.emplace_back(m);
    } while (std::next_permutation(m.begin(), m.end()));
    return out;
}

std::vector<Permutation> cyclic_permutations(int n) {
    if (n < 1) throw Error("permutation size must be >= 1");
    std::vector<Permutation> out;
    out.reserve(n);
    for (int r = 0; r < n; ++r) {
        std::vector<int> m(n);
        for (int pos = 0; pos < n; ++pos) m[pos] = (pos + r) % n;
        out.emplace_back(std::move(m));
    }
    return out;
}

std::vector<Permutation> make_permutations(PermutationSet set, int n) {
    return set == PermutationSet::Cyclic ? cyclic_permutations(n) : full_permutations(n);
}

std::vector<double> debias_full(const std::vector<Permutation>& set,
                                const std::vector<ScoredPermutation>& scored) {
    if (set.empty()) throw Error("empty permutation set");
    const int n = set.front().n();
    std::vector<double> acc(n, 0.0);
    for (const auto& perm : set) {
        auto it = std::find_if(scored.begin(), scored.end(),
                               [&](const ScoredPermutation& s) { return s.perm == perm; });
        if (it == scored.end())
            throw Error("missing scores for a permutation in the set");
        if (it->logits.n() != n)
            throw Error("option logits dimension does not match permutation size");
        auto probs = softmax(it->logits.logp);
        for (int content = 0; content < n; ++content)
            acc[content] += probs[perm.position_of(content)];
    }
    for (double& x : acc) x /= static_cast<double>(set.size());
    return acc;
}

Prior Prior::uniform(int n, std::string dataset) {
    Prior prior;
    prior.p.assign(n, 1.0 / static_cast<double>(n));
    prior.dataset = std::move(dataset);
    return prior;
}

std::string to_json(const Prior& prior) {
    ordered_json j;
    j["dataset"] = prior.dataset;
    j["n"] = prior.n();
    j["prior"] = prior.p;
    j["sample_count"] = prior.sample_count;
    j["permutation_set"] = to_string(prior.permutation_set);
    return j.dump(2);
}

Prior prior_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const ordered_json::parse_error& e) {
        throw Error(std::string("bad prior file: ") + e.what());
    }
    Prior prior;
    try {
        prior.dataset = j.at("dataset").get<std::string>();
        int n = j.at("n").get<int>();
        prior.p = j.at("prior").get<std::vector<double>>();
        prior.sample_count = j.at("sample_count").get<int>();
        prior.permutation_set = permutation_set_from_string(j.at("permutation_set").get<std::string>());
        if (n != prior.n())
            throw Error("prior length does not match declared n");
    } catch (const ordered_json::exception& e) {
        throw Error(std::string("bad prior file: ") + e.what());
    }
    for (double x : prior.p)
        if (!std::isfinite(x) || x <= 0.0)
            throw Error("prior entries must be positive and finite");
    return prior;
}

void save_prior(const Prior& prior, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write prior file: " + path);
    out << to_json(prior) << '\n';
}

Prior load_prior(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read prior file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return prior_from_json(text);
}

Prior estimate_prior(std::vector<ScoredBlank> validation,
                     PermutationSet set,
                     const std::string& dataset) {
    if (validation.empty()) throw Error("empty validation set");
    std::stable_sort(validation.begin(), validation.end(),
                     [](const ScoredBlank& a, const ScoredBlank& b) {
                         return a.utterance_id < b.utterance_id;
                     });

    const int n = validation.front().per_permutation.empty()
                      ? 0
                      : validation.front().per_permutation.front().n();
    if (n < 1) throw Error("validation blank carries no scores");
    const std::size_t set_size = make_permutations(set, n).size();

    std::vector<double> acc(n, 0.0);
    for (const auto& blank : validation) {
        if (blank.per_permutation.size() != set_size)
            throw Error("validation blank scored for " + std::to_string(blank.per_permutation.size()) +
                        " permutations, expected " + std::to_string(set_size));
        std::vector<double> mean_logp(n, 0.0);
        for (const auto& logits : blank.per_permutation) {
            if (logits.n() != n) throw Error("inconsistent option count across validation blanks");
            auto logp = log_softmax(logits.logp);
            for (int i = 0; i < n; ++i) mean_logp[i] += logp[i];
        }
        for (double& x : mean_logp) x /= static_cast<double>(set_size);
        auto sample = softmax(mean_logp);
        for (int i = 0; i < n; ++i) acc[i] += sample[i];
    }
    Prior prior;
    prior.p.resize(n);
    for (int i = 0; i < n; ++i) acc[i] /= static_cast<double>(validation.size());
    prior.p = std::move(acc);
    prior.dataset = dataset;
    prior.sample_count = static_cast<int>(validation.size());
    prior.permutation_set = set;
    return prior;
}

std::vector<double> calibrate(const OptionLogits& logits, const Prior& prior) {
    if (logits.n() != prior.n())
        throw Error("logits dimension " + std::to_string(logits.n()) +
                    " does not match prior dimension " + std::to_string(prior.n()));
    auto q = softmax(logits.logp);
    double total = 0.0;
    for (int i = 0; i < prior.n(); ++i) {
        if (!(prior.p[i] > 0.0))
            throw Error("non-positive prior entry at index " + std::to_string(i));
        q[i] /= std::max(prior.p[i], 1e-6);
        total += q[i];
    }
    for (double& x : q) x /= total;
    return q;
}

int answer_blank(const std::vector<double>& distribution) {
    if (distribution.empty()) throw Error("empty distribution");
    int best = 0;
    for (int i = 1; i < static_cast<int>(distribution.size()); ++i)
        if (distribution[i] > distribution[best]) best = i;
    return best;
}

} // namespace nbcloze
