#pragma once

#include <string>
#include <vector>

namespace nbcloze {

// Raw per-option scores from one scorer call, indexed by option position in
// the presented prompt. Softmax of logp is the scorer's distribution.
struct OptionLogits {
    std::vector<double> logp;

    int n() const { return static_cast<int>(logp.size()); }
};

std::vector<double> softmax(const std::vector<double>& logits);
std::vector<double> log_softmax(const std::vector<double>& logits);

// Bijection between option positions (ID letters) and option contents.
// content_at(j) is the content shown at position j; position_of(i) is where
// content i ended up.
class Permutation {
public:
    explicit Permutation(std::vector<int> content_at);
    static Permutation identity(int n);

    int n() const { return static_cast<int>(content_at_.size()); }
    int content_at(int position) const { return content_at_.at(position); }
    int position_of(int content) const { return position_of_.at(content); }
    const std::vector<int>& mapping() const { return content_at_; }

    friend bool operator==(const Permutation&, const Permutation&) = default;

private:
    std::vector<int> content_at_;
    std::vector<int> position_of_;
};

enum class PermutationSet { Cyclic, Full };

std::string to_string(PermutationSet set);
PermutationSet permutation_set_from_string(const std::string& name);

// All n! permutations in lexicographic order. Guarded: n > 6 throws
// ComplexityGuardError.
std::vector<Permutation> full_permutations(int n);

// The n rotations, identity first; across the set every content visits every
// position exactly once.
std::vector<Permutation> cyclic_permutations(int n);

std::vector<Permutation> make_permutations(PermutationSet set, int n);

struct ScoredPermutation {
    Permutation perm;
    OptionLogits logits;
};

// Averages the scorer's probabilities over a permutation set, reading
// content i's probability at position_of(i) in each presentation. Every
// permutation in `set` must appear in `scored` exactly once.
std::vector<double> debias_full(const std::vector<Permutation>& set,
                                const std::vector<ScoredPermutation>& scored);

// Estimated option-ID bias of a scorer on a dataset.
struct Prior {
    std::vector<double> p;
    std::string dataset;
    int sample_count = 0;
    PermutationSet permutation_set = PermutationSet::Cyclic;

    int n() const { return static_cast<int>(p.size()); }

    static Prior uniform(int n, std::string dataset = "uniform");
};

std::string to_json(const Prior& prior);
Prior prior_from_json(const std::string& text);
void save_prior(const Prior& prior, const std::string& path);
Prior load_prior(const std::string& path);

// One validation blank: log-scores for each permutation of the set, in set
// order, each vector indexed by option position.
struct ScoredBlank {
    std::string utterance_id;
    std::vector<OptionLogits> per_permutation;
};

// Per blank: softmax of the per-position mean of log-probabilities across the
// set; the prior is the arithmetic mean of those samples, accumulated in
// ascending utterance-id order so the result never depends on scoring order.
Prior estimate_prior(std::vector<ScoredBlank> validation,
                     PermutationSet set,
                     const std::string& dataset);

// softmax(logits) divided elementwise by the prior, renormalized. Prior
// entries must be positive; values below 1e-6 are floored there.
std::vector<double> calibrate(const OptionLogits& logits, const Prior& prior);

// Argmax; ties go to the lowest option ID (toward the 1-best).
int answer_blank(const std::vector<double>& distribution);

} // namespace nbcloze
