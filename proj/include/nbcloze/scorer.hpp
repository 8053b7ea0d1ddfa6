#pragma once

#include "nbcloze/calibration.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace nbcloze {

// Decode parameters for text generation.
struct GenerateParams {
    int max_tokens = 256;
    double temperature = 0.1;
    int top_k = 40;
    double top_p = 0.75;
    int beams = 4;
};

// One option-scoring call: the full rendered prompt, the answer letters
// already emitted for earlier blanks ("B " style), and the candidate ID
// strings for the blank being decoded.
struct ScoreRequest {
    std::string prompt;
    std::string answer_prefix;
    std::vector<std::string> candidates;
};

void validate_request(const ScoreRequest& request);

class Scorer {
public:
    virtual ~Scorer() = default;

    // Finite log-probabilities over the candidates at the next decode
    // position given prompt + prefix.
    virtual OptionLogits score_options(const ScoreRequest& request) = 0;

    virtual std::string generate(const std::string& prompt, const GenerateParams& params) = 0;
};

// Option contents per blank as shown in a rendered cloze prompt, in ID order;
// the NULL token comes back as the literal "<NULL>" string.
std::vector<std::vector<std::string>> parse_prompt_options(const std::string& prompt);

// Number of standalone uppercase letters in an answer prefix; identifies the
// blank the next score call targets.
int count_answer_letters(const std::string& prefix);

// A scorer that factors exactly into an ID-level bias times a content-level
// quality, the decomposition the calibration stage assumes. It reads option
// contents straight out of the prompt and ignores all surrounding text.
struct SyntheticScorerSpec {
    std::vector<double> bias;                           // positive, one per option ID
    std::function<double(const std::string&)> quality;  // content -> positive weight
    std::optional<std::uint64_t> noise_seed;            // Gumbel perturbation if set
    double noise_scale = 1.0;
};

class SyntheticScorer : public Scorer {
public:
    explicit SyntheticScorer(SyntheticScorerSpec spec);

    OptionLogits score_options(const ScoreRequest& request) override;

    // Cloze prompts decode blank letters sequentially by greedy argmax;
    // candidate-revision prompts return the 1-best / the candidate itself.
    std::string generate(const std::string& prompt, const GenerateParams& params) override;

private:
    SyntheticScorerSpec spec_;
};

struct HttpScorerConfig {
    std::string base_url;
    int timeout_ms = 30000;
    int max_attempts = 3;
    int backoff_base_ms = 100;
};

// Name of the environment variable holding the default endpoint URL.
inline constexpr const char* kScorerUrlEnv = "NBCLOZE_SCORER_URL";

// Client for the pinned JSON protocol:
//   POST /v1/score    {"prompt", "prefix", "candidates"} -> {"logprobs": [..]}
//   POST /v1/generate {"prompt", "params"}               -> {"text": ".."}
// Transport failures retry with exponential backoff; unusable payloads
// (wrong arity, NaN/inf, bad JSON) raise ScorerProtocolError without retry.
class HttpScorer : public Scorer {
public:
    explicit HttpScorer(HttpScorerConfig config);

    // Reads the endpoint from NBCLOZE_SCORER_URL.
    static std::unique_ptr<HttpScorer> from_env();

    OptionLogits score_options(const ScoreRequest& request) override;
    std::string generate(const std::string& prompt, const GenerateParams& params) override;

private:
    std::string post_json(const std::string& path, const std::string& body);

    HttpScorerConfig config_;
};

} // namespace nbcloze
