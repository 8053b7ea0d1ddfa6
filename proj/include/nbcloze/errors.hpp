#pragma once

#include <stdexcept>
#include <string>

namespace nbcloze {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tokenization produced no tokens.
class EmptyUtteranceError : public Error {
public:
    using Error::Error;
};

// A record's hypothesis count differs from the rest of the dataset.
class InconsistentNError : public Error {
public:
    using Error::Error;
};

// "<NULL>" found in ingested text.
class ReservedTokenError : public Error {
public:
    using Error::Error;
};

// Bad JSONL input; carries the 1-based line number in the message.
class JsonlError : public Error {
public:
    using Error::Error;
};

// Generation output did not contain enough valid answer letters.
class MalformedAnswerError : public Error {
public:
    using Error::Error;
};

// Full-permutation enumeration requested for n above the factorial guard.
class ComplexityGuardError : public Error {
public:
    using Error::Error;
};

class ScorerError : public Error {
public:
    using Error::Error;
};

// Backend answered, but with something unusable (NaN/inf, wrong arity, bad JSON).
class ScorerProtocolError : public ScorerError {
public:
    using ScorerError::ScorerError;
};

class EmptyGenerationError : public ScorerError {
public:
    using ScorerError::ScorerError;
};

} // namespace nbcloze
