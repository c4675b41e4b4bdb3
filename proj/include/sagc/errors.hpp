#pragma once

#include <stdexcept>
#include <string>

namespace sagc {

// Base for all library errors. The CLI maps subclasses to exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible tensor dimensions; message names both shapes.
struct ShapeError : Error { using Error::Error; };
// A documented precondition was violated by the caller.
struct ContractError : Error { using Error::Error; };
// Malformed input file; message carries the 1-based line number.
struct ParseError : Error { using Error::Error; };
// Corpus-level consistency violation (duplicate id, unknown genre).
struct CorpusError : Error { using Error::Error; };
// Invalid or missing configuration.
struct ConfigError : Error { using Error::Error; };
// Data with the wrong layout (e.g. audio frames not 128 wide).
struct FormatError : Error { using Error::Error; };
// Failure inside the training loop (e.g. non-finite gradient).
struct TrainingError : Error { using Error::Error; };
// File failed its checksum or is truncated.
struct IntegrityError : Error { using Error::Error; };
// File format version not supported; message names both versions.
struct VersionError : Error { using Error::Error; };
// Embedding store misuse (duplicate id, empty store).
struct StoreError : Error { using Error::Error; };
// Similarity metric undefined for the given input (zero vector).
struct MetricError : Error { using Error::Error; };
// Evaluation against an incompatible corpus.
struct EvalError : Error { using Error::Error; };

} // namespace sagc
