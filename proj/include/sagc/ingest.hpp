#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sagc/tensor.hpp"

namespace sagc {

enum class Modality { lyric, audio };

std::string to_string(Modality m);

struct LyricRecord {
    std::string id;
    std::string artist;
    std::string title;
    std::string genre;
    std::string text;
};

struct AudioRecord {
    std::string id;
    std::string artist;
    std::string title;
    std::string genre;
    Tensor2 frames; // T x 128, one row per second
};

// Ordered genre labels with dense indices 0..C-1.
struct LabelSet {
    std::vector<std::string> labels;

    int size() const { return static_cast<int>(labels.size()); }
    // -1 when the label is not in the set.
    int index_of(const std::string& label) const;
};

struct Corpus {
    LabelSet labels;
    std::vector<LyricRecord> lyrics;
    std::vector<AudioRecord> audios;

    bool has_both() const { return !lyrics.empty() && !audios.empty(); }
    // The single modality present; ConfigError when empty or mixed.
    Modality modality() const;
};

// Fixed-length embedded input: L x d matrix, rows >= valid_len all zero.
struct EmbeddedSequence {
    Tensor2 matrix;
    int valid_len = 0;
    Modality modality = Modality::lyric;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual int dimension() const = 0;
    // Deterministic; absent for out-of-vocabulary tokens.
    virtual std::optional<std::vector<double>> lookup(const std::string& token) const = 0;
};

// Embedding table loaded from a text file (one "token\tfloats..." per line).
std::unique_ptr<EmbeddingProvider> load_embedding_table(const std::string& path);

// Deterministic stand-in for a pre-trained table: every token maps to a
// unit-norm vector derived from a seeded hash of its bytes.
std::unique_ptr<EmbeddingProvider> hash_embedder(int dimension, std::uint64_t seed);

// Lowercases, strips characters other than letters/digits/apostrophes,
// splits on whitespace, drops empties.
std::vector<std::string> tokenize(const std::string& text);

constexpr int kMinLyricTokens = 70;
constexpr int kMinAudioFrames = 30;
constexpr int kLyricSeqLen = 500;
constexpr int kAudioSeqLen = 30;
constexpr int kEmbeddingDim = 128;

// Rejection is a value, not an error.
struct Admission {
    bool accepted = false;
    std::string reason; // empty when accepted, e.g. "too_short: 69 words < 70"
};

Admission admit_lyric(const LyricRecord& record);
Admission admit_audio(const AudioRecord& record);

// First min(count, seq_len) tokens embedded row by row; OOV tokens map to
// the zero row; trailing rows stay zero. ConfigError if the provider
// dimension differs from expect_dim.
EmbeddedSequence embed_lyric(const std::vector<std::string>& tokens,
                             const EmbeddingProvider& provider,
                             int seq_len = kLyricSeqLen,
                             int expect_dim = kEmbeddingDim);

// First seq_len frame rows copied. FormatError unless frames are 128 wide.
EmbeddedSequence embed_audio(const AudioRecord& record, int seq_len = kAudioSeqLen);

// JSON-lines corpus: a {"labels":[...]} header, then one record object per
// line. Parse errors carry 1-based line numbers.
Corpus load_corpus(const std::string& path);
void save_corpus(const Corpus& corpus, const std::string& path);

} // namespace sagc
