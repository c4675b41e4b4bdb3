#pragma once

#include <string>
#include <vector>

#include "sagc/ingest.hpp"
#include "sagc/tensor.hpp"
#include "sagc/train.hpp"

// Attention-based explanations: collapse the r attention hops into one
// weight per valid position, zero everything below 15% of the peak, and
// render the survivors as a text heatmap, a standalone HTML page, or a
// per-second CSV timeline.

namespace sagc {

struct TokenAttribution {
    int position = 0;  // index into the valid prefix of the sequence
    std::string token; // lyric token, or the second index for audio
    double weight = 0.0;
};

struct ExplanationReport {
    std::string id;
    Modality modality = Modality::lyric;
    std::vector<TokenAttribution> attributions; // one per valid position, in order
    std::string predicted_genre;
    std::vector<double> class_probabilities;
};

// Sums A over its hop rows at positions < valid_len and renormalizes to
// sum 1. ContractError when valid_len is outside [1, A.cols].
std::vector<double> aggregate_attention(const Tensor2& A, int valid_len);

// Keeps w_i iff w_i > 0.15 * max(w), zeroes the rest; survivors keep
// their original values. ContractError on all-zero input.
std::vector<double> threshold_attention(const std::vector<double>& w);

// Forward pass + aggregate + threshold, pairing weights with the record's
// tokens (lyric) or second offsets (audio). ContractError when the record
// fails admission or its modality does not match the checkpoint.
ExplanationReport explain(const Checkpoint& checkpoint, const LyricRecord& record,
                          const EmbeddingProvider& provider);
ExplanationReport explain(const Checkpoint& checkpoint, const AudioRecord& record);

// Tokens bracketed by weight: token, [token], [[token]], [[[token]]] at
// cut points 0, 1/3 and 2/3 of the maximum weight.
std::string render_text_heatmap(const ExplanationReport& report);

// Self-contained UTF-8 HTML document; every token sits in a span whose
// highlight opacity is weight / max(weight).
std::string render_html(const ExplanationReport& report);

// "second,weight" header then one row per position, weights with six
// decimal places, CRLF line endings.
std::string render_audio_csv(const ExplanationReport& report);

} // namespace sagc
