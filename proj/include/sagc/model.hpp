#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>

#include "sagc/autodiff.hpp"
#include "sagc/ingest.hpp"
#include "sagc/tensor.hpp"

// The network: BiLSTM over an embedded sequence, structured self-attention
// producing r weightings over timesteps, the flattened attention output as
// a fixed-length content embedding, and a linear genre classifier on top.

namespace sagc {

struct ModelConfig {
    int seq_len = kLyricSeqLen;    // L
    int input_dim = kEmbeddingDim; // d
    int hidden_units = 100;        // u, per LSTM direction
    int attn_dim = 64;             // d_a
    int attn_hops = 10;            // r
    int n_classes = 0;

    int bilstm_dim() const { return 2 * hidden_units; }          // 2u
    int content_dim() const { return attn_hops * bilstm_dim(); } // r * 2u

    static ModelConfig lyric_default(int n_classes);
    static ModelConfig audio_default(int n_classes);

    void validate() const; // ConfigError on non-positive fields
};

struct GateParams {
    Tensor2 w; // (d+u) x u
    Tensor2 b; // 1 x u
};

struct LstmParams {
    GateParams input, forget, cell, output;
};

struct ModelParams {
    LstmParams fwd, bwd;
    Tensor2 ws1;          // d_a x 2u
    Tensor2 ws2;          // r x d_a
    Tensor2 classifier_w; // (r*2u) x n_classes
    Tensor2 classifier_b; // 1 x n_classes

    // Visits every tensor in the fixed serialization order:
    // fwd then bwd, gates in (input, forget, cell, output) order, each as
    // w then b; then ws1, ws2, classifier_w, classifier_b.
    template <typename F>
    void for_each_tensor(F&& f) {
        for (auto [dir, lstm] : {std::pair{"fwd", &fwd}, std::pair{"bwd", &bwd}}) {
            for (auto [gate, g] :
                 {std::pair{"input", &lstm->input}, std::pair{"forget", &lstm->forget},
                  std::pair{"cell", &lstm->cell}, std::pair{"output", &lstm->output}}) {
                f(std::string(dir) + "." + gate + ".w", g->w);
                f(std::string(dir) + "." + gate + ".b", g->b);
            }
        }
        f(std::string("ws1"), ws1);
        f(std::string("ws2"), ws2);
        f(std::string("classifier.w"), classifier_w);
        f(std::string("classifier.b"), classifier_b);
    }

    template <typename F>
    void for_each_tensor(F&& f) const {
        const_cast<ModelParams*>(this)->for_each_tensor(
            [&](const std::string& name, Tensor2& t) { f(name, static_cast<const Tensor2&>(t)); });
    }
};

struct ForwardOutput {
    Tensor2 H;       // L x 2u
    Tensor2 A;       // r x L, row-stochastic, ~0 at padded columns
    Tensor2 M;       // r x 2u
    Tensor2 content; // 1 x (r*2u), flatten_row_major(M)
    Tensor2 logits;  // 1 x n_classes
};

// Zero tensors in the shapes the config implies.
ModelParams alloc_params(const ModelConfig& config);

// Xavier-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases
// except the forget gates at 1. Identical (config, seed) pairs produce
// bitwise-identical parameters.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Full BiLSTM pass; row t is [forward state at t | backward state at t].
Tensor2 bilstm_forward(const EmbeddedSequence& x, const ModelParams& params,
                       const ModelConfig& config);

// A = softmax_rows(Ws2 tanh(Ws1 H^T)) with columns >= valid_len pushed to
// -1e9 before the softmax; M = A H. ContractError unless 1 <= valid_len <= L.
std::pair<Tensor2, Tensor2> attention_forward(const Tensor2& H, int valid_len,
                                              const ModelParams& params);

ForwardOutput classify_forward(const EmbeddedSequence& x, const ModelParams& params,
                               const ModelConfig& config);

// The flattened M, row-major: entry r*2u*i + j is M(i, j).
Tensor2 extract_content_embedding(const ForwardOutput& output);

// --- differentiable path (used by training and gradient checks) ---

struct ParamNodes {
    struct Gate {
        autodiff::NodePtr w, b;
    };
    struct Lstm {
        Gate input, forget, cell, output;
    };
    Lstm fwd, bwd;
    autodiff::NodePtr ws1, ws2, classifier_w, classifier_b;

    // Same fixed order as ModelParams::for_each_tensor.
    template <typename F>
    void for_each_node(F&& f) {
        for (auto* lstm : {&fwd, &bwd}) {
            for (auto* g : {&lstm->input, &lstm->forget, &lstm->cell, &lstm->output}) {
                f(g->w);
                f(g->b);
            }
        }
        f(ws1);
        f(ws2);
        f(classifier_w);
        f(classifier_b);
    }
};

// Leaves share storage with nothing; gradients accumulate across samples
// until zeroed. Constants build a no-gradient inference graph.
ParamNodes make_param_leaves(const ModelParams& params);
ParamNodes make_param_constants(const ModelParams& params);

struct ForwardGraph {
    autodiff::NodePtr H, A, M, content, logits;
};

ForwardGraph build_forward(const EmbeddedSequence& x, const ParamNodes& params,
                           const ModelConfig& config);

// Diagnostics hook (init_params warns when r*2u differs from 2000).
void set_warning_sink(std::function<void(const std::string&)> sink);

} // namespace sagc
