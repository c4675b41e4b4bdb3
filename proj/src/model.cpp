#include "sagc/model.hpp"

#include <iostream>

#include "sagc/errors.hpp"
#include "sagc/rng.hpp"

namespace sagc {
namespace {

constexpr double kMaskLogit = -1e9;
constexpr int kPaperContentDim = 2000;

std::function<void(const std::string&)>& warning_sink() {
    static std::function<void(const std::string&)> sink = [](const std::string& msg) {
        std::cerr << "warning: " << msg << "\n";
    };
    return sink;
}

} // namespace

void set_warning_sink(std::function<void(const std::string&)> sink) {
    warning_sink() = std::move(sink);
}

ModelConfig ModelConfig::lyric_default(int n_classes) {
    ModelConfig cfg;
    cfg.seq_len = kLyricSeqLen;
    cfg.n_classes = n_classes;
    return cfg;
}

ModelConfig ModelConfig::audio_default(int n_classes) {
    ModelConfig cfg;
    cfg.seq_len = kAudioSeqLen;
    cfg.n_classes = n_classes;
    return cfg;
}

void ModelConfig::validate() const {
    auto positive = [](int v, const char* name) {
        if (v < 1) {
            throw ConfigError(std::string("model config: ") + name + " must be positive, got " +
                              std::to_string(v));
        }
    };
    positive(seq_len, "seq_len");
    positive(input_dim, "input_dim");
    positive(hidden_units, "hidden_units");
    positive(attn_dim, "attn_dim");
    positive(attn_hops, "attn_hops");
    positive(n_classes, "n_classes");
}

ModelParams alloc_params(const ModelConfig& config) {
    config.validate();
    const int d = config.input_dim;
    const int u = config.hidden_units;

    ModelParams p;
    for (LstmParams* lstm : {&p.fwd, &p.bwd}) {
        for (GateParams* g : {&lstm->input, &lstm->forget, &lstm->cell, &lstm->output}) {
            g->w = Tensor2(d + u, u);
            g->b = Tensor2(1, u);
        }
    }
    p.ws1 = Tensor2(config.attn_dim, config.bilstm_dim());
    p.ws2 = Tensor2(config.attn_hops, config.attn_dim);
    p.classifier_w = Tensor2(config.content_dim(), config.n_classes);
    p.classifier_b = Tensor2(1, config.n_classes);
    return p;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    ModelParams p = alloc_params(config);
    if (config.content_dim() != kPaperContentDim) {
        warning_sink()("content embedding is " + std::to_string(config.content_dim()) +
                       "-dimensional (attn_hops * 2 * hidden_units), not the usual " +
                       std::to_string(kPaperContentDim));
    }
    for (LstmParams* lstm : {&p.fwd, &p.bwd}) {
        // Forget gates start open so early gradients flow along the cell chain.
        std::fill(lstm->forget.b.data.begin(), lstm->forget.b.data.end(), 1.0);
    }

    Rng rng(seed);
    p.for_each_tensor([&](const std::string& name, Tensor2& t) {
        if (name.ends_with(".b")) return; // biases keep their fixed init
        const double bound = std::sqrt(6.0 / (t.rows + t.cols));
        for (double& v : t.data) v = rng.next_uniform(-bound, bound);
    });
    return p;
}

ParamNodes make_param_leaves(const ModelParams& params) {
    ParamNodes nodes;
    std::vector<const Tensor2*> tensors;
    params.for_each_tensor([&](const std::string&, const Tensor2& t) { tensors.push_back(&t); });
    std::size_t i = 0;
    nodes.for_each_node([&](autodiff::NodePtr& n) { n = autodiff::leaf(*tensors[i++]); });
    return nodes;
}

ParamNodes make_param_constants(const ModelParams& params) {
    ParamNodes nodes;
    std::vector<const Tensor2*> tensors;
    params.for_each_tensor([&](const std::string&, const Tensor2& t) { tensors.push_back(&t); });
    std::size_t i = 0;
    nodes.for_each_node([&](autodiff::NodePtr& n) { n = autodiff::constant(*tensors[i++]); });
    return nodes;
}

namespace {

using autodiff::NodePtr;

// One LSTM direction over the already-sliced input rows. steps[t] is the
// 1 x d input at sequence position t; the result holds the 1 x u hidden
// state per position, indexed by sequence position regardless of direction.
std::vector<NodePtr> lstm_direction(const std::vector<NodePtr>& steps,
                                    const ParamNodes::Lstm& p, int hidden_units,
                                    bool reversed) {
    const int len = static_cast<int>(steps.size());
    std::vector<NodePtr> states(len);
    NodePtr h = autodiff::constant(Tensor2(1, hidden_units));
    NodePtr c = autodiff::constant(Tensor2(1, hidden_units));
    for (int step = 0; step < len; ++step) {
        const int t = reversed ? len - 1 - step : step;
        NodePtr z = autodiff::concat_cols(steps[t], h);
        NodePtr i = autodiff::sigmoid_elem(autodiff::add(autodiff::matmul(z, p.input.w), p.input.b));
        NodePtr f = autodiff::sigmoid_elem(autodiff::add(autodiff::matmul(z, p.forget.w), p.forget.b));
        NodePtr g = autodiff::tanh_elem(autodiff::add(autodiff::matmul(z, p.cell.w), p.cell.b));
        NodePtr o = autodiff::sigmoid_elem(autodiff::add(autodiff::matmul(z, p.output.w), p.output.b));
        c = autodiff::add(autodiff::hadamard(f, c), autodiff::hadamard(i, g));
        h = autodiff::hadamard(o, autodiff::tanh_elem(c));
        states[t] = h;
    }
    return states;
}

Tensor2 attention_mask(int hops, int seq_len, int valid_len) {
    Tensor2 mask(hops, seq_len);
    for (int i = 0; i < hops; ++i) {
        for (int j = valid_len; j < seq_len; ++j) mask.at(i, j) = kMaskLogit;
    }
    return mask;
}

void check_valid_len(int valid_len, int seq_len) {
    if (valid_len < 1 || valid_len > seq_len) {
        throw ContractError("valid_len " + std::to_string(valid_len) +
                            " outside [1, " + std::to_string(seq_len) + "]");
    }
}

} // namespace

ForwardGraph build_forward(const EmbeddedSequence& x, const ParamNodes& params,
                           const ModelConfig& config) {
    if (x.matrix.rows != config.seq_len || x.matrix.cols != config.input_dim) {
        throw ShapeError("input is " + x.matrix.shape_str() + ", model expects " +
                         std::to_string(config.seq_len) + "x" +
                         std::to_string(config.input_dim));
    }
    check_valid_len(x.valid_len, config.seq_len);

    std::vector<NodePtr> steps(config.seq_len);
    for (int t = 0; t < config.seq_len; ++t) {
        Tensor2 row(1, config.input_dim);
        for (int j = 0; j < config.input_dim; ++j) row.at(0, j) = x.matrix.at(t, j);
        steps[t] = autodiff::constant(std::move(row));
    }

    const auto fwd = lstm_direction(steps, params.fwd, config.hidden_units, false);
    const auto bwd = lstm_direction(steps, params.bwd, config.hidden_units, true);

    std::vector<NodePtr> h_rows(config.seq_len);
    for (int t = 0; t < config.seq_len; ++t) {
        h_rows[t] = autodiff::concat_cols(fwd[t], bwd[t]);
    }

    ForwardGraph g;
    g.H = autodiff::concat_rows(h_rows);

    NodePtr scores = autodiff::matmul(
        params.ws2, autodiff::tanh_elem(autodiff::matmul(params.ws1, autodiff::transpose(g.H))));
    if (x.valid_len < config.seq_len) {
        scores = autodiff::add(
            scores,
            autodiff::constant(attention_mask(config.attn_hops, config.seq_len, x.valid_len)));
    }
    g.A = autodiff::softmax_rows(scores);
    g.M = autodiff::matmul(g.A, g.H);
    g.content = autodiff::flatten_row_major(g.M);
    g.logits = autodiff::add(autodiff::matmul(g.content, params.classifier_w),
                             params.classifier_b);
    return g;
}

Tensor2 bilstm_forward(const EmbeddedSequence& x, const ModelParams& params,
                       const ModelConfig& config) {
    if (x.matrix.rows != config.seq_len || x.matrix.cols != config.input_dim) {
        throw ShapeError("input is " + x.matrix.shape_str() + ", model expects " +
                         std::to_string(config.seq_len) + "x" +
                         std::to_string(config.input_dim));
    }
    ParamNodes nodes = make_param_constants(params);
    std::vector<NodePtr> steps(config.seq_len);
    for (int t = 0; t < config.seq_len; ++t) {
        Tensor2 row(1, config.input_dim);
        for (int j = 0; j < config.input_dim; ++j) row.at(0, j) = x.matrix.at(t, j);
        steps[t] = autodiff::constant(std::move(row));
    }
    const auto fwd = lstm_direction(steps, nodes.fwd, config.hidden_units, false);
    const auto bwd = lstm_direction(steps, nodes.bwd, config.hidden_units, true);
    Tensor2 H(config.seq_len, config.bilstm_dim());
    for (int t = 0; t < config.seq_len; ++t) {
        for (int j = 0; j < config.hidden_units; ++j) {
            H.at(t, j) = fwd[t]->value.at(0, j);
            H.at(t, config.hidden_units + j) = bwd[t]->value.at(0, j);
        }
    }
    return H;
}

std::pair<Tensor2, Tensor2> attention_forward(const Tensor2& H, int valid_len,
                                              const ModelParams& params) {
    check_valid_len(valid_len, H.rows);
    Tensor2 scores = matmul(params.ws2, tanh_elem(matmul(params.ws1, transpose(H))));
    for (int i = 0; i < scores.rows; ++i) {
        for (int j = valid_len; j < scores.cols; ++j) scores.at(i, j) += kMaskLogit;
    }
    Tensor2 A = softmax_rows(scores);
    Tensor2 M = matmul(A, H);
    return {std::move(A), std::move(M)};
}

ForwardOutput classify_forward(const EmbeddedSequence& x, const ModelParams& params,
                               const ModelConfig& config) {
    ParamNodes nodes = make_param_constants(params);
    ForwardGraph g = build_forward(x, nodes, config);
    ForwardOutput out{g.H->value, g.A->value, g.M->value, g.content->value, g.logits->value};
    autodiff::release_graph(g.logits);
    return out;
}

Tensor2 extract_content_embedding(const ForwardOutput& output) {
    return output.content;
}

} // namespace sagc
