#include "sagc/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include <json.hpp>

#include "sagc/binio.hpp"
#include "sagc/errors.hpp"
#include "sagc/kernels.hpp"
#include "sagc/rng.hpp"

namespace sagc {

using nlohmann::json;

namespace {

constexpr char kCheckpointMagic[4] = {'S', 'A', 'G', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;

int argmax_row(const Tensor2& t) {
    int best = 0;
    for (int j = 1; j < t.cols; ++j) {
        if (t.at(0, j) > t.at(0, best)) best = j;
    }
    return best;
}

} // namespace

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (grad_clip_norm <= 0.0) throw ConfigError("grad_clip_norm must be positive");
    if (validation_fraction < 0.0 || validation_fraction >= 1.0) {
        throw ConfigError("validation_fraction must be in [0, 1)");
    }
    if (adam_beta1 <= 0.0 || adam_beta1 >= 1.0 || adam_beta2 <= 0.0 || adam_beta2 >= 1.0) {
        throw ConfigError("adam betas must be in (0, 1)");
    }
}

autodiff::NodePtr cross_entropy_loss(const autodiff::NodePtr& logits, int label) {
    const Tensor2& x = logits->value;
    if (x.rows != 1) {
        throw ContractError("cross_entropy_loss: logits must be 1xC, got " + x.shape_str());
    }
    if (label < 0 || label >= x.cols) {
        throw ContractError("cross_entropy_loss: label " + std::to_string(label) +
                            " out of range for " + std::to_string(x.cols) + " classes");
    }
    // loss = logsumexp(x) - x[label]
    double mx = x.at(0, 0);
    for (int j = 1; j < x.cols; ++j) mx = std::max(mx, x.at(0, j));
    double sum = 0.0;
    for (int j = 0; j < x.cols; ++j) sum += std::exp(x.at(0, j) - mx);
    const double loss = mx + std::log(sum) - x.at(0, label);

    return autodiff::make_node(Tensor2(1, 1, {loss}), {logits}, [label](autodiff::Node& n) {
        autodiff::Node& p = *n.parents[0];
        if (!p.needs_grad) return;
        // d loss / d x_j = softmax(x)_j - [j == label]
        const Tensor2 sm = softmax_rows(p.value);
        const double g = n.grad.at(0, 0);
        for (int j = 0; j < sm.cols; ++j) {
            p.grad.at(0, j) += g * (sm.at(0, j) - (j == label ? 1.0 : 0.0));
        }
    });
}

autodiff::NodePtr cross_entropy_loss(const Tensor2& logits, int label) {
    return cross_entropy_loss(autodiff::constant(logits), label);
}

double clip_global_norm(std::vector<Tensor2>& grads, double max_norm) {
    double sq = 0.0;
    for (const Tensor2& g : grads) {
        sq += kernels::active().dot(g.data.data(), g.data.data(), g.size());
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return 1.0;
    const double factor = max_norm / norm;
    for (Tensor2& g : grads) {
        kernels::active().scale(factor, g.data.data(), g.size());
    }
    return factor;
}

AdamState make_adam_state(const ModelParams& params) {
    AdamState st;
    params.for_each_tensor([&](const std::string&, const Tensor2& t) {
        st.m.emplace_back(t.rows, t.cols);
        st.v.emplace_back(t.rows, t.cols);
    });
    return st;
}

void adam_step(ModelParams& params, std::vector<Tensor2>& grads, AdamState& state,
               const TrainConfig& config) {
    std::vector<std::pair<std::string, Tensor2*>> tensors;
    params.for_each_tensor(
        [&](const std::string& name, Tensor2& t) { tensors.emplace_back(name, &t); });
    if (grads.size() != tensors.size()) {
        throw ContractError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                            std::to_string(tensors.size()) + " parameter tensors");
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (!grads[i].same_shape(*tensors[i].second)) {
            throw ShapeError("adam_step: gradient " + grads[i].shape_str() + " vs parameter " +
                             tensors[i].second->shape_str() + " for " + tensors[i].first);
        }
        if (!grads[i].all_finite()) {
            throw TrainingError("non-finite gradient for parameter " + tensors[i].first);
        }
    }

    clip_global_norm(grads, config.grad_clip_norm);
    state.step += 1;
    const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(state.step));

    for (std::size_t i = 0; i < tensors.size(); ++i) {
        Tensor2& p = *tensors[i].second;
        Tensor2& m = state.m[i];
        Tensor2& v = state.v[i];
        const Tensor2& g = grads[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            m.data[k] = config.adam_beta1 * m.data[k] + (1.0 - config.adam_beta1) * g.data[k];
            v.data[k] = config.adam_beta2 * v.data[k] +
                        (1.0 - config.adam_beta2) * g.data[k] * g.data[k];
            const double m_hat = m.data[k] / bc1;
            const double v_hat = v.data[k] / bc2;
            p.data[k] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_eps);
        }
    }
}

namespace {

struct Sample {
    EmbeddedSequence seq;
    int label = 0;
};

std::vector<Sample> admit_and_embed(const Corpus& corpus, const EmbeddingProvider* provider,
                                    const ModelConfig& cfg, Modality modality) {
    std::vector<Sample> samples;
    if (modality == Modality::lyric) {
        if (provider == nullptr) {
            throw ConfigError("lyric corpus needs an embedding provider");
        }
        for (const LyricRecord& rec : corpus.lyrics) {
            if (!admit_lyric(rec).accepted) continue;
            Sample s;
            s.seq = embed_lyric(tokenize(rec.text), *provider, cfg.seq_len, cfg.input_dim);
            s.label = corpus.labels.index_of(rec.genre);
            samples.push_back(std::move(s));
        }
    } else {
        for (const AudioRecord& rec : corpus.audios) {
            if (!admit_audio(rec).accepted) continue;
            Sample s;
            s.seq = embed_audio(rec, cfg.seq_len);
            s.label = corpus.labels.index_of(rec.genre);
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

std::vector<Tensor2> collect_gradients(ParamNodes& nodes) {
    std::vector<Tensor2> grads;
    nodes.for_each_node([&](autodiff::NodePtr& n) { grads.push_back(n->grad); });
    return grads;
}

void zero_gradients(ParamNodes& nodes) {
    nodes.for_each_node([&](autodiff::NodePtr& n) { n->zero_grad(); });
}

void write_params_back(ParamNodes& nodes, ModelParams& params) {
    std::vector<Tensor2*> tensors;
    params.for_each_tensor([&](const std::string&, Tensor2& t) { tensors.push_back(&t); });
    std::size_t i = 0;
    nodes.for_each_node([&](autodiff::NodePtr& n) { n->value = *tensors[i++]; });
}

} // namespace

TrainResult train(const Corpus& corpus, const EmbeddingProvider* provider,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
    model_config.validate();
    train_config.validate();
    const Modality modality = corpus.modality();
    if (model_config.n_classes != corpus.labels.size()) {
        throw ConfigError("model has " + std::to_string(model_config.n_classes) +
                          " classes but the corpus declares " +
                          std::to_string(corpus.labels.size()));
    }

    std::vector<Sample> samples = admit_and_embed(corpus, provider, model_config, modality);
    if (samples.empty()) {
        throw ConfigError("no records survive the admission filters; nothing to train on");
    }

    ModelParams params = init_params(model_config, train_config.seed);

    // All shuffling comes from one stream so runs are reproducible:
    // first the validation split, then one shuffle per epoch.
    Rng shuffle_rng(train_config.seed ^ 0x5eedc0de5eedc0deULL);
    std::vector<int> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order);
    const int n_val = static_cast<int>(train_config.validation_fraction *
                                       static_cast<double>(samples.size()));
    std::vector<int> val_idx(order.begin(), order.begin() + n_val);
    std::vector<int> train_idx(order.begin() + n_val, order.end());
    if (train_idx.empty()) {
        throw ConfigError("validation split leaves no training samples");
    }

    ParamNodes nodes = make_param_leaves(params);
    AdamState adam = make_adam_state(params);
    TrainResult result;

    for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
        shuffle_rng.shuffle(train_idx);
        double loss_sum = 0.0;
        int correct = 0;

        for (std::size_t start = 0; start < train_idx.size();
             start += static_cast<std::size_t>(train_config.batch_size)) {
            const std::size_t end = std::min(
                train_idx.size(), start + static_cast<std::size_t>(train_config.batch_size));
            zero_gradients(nodes);
            for (std::size_t b = start; b < end; ++b) {
                const Sample& s = samples[static_cast<std::size_t>(train_idx[b])];
                ForwardGraph g = build_forward(s.seq, nodes, model_config);
                autodiff::NodePtr loss = cross_entropy_loss(g.logits, s.label);
                autodiff::backward(loss);
                loss_sum += loss->value.at(0, 0);
                if (argmax_row(g.logits->value) == s.label) ++correct;
                autodiff::release_graph(loss);
            }
            std::vector<Tensor2> grads = collect_gradients(nodes);
            // Mean gradient over the batch.
            const double inv = 1.0 / static_cast<double>(end - start);
            for (Tensor2& g : grads) {
                kernels::active().scale(inv, g.data.data(), g.size());
            }
            adam_step(params, grads, adam, train_config);
            write_params_back(nodes, params);
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = loss_sum / static_cast<double>(train_idx.size());
        m.train_acc = static_cast<double>(correct) / static_cast<double>(train_idx.size());
        if (!val_idx.empty()) {
            int val_correct = 0;
            for (int idx : val_idx) {
                const Sample& s = samples[static_cast<std::size_t>(idx)];
                ForwardOutput out = classify_forward(s.seq, params, model_config);
                if (argmax_row(out.logits) == s.label) ++val_correct;
            }
            m.val_acc = static_cast<double>(val_correct) / static_cast<double>(val_idx.size());
        }
        if (on_epoch) on_epoch(m);
        result.metrics.push_back(m);
    }

    Checkpoint& ckpt = result.checkpoint;
    ckpt.config = model_config;
    ckpt.params = std::move(params);
    ckpt.labels = corpus.labels;
    ckpt.meta.modality = to_string(modality);
    ckpt.meta.epochs_trained = train_config.epochs;
    ckpt.meta.seed = train_config.seed;
    if (!result.metrics.empty()) {
        const EpochMetrics& last = result.metrics.back();
        ckpt.meta.final_train_loss = last.train_loss;
        ckpt.meta.final_train_acc = last.train_acc;
        ckpt.meta.final_val_acc = last.val_acc;
    }
    return result;
}

EvalResult compute_metrics(const std::vector<int>& truth, const std::vector<int>& predicted,
                           int n_classes) {
    if (truth.size() != predicted.size()) {
        throw ContractError("compute_metrics: size mismatch");
    }
    EvalResult r;
    r.total = static_cast<int>(truth.size());
    r.confusion.assign(n_classes, std::vector<int>(n_classes, 0));
    int correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= n_classes || predicted[i] < 0 ||
            predicted[i] >= n_classes) {
            throw ContractError("compute_metrics: class index out of range");
        }
        r.confusion[truth[i]][predicted[i]] += 1;
        if (truth[i] == predicted[i]) ++correct;
    }
    r.accuracy = r.total > 0 ? static_cast<double>(correct) / r.total : 0.0;
    r.precision.assign(n_classes, 0.0);
    r.recall.assign(n_classes, 0.0);
    for (int c = 0; c < n_classes; ++c) {
        int support = 0, predicted_c = 0;
        for (int k = 0; k < n_classes; ++k) {
            support += r.confusion[c][k];
            predicted_c += r.confusion[k][c];
        }
        if (predicted_c > 0) {
            r.precision[c] = static_cast<double>(r.confusion[c][c]) / predicted_c;
        }
        if (support > 0) {
            r.recall[c] = static_cast<double>(r.confusion[c][c]) / support;
        }
    }
    return r;
}

EvalResult evaluate(const Checkpoint& checkpoint, const Corpus& corpus,
                    const EmbeddingProvider* provider) {
    const Modality modality = corpus.modality();
    if (to_string(modality) != checkpoint.meta.modality) {
        throw EvalError("corpus modality " + to_string(modality) +
                        " does not match checkpoint modality " + checkpoint.meta.modality);
    }
    auto label_of = [&](const std::string& genre) {
        const int idx = checkpoint.labels.index_of(genre);
        if (idx < 0) {
            throw EvalError("genre \"" + genre + "\" unknown to the checkpoint's label set");
        }
        return idx;
    };

    std::vector<int> truth, predicted;
    if (modality == Modality::lyric) {
        if (provider == nullptr) throw ConfigError("lyric corpus needs an embedding provider");
        for (const LyricRecord& rec : corpus.lyrics) {
            if (!admit_lyric(rec).accepted) continue;
            truth.push_back(label_of(rec.genre));
            const EmbeddedSequence seq = embed_lyric(
                tokenize(rec.text), *provider, checkpoint.config.seq_len,
                checkpoint.config.input_dim);
            predicted.push_back(
                argmax_row(classify_forward(seq, checkpoint.params, checkpoint.config).logits));
        }
    } else {
        for (const AudioRecord& rec : corpus.audios) {
            if (!admit_audio(rec).accepted) continue;
            truth.push_back(label_of(rec.genre));
            const EmbeddedSequence seq = embed_audio(rec, checkpoint.config.seq_len);
            predicted.push_back(
                argmax_row(classify_forward(seq, checkpoint.params, checkpoint.config).logits));
        }
    }
    return compute_metrics(truth, predicted, checkpoint.labels.size());
}

namespace {

json meta_to_json(const Checkpoint& c) {
    json j;
    j["model"] = {{"seq_len", c.config.seq_len},     {"input_dim", c.config.input_dim},
                  {"hidden_units", c.config.hidden_units}, {"attn_dim", c.config.attn_dim},
                  {"attn_hops", c.config.attn_hops}, {"n_classes", c.config.n_classes}};
    j["labels"] = c.labels.labels;
    json meta;
    meta["modality"] = c.meta.modality;
    meta["epochs_trained"] = c.meta.epochs_trained;
    meta["seed"] = c.meta.seed;
    meta["final_train_loss"] = c.meta.final_train_loss;
    meta["final_train_acc"] = c.meta.final_train_acc;
    if (c.meta.final_val_acc) {
        meta["final_val_acc"] = *c.meta.final_val_acc;
    } else {
        meta["final_val_acc"] = nullptr;
    }
    j["training"] = std::move(meta);
    return j;
}

void meta_from_json(const json& j, Checkpoint& c) {
    const json& m = j.at("model");
    c.config.seq_len = m.at("seq_len").get<int>();
    c.config.input_dim = m.at("input_dim").get<int>();
    c.config.hidden_units = m.at("hidden_units").get<int>();
    c.config.attn_dim = m.at("attn_dim").get<int>();
    c.config.attn_hops = m.at("attn_hops").get<int>();
    c.config.n_classes = m.at("n_classes").get<int>();
    c.labels.labels = j.at("labels").get<std::vector<std::string>>();
    const json& t = j.at("training");
    c.meta.modality = t.at("modality").get<std::string>();
    c.meta.epochs_trained = t.at("epochs_trained").get<int>();
    c.meta.seed = t.at("seed").get<std::uint64_t>();
    c.meta.final_train_loss = t.at("final_train_loss").get<double>();
    c.meta.final_train_acc = t.at("final_train_acc").get<double>();
    if (!t.at("final_val_acc").is_null()) {
        c.meta.final_val_acc = t.at("final_val_acc").get<double>();
    }
}

} // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
    ByteWriter w;
    w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
    w.u32(kCheckpointVersion);
    w.str(meta_to_json(checkpoint).dump());
    checkpoint.params.for_each_tensor([&](const std::string&, const Tensor2& t) {
        for (double v : t.data) w.f64(v);
    });
    w.finish_to_file(path);
}

Checkpoint load_checkpoint(const std::string& path) {
    ByteReader r = ByteReader::checked_file(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw FormatError(path + ": not a checkpoint file (bad magic)");
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw VersionError(path + ": checkpoint format version " + std::to_string(version) +
                           ", this build reads version " + std::to_string(kCheckpointVersion));
    }
    Checkpoint c;
    json meta;
    try {
        meta = json::parse(r.str());
        meta_from_json(meta, c);
    } catch (const json::exception& e) {
        throw IntegrityError(path + ": metadata block is invalid: " + e.what());
    }
    c.config.validate();
    c.params = alloc_params(c.config);
    c.params.for_each_tensor([&](const std::string&, Tensor2& t) {
        for (double& v : t.data) v = r.f64();
    });
    if (r.remaining() != 0) {
        throw IntegrityError(path + ": trailing bytes after parameter tensors");
    }
    return c;
}

std::string metrics_json_line(const EpochMetrics& m) {
    json j;
    j["epoch"] = m.epoch;
    j["train_loss"] = m.train_loss;
    j["train_acc"] = m.train_acc;
    if (m.val_acc) {
        j["val_acc"] = *m.val_acc;
    } else {
        j["val_acc"] = nullptr;
    }
    return j.dump();
}

} // namespace sagc
