#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sagc/autodiff.hpp"
#include "sagc/ingest.hpp"
#include "sagc/model.hpp"

namespace sagc {

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 16;
    int epochs = 10;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip_norm = 5.0;
    double validation_fraction = 0.1;

    void validate() const;
};

// -log softmax(logits)[label], computed via log-sum-exp so huge logits do
// not overflow. ContractError when label is out of range.
autodiff::NodePtr cross_entropy_loss(const autodiff::NodePtr& logits, int label);
autodiff::NodePtr cross_entropy_loss(const Tensor2& logits, int label);

// Scales all gradients by min(1, max_norm/global_norm) in place and
// returns the factor applied.
double clip_global_norm(std::vector<Tensor2>& grads, double max_norm);

struct AdamState {
    std::vector<Tensor2> m, v; // first/second moments, fixed tensor order
    long step = 0;
};

AdamState make_adam_state(const ModelParams& params);

// One Adam update with bias correction; clips by global norm first.
// TrainingError (naming the tensor) on a non-finite gradient.
void adam_step(ModelParams& params, std::vector<Tensor2>& grads, AdamState& state,
               const TrainConfig& config);

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    std::optional<double> val_acc; // absent when validation_fraction is 0
};

struct TrainMeta {
    std::string modality;
    int epochs_trained = 0;
    std::uint64_t seed = 0;
    double final_train_loss = 0.0;
    double final_train_acc = 0.0;
    std::optional<double> final_val_acc;
};

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    LabelSet labels;
    TrainMeta meta;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochMetrics> metrics;
};

// Admits and embeds the corpus, then runs seeded mini-batch training:
// per-sample forward/backward accumulated over each batch, one Adam update
// per batch. Fully deterministic given (corpus, provider, configs, seed).
// The provider may be null for audio corpora.
TrainResult train(const Corpus& corpus, const EmbeddingProvider* provider,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const std::function<void(const EpochMetrics&)>& on_epoch = nullptr);

struct EvalResult {
    double accuracy = 0.0;
    std::vector<double> precision;       // per class, 0 when no predictions
    std::vector<double> recall;          // per class, 0 when no support
    std::vector<std::vector<int>> confusion; // [true][predicted]
    int total = 0;
};

// Metrics from parallel truth/prediction vectors (the model-free core).
EvalResult compute_metrics(const std::vector<int>& truth, const std::vector<int>& predicted,
                           int n_classes);

// Runs the checkpointed model over every admitted record. EvalError when a
// corpus genre is missing from the checkpoint's label set.
EvalResult evaluate(const Checkpoint& checkpoint, const Corpus& corpus,
                    const EmbeddingProvider* provider);

// Binary checkpoint file: magic "SAGC", format version, JSON metadata
// block, tensors as little-endian doubles in the fixed order, CRC-32.
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::string metrics_json_line(const EpochMetrics& m);

} // namespace sagc
