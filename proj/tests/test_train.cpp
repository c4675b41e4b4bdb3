#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sagc/autodiff.hpp"
#include "sagc/binio.hpp"
#include "sagc/errors.hpp"
#include "sagc/ingest.hpp"
#include "sagc/model.hpp"
#include "sagc/rng.hpp"
#include "sagc/train.hpp"

using namespace sagc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path dir;
    TempDir() {
        dir = fs::temp_directory_path() / ("sagc_train_" + std::to_string(::getpid()));
        fs::create_directories(dir);
    }
    ~TempDir() { fs::remove_all(dir); }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    REQUIRE(out.good());
}

// Three classes, each record carrying a class marker token often enough
// that a small model can separate them.
Corpus marker_corpus(int per_class) {
    const std::vector<std::string> genres = {"rock", "hiphop", "country"};
    const std::vector<std::string> markers = {"guitar", "flow", "banjo"};
    const std::vector<std::string> filler = {"the",  "night", "light", "road",  "heart",
                                             "time", "gone",  "cold",  "sound", "down"};
    Corpus corpus;
    corpus.labels.labels = genres;
    Rng rng(771);
    int serial = 0;
    for (int c = 0; c < 3; ++c) {
        for (int k = 0; k < per_class; ++k) {
            LyricRecord rec;
            rec.id = "song-" + std::to_string(serial++);
            rec.artist = "artist-" + std::to_string(c);
            rec.title = "title-" + std::to_string(k);
            rec.genre = genres[c];
            std::string text;
            for (int t = 0; t < 72; ++t) {
                if (!text.empty()) text += ' ';
                if (t % 4 == 0) {
                    text += markers[c];
                } else {
                    text += filler[rng.next_below(filler.size())];
                }
            }
            rec.text = text;
            corpus.lyrics.push_back(rec);
        }
    }
    return corpus;
}

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.seq_len = 80;
    cfg.input_dim = 16;
    cfg.hidden_units = 8;
    cfg.attn_dim = 8;
    cfg.attn_hops = 2;
    cfg.n_classes = 3;
    return cfg;
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
    bool equal = true;
    std::vector<const Tensor2*> bt;
    b.for_each_tensor([&](const std::string&, const Tensor2& t) { bt.push_back(&t); });
    std::size_t i = 0;
    a.for_each_tensor([&](const std::string&, const Tensor2& t) {
        if (!(t == *bt[i++])) equal = false;
    });
    return equal;
}

std::vector<Tensor2> zero_grads_like(const ModelParams& p) {
    std::vector<Tensor2> grads;
    p.for_each_tensor(
        [&](const std::string&, const Tensor2& t) { grads.emplace_back(t.rows, t.cols); });
    return grads;
}

} // namespace

TEST_CASE("cross entropy matches hand values and stays finite on huge logits") {
    set_warning_sink([](const std::string&) {});

    const double ce_uniform =
        cross_entropy_loss(Tensor2(1, 10), 3)->value.at(0, 0); // all-zero logits
    CHECK(ce_uniform == doctest::Approx(std::log(10.0)).epsilon(1e-12));

    const double ce_three = cross_entropy_loss(Tensor2(1, 3), 2)->value.at(0, 0);
    CHECK(ce_three == doctest::Approx(std::log(3.0)).epsilon(1e-12));

    const double ce_huge =
        cross_entropy_loss(Tensor2::from_rows({{1000.0, 0.0}}), 0)->value.at(0, 0);
    CHECK(std::isfinite(ce_huge));
    CHECK(ce_huge >= 0.0);
    CHECK(ce_huge <= 1e-12);

    Rng rng(881);
    for (int trial = 0; trial < 30; ++trial) {
        Tensor2 logits(1, 5);
        for (double& v : logits.data) v = rng.next_uniform(-4.0, 4.0);
        const int label = static_cast<int>(rng.next_below(5));
        const double got = cross_entropy_loss(logits, label)->value.at(0, 0);
        double mx = logits.at(0, 0);
        for (int j = 1; j < 5; ++j) mx = std::max(mx, logits.at(0, j));
        double z = 0.0;
        for (int j = 0; j < 5; ++j) z += std::exp(logits.at(0, j) - mx);
        const double want = -std::log(std::exp(logits.at(0, label) - mx) / z);
        CHECK(got == doctest::Approx(want).epsilon(1e-12));
        CHECK(got >= 0.0);
    }

    CHECK_THROWS_AS(cross_entropy_loss(Tensor2(1, 3), 3), ContractError);
    CHECK_THROWS_AS(cross_entropy_loss(Tensor2(1, 3), -1), ContractError);
    CHECK_THROWS_AS(cross_entropy_loss(Tensor2(2, 3), 0), ContractError);
}

TEST_CASE("cross entropy backward produces softmax minus one-hot") {
    const Tensor2 values = Tensor2::from_rows({{0.3, -1.2, 2.0, 0.1}});
    auto logits = autodiff::leaf(values);
    auto loss = cross_entropy_loss(logits, 2);
    autodiff::backward(loss);

    const Tensor2 sm = softmax_rows(values);
    for (int j = 0; j < 4; ++j) {
        const double want = sm.at(0, j) - (j == 2 ? 1.0 : 0.0);
        CHECK(logits->grad.at(0, j) == doctest::Approx(want).epsilon(1e-12));
    }
    autodiff::release_graph(loss);
}

TEST_CASE("global norm clipping scales by min(1, max/norm)") {
    std::vector<Tensor2> grads;
    grads.push_back(Tensor2::from_rows({{30.0, 0.0}}));
    grads.push_back(Tensor2::from_rows({{0.0}, {40.0}}));
    const double factor = clip_global_norm(grads, 5.0); // norm 50
    CHECK(factor == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(grads[0].at(0, 0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(grads[1].at(1, 0) == doctest::Approx(4.0).epsilon(1e-12));

    std::vector<Tensor2> small;
    small.push_back(Tensor2::from_rows({{3.0, 4.0}})); // norm 5 == limit
    CHECK(clip_global_norm(small, 5.0) == 1.0);
    CHECK(small[0].at(0, 0) == 3.0);

    std::vector<Tensor2> zeros;
    zeros.push_back(Tensor2(2, 2));
    CHECK(clip_global_norm(zeros, 5.0) == 1.0);
    for (double v : zeros[0].data) CHECK(v == 0.0);
}

TEST_CASE("adam leaves params alone on zero gradients") {
    set_warning_sink([](const std::string&) {});
    const ModelConfig cfg = small_config();
    ModelParams p = init_params(cfg, 3);
    const ModelParams before = p;
    AdamState state = make_adam_state(p);
    std::vector<Tensor2> grads = zero_grads_like(p);
    TrainConfig tc;
    adam_step(p, grads, state, tc);
    CHECK(params_equal(p, before));
    CHECK(state.step == 1);
}

TEST_CASE("the first adam step moves a parameter by -lr * g / (|g| + eps)") {
    set_warning_sink([](const std::string&) {});
    const ModelConfig cfg = small_config();
    ModelParams p = alloc_params(cfg); // all zeros, so the delta is the new value
    AdamState state = make_adam_state(p);
    std::vector<Tensor2> grads = zero_grads_like(p);

    // grads index 16 is ws1 (16 LSTM tensors come first).
    const double g = 0.7;
    grads[16].at(0, 0) = g;

    TrainConfig tc;
    tc.learning_rate = 0.01;
    adam_step(p, grads, state, tc);

    const double want = -tc.learning_rate * g / (std::abs(g) + tc.adam_eps);
    CHECK(p.ws1.at(0, 0) == doctest::Approx(want).epsilon(1e-9));
    // everything else stays put
    CHECK(p.ws1.at(0, 1) == 0.0);
    CHECK(p.ws2.at(0, 0) == 0.0);
    CHECK(p.fwd.input.w.at(0, 0) == 0.0);
}

TEST_CASE("adam rejects malformed gradient sets") {
    set_warning_sink([](const std::string&) {});
    const ModelConfig cfg = small_config();
    ModelParams p = init_params(cfg, 5);
    AdamState state = make_adam_state(p);
    TrainConfig tc;

    std::vector<Tensor2> few(3, Tensor2(1, 1));
    CHECK_THROWS_AS(adam_step(p, few, state, tc), ContractError);

    std::vector<Tensor2> bad_shape = zero_grads_like(p);
    bad_shape[0] = Tensor2(1, 1);
    try {
        adam_step(p, bad_shape, state, tc);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("fwd.input.w") != std::string::npos);
    }

    std::vector<Tensor2> nan_grad = zero_grads_like(p);
    nan_grad[16].at(0, 0) = std::nan("");
    try {
        adam_step(p, nan_grad, state, tc);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("ws1") != std::string::npos);
    }
}

TEST_CASE("full-batch training drives the loss down every step") {
    set_warning_sink([](const std::string&) {});
    const Corpus corpus = marker_corpus(4); // 12 records
    auto provider = hash_embedder(16, 99);

    TrainConfig tc;
    tc.learning_rate = 0.01;
    tc.batch_size = 12;
    tc.epochs = 5;
    tc.seed = 11;
    tc.validation_fraction = 0.0;

    const TrainResult result = train(corpus, provider.get(), small_config(), tc);
    REQUIRE(result.metrics.size() == 5);

    // With one full batch per epoch, each reported loss is the loss at the
    // params produced by the previous step.
    CHECK(result.metrics[0].train_loss == doctest::Approx(std::log(3.0)).epsilon(0.3));
    for (std::size_t e = 1; e < result.metrics.size(); ++e) {
        CHECK(result.metrics[e].train_loss < result.metrics[e - 1].train_loss);
    }
    for (const EpochMetrics& m : result.metrics) CHECK_FALSE(m.val_acc.has_value());

    CHECK(result.checkpoint.meta.modality == "lyric");
    CHECK(result.checkpoint.meta.epochs_trained == 5);
    CHECK(result.checkpoint.meta.seed == 11);
    CHECK(result.checkpoint.meta.final_train_loss == result.metrics.back().train_loss);
    CHECK_FALSE(result.checkpoint.meta.final_val_acc.has_value());
    CHECK(result.checkpoint.labels.labels == corpus.labels.labels);
}

TEST_CASE("training is bitwise deterministic in the seed") {
    set_warning_sink([](const std::string&) {});
    const Corpus corpus = marker_corpus(4);
    auto provider = hash_embedder(16, 99);

    TrainConfig tc;
    tc.learning_rate = 0.01;
    tc.batch_size = 4;
    tc.epochs = 3;
    tc.seed = 21;
    tc.validation_fraction = 0.25;

    const TrainResult a = train(corpus, provider.get(), small_config(), tc);
    const TrainResult b = train(corpus, provider.get(), small_config(), tc);

    REQUIRE(a.metrics.size() == b.metrics.size());
    for (std::size_t e = 0; e < a.metrics.size(); ++e) {
        CHECK(a.metrics[e].train_loss == b.metrics[e].train_loss);
        CHECK(a.metrics[e].train_acc == b.metrics[e].train_acc);
        REQUIRE(a.metrics[e].val_acc.has_value());
        REQUIRE(b.metrics[e].val_acc.has_value());
        CHECK(*a.metrics[e].val_acc == *b.metrics[e].val_acc);
    }
    CHECK(params_equal(a.checkpoint.params, b.checkpoint.params));

    TrainConfig other = tc;
    other.seed = 22;
    const TrainResult c = train(corpus, provider.get(), small_config(), other);
    CHECK_FALSE(params_equal(a.checkpoint.params, c.checkpoint.params));
}

TEST_CASE("train rejects configs that cannot fit the corpus") {
    set_warning_sink([](const std::string&) {});
    const Corpus corpus = marker_corpus(2);
    auto provider = hash_embedder(16, 99);
    TrainConfig tc;
    tc.epochs = 1;

    ModelConfig wrong_classes = small_config();
    wrong_classes.n_classes = 2;
    CHECK_THROWS_AS(train(corpus, provider.get(), wrong_classes, tc), ConfigError);

    Corpus tiny;
    tiny.labels.labels = {"rock"};
    LyricRecord rec;
    rec.id = "short";
    rec.genre = "rock";
    rec.text = "too few words here";
    tiny.lyrics.push_back(rec);
    CHECK_THROWS_AS(train(tiny, provider.get(), small_config(), tc), ConfigError);

    TrainConfig bad = tc;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = tc;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = tc;
    bad.validation_fraction = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("compute_metrics fills accuracy, confusion, precision and recall") {
    const EvalResult perfect = compute_metrics({0, 1, 2, 0}, {0, 1, 2, 0}, 3);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.total == 4);
    CHECK(perfect.confusion[0][0] == 2);
    CHECK(perfect.confusion[1][1] == 1);
    CHECK(perfect.confusion[2][2] == 1);
    CHECK(perfect.confusion[0][1] == 0);
    for (int c = 0; c < 3; ++c) {
        CHECK(perfect.precision[c] == 1.0);
        CHECK(perfect.recall[c] == 1.0);
    }

    const EvalResult constant = compute_metrics({0, 0, 1, 1}, {0, 0, 0, 0}, 2);
    CHECK(constant.accuracy == 0.5);
    CHECK(constant.precision[0] == 0.5);
    CHECK(constant.precision[1] == 0.0); // class 1 never predicted
    CHECK(constant.recall[0] == 1.0);
    CHECK(constant.recall[1] == 0.0);
    CHECK(constant.confusion[0][0] == 2);
    CHECK(constant.confusion[1][0] == 2);
    // row sums equal per-class support
    CHECK(constant.confusion[0][0] + constant.confusion[0][1] == 2);
    CHECK(constant.confusion[1][0] + constant.confusion[1][1] == 2);

    CHECK_THROWS_AS(compute_metrics({0, 1}, {0}, 2), ContractError);
    CHECK_THROWS_AS(compute_metrics({0, 2}, {0, 0}, 2), ContractError);
}

TEST_CASE("evaluate checks modality and label coverage") {
    set_warning_sink([](const std::string&) {});
    const Corpus corpus = marker_corpus(2);
    auto provider = hash_embedder(16, 99);
    TrainConfig tc;
    tc.epochs = 1;
    tc.seed = 5;
    tc.validation_fraction = 0.0;
    const TrainResult result = train(corpus, provider.get(), small_config(), tc);

    const EvalResult eval = evaluate(result.checkpoint, corpus, provider.get());
    CHECK(eval.total == 6);
    CHECK(eval.accuracy >= 0.0);
    CHECK(eval.accuracy <= 1.0);

    Corpus unknown = corpus;
    unknown.labels.labels.push_back("jazz");
    LyricRecord rec = corpus.lyrics[0];
    rec.id = "stranger";
    rec.genre = "jazz";
    unknown.lyrics.push_back(rec);
    CHECK_THROWS_AS(evaluate(result.checkpoint, unknown, provider.get()), EvalError);

    Corpus audio;
    audio.labels.labels = {"rock"};
    AudioRecord a;
    a.id = "clip";
    a.genre = "rock";
    a.frames = Tensor2(30, 128);
    audio.audios.push_back(a);
    CHECK_THROWS_AS(evaluate(result.checkpoint, audio, nullptr), EvalError);
}

TEST_CASE("checkpoints survive a save/load round trip bitwise") {
    set_warning_sink([](const std::string&) {});
    TempDir tmp;
    const Corpus corpus = marker_corpus(2);
    auto provider = hash_embedder(16, 99);
    TrainConfig tc;
    tc.epochs = 2;
    tc.seed = 31;
    tc.batch_size = 3;
    tc.validation_fraction = 0.25;
    const TrainResult result = train(corpus, provider.get(), small_config(), tc);

    const std::string path = tmp.path("model.ckpt");
    save_checkpoint(result.checkpoint, path);
    const Checkpoint loaded = load_checkpoint(path);

    CHECK(params_equal(loaded.params, result.checkpoint.params));
    CHECK(loaded.config.seq_len == 80);
    CHECK(loaded.config.input_dim == 16);
    CHECK(loaded.config.hidden_units == 8);
    CHECK(loaded.config.attn_dim == 8);
    CHECK(loaded.config.attn_hops == 2);
    CHECK(loaded.config.n_classes == 3);
    CHECK(loaded.labels.labels == result.checkpoint.labels.labels);
    CHECK(loaded.meta.modality == "lyric");
    CHECK(loaded.meta.epochs_trained == 2);
    CHECK(loaded.meta.seed == 31);
    CHECK(loaded.meta.final_train_loss == result.checkpoint.meta.final_train_loss);
    CHECK(loaded.meta.final_train_acc == result.checkpoint.meta.final_train_acc);
    REQUIRE(loaded.meta.final_val_acc.has_value());
    CHECK(*loaded.meta.final_val_acc == *result.checkpoint.meta.final_val_acc);

    const EvalResult before = evaluate(result.checkpoint, corpus, provider.get());
    const EvalResult after = evaluate(loaded, corpus, provider.get());
    CHECK(before.accuracy == after.accuracy);
    CHECK(before.confusion == after.confusion);

    // save is idempotent: same checkpoint, same bytes
    const std::string path2 = tmp.path("model2.ckpt");
    save_checkpoint(result.checkpoint, path2);
    CHECK(read_bytes(path) == read_bytes(path2));
}

TEST_CASE("corrupt checkpoint files are rejected with the right errors") {
    set_warning_sink([](const std::string&) {});
    TempDir tmp;
    const Corpus corpus = marker_corpus(2);
    auto provider = hash_embedder(16, 99);
    TrainConfig tc;
    tc.epochs = 1;
    tc.seed = 41;
    tc.validation_fraction = 0.0;
    const TrainResult result = train(corpus, provider.get(), small_config(), tc);
    const std::string path = tmp.path("model.ckpt");
    save_checkpoint(result.checkpoint, path);
    const std::string good = read_bytes(path);

    const std::string truncated_path = tmp.path("truncated.ckpt");
    write_bytes(truncated_path, good.substr(0, good.size() - 5));
    CHECK_THROWS_AS(load_checkpoint(truncated_path), IntegrityError);

    std::string flipped = good;
    flipped[good.size() / 2] = static_cast<char>(flipped[good.size() / 2] ^ 0x5a);
    const std::string flipped_path = tmp.path("flipped.ckpt");
    write_bytes(flipped_path, flipped);
    CHECK_THROWS_AS(load_checkpoint(flipped_path), IntegrityError);

    // Wrong magic with a recomputed trailing checksum.
    std::string wrong_magic = good.substr(0, good.size() - 4);
    wrong_magic[0] = 'X';
    const std::uint32_t crc_m = crc32(wrong_magic.data(), wrong_magic.size());
    for (int i = 0; i < 4; ++i) {
        wrong_magic.push_back(static_cast<char>((crc_m >> (8 * i)) & 0xff));
    }
    const std::string magic_path = tmp.path("magic.ckpt");
    write_bytes(magic_path, wrong_magic);
    CHECK_THROWS_AS(load_checkpoint(magic_path), FormatError);

    // Future version with a recomputed trailing checksum.
    std::string newer = good.substr(0, good.size() - 4);
    newer[4] = 9; // little-endian version field right after the magic
    const std::uint32_t crc_v = crc32(newer.data(), newer.size());
    for (int i = 0; i < 4; ++i) {
        newer.push_back(static_cast<char>((crc_v >> (8 * i)) & 0xff));
    }
    const std::string version_path = tmp.path("newer.ckpt");
    write_bytes(version_path, newer);
    try {
        load_checkpoint(version_path);
        FAIL("expected VersionError");
    } catch (const VersionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("9") != std::string::npos);
        CHECK(msg.find("1") != std::string::npos);
    }

    CHECK_THROWS_AS(load_checkpoint(tmp.path("missing.ckpt")), ConfigError);
}

TEST_CASE("metrics lines are stable single-line JSON") {
    EpochMetrics m;
    m.epoch = 3;
    m.train_loss = 0.5;
    m.train_acc = 0.75;

    const std::string no_val = metrics_json_line(m);
    CHECK(no_val.find('\n') == std::string::npos);
    nlohmann::json j = nlohmann::json::parse(no_val);
    CHECK(j["epoch"] == 3);
    CHECK(j["train_loss"] == 0.5);
    CHECK(j["train_acc"] == 0.75);
    CHECK(j["val_acc"].is_null());

    m.val_acc = 0.9;
    nlohmann::json j2 = nlohmann::json::parse(metrics_json_line(m));
    CHECK(j2["val_acc"] == 0.9);
}
