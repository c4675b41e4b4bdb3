#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sagc/binio.hpp"
#include "sagc/errors.hpp"
#include "sagc/explain.hpp"
#include "sagc/ingest.hpp"
#include "sagc/model.hpp"
#include "sagc/retrieve.hpp"
#include "sagc/train.hpp"

// Subcommands: train, classify, explain, embed, similar, ingest-check.
// Machine-readable output is JSON per line on stdout; diagnostics go to
// stderr (silenced by --quiet). Exit codes: 0 ok, 2 configuration or
// usage, 3 data or format, 4 training failure.

namespace {

using nlohmann::json;
using namespace sagc;

bool g_quiet = false;

void diag(const std::string& msg) {
    if (!g_quiet) std::cerr << msg << "\n";
}

void require_file(const std::string& path, const char* what) {
    if (!std::filesystem::exists(path)) {
        throw ConfigError(std::string(what) + " not found: " + path);
    }
}

// Option values land here only when the flag was actually given, so file
// and default values can fill the gaps (precedence flags > file > defaults).
struct Flags {
    std::optional<std::string> corpus, embeddings, checkpoint, store, metrics, out, id, format;
    std::optional<int> seq_len, input_dim, hidden_units, attn_dim, attn_hops;
    std::optional<int> batch_size, epochs, k;
    std::optional<double> learning_rate, grad_clip_norm, validation_fraction;
};

class RunConfig {
public:
    RunConfig(const std::string& config_path, const Flags& flags) : flags_(flags) {
        if (config_path.empty()) {
            file_ = json::object();
            return;
        }
        require_file(config_path, "config file");
        std::ifstream in(config_path);
        try {
            file_ = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError(config_path + ": " + e.what());
        }
        if (!file_.is_object()) {
            throw ConfigError(config_path + ": config must be a JSON object of flat keys");
        }
    }

    template <typename T>
    T get(const std::string& key, const std::optional<T>& flag, T fallback) const {
        const std::optional<T> v = get_opt(key, flag);
        return v ? *v : fallback;
    }

    template <typename T>
    std::optional<T> get_opt(const std::string& key, const std::optional<T>& flag) const {
        if (flag) return flag;
        if (file_.contains(key)) {
            try {
                return file_.at(key).get<T>();
            } catch (const json::exception&) {
                throw ConfigError("config key \"" + key + "\" has the wrong type");
            }
        }
        return std::nullopt;
    }

    std::string need(const std::string& key, const std::optional<std::string>& flag,
                     const char* what) const {
        const std::optional<std::string> v = get_opt(key, flag);
        if (!v || v->empty()) {
            throw ConfigError(std::string("no ") + what + " given (flag --" + key +
                              " or config key \"" + key + "\")");
        }
        return *v;
    }

    const Flags& flags() const { return flags_; }

private:
    json file_;
    Flags flags_;
};

std::uint64_t resolve_seed(const RunConfig& cfg, const std::optional<std::uint64_t>& seed_flag) {
    return cfg.get<std::uint64_t>("seed", seed_flag, 0);
}

// Hash-embedder seed for commands running against an existing checkpoint:
// an explicit seed wins, otherwise the one the model was trained with, so
// classify/explain/embed see the same token vectors training saw.
std::uint64_t provider_seed(const RunConfig& cfg, const std::optional<std::uint64_t>& seed_flag,
                            const Checkpoint& ckpt) {
    const std::optional<std::uint64_t> v = cfg.get_opt<std::uint64_t>("seed", seed_flag);
    return v ? *v : ckpt.meta.seed;
}

std::unique_ptr<EmbeddingProvider> make_provider(Modality modality, const RunConfig& cfg,
                                                 int dim, std::uint64_t seed) {
    if (modality != Modality::lyric) return nullptr;
    const std::optional<std::string> table = cfg.get_opt("embeddings", cfg.flags().embeddings);
    if (table) {
        require_file(*table, "embedding table");
        return load_embedding_table(*table);
    }
    diag("no embedding table given; using the seeded hash embedder (dim " +
         std::to_string(dim) + ", seed " + std::to_string(seed) + ")");
    return hash_embedder(dim, seed);
}

Corpus load_corpus_checked(const RunConfig& cfg) {
    const std::string path = cfg.need("corpus", cfg.flags().corpus, "corpus path");
    require_file(path, "corpus");
    return load_corpus(path);
}

Checkpoint load_checkpoint_checked(const RunConfig& cfg) {
    const std::string path = cfg.need("checkpoint", cfg.flags().checkpoint, "checkpoint path");
    require_file(path, "checkpoint");
    return load_checkpoint(path);
}

void check_modality(const Corpus& corpus, const Checkpoint& ckpt) {
    if (to_string(corpus.modality()) != ckpt.meta.modality) {
        throw ConfigError("corpus modality " + to_string(corpus.modality()) +
                          " does not match checkpoint modality " + ckpt.meta.modality);
    }
}

const LyricRecord* find_lyric(const Corpus& corpus, const std::string& id) {
    for (const LyricRecord& r : corpus.lyrics) {
        if (r.id == id) return &r;
    }
    return nullptr;
}

const AudioRecord* find_audio(const Corpus& corpus, const std::string& id) {
    for (const AudioRecord& r : corpus.audios) {
        if (r.id == id) return &r;
    }
    return nullptr;
}

json classification_line(const std::string& id, const Tensor2& logits, const LabelSet& labels) {
    const Tensor2 probs = softmax_rows(logits);
    int best = 0;
    json p = json::object();
    for (int j = 0; j < probs.cols; ++j) {
        p[labels.labels[static_cast<std::size_t>(j)]] = probs.at(0, j);
        if (probs.at(0, j) > probs.at(0, best)) best = j;
    }
    json line;
    line["id"] = id;
    line["predicted_genre"] = labels.labels[static_cast<std::size_t>(best)];
    line["probabilities"] = std::move(p);
    return line;
}

int cmd_train(const RunConfig& cfg, const std::optional<std::uint64_t>& seed_flag) {
    const Flags& fl = cfg.flags();
    const std::string out = cfg.need("checkpoint", fl.checkpoint, "checkpoint output path");
    const Corpus corpus = load_corpus_checked(cfg);
    const Modality modality = corpus.modality();
    const std::uint64_t seed = resolve_seed(cfg, seed_flag);

    ModelConfig mc = modality == Modality::lyric
                         ? ModelConfig::lyric_default(corpus.labels.size())
                         : ModelConfig::audio_default(corpus.labels.size());
    mc.seq_len = cfg.get("seq_len", fl.seq_len, mc.seq_len);
    mc.hidden_units = cfg.get("hidden_units", fl.hidden_units, mc.hidden_units);
    mc.attn_dim = cfg.get("attn_dim", fl.attn_dim, mc.attn_dim);
    mc.attn_hops = cfg.get("attn_hops", fl.attn_hops, mc.attn_hops);

    std::unique_ptr<EmbeddingProvider> provider;
    const std::optional<int> input_dim = cfg.get_opt("input_dim", fl.input_dim);
    if (input_dim) mc.input_dim = *input_dim;
    if (modality == Modality::lyric) {
        provider = make_provider(modality, cfg, mc.input_dim, seed);
        if (!input_dim) mc.input_dim = provider->dimension();
    }

    TrainConfig tc;
    tc.learning_rate = cfg.get("learning_rate", fl.learning_rate, tc.learning_rate);
    tc.batch_size = cfg.get("batch_size", fl.batch_size, tc.batch_size);
    tc.epochs = cfg.get("epochs", fl.epochs, tc.epochs);
    tc.grad_clip_norm = cfg.get("grad_clip_norm", fl.grad_clip_norm, tc.grad_clip_norm);
    tc.validation_fraction =
        cfg.get("validation_fraction", fl.validation_fraction, tc.validation_fraction);
    tc.seed = seed;

    std::string metrics_lines;
    const TrainResult result =
        train(corpus, provider.get(), mc, tc, [&](const EpochMetrics& m) {
            const std::string line = metrics_json_line(m);
            std::cout << line << "\n" << std::flush;
            metrics_lines += line;
            metrics_lines += '\n';
        });

    save_checkpoint(result.checkpoint, out);
    diag("wrote checkpoint to " + out);
    const std::optional<std::string> metrics_path = cfg.get_opt("metrics", fl.metrics);
    if (metrics_path) {
        atomic_write_file(*metrics_path, metrics_lines);
        diag("wrote metrics to " + *metrics_path);
    }
    return 0;
}

int cmd_classify(const RunConfig& cfg, const std::optional<std::uint64_t>& seed_flag) {
    const Checkpoint ckpt = load_checkpoint_checked(cfg);
    const Corpus corpus = load_corpus_checked(cfg);
    check_modality(corpus, ckpt);
    const Modality modality = corpus.modality();
    std::unique_ptr<EmbeddingProvider> provider =
        make_provider(modality, cfg, ckpt.config.input_dim, provider_seed(cfg, seed_flag, ckpt));

    auto classify_lyric = [&](const LyricRecord& rec) {
        const Admission adm = admit_lyric(rec);
        if (!adm.accepted) {
            throw CorpusError("record " + rec.id + " rejected: " + adm.reason);
        }
        const EmbeddedSequence seq = embed_lyric(tokenize(rec.text), *provider,
                                                 ckpt.config.seq_len, ckpt.config.input_dim);
        const ForwardOutput out = classify_forward(seq, ckpt.params, ckpt.config);
        std::cout << classification_line(rec.id, out.logits, ckpt.labels).dump() << "\n";
    };
    auto classify_audio = [&](const AudioRecord& rec) {
        const Admission adm = admit_audio(rec);
        if (!adm.accepted) {
            throw CorpusError("record " + rec.id + " rejected: " + adm.reason);
        }
        const EmbeddedSequence seq = embed_audio(rec, ckpt.config.seq_len);
        const ForwardOutput out = classify_forward(seq, ckpt.params, ckpt.config);
        std::cout << classification_line(rec.id, out.logits, ckpt.labels).dump() << "\n";
    };

    const std::optional<std::string> id = cfg.get_opt("id", cfg.flags().id);
    if (id) {
        if (modality == Modality::lyric) {
            const LyricRecord* rec = find_lyric(corpus, *id);
            if (!rec) throw CorpusError("no record with id " + *id + " in the corpus");
            classify_lyric(*rec);
        } else {
            const AudioRecord* rec = find_audio(corpus, *id);
            if (!rec) throw CorpusError("no record with id " + *id + " in the corpus");
            classify_audio(*rec);
        }
        return 0;
    }

    if (modality == Modality::lyric) {
        for (const LyricRecord& rec : corpus.lyrics) {
            const Admission adm = admit_lyric(rec);
            if (!adm.accepted) {
                diag("skipping " + rec.id + ": " + adm.reason);
                continue;
            }
            classify_lyric(rec);
        }
    } else {
        for (const AudioRecord& rec : corpus.audios) {
            const Admission adm = admit_audio(rec);
            if (!adm.accepted) {
                diag("skipping " + rec.id + ": " + adm.reason);
                continue;
            }
            classify_audio(rec);
        }
    }
    return 0;
}

int cmd_explain(const RunConfig& cfg, const std::optional<std::uint64_t>& seed_flag) {
    const Flags& fl = cfg.flags();
    const std::string format = cfg.get<std::string>("format", fl.format, "text");
    if (format != "text" && format != "html" && format != "csv") {
        throw ConfigError("unknown format \"" + format + "\" (expected text, html, or csv)");
    }
    const Checkpoint ckpt = load_checkpoint_checked(cfg);
    if (format == "csv" && ckpt.meta.modality != to_string(Modality::audio)) {
        throw ConfigError("csv output is only defined for audio checkpoints");
    }
    const std::optional<std::string> out = cfg.get_opt("out", fl.out);
    if (format != "text" && !out) {
        throw ConfigError("--out is required for " + format + " output");
    }

    const Corpus corpus = load_corpus_checked(cfg);
    check_modality(corpus, ckpt);
    const std::string id = cfg.need("id", fl.id, "record id");

    ExplanationReport report;
    if (corpus.modality() == Modality::lyric) {
        const LyricRecord* rec = find_lyric(corpus, id);
        if (!rec) throw CorpusError("no record with id " + id + " in the corpus");
        std::unique_ptr<EmbeddingProvider> provider = make_provider(
            Modality::lyric, cfg, ckpt.config.input_dim, provider_seed(cfg, seed_flag, ckpt));
        report = explain(ckpt, *rec, *provider);
    } else {
        const AudioRecord* rec = find_audio(corpus, id);
        if (!rec) throw CorpusError("no record with id " + id + " in the corpus");
        report = explain(ckpt, *rec);
    }

    std::string rendered;
    if (format == "text") {
        rendered = render_text_heatmap(report);
        std::cout << rendered << "\n";
    } else if (format == "html") {
        rendered = render_html(report);
    } else {
        rendered = render_audio_csv(report);
    }
    if (out) {
        atomic_write_file(*out, rendered);
        diag("wrote " + format + " explanation to " + *out);
    }
    return 0;
}

int cmd_embed(const RunConfig& cfg, const std::optional<std::uint64_t>& seed_flag) {
    const std::string out = cfg.need("store", cfg.flags().store, "store output path");
    const Checkpoint ckpt = load_checkpoint_checked(cfg);
    const Corpus corpus = load_corpus_checked(cfg);
    check_modality(corpus, ckpt);
    std::unique_ptr<EmbeddingProvider> provider = make_provider(
        corpus.modality(), cfg, ckpt.config.input_dim, provider_seed(cfg, seed_flag, ckpt));

    const EmbeddingStore store = build_store(ckpt, corpus, provider.get());
    save_store(store, out);
    diag("wrote " + std::to_string(store.entries.size()) + " embeddings to " + out);
    return 0;
}

int cmd_similar(const RunConfig& cfg) {
    const Flags& fl = cfg.flags();
    const std::string path = cfg.need("store", fl.store, "store path");
    require_file(path, "store");
    const EmbeddingStore store = load_store(path);
    const std::string id = cfg.need("id", fl.id, "query id");
    const int k = cfg.get("k", fl.k, 4);

    const StoreEntry* entry = store.find(id);
    if (!entry) throw StoreError("no entry with id " + id + " in the store");
    const std::vector<Match> matches = top_k(store, entry->vector, k, id);
    for (std::size_t i = 0; i < matches.size(); ++i) {
        const Match& m = matches[i];
        json line;
        line["rank"] = i + 1;
        line["id"] = m.id;
        line["artist"] = m.artist;
        line["title"] = m.title;
        line["genre"] = m.genre;
        line["similarity"] = m.similarity;
        std::cout << line.dump() << "\n";
    }
    return 0;
}

int cmd_ingest_check(const RunConfig& cfg) {
    const Corpus corpus = load_corpus_checked(cfg);
    const Modality modality = corpus.modality();
    json rejections = json::array();
    int admitted = 0, total = 0;
    auto tally = [&](const std::string& id, const Admission& adm) {
        ++total;
        if (adm.accepted) {
            ++admitted;
        } else {
            rejections.push_back({{"id", id}, {"reason", adm.reason}});
        }
    };
    if (modality == Modality::lyric) {
        for (const LyricRecord& r : corpus.lyrics) tally(r.id, admit_lyric(r));
    } else {
        for (const AudioRecord& r : corpus.audios) tally(r.id, admit_audio(r));
    }
    json summary;
    summary["modality"] = to_string(modality);
    summary["labels"] = corpus.labels.labels;
    summary["total"] = total;
    summary["admitted"] = admitted;
    summary["rejected"] = total - admitted;
    summary["rejections"] = std::move(rejections);
    std::cout << summary.dump() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-attentive genre classification over embedded song sequences"};
    app.fallthrough();
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed_flag;
    app.add_option("--config", config_path, "JSON config file of flat keys");
    app.add_option("--seed", seed_flag, "RNG seed (overrides the config file)");
    app.add_flag("--quiet", g_quiet, "suppress diagnostics on stderr");

    Flags fl;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--corpus", fl.corpus, "corpus JSONL path");
        cmd->add_option("--embeddings", fl.embeddings, "embedding table path");
        cmd->add_option("--checkpoint", fl.checkpoint, "checkpoint path");
    };

    CLI::App* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
    add_common(train_cmd);
    train_cmd->add_option("--out", fl.checkpoint, "checkpoint output path (alias)");
    train_cmd->add_option("--metrics", fl.metrics, "also write per-epoch metrics JSONL here");
    train_cmd->add_option("--seq_len", fl.seq_len, "sequence length L");
    train_cmd->add_option("--input_dim", fl.input_dim, "embedding dimension d");
    train_cmd->add_option("--hidden_units", fl.hidden_units, "LSTM units per direction u");
    train_cmd->add_option("--attn_dim", fl.attn_dim, "attention hidden size d_a");
    train_cmd->add_option("--attn_hops", fl.attn_hops, "attention hops r");
    train_cmd->add_option("--learning_rate", fl.learning_rate, "Adam learning rate");
    train_cmd->add_option("--batch_size", fl.batch_size, "mini-batch size");
    train_cmd->add_option("--epochs", fl.epochs, "training epochs");
    train_cmd->add_option("--grad_clip_norm", fl.grad_clip_norm, "global gradient norm cap");
    train_cmd->add_option("--validation_fraction", fl.validation_fraction,
                          "held-out fraction for per-epoch validation accuracy");

    CLI::App* classify_cmd =
        app.add_subcommand("classify", "predict genres with class probabilities");
    add_common(classify_cmd);
    classify_cmd->add_option("--id", fl.id, "classify only this record");

    CLI::App* explain_cmd =
        app.add_subcommand("explain", "render attention weights for one record");
    add_common(explain_cmd);
    explain_cmd->add_option("--id", fl.id, "record to explain");
    explain_cmd->add_option("--format", fl.format, "text, html, or csv (default text)");
    explain_cmd->add_option("--out", fl.out, "output file (required for html/csv)");

    CLI::App* embed_cmd =
        app.add_subcommand("embed", "write every admitted record's content embedding");
    add_common(embed_cmd);
    embed_cmd->add_option("--store,--out", fl.store, "embedding store output path");

    CLI::App* similar_cmd = app.add_subcommand("similar", "top-k similar songs for a query id");
    similar_cmd->add_option("--store", fl.store, "embedding store path");
    similar_cmd->add_option("--id", fl.id, "query id (excluded from its own results)");
    similar_cmd->add_option("-k,--k", fl.k, "result count (default 4)");

    CLI::App* ingest_cmd =
        app.add_subcommand("ingest-check", "validate a corpus and print admission statistics");
    ingest_cmd->add_option("--corpus", fl.corpus, "corpus JSONL path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (g_quiet) {
        set_warning_sink([](const std::string&) {});
    }

    try {
        const RunConfig cfg(config_path, fl);
        if (train_cmd->parsed()) return cmd_train(cfg, seed_flag);
        if (classify_cmd->parsed()) return cmd_classify(cfg, seed_flag);
        if (explain_cmd->parsed()) return cmd_explain(cfg, seed_flag);
        if (embed_cmd->parsed()) return cmd_embed(cfg, seed_flag);
        if (similar_cmd->parsed()) return cmd_similar(cfg);
        if (ingest_cmd->parsed()) return cmd_ingest_check(cfg);
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const TrainingError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
