#include "sagc/retrieve.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <json.hpp>

#include "sagc/binio.hpp"
#include "sagc/errors.hpp"
#include "sagc/kernels.hpp"
#include "sagc/model.hpp"

namespace sagc {

using nlohmann::json;

namespace {

constexpr char kStoreMagic[4] = {'S', 'A', 'G', 'S'};
constexpr std::uint32_t kStoreVersion = 1;

} // namespace

const StoreEntry* EmbeddingStore::find(const std::string& id) const {
    for (const StoreEntry& e : entries) {
        if (e.id == id) return &e;
    }
    return nullptr;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw ShapeError("cosine_similarity: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + " dimensions");
    }
    const kernels::Ops& ops = kernels::active();
    const double na = ops.dot(a.data(), a.data(), a.size());
    const double nb = ops.dot(b.data(), b.data(), b.size());
    if (na == 0.0 || nb == 0.0) {
        throw MetricError("cosine_similarity: zero vector has no direction");
    }
    return ops.dot(a.data(), b.data(), a.size()) / (std::sqrt(na) * std::sqrt(nb));
}

void add(EmbeddingStore& store, StoreEntry entry) {
    if (static_cast<int>(entry.vector.size()) != store.dimension) {
        throw ShapeError("store holds " + std::to_string(store.dimension) +
                         "-d vectors, got " + std::to_string(entry.vector.size()) + "-d for " +
                         entry.id);
    }
    if (store.find(entry.id) != nullptr) {
        throw StoreError("duplicate id " + entry.id);
    }
    store.entries.push_back(std::move(entry));
}

void save_store(const EmbeddingStore& store, const std::string& path) {
    ByteWriter w;
    w.bytes(kStoreMagic, sizeof(kStoreMagic));
    w.u32(kStoreVersion);
    w.u32(static_cast<std::uint32_t>(store.dimension));
    w.u64(store.entries.size());
    for (const StoreEntry& e : store.entries) {
        json meta;
        meta["id"] = e.id;
        meta["artist"] = e.artist;
        meta["title"] = e.title;
        meta["genre"] = e.genre;
        w.str(meta.dump());
        for (double v : e.vector) w.f64(v);
    }
    w.finish_to_file(path);
}

EmbeddingStore load_store(const std::string& path) {
    ByteReader r = ByteReader::checked_file(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kStoreMagic, 4) != 0) {
        throw FormatError(path + ": not an embedding store (bad magic)");
    }
    const std::uint32_t version = r.u32();
    if (version != kStoreVersion) {
        throw VersionError(path + ": store format version " + std::to_string(version) +
                           ", this build reads version " + std::to_string(kStoreVersion));
    }
    EmbeddingStore store;
    store.dimension = static_cast<int>(r.u32());
    const std::uint64_t count = r.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
        StoreEntry e;
        try {
            const json meta = json::parse(r.str());
            e.id = meta.at("id").get<std::string>();
            e.artist = meta.at("artist").get<std::string>();
            e.title = meta.at("title").get<std::string>();
            e.genre = meta.at("genre").get<std::string>();
        } catch (const json::exception& ex) {
            throw IntegrityError(path + ": entry " + std::to_string(i) +
                                 " metadata is invalid: " + ex.what());
        }
        e.vector.resize(static_cast<std::size_t>(store.dimension));
        for (double& v : e.vector) v = r.f64();
        add(store, std::move(e));
    }
    if (r.remaining() != 0) {
        throw IntegrityError(path + ": trailing bytes after the last entry");
    }
    return store;
}

std::vector<Match> top_k(const EmbeddingStore& store, const std::vector<double>& query, int k,
                         const std::string& exclude_id) {
    if (k < 1) throw ContractError("top_k: k must be at least 1, got " + std::to_string(k));
    if (store.entries.empty()) throw ContractError("top_k: the store is empty");

    std::vector<Match> matches;
    matches.reserve(store.entries.size());
    for (const StoreEntry& e : store.entries) {
        if (!exclude_id.empty() && e.id == exclude_id) continue;
        Match m;
        m.id = e.id;
        m.artist = e.artist;
        m.title = e.title;
        m.genre = e.genre;
        m.similarity = cosine_similarity(query, e.vector);
        matches.push_back(std::move(m));
    }
    std::sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.id < b.id;
    });
    if (static_cast<int>(matches.size()) > k) {
        matches.resize(static_cast<std::size_t>(k));
    }
    return matches;
}

EmbeddingStore build_store(const Checkpoint& checkpoint, const Corpus& corpus,
                           const EmbeddingProvider* provider) {
    const Modality modality = corpus.modality();
    if (to_string(modality) != checkpoint.meta.modality) {
        throw ConfigError("corpus modality " + to_string(modality) +
                          " does not match checkpoint modality " + checkpoint.meta.modality);
    }

    EmbeddingStore store;
    store.dimension = checkpoint.config.content_dim();

    auto add_record = [&](const std::string& id, const std::string& artist,
                          const std::string& title, const std::string& genre,
                          const EmbeddedSequence& seq) {
        const ForwardOutput out = classify_forward(seq, checkpoint.params, checkpoint.config);
        StoreEntry e;
        e.id = id;
        e.artist = artist;
        e.title = title;
        e.genre = genre;
        e.vector = out.content.data;
        add(store, std::move(e));
    };

    if (modality == Modality::lyric) {
        if (provider == nullptr) throw ConfigError("lyric corpus needs an embedding provider");
        for (const LyricRecord& rec : corpus.lyrics) {
            if (!admit_lyric(rec).accepted) continue;
            const EmbeddedSequence seq =
                embed_lyric(tokenize(rec.text), *provider, checkpoint.config.seq_len,
                            checkpoint.config.input_dim);
            add_record(rec.id, rec.artist, rec.title, rec.genre, seq);
        }
    } else {
        for (const AudioRecord& rec : corpus.audios) {
            if (!admit_audio(rec).accepted) continue;
            add_record(rec.id, rec.artist, rec.title, rec.genre,
                       embed_audio(rec, checkpoint.config.seq_len));
        }
    }
    if (store.entries.empty()) {
        throw ConfigError("no records survive the admission filters; the store would be empty");
    }
    return store;
}

} // namespace sagc
