#pragma once

#include <string>
#include <vector>

#include "sagc/ingest.hpp"
#include "sagc/train.hpp"

// Content-embedding store and exact cosine top-k retrieval. The store is
// a flat list scanned linearly; at the scale this runs at an index would
// be pointless.

namespace sagc {

struct StoreEntry {
    std::string id;
    std::string artist;
    std::string title;
    std::string genre;
    std::vector<double> vector;
};

struct EmbeddingStore {
    int dimension = 0;
    std::vector<StoreEntry> entries;

    // nullptr when absent.
    const StoreEntry* find(const std::string& id) const;
};

struct Match {
    std::string id;
    std::string artist;
    std::string title;
    std::string genre;
    double similarity = 0.0;
};

// a.b / (|a||b|). ShapeError on dimension mismatch, MetricError when
// either vector is all zeros.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// StoreError on a duplicate id, ShapeError when the vector's length
// differs from the store dimension.
void add(EmbeddingStore& store, StoreEntry entry);

// Binary store file: magic "SAGS", format version, dimension, entry
// count, then per entry a JSON metadata blob and the vector as
// little-endian doubles; CRC-32 at the end.
void save_store(const EmbeddingStore& store, const std::string& path);
EmbeddingStore load_store(const std::string& path);

// The k most cosine-similar entries, exact, ordered by descending
// similarity with ties broken by ascending id. k past the store size
// returns everything ranked. exclude_id drops that entry (for "songs like
// this one" queries). ContractError on k < 1 or an empty store.
std::vector<Match> top_k(const EmbeddingStore& store, const std::vector<double>& query, int k,
                         const std::string& exclude_id = "");

// One entry per admitted record, vector = the record's content embedding
// under the checkpointed model. ConfigError when the corpus modality does
// not match the checkpoint or admission leaves nothing.
EmbeddingStore build_store(const Checkpoint& checkpoint, const Corpus& corpus,
                           const EmbeddingProvider* provider);

} // namespace sagc
