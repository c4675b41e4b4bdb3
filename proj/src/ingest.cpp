#include "sagc/ingest.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "sagc/binio.hpp"
#include "sagc/errors.hpp"
#include "sagc/rng.hpp"

namespace sagc {

using nlohmann::json;

std::string to_string(Modality m) {
    return m == Modality::lyric ? "lyric" : "audio";
}

int LabelSet::index_of(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == label) return static_cast<int>(i);
    }
    return -1;
}

Modality Corpus::modality() const {
    if (lyrics.empty() && audios.empty()) {
        throw ConfigError("corpus holds no records");
    }
    if (has_both()) {
        throw ConfigError("corpus mixes lyric and audio records; one modality expected");
    }
    return lyrics.empty() ? Modality::audio : Modality::lyric;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string word;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c == '\'') {
            word += static_cast<char>(std::tolower(c));
        } else if (!word.empty()) {
            tokens.push_back(word);
            word.clear();
        }
    }
    if (!word.empty()) tokens.push_back(word);
    return tokens;
}

Admission admit_lyric(const LyricRecord& record) {
    const auto count = tokenize(record.text).size();
    if (count < static_cast<std::size_t>(kMinLyricTokens)) {
        return {false, "too_short: " + std::to_string(count) + " words < " +
                           std::to_string(kMinLyricTokens)};
    }
    return {true, ""};
}

Admission admit_audio(const AudioRecord& record) {
    if (record.frames.rows < kMinAudioFrames) {
        return {false, "too_short: " + std::to_string(record.frames.rows) + " seconds < " +
                           std::to_string(kMinAudioFrames)};
    }
    return {true, ""};
}

EmbeddedSequence embed_lyric(const std::vector<std::string>& tokens,
                             const EmbeddingProvider& provider, int seq_len,
                             int expect_dim) {
    if (provider.dimension() != expect_dim) {
        throw ConfigError("embedding provider dimension " +
                          std::to_string(provider.dimension()) + " does not match expected " +
                          std::to_string(expect_dim));
    }
    EmbeddedSequence seq;
    seq.modality = Modality::lyric;
    seq.matrix = Tensor2(seq_len, expect_dim);
    const int used = std::min<int>(static_cast<int>(tokens.size()), seq_len);
    for (int t = 0; t < used; ++t) {
        if (auto vec = provider.lookup(tokens[t])) {
            for (int j = 0; j < expect_dim; ++j) seq.matrix.at(t, j) = (*vec)[j];
        }
        // OOV rows stay zero; valid_len still counts them.
    }
    seq.valid_len = used;
    return seq;
}

EmbeddedSequence embed_audio(const AudioRecord& record, int seq_len) {
    if (record.frames.cols != kEmbeddingDim) {
        throw FormatError("audio frames are " + std::to_string(record.frames.cols) +
                          " wide, expected " + std::to_string(kEmbeddingDim));
    }
    EmbeddedSequence seq;
    seq.modality = Modality::audio;
    seq.matrix = Tensor2(seq_len, kEmbeddingDim);
    const int used = std::min(record.frames.rows, seq_len);
    for (int t = 0; t < used; ++t) {
        for (int j = 0; j < kEmbeddingDim; ++j) seq.matrix.at(t, j) = record.frames.at(t, j);
    }
    seq.valid_len = used;
    return seq;
}

namespace {

class TableEmbedder final : public EmbeddingProvider {
public:
    TableEmbedder(int dim, std::unordered_map<std::string, std::vector<double>> table)
        : dim_(dim), table_(std::move(table)) {}

    int dimension() const override { return dim_; }

    std::optional<std::vector<double>> lookup(const std::string& token) const override {
        auto it = table_.find(token);
        if (it == table_.end()) return std::nullopt;
        return it->second;
    }

private:
    int dim_;
    std::unordered_map<std::string, std::vector<double>> table_;
};

class HashEmbedder final : public EmbeddingProvider {
public:
    HashEmbedder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}

    int dimension() const override { return dim_; }

    std::optional<std::vector<double>> lookup(const std::string& token) const override {
        // FNV-1a over the token bytes, mixed with the embedder seed, drives
        // a splitmix stream; the resulting gaussian vector is normalized.
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : token) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        Rng rng(h ^ (seed_ * 0x9e3779b97f4a7c15ULL));
        std::vector<double> v(dim_);
        double norm_sq = 0.0;
        for (double& x : v) {
            x = rng.next_gauss();
            norm_sq += x * x;
        }
        const double norm = std::sqrt(norm_sq);
        if (norm > 0.0) {
            for (double& x : v) x /= norm;
        } else {
            v[0] = 1.0;
        }
        return v;
    }

private:
    int dim_;
    std::uint64_t seed_;
};

[[noreturn]] void parse_fail(const std::string& path, std::size_t line_no,
                             const std::string& what) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": " + what);
}

std::string require_string(const json& obj, const char* key, const std::string& path,
                           std::size_t line_no) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) {
        parse_fail(path, line_no, std::string("missing or non-string field \"") + key + "\"");
    }
    return it->get<std::string>();
}

} // namespace

std::unique_ptr<EmbeddingProvider> load_embedding_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open embedding table: " + path);

    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(in, line)) parse_fail(path, 1, "empty file, expected \"DIM <d>\" header");
    ++line_no;
    int dim = 0;
    {
        std::istringstream header(line);
        std::string tag;
        header >> tag >> dim;
        if (tag != "DIM" || dim < 1) {
            parse_fail(path, line_no, "expected header \"DIM <d>\", got \"" + line + "\"");
        }
    }

    std::unordered_map<std::string, std::vector<double>> table;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            parse_fail(path, line_no, "expected token<TAB>values");
        }
        const std::string token = line.substr(0, tab);
        std::istringstream values(line.substr(tab + 1));
        std::vector<double> vec(dim);
        for (int j = 0; j < dim; ++j) {
            if (!(values >> vec[j])) {
                parse_fail(path, line_no, "expected " + std::to_string(dim) +
                                              " values for token \"" + token + "\"");
            }
        }
        double extra;
        if (values >> extra) {
            parse_fail(path, line_no, "more than " + std::to_string(dim) +
                                          " values for token \"" + token + "\"");
        }
        table[token] = std::move(vec);
    }
    return std::make_unique<TableEmbedder>(dim, std::move(table));
}

std::unique_ptr<EmbeddingProvider> hash_embedder(int dimension, std::uint64_t seed) {
    if (dimension < 1) throw ConfigError("hash embedder dimension must be positive");
    return std::make_unique<HashEmbedder>(dimension, seed);
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open corpus: " + path);

    Corpus corpus;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;

        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            parse_fail(path, line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!obj.is_object()) parse_fail(path, line_no, "expected a JSON object");

        if (!have_header) {
            auto it = obj.find("labels");
            if (it == obj.end() || !it->is_array()) {
                parse_fail(path, line_no, "first line must be the {\"labels\":[...]} header");
            }
            for (const auto& l : *it) {
                if (!l.is_string()) parse_fail(path, line_no, "labels must be strings");
                const std::string label = l.get<std::string>();
                if (corpus.labels.index_of(label) >= 0) {
                    throw CorpusError(path + ": duplicate label \"" + label + "\"");
                }
                corpus.labels.labels.push_back(label);
            }
            if (corpus.labels.labels.empty()) parse_fail(path, line_no, "label set is empty");
            have_header = true;
            continue;
        }

        const std::string id = require_string(obj, "id", path, line_no);
        if (id.empty()) parse_fail(path, line_no, "record id is empty");
        if (!seen_ids.insert(id).second) {
            throw CorpusError(path + ": duplicate record id \"" + id + "\"");
        }
        const std::string genre = require_string(obj, "genre", path, line_no);
        if (corpus.labels.index_of(genre) < 0) {
            throw CorpusError(path + ": record \"" + id + "\" has genre \"" + genre +
                              "\" not in the declared label set");
        }
        const std::string artist = require_string(obj, "artist", path, line_no);
        const std::string title = require_string(obj, "title", path, line_no);

        if (obj.contains("text")) {
            LyricRecord rec{id, artist, title, genre,
                            require_string(obj, "text", path, line_no)};
            corpus.lyrics.push_back(std::move(rec));
        } else if (obj.contains("frames")) {
            const auto& frames = obj["frames"];
            if (!frames.is_array() || frames.empty()) {
                parse_fail(path, line_no, "\"frames\" must be a non-empty array of rows");
            }
            const int rows = static_cast<int>(frames.size());
            Tensor2 m(rows, kEmbeddingDim);
            for (int i = 0; i < rows; ++i) {
                const auto& row = frames[i];
                if (!row.is_array() || static_cast<int>(row.size()) != kEmbeddingDim) {
                    parse_fail(path, line_no,
                               "frame row " + std::to_string(i) + " must hold " +
                                   std::to_string(kEmbeddingDim) + " numbers");
                }
                for (int j = 0; j < kEmbeddingDim; ++j) {
                    if (!row[j].is_number()) {
                        parse_fail(path, line_no, "frame values must be numbers");
                    }
                    m.at(i, j) = row[j].get<double>();
                }
            }
            corpus.audios.push_back(AudioRecord{id, artist, title, genre, std::move(m)});
        } else {
            parse_fail(path, line_no, "record has neither \"text\" nor \"frames\"");
        }
    }
    if (!have_header) {
        throw ParseError(path + ": empty corpus, expected a {\"labels\":[...]} header");
    }
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ostringstream out;
    json header;
    header["labels"] = corpus.labels.labels;
    out << header.dump() << "\n";
    for (const auto& r : corpus.lyrics) {
        json obj;
        obj["id"] = r.id;
        obj["artist"] = r.artist;
        obj["title"] = r.title;
        obj["genre"] = r.genre;
        obj["text"] = r.text;
        out << obj.dump() << "\n";
    }
    for (const auto& r : corpus.audios) {
        json obj;
        obj["id"] = r.id;
        obj["artist"] = r.artist;
        obj["title"] = r.title;
        obj["genre"] = r.genre;
        json rows = json::array();
        for (int i = 0; i < r.frames.rows; ++i) {
            json row = json::array();
            for (int j = 0; j < r.frames.cols; ++j) row.push_back(r.frames.at(i, j));
            rows.push_back(std::move(row));
        }
        obj["frames"] = std::move(rows);
        out << obj.dump() << "\n";
    }
    atomic_write_file(path, out.str());
}

} // namespace sagc
