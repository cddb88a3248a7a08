#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "clir/common.hpp"
#include "clir/corpus.hpp"
#include "clir/encoder.hpp"
#include "clir/kmeans.hpp"

namespace clir {

/// One document token stored as its nearest centroid id plus one sign bit per
/// residual dimension: bit i is 1 iff (v - centroid)[i] >= 0. At dim 128 the
/// bits occupy exactly 16 bytes. Bit order: dimension 8*b + j maps to bit j
/// (LSB-first) of byte b.
struct CompressedToken {
    int32_t centroid_id = 0;
    int32_t doc = -1;       // owner document ordinal (-1 when standalone)
    int32_t position = -1;  // token position within the document
    std::vector<uint8_t> residual_bits;
};

inline int32_t residual_bytes(int32_t dim) {
    return (dim + 7) / 8;
}

/// Nearest centroid by dot product (all rows unit length), lowest id on ties.
inline int32_t assign_centroid(const double* v, const Centroids& cents) {
    int32_t best = 0;
    double best_dot = -std::numeric_limits<double>::infinity();
    for (int32_t c = 0; c < cents.k; ++c) {
        const float* row = cents.row(c);
        double dot = 0.0;
        for (int32_t j = 0; j < cents.dim; ++j) dot += v[j] * double(row[j]);
        if (dot > best_dot) {
            best_dot = dot;
            best = c;
        }
    }
    return best;
}

inline CompressedToken compress_token(const double* v, const Centroids& cents) {
    CompressedToken ct;
    ct.centroid_id = assign_centroid(v, cents);
    ct.residual_bits.assign(size_t(residual_bytes(cents.dim)), 0);
    const float* row = cents.row(ct.centroid_id);
    for (int32_t j = 0; j < cents.dim; ++j) {
        double r = v[j] - double(row[j]);
        if (r >= 0.0) ct.residual_bits[size_t(j >> 3)] |= uint8_t(1u << (j & 7));
    }
    return ct;
}

/// centroid + alpha * s where s[i] is +1 for a set bit and -1 otherwise.
/// Not re-normalized.
inline std::vector<double> decompress(const CompressedToken& ct, const Centroids& cents,
                                      double alpha) {
    std::vector<double> v(size_t(cents.dim), 0.0);
    const float* row = cents.row(ct.centroid_id);
    for (int32_t j = 0; j < cents.dim; ++j) {
        bool bit = ct.residual_bits[size_t(j >> 3)] >> (j & 7) & 1u;
        v[size_t(j)] = double(row[j]) + (bit ? alpha : -alpha);
    }
    return v;
}

/// Dequantization scale: mean absolute residual over all sampled tokens and
/// dimensions. Zero only when every residual is zero.
inline double estimate_alpha(const TokenMatrix& samples, const Centroids& cents) {
    if (samples.rows == 0) return 0.0;
    double total = 0.0;
    for (int32_t i = 0; i < samples.rows; ++i) {
        const double* v = samples.row(i);
        const float* row = cents.row(assign_centroid(v, cents));
        for (int32_t j = 0; j < samples.dim; ++j) total += std::abs(v[j] - double(row[j]));
    }
    return total / (double(samples.rows) * double(samples.dim));
}

/// Compressed late-interaction index: centroids, per-token residual bits, and
/// centroid-keyed inverted lists over the flat token store. Immutable after
/// build/load; concurrent searches are safe.
struct PlaidIndex {
    Centroids centroids;
    EncoderConfig cfg;
    double alpha = 0.0;
    uint64_t seed = 0;
    std::vector<std::string> docids;
    std::vector<int64_t> doc_offsets;              // size docs + 1
    std::vector<int32_t> token_centroids;          // per token
    std::vector<uint8_t> residuals;                // tokens * residual_bytes(dim)
    std::vector<std::vector<int64_t>> inv_lists;   // centroid id -> ascending token ids
    std::vector<int32_t> token_docs;               // derived: token id -> owner ordinal

    int64_t token_count() const { return int64_t(token_centroids.size()); }

    std::vector<double> decompress_token(int64_t t) const {
        CompressedToken ct;
        ct.centroid_id = token_centroids[size_t(t)];
        int32_t nb = residual_bytes(cfg.dim);
        ct.residual_bits.assign(residuals.begin() + ptrdiff_t(t * nb),
                                residuals.begin() + ptrdiff_t((t + 1) * nb));
        return decompress(ct, centroids, alpha);
    }

    /// All tokens of one document, decompressed.
    TokenMatrix decompress_doc(int32_t ord) const {
        int64_t begin = doc_offsets[size_t(ord)];
        int64_t end = doc_offsets[size_t(ord) + 1];
        TokenMatrix m(int32_t(end - begin), cfg.dim);
        for (int64_t t = begin; t < end; ++t) {
            std::vector<double> v = decompress_token(t);
            std::copy(v.begin(), v.end(), m.row(int32_t(t - begin)));
        }
        return m;
    }

    void rebuild_token_docs() {
        token_docs.assign(size_t(token_count()), 0);
        for (size_t d = 0; d + 1 < doc_offsets.size(); ++d)
            for (int64_t t = doc_offsets[d]; t < doc_offsets[d + 1]; ++t)
                token_docs[size_t(t)] = int32_t(d);
    }
};

struct PlaidBuildParams {
    int32_t k = 0;                  // 0 -> round(4 * sqrt(total tokens))
    int iters = 10;
    int64_t sample_max = 1000000;   // train on all tokens up to this many
    uint64_t seed = 0;
};

inline int32_t default_centroid_count(int64_t tokens) {
    int32_t k = int32_t(std::llround(4.0 * std::sqrt(double(tokens))));
    return std::max(int32_t(1), std::min(k, int32_t(tokens)));
}

inline PlaidIndex build_plaid(const Collection& coll, const EmbeddingProvider& provider,
                              const EncoderConfig& cfg, const PlaidBuildParams& params) {
    if (coll.empty()) throw DataError("cannot build index from an empty collection");
    validate(cfg);

    PlaidIndex idx;
    idx.cfg = cfg;
    idx.seed = params.seed;
    idx.doc_offsets.push_back(0);

    // encode every document; token rows gathered into one flat matrix
    std::vector<double> all;
    int64_t tokens = 0;
    for (const Document& doc : coll) {
        idx.docids.push_back(doc.docid);
        TokenMatrix m = encode_doc(provider, doc.text, cfg);
        all.insert(all.end(), m.data.begin(), m.data.end());
        tokens += m.rows;
        idx.doc_offsets.push_back(tokens);
    }
    TokenMatrix token_store;
    token_store.rows = int32_t(tokens);
    token_store.dim = cfg.dim;
    token_store.data = std::move(all);

    // centroid training sample: everything, or a seeded uniform subsample
    const TokenMatrix* train = &token_store;
    TokenMatrix sampled;
    if (tokens > params.sample_max) {
        Rng rng(splitmix64(params.seed ^ 0xa409382229f31d3eull));
        std::vector<int64_t> pick(size_t(tokens), 0);
        for (int64_t i = 0; i < tokens; ++i) pick[size_t(i)] = i;
        for (int64_t i = 0; i < params.sample_max; ++i) {
            size_t j = size_t(i) + rng.next_index(size_t(tokens - i));
            std::swap(pick[size_t(i)], pick[j]);
        }
        pick.resize(size_t(params.sample_max));
        std::sort(pick.begin(), pick.end());
        sampled = TokenMatrix(int32_t(params.sample_max), cfg.dim);
        for (size_t i = 0; i < pick.size(); ++i)
            std::copy(token_store.row(int32_t(pick[i])), token_store.row(int32_t(pick[i])) + cfg.dim,
                      sampled.row(int32_t(i)));
        train = &sampled;
    }

    int32_t k = params.k > 0 ? params.k : default_centroid_count(tokens);
    if (k > train->rows)
        throw DataError("centroid count " + std::to_string(k) + " exceeds training sample " +
                        std::to_string(train->rows));
    idx.centroids = train_centroids(*train, k, params.iters, params.seed);
    idx.alpha = estimate_alpha(*train, idx.centroids);

    idx.inv_lists.assign(size_t(k), {});
    idx.token_centroids.reserve(size_t(tokens));
    idx.residuals.reserve(size_t(tokens) * size_t(residual_bytes(cfg.dim)));
    for (int64_t t = 0; t < tokens; ++t) {
        CompressedToken ct = compress_token(token_store.row(int32_t(t)), idx.centroids);
        idx.token_centroids.push_back(ct.centroid_id);
        idx.residuals.insert(idx.residuals.end(), ct.residual_bits.begin(), ct.residual_bits.end());
        idx.inv_lists[size_t(ct.centroid_id)].push_back(t);
    }
    idx.rebuild_token_docs();
    return idx;
}

// ---------------------------------------------------------------------------
// Persistence. Directory layout:
//   meta.txt       versioned text header (dim, k, alpha, seed, counts, config)
//   docs.jsonl     one {"docid","tokens"} record per document
//   centroids.bin  k * dim little-endian float32
//   residuals.bin  flat blob, residual_bytes(dim) per token
//   ivlists.bin    per centroid: varint count, then delta-encoded token ids
// ---------------------------------------------------------------------------

inline void save_index(const PlaidIndex& idx, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ostringstream meta;
        meta << "clir-plaid v1\n";
        meta << "dim " << idx.cfg.dim << "\n";
        meta << "query_len " << idx.cfg.query_len << "\n";
        meta << "doc_maxlen " << idx.cfg.doc_maxlen << "\n";
        meta << "mask " << idx.cfg.mask_symbol << "\n";
        meta << "k " << idx.centroids.k << "\n";
        meta << "alpha " << dtos(idx.alpha) << "\n";
        meta << "seed " << idx.seed << "\n";
        meta << "docs " << idx.docids.size() << "\n";
        meta << "tokens " << idx.token_count() << "\n";
        write_file(dir / "meta.txt", meta.str());
    }
    {
        std::ostringstream docs;
        for (size_t d = 0; d < idx.docids.size(); ++d) {
            nlohmann::json rec{{"docid", idx.docids[d]},
                               {"tokens", idx.doc_offsets[d + 1] - idx.doc_offsets[d]}};
            docs << rec.dump() << '\n';
        }
        write_file(dir / "docs.jsonl", docs.str());
    }
    {
        std::vector<uint8_t> buf;
        buf.reserve(idx.centroids.data.size() * 4);
        for (float f : idx.centroids.data) put_f32(buf, f);
        write_file(dir / "centroids.bin", buf);
    }
    write_file(dir / "residuals.bin",
               std::string_view(reinterpret_cast<const char*>(idx.residuals.data()),
                                idx.residuals.size()));
    {
        std::vector<uint8_t> buf;
        for (const auto& list : idx.inv_lists) {
            put_varint(buf, uint64_t(list.size()));
            int64_t prev = 0;
            for (size_t i = 0; i < list.size(); ++i) {
                put_varint(buf, uint64_t(i == 0 ? list[0] : list[i] - prev));
                prev = list[i];
            }
        }
        write_file(dir / "ivlists.bin", buf);
    }
}

inline PlaidIndex load_index(const std::filesystem::path& dir) {
    auto need = [&](const char* name) {
        std::filesystem::path p = dir / name;
        if (!std::filesystem::exists(p)) throw DataError("index file missing: " + p.string());
        return p;
    };

    PlaidIndex idx;
    int64_t docs = 0, tokens = 0;
    {
        std::istringstream meta(read_file(need("meta.txt")));
        std::string line;
        if (!std::getline(meta, line) || line != "clir-plaid v1")
            throw DataError(dir.string() + "/meta.txt: bad magic (not a plaid index)");
        while (std::getline(meta, line)) {
            if (line.empty()) continue;
            std::istringstream ss(line);
            std::string key, value;
            ss >> key >> value;
            if (key == "dim") idx.cfg.dim = int32_t(parse_ll(value, "meta.txt dim"));
            else if (key == "query_len") idx.cfg.query_len = int32_t(parse_ll(value, "meta.txt query_len"));
            else if (key == "doc_maxlen") idx.cfg.doc_maxlen = int32_t(parse_ll(value, "meta.txt doc_maxlen"));
            else if (key == "mask") idx.cfg.mask_symbol = value;
            else if (key == "k") idx.centroids.k = int32_t(parse_ll(value, "meta.txt k"));
            else if (key == "alpha") idx.alpha = parse_double(value, "meta.txt alpha");
            else if (key == "seed") idx.seed = uint64_t(parse_ll(value, "meta.txt seed"));
            else if (key == "docs") docs = parse_ll(value, "meta.txt docs");
            else if (key == "tokens") tokens = parse_ll(value, "meta.txt tokens");
            else throw DataError("meta.txt: unknown key " + key);
        }
        validate(idx.cfg);
        if (idx.centroids.k < 1) throw DataError("meta.txt: missing centroid count");
        if (idx.alpha < 0.0) throw DataError("meta.txt: negative alpha");
    }
    {
        std::istringstream in(read_file(need("docs.jsonl")));
        std::string line;
        int64_t offset = 0;
        idx.doc_offsets.push_back(0);
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            nlohmann::json rec;
            try {
                rec = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw DataError("docs.jsonl line " + std::to_string(lineno) + ": " + e.what());
            }
            idx.docids.push_back(rec.at("docid").get<std::string>());
            offset += rec.at("tokens").get<int64_t>();
            idx.doc_offsets.push_back(offset);
        }
        if (int64_t(idx.docids.size()) != docs)
            throw DataError("docs.jsonl: expected " + std::to_string(docs) + " documents, found " +
                            std::to_string(idx.docids.size()));
        if (offset != tokens)
            throw DataError("docs.jsonl: token counts sum to " + std::to_string(offset) +
                            ", meta says " + std::to_string(tokens));
    }
    {
        std::string raw = read_file(need("centroids.bin"));
        idx.centroids.dim = idx.cfg.dim;
        size_t expect = size_t(idx.centroids.k) * size_t(idx.cfg.dim) * 4;
        if (raw.size() != expect)
            throw DataError("centroids.bin: expected " + std::to_string(expect) + " bytes, got " +
                            std::to_string(raw.size()));
        ByteReader r(reinterpret_cast<const uint8_t*>(raw.data()), raw.size(), "centroids.bin");
        idx.centroids.data.resize(size_t(idx.centroids.k) * size_t(idx.cfg.dim));
        for (float& f : idx.centroids.data) f = r.get_f32();
    }
    {
        std::string raw = read_file(need("residuals.bin"));
        size_t expect = size_t(tokens) * size_t(residual_bytes(idx.cfg.dim));
        if (raw.size() != expect)
            throw DataError("residuals.bin: expected " + std::to_string(expect) + " bytes, got " +
                            std::to_string(raw.size()));
        idx.residuals.assign(raw.begin(), raw.end());
    }
    {
        std::string raw = read_file(need("ivlists.bin"));
        ByteReader r(reinterpret_cast<const uint8_t*>(raw.data()), raw.size(), "ivlists.bin");
        idx.inv_lists.resize(size_t(idx.centroids.k));
        idx.token_centroids.assign(size_t(tokens), -1);
        for (int32_t c = 0; c < idx.centroids.k; ++c) {
            uint64_t count = r.get_varint();
            int64_t prev = 0;
            for (uint64_t i = 0; i < count; ++i) {
                int64_t t = i == 0 ? int64_t(r.get_varint()) : prev + int64_t(r.get_varint());
                if (t < 0 || t >= tokens) throw DataError("ivlists.bin: token id out of range");
                if (idx.token_centroids[size_t(t)] != -1)
                    throw DataError("ivlists.bin: token " + std::to_string(t) +
                                    " appears in two lists");
                idx.token_centroids[size_t(t)] = c;
                idx.inv_lists[size_t(c)].push_back(t);
                prev = t;
            }
        }
        if (!r.done()) throw DataError("ivlists.bin: trailing bytes");
        for (int64_t t = 0; t < tokens; ++t)
            if (idx.token_centroids[size_t(t)] == -1)
                throw DataError("ivlists.bin: token " + std::to_string(t) + " missing from lists");
    }
    idx.rebuild_token_docs();
    return idx;
}

}  // namespace clir
