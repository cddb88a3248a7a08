#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "clir/common.hpp"
#include "clir/text.hpp"

namespace clir {

/// Row-major matrix of per-token embedding rows.
struct TokenMatrix {
    int32_t rows = 0;
    int32_t dim = 0;
    std::vector<double> data;

    TokenMatrix() = default;
    TokenMatrix(int32_t r, int32_t d) : rows(r), dim(d), data(size_t(r) * size_t(d), 0.0) {}

    double* row(int32_t i) { return data.data() + size_t(i) * size_t(dim); }
    const double* row(int32_t i) const { return data.data() + size_t(i) * size_t(dim); }
};

struct EncoderConfig {
    int32_t dim = 128;
    int32_t query_len = 32;   // queries are padded to exactly this many tokens
    int32_t doc_maxlen = 180;
    Term mask_symbol = "[mask]";
};

inline void validate(const EncoderConfig& cfg) {
    if (cfg.dim <= 0 || cfg.query_len <= 0 || cfg.doc_maxlen <= 0)
        throw std::invalid_argument("encoder config values must be positive");
    if (cfg.mask_symbol.empty()) throw std::invalid_argument("mask symbol must be non-empty");
}

/// Supplies one unit-length embedding row per term. Implementations are
/// immutable after construction; concurrent encoding is safe.
class EmbeddingProvider {
  public:
    virtual ~EmbeddingProvider() = default;
    virtual int32_t dim() const = 0;
    virtual std::vector<double> embed(const Term& term) const = 0;
};

/// Deterministic pseudo-random unit vector for a term. Coordinates are drawn
/// from a PRNG keyed on (term bytes, seed), then L2-normalized. Distinct terms
/// collide only on 64-bit hash collisions.
inline std::vector<double> hash_embed(const Term& term, int32_t dim, uint64_t seed) {
    if (dim <= 0) throw std::invalid_argument("dim must be positive");
    Rng rng(fnv1a64(term) ^ splitmix64(seed ^ 0x243f6a8885a308d3ull));
    std::vector<double> v(size_t(dim), 0.0);
    double norm_sq = 0.0;
    for (double& x : v) {
        x = 2.0 * rng.next_double() - 1.0;
        norm_sq += x * x;
    }
    if (norm_sq == 0.0) {
        v[0] = 1.0;
        return v;
    }
    double inv = 1.0 / std::sqrt(norm_sq);
    for (double& x : v) x *= inv;
    return v;
}

class HashProvider final : public EmbeddingProvider {
  public:
    HashProvider(int32_t dim, uint64_t seed) : dim_(dim), seed_(seed) {}
    int32_t dim() const override { return dim_; }
    std::vector<double> embed(const Term& term) const override {
        return hash_embed(term, dim_, seed_);
    }

  private:
    int32_t dim_;
    uint64_t seed_;
};

/// Precomputed embeddings loaded from a text table ("term v1 v2 ... vD" per
/// line). Unknown terms fall back to hash_embed with the configured seed.
class TableProvider final : public EmbeddingProvider {
  public:
    static TableProvider load(const std::filesystem::path& path, uint64_t fallback_seed) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open embedding table: " + path.string());
        TableProvider tp;
        tp.seed_ = fallback_seed;
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            std::string where = path.filename().string() + " line " + std::to_string(lineno);
            std::istringstream ss(line);
            Term term;
            ss >> term;
            if (term.empty()) continue;
            std::vector<double> v;
            std::string cell;
            while (ss >> cell) v.push_back(parse_double(cell, where));
            if (v.empty()) throw DataError(where + ": no embedding values");
            if (tp.dim_ == 0) tp.dim_ = int32_t(v.size());
            if (int32_t(v.size()) != tp.dim_)
                throw DataError(where + ": expected " + std::to_string(tp.dim_) + " values, got " +
                                std::to_string(v.size()));
            double norm_sq = 0.0;
            for (double x : v) norm_sq += x * x;
            if (norm_sq == 0.0) throw DataError(where + ": zero vector");
            double norm = std::sqrt(norm_sq);
            // already-unit rows pass through untouched so stored values are
            // returned bit-exactly
            if (std::abs(norm - 1.0) > 1e-9)
                for (double& x : v) x /= norm;
            if (!tp.table_.emplace(term, std::move(v)).second)
                throw DataError(where + ": duplicate term \"" + term + "\"");
        }
        if (tp.dim_ == 0) throw DataError(path.string() + ": empty embedding table");
        return tp;
    }

    int32_t dim() const override { return dim_; }

    std::vector<double> embed(const Term& term) const override {
        auto it = table_.find(term);
        if (it != table_.end()) return it->second;
        return hash_embed(term, dim_, seed_);
    }

  private:
    int32_t dim_ = 0;
    uint64_t seed_ = 0;
    std::unordered_map<Term, std::vector<double>> table_;
};

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

/// Token list for the query side: tokenized text truncated at query_len, then
/// padded with the mask symbol to exactly query_len entries.
inline std::vector<Term> query_tokens(std::string_view text, const EncoderConfig& cfg) {
    std::vector<Term> tokens = tokenize(text);
    if (int32_t(tokens.size()) > cfg.query_len) tokens.resize(size_t(cfg.query_len));
    while (int32_t(tokens.size()) < cfg.query_len) tokens.push_back(cfg.mask_symbol);
    return tokens;
}

/// Token list for the document side: truncated at doc_maxlen; an empty
/// document becomes a single mask token so every document is scoreable.
inline std::vector<Term> doc_tokens(std::string_view text, const EncoderConfig& cfg) {
    std::vector<Term> tokens = tokenize(text);
    if (int32_t(tokens.size()) > cfg.doc_maxlen) tokens.resize(size_t(cfg.doc_maxlen));
    if (tokens.empty()) tokens.push_back(cfg.mask_symbol);
    return tokens;
}

namespace detail {
inline TokenMatrix embed_tokens(const EmbeddingProvider& provider, const std::vector<Term>& tokens,
                                const EncoderConfig& cfg) {
    validate(cfg);
    if (provider.dim() != cfg.dim)
        throw std::invalid_argument("provider dim " + std::to_string(provider.dim()) +
                                    " does not match config dim " + std::to_string(cfg.dim));
    TokenMatrix m(int32_t(tokens.size()), cfg.dim);
    for (int32_t i = 0; i < m.rows; ++i) {
        std::vector<double> v = provider.embed(tokens[size_t(i)]);
        if (int32_t(v.size()) != cfg.dim)
            throw std::invalid_argument("provider returned wrong dimension");
        std::copy(v.begin(), v.end(), m.row(i));
    }
    return m;
}
}  // namespace detail

inline TokenMatrix encode_query(const EmbeddingProvider& provider, std::string_view text,
                                const EncoderConfig& cfg) {
    return detail::embed_tokens(provider, query_tokens(text, cfg), cfg);
}

inline TokenMatrix encode_doc(const EmbeddingProvider& provider, std::string_view text,
                              const EncoderConfig& cfg) {
    return detail::embed_tokens(provider, doc_tokens(text, cfg), cfg);
}

}  // namespace clir
