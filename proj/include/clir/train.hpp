#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "clir/common.hpp"
#include "clir/corpus.hpp"
#include "clir/encoder.hpp"
#include "clir/search.hpp"

namespace clir {

struct Triple {
    std::string query_text;
    std::string pos_text;
    std::string neg_text;
};

/// Tab-separated "query\tpositive\tnegative" lines, order preserved.
inline std::vector<Triple> read_triples(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open triples file: " + path.string());
    std::vector<Triple> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        size_t t1 = line.find('\t');
        size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        size_t t3 = t2 == std::string::npos ? std::string::npos : line.find('\t', t2 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos || t3 != std::string::npos)
            throw DataError(path.filename().string() + " line " + std::to_string(lineno) +
                            ": expected exactly 3 tab-separated fields");
        out.push_back({line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1)});
    }
    return out;
}

/// -log( exp(s_pos) / (exp(s_pos) + exp(s_neg)) ), computed with the max
/// subtracted before exponentiation. Depends only on s_pos - s_neg.
inline double contrastive_ce_loss(double s_pos, double s_neg) {
    double m = std::max(s_pos, s_neg);
    return std::log(std::exp(s_pos - m) + std::exp(s_neg - m)) - (s_pos - m);
}

/// Differentiable stand-in for a trained token encoder: the embedding of a
/// term is normalize(W * hash_embed(term)) with a dense dim x dim parameter
/// matrix W. Gives the loss path something to differentiate end to end.
class ToyEncoder final : public EmbeddingProvider {
  public:
    /// W = identity plus small seeded noise, so gradients are generic.
    ToyEncoder(int32_t dim, uint64_t seed, double noise = 0.01)
        : dim_(dim), hash_seed_(seed), w_(size_t(dim) * size_t(dim), 0.0) {
        Rng rng(splitmix64(seed ^ 0x452821e638d01377ull));
        for (int32_t i = 0; i < dim; ++i)
            for (int32_t j = 0; j < dim; ++j)
                w_[size_t(i) * size_t(dim) + size_t(j)] =
                    (i == j ? 1.0 : 0.0) + noise * (2.0 * rng.next_double() - 1.0);
    }

    int32_t dim() const override { return dim_; }
    uint64_t hash_seed() const { return hash_seed_; }

    double& w(int32_t i, int32_t j) { return w_[size_t(i) * size_t(dim_) + size_t(j)]; }
    double w(int32_t i, int32_t j) const { return w_[size_t(i) * size_t(dim_) + size_t(j)]; }
    std::vector<double>& weights() { return w_; }
    const std::vector<double>& weights() const { return w_; }

    std::vector<double> embed(const Term& term) const override {
        std::vector<double> h = hash_embed(term, dim_, hash_seed_);
        std::vector<double> y(size_t(dim_), 0.0);
        for (int32_t i = 0; i < dim_; ++i) {
            const double* row = w_.data() + size_t(i) * size_t(dim_);
            double s = 0.0;
            for (int32_t j = 0; j < dim_; ++j) s += row[j] * h[size_t(j)];
            y[size_t(i)] = s;
        }
        double norm_sq = 0.0;
        for (double v : y) norm_sq += v * v;
        if (norm_sq == 0.0) return y;  // degenerate W: zero row, zero gradient
        double inv = 1.0 / std::sqrt(norm_sq);
        for (double& v : y) v *= inv;
        return y;
    }

  private:
    int32_t dim_;
    uint64_t hash_seed_;
    std::vector<double> w_;
};

inline double triple_loss(const ToyEncoder& enc, const Triple& t, const EncoderConfig& cfg) {
    TokenMatrix q = encode_query(enc, t.query_text, cfg);
    TokenMatrix p = encode_doc(enc, t.pos_text, cfg);
    TokenMatrix n = encode_doc(enc, t.neg_text, cfg);
    return contrastive_ce_loss(maxsim(q, p), maxsim(q, n));
}

struct TripleGrad {
    double loss = 0.0;
    std::vector<double> grad;  // dim x dim, d loss / d W
    bool near_tie = false;     // some query row's top-two distinct doc dots differ by < 1e-6
};

namespace detail {

/// Forward pass with everything the backward pass needs retained.
struct EncodedTrace {
    std::vector<std::vector<double>> h;      // hash embeddings per row
    std::vector<std::vector<double>> y;      // W h per row
    std::vector<double> norm;                // |y| per row
    TokenMatrix e;                           // normalized rows
    std::vector<std::vector<double>> g_e;    // accumulated upstream gradient per row
};

inline EncodedTrace trace_encode(const ToyEncoder& enc, const std::vector<Term>& tokens,
                                 int32_t dim) {
    EncodedTrace tr;
    tr.e = TokenMatrix(int32_t(tokens.size()), dim);
    for (size_t i = 0; i < tokens.size(); ++i) {
        std::vector<double> h = hash_embed(tokens[i], dim, enc.hash_seed());
        std::vector<double> y(size_t(dim), 0.0);
        for (int32_t r = 0; r < dim; ++r) {
            double s = 0.0;
            for (int32_t c = 0; c < dim; ++c) s += enc.w(r, c) * h[size_t(c)];
            y[size_t(r)] = s;
        }
        double norm_sq = 0.0;
        for (double v : y) norm_sq += v * v;
        double norm = std::sqrt(norm_sq);
        double* row = tr.e.row(int32_t(i));
        if (norm > 0.0)
            for (int32_t r = 0; r < dim; ++r) row[r] = y[size_t(r)] / norm;
        tr.h.push_back(std::move(h));
        tr.y.push_back(std::move(y));
        tr.norm.push_back(norm);
        tr.g_e.emplace_back(size_t(dim), 0.0);
    }
    return tr;
}

/// maxsim forward with argmax bookkeeping. near_tie flags query rows whose two
/// best *distinct* dot values are closer than 1e-6 (exactly equal dots come
/// from duplicate tokens and differentiate cleanly, so they do not count).
inline double maxsim_argmax(const TokenMatrix& q, const TokenMatrix& d,
                            std::vector<int32_t>& argmax, bool& near_tie) {
    double total = 0.0;
    argmax.assign(size_t(q.rows), 0);
    for (int32_t i = 0; i < q.rows; ++i) {
        const double* qi = q.row(i);
        double best = -std::numeric_limits<double>::infinity();
        double second_distinct = -std::numeric_limits<double>::infinity();
        int32_t best_j = 0;
        for (int32_t j = 0; j < d.rows; ++j) {
            const double* dj = d.row(j);
            double dot = 0.0;
            for (int32_t x = 0; x < q.dim; ++x) dot += qi[x] * dj[x];
            if (dot > best) {
                if (best > second_distinct && best < dot) second_distinct = best;
                best = dot;
                best_j = j;
            } else if (dot < best && dot > second_distinct) {
                second_distinct = dot;
            }
        }
        if (d.rows > 1 && std::isfinite(second_distinct) && best - second_distinct < 1e-6)
            near_tie = true;
        argmax[size_t(i)] = best_j;
        total += best;
    }
    return total;
}

/// d loss / d W contribution of one encoded text given per-row upstream
/// gradients: back through the normalization, then the outer product with h.
inline void backprop_rows(const EncodedTrace& tr, std::vector<double>& grad) {
    int32_t dim = tr.e.dim;
    for (size_t row = 0; row < tr.h.size(); ++row) {
        if (tr.norm[row] == 0.0) continue;
        const std::vector<double>& ge = tr.g_e[row];
        const double* e = tr.e.row(int32_t(row));
        double dot = 0.0;
        for (int32_t r = 0; r < dim; ++r) dot += ge[size_t(r)] * e[r];
        for (int32_t r = 0; r < dim; ++r) {
            double gy = (ge[size_t(r)] - dot * e[r]) / tr.norm[row];
            if (gy == 0.0) continue;
            double* grow = grad.data() + size_t(r) * size_t(dim);
            const std::vector<double>& h = tr.h[row];
            for (int32_t c = 0; c < dim; ++c) grow[c] += gy * h[size_t(c)];
        }
    }
}

}  // namespace detail

/// Analytic gradient of triple_loss with respect to the ToyEncoder parameters.
/// The query matrix feeds both scores, so its rows receive gradient from the
/// positive and negative sides.
inline TripleGrad triple_loss_grad(const ToyEncoder& enc, const Triple& t,
                                   const EncoderConfig& cfg) {
    validate(cfg);
    int32_t dim = cfg.dim;
    auto q = detail::trace_encode(enc, query_tokens(t.query_text, cfg), dim);
    auto p = detail::trace_encode(enc, doc_tokens(t.pos_text, cfg), dim);
    auto n = detail::trace_encode(enc, doc_tokens(t.neg_text, cfg), dim);

    TripleGrad result;
    std::vector<int32_t> jp, jn;
    double s_pos = detail::maxsim_argmax(q.e, p.e, jp, result.near_tie);
    double s_neg = detail::maxsim_argmax(q.e, n.e, jn, result.near_tie);
    result.loss = contrastive_ce_loss(s_pos, s_neg);

    // stable sigmoid of the margin
    double d = s_pos - s_neg;
    double sig = d >= 0.0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
    double g_pos = sig - 1.0;  // d loss / d s_pos
    double g_neg = 1.0 - sig;  // d loss / d s_neg

    for (int32_t i = 0; i < q.e.rows; ++i) {
        const double* prow = p.e.row(jp[size_t(i)]);
        const double* nrow = n.e.row(jn[size_t(i)]);
        const double* qrow = q.e.row(i);
        for (int32_t x = 0; x < dim; ++x) {
            q.g_e[size_t(i)][size_t(x)] += g_pos * prow[x] + g_neg * nrow[x];
            p.g_e[size_t(jp[size_t(i)])][size_t(x)] += g_pos * qrow[x];
            n.g_e[size_t(jn[size_t(i)])][size_t(x)] += g_neg * qrow[x];
        }
    }

    result.grad.assign(size_t(dim) * size_t(dim), 0.0);
    detail::backprop_rows(q, result.grad);
    detail::backprop_rows(p, result.grad);
    detail::backprop_rows(n, result.grad);
    return result;
}

struct GradCheckResult {
    double max_rel_err = 0.0;
    int entries_checked = 0;
    bool near_tie = false;  // triple skipped: finite differences would cross a maxsim kink
};

/// Central finite differences against the analytic gradient over a sampled
/// subset of parameter entries.
inline GradCheckResult grad_check(const ToyEncoder& enc, const Triple& t, const EncoderConfig& cfg,
                                  double epsilon, int sample_entries = 32, uint64_t seed = 1) {
    TripleGrad analytic = triple_loss_grad(enc, t, cfg);
    GradCheckResult res;
    if (analytic.near_tie) {
        res.near_tie = true;
        return res;
    }
    int32_t dim = cfg.dim;
    Rng rng(splitmix64(seed ^ 0xbe5466cf34e90c6cull));
    ToyEncoder probe = enc;
    for (int s = 0; s < sample_entries; ++s) {
        int32_t i = int32_t(rng.next_index(size_t(dim)));
        int32_t j = int32_t(rng.next_index(size_t(dim)));
        double saved = probe.w(i, j);
        probe.w(i, j) = saved + epsilon;
        double up = triple_loss(probe, t, cfg);
        probe.w(i, j) = saved - epsilon;
        double down = triple_loss(probe, t, cfg);
        probe.w(i, j) = saved;
        double fd = (up - down) / (2.0 * epsilon);
        double g = analytic.grad[size_t(i) * size_t(dim) + size_t(j)];
        double denom = std::max({std::abs(g), std::abs(fd), 1e-6});
        res.max_rel_err = std::max(res.max_rel_err, std::abs(g - fd) / denom);
        ++res.entries_checked;
    }
    return res;
}

/// Interleaves the streams in their given order, one item from each
/// non-exhausted stream per cycle, until all are exhausted.
template <typename T>
std::vector<T> round_robin(const std::vector<std::vector<T>>& streams) {
    std::vector<T> out;
    std::vector<size_t> pos(streams.size(), 0);
    bool emitted = true;
    while (emitted) {
        emitted = false;
        for (size_t s = 0; s < streams.size(); ++s) {
            if (pos[s] < streams[s].size()) {
                out.push_back(streams[s][pos[s]++]);
                emitted = true;
            }
        }
    }
    return out;
}

/// Documents grouped by language and interleaved in the fixed order
/// ha, so, sw, yo, en.
inline std::vector<Document> round_robin_by_lang(const Collection& coll) {
    std::vector<std::vector<Document>> streams(std::size(kAllLangs));
    for (const Document& doc : coll)
        for (size_t s = 0; s < std::size(kAllLangs); ++s)
            if (doc.lang == kAllLangs[s]) streams[s].push_back(doc);
    return round_robin(streams);
}

struct FitReport {
    std::vector<double> losses;  // one entry per step, before the update
};

/// Small-step gradient descent over the ToyEncoder parameters: proves the
/// loss/gradient path end to end at desk scale. Cycles through the triples.
inline FitReport fit_toy_encoder(ToyEncoder& enc, const std::vector<Triple>& triples,
                                 const EncoderConfig& cfg, int steps, double lr) {
    if (triples.empty()) throw std::invalid_argument("no triples to fit on");
    FitReport report;
    int32_t dim = cfg.dim;
    for (int step = 0; step < steps; ++step) {
        const Triple& t = triples[size_t(step) % triples.size()];
        TripleGrad g = triple_loss_grad(enc, t, cfg);
        report.losses.push_back(g.loss);
        for (size_t i = 0; i < size_t(dim) * size_t(dim); ++i) enc.weights()[i] -= lr * g.grad[i];
    }
    return report;
}

}  // namespace clir
