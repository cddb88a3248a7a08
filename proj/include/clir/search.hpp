#pragma once

#include <algorithm>
#include <limits>
#include <unordered_map>
#include <vector>

#include "clir/common.hpp"
#include "clir/corpus.hpp"
#include "clir/encoder.hpp"
#include "clir/plaid.hpp"

namespace clir {

struct SearchParams {
    int32_t k = 10;
    int32_t n_probe = 4;        // centroids probed per query token
    int32_t n_candidates = 0;   // docs passed to rerank; 0 -> max(4k, 100)

    int32_t resolved_candidates() const {
        return n_candidates > 0 ? n_candidates : std::max(4 * k, 100);
    }
};

/// Late-interaction score: sum over query rows of the maximum dot product
/// against any document row.
inline double maxsim(const TokenMatrix& q, const TokenMatrix& d) {
    if (q.dim != d.dim) throw std::invalid_argument("maxsim dimension mismatch");
    if (d.rows == 0 || q.rows == 0) return 0.0;
    double total = 0.0;
    for (int32_t i = 0; i < q.rows; ++i) {
        const double* qi = q.row(i);
        double best = -std::numeric_limits<double>::infinity();
        for (int32_t j = 0; j < d.rows; ++j) {
            const double* dj = d.row(j);
            double dot = 0.0;
            for (int32_t x = 0; x < q.dim; ++x) dot += qi[x] * dj[x];
            if (dot > best) best = dot;
        }
        total += best;
    }
    return total;
}

namespace detail {
inline void sort_hits(std::vector<SearchHit>& hits) {
    std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.docid < b.docid;
    });
}
}  // namespace detail

/// Brute-force oracle: encodes every document fresh and scores it with maxsim.
/// No compression anywhere on this path.
inline std::vector<SearchHit> search_exact(const Collection& coll,
                                           const EmbeddingProvider& provider,
                                           const EncoderConfig& cfg, std::string_view query_text,
                                           int32_t k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    TokenMatrix q = encode_query(provider, query_text, cfg);
    std::vector<SearchHit> hits;
    hits.reserve(coll.size());
    for (const Document& doc : coll)
        hits.push_back({doc.docid, maxsim(q, encode_doc(provider, doc.text, cfg))});
    detail::sort_hits(hits);
    if (hits.size() > size_t(k)) hits.resize(size_t(k));
    return hits;
}

/// Three-stage approximate search over the compressed index:
///   1. per query row, probe the top n_probe centroids and gather the tokens
///      on their inverted lists;
///   2. score each reached document as the sum over query rows of the best
///      centroid dot product among that document's gathered tokens, keeping
///      the top n_candidates documents;
///   3. decompress every token of the survivors and rerank by exact maxsim.
inline std::vector<SearchHit> search_plaid(const PlaidIndex& idx,
                                           const EmbeddingProvider& provider,
                                           std::string_view query_text,
                                           const SearchParams& params) {
    if (params.k < 1 || params.n_probe < 1) throw std::invalid_argument("k and n_probe must be >= 1");
    int32_t n_candidates = params.resolved_candidates();
    if (n_candidates < params.k) throw std::invalid_argument("n_candidates must be >= k");

    const int32_t kc = idx.centroids.k;
    const int32_t dim = idx.cfg.dim;
    TokenMatrix q = encode_query(provider, query_text, idx.cfg);

    // query-row x centroid dot products
    std::vector<double> dots(size_t(q.rows) * size_t(kc));
    for (int32_t i = 0; i < q.rows; ++i) {
        const double* qi = q.row(i);
        double* out = dots.data() + size_t(i) * size_t(kc);
        for (int32_t c = 0; c < kc; ++c) {
            const float* row = idx.centroids.row(c);
            double dot = 0.0;
            for (int32_t x = 0; x < dim; ++x) dot += qi[x] * double(row[x]);
            out[c] = dot;
        }
    }

    // stage 1: union of probed centroids over all query rows
    int32_t n_probe = std::min(params.n_probe, kc);
    std::vector<char> probed(size_t(kc), 0);
    std::vector<int32_t> order(size_t(kc), 0);
    for (int32_t i = 0; i < q.rows; ++i) {
        const double* row_dots = dots.data() + size_t(i) * size_t(kc);
        for (int32_t c = 0; c < kc; ++c) order[size_t(c)] = c;
        std::partial_sort(order.begin(), order.begin() + n_probe, order.end(),
                          [&](int32_t a, int32_t b) {
                              if (row_dots[a] != row_dots[b]) return row_dots[a] > row_dots[b];
                              return a < b;
                          });
        for (int32_t p = 0; p < n_probe; ++p) probed[size_t(order[size_t(p)])] = 1;
    }

    // gather candidate docs and the centroid set of their gathered tokens
    std::unordered_map<int32_t, std::vector<int32_t>> doc_cents;
    for (int32_t c = 0; c < kc; ++c) {
        if (!probed[size_t(c)]) continue;
        for (int64_t t : idx.inv_lists[size_t(c)]) {
            std::vector<int32_t>& cs = doc_cents[idx.token_docs[size_t(t)]];
            if (cs.empty() || cs.back() != c) cs.push_back(c);
        }
    }

    // stage 2: approximate scores from centroid dots alone
    std::vector<std::pair<double, int32_t>> approx;
    approx.reserve(doc_cents.size());
    for (const auto& [doc, cs] : doc_cents) {
        double score = 0.0;
        for (int32_t i = 0; i < q.rows; ++i) {
            const double* row_dots = dots.data() + size_t(i) * size_t(kc);
            double best = -std::numeric_limits<double>::infinity();
            for (int32_t c : cs) best = std::max(best, row_dots[c]);
            score += best;
        }
        approx.push_back({score, doc});
    }
    std::sort(approx.begin(), approx.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return idx.docids[size_t(a.second)] < idx.docids[size_t(b.second)];
    });
    if (approx.size() > size_t(n_candidates)) approx.resize(size_t(n_candidates));

    // stage 3: exact maxsim over decompressed survivors
    std::vector<SearchHit> hits;
    hits.reserve(approx.size());
    for (const auto& [unused, doc] : approx)
        hits.push_back({idx.docids[size_t(doc)], maxsim(q, idx.decompress_doc(doc))});
    detail::sort_hits(hits);
    if (hits.size() > size_t(params.k)) hits.resize(size_t(params.k));
    return hits;
}

/// |top-k of run ∩ top-k of reference| / |top-k of reference|; the measure the
/// compare flag reports for approximate-vs-exact runs.
inline double overlap_recall_at(const std::vector<SearchHit>& run,
                                const std::vector<SearchHit>& reference, size_t k) {
    size_t n_ref = std::min(k, reference.size());
    if (n_ref == 0) return 0.0;
    size_t n_run = std::min(k, run.size());
    size_t found = 0;
    for (size_t i = 0; i < n_ref; ++i)
        for (size_t j = 0; j < n_run; ++j)
            if (reference[i].docid == run[j].docid) {
                ++found;
                break;
            }
    return double(found) / double(n_ref);
}

}  // namespace clir
