#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "clir/common.hpp"
#include "clir/corpus.hpp"
#include "clir/text.hpp"

namespace clir {

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;
};

struct Rm3Params {
    int32_t fb_docs = 10;
    int32_t fb_terms = 10;
    double orig_weight = 0.5;
};

/// Term-weighted query. Weights are non-negative and sum to 1; terms unique.
struct WeightedQuery {
    std::vector<std::pair<Term, double>> terms;
};

/// Inverted index over a Collection. Terms are interned to dense ids; postings
/// are sorted by document ordinal. Immutable after build/load; concurrent
/// searches are safe.
class SparseIndex {
  public:
    struct Posting {
        int32_t doc;
        int32_t tf;
    };

    static SparseIndex build(const Collection& coll) {
        SparseIndex idx;
        int64_t total_len = 0;
        for (const Document& doc : coll) {
            int32_t ord = int32_t(idx.docids_.size());
            idx.docids_.push_back(doc.docid);
            auto tokens = tokenize(doc.text);
            idx.doc_lengths_.push_back(int32_t(tokens.size()));
            total_len += int64_t(tokens.size());

            // tf per term, term ids in first-appearance order
            std::unordered_map<int32_t, int32_t> counts;
            for (const Term& t : tokens) ++counts[idx.intern(t)];
            std::vector<std::pair<int32_t, int32_t>> fwd(counts.begin(), counts.end());
            std::sort(fwd.begin(), fwd.end());
            for (auto [tid, tf] : fwd) idx.postings_[size_t(tid)].push_back({ord, tf});
            idx.doc_terms_.push_back(std::move(fwd));
        }
        idx.avg_doc_len_ = idx.docids_.empty() ? 0.0 : double(total_len) / double(idx.docids_.size());
        return idx;
    }

    int32_t doc_count() const { return int32_t(docids_.size()); }
    double avg_doc_len() const { return avg_doc_len_; }
    int32_t doc_length(int32_t ord) const { return doc_lengths_[size_t(ord)]; }
    const std::string& docid(int32_t ord) const { return docids_[size_t(ord)]; }
    size_t term_count() const { return terms_.size(); }
    const Term& term(int32_t tid) const { return terms_[size_t(tid)]; }

    int32_t term_id(const Term& t) const {
        auto it = term_ids_.find(t);
        return it == term_ids_.end() ? -1 : it->second;
    }

    int32_t df(const Term& t) const {
        int32_t tid = term_id(t);
        return tid < 0 ? 0 : int32_t(postings_[size_t(tid)].size());
    }

    const std::vector<Posting>& postings(int32_t tid) const { return postings_[size_t(tid)]; }

    /// Forward vector of (term id, tf), sorted by term id.
    const std::vector<std::pair<int32_t, int32_t>>& doc_terms(int32_t ord) const {
        return doc_terms_[size_t(ord)];
    }

    /// ln((N - df + 0.5) / (df + 0.5) + 1), floored at 0 so scores stay
    /// non-negative (the pair-mining score ratio relies on that).
    double idf(int32_t tid) const {
        double n = double(doc_count());
        double d = double(postings_[size_t(tid)].size());
        return std::max(0.0, std::log((n - d + 0.5) / (d + 0.5) + 1.0));
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write index file: " + path.string());
        out << "clir-sparse v1\n";
        out << "docs " << docids_.size() << "\n";
        for (size_t i = 0; i < docids_.size(); ++i)
            out << "D " << nlohmann::json(docids_[i]).dump() << ' ' << doc_lengths_[i] << "\n";
        out << "terms " << terms_.size() << "\n";
        for (size_t t = 0; t < terms_.size(); ++t) {
            out << "T " << nlohmann::json(terms_[t]).dump();
            for (const Posting& p : postings_[t]) out << ' ' << p.doc << ':' << p.tf;
            out << "\n";
        }
        if (!out) throw DataError("write failed: " + path.string());
    }

    static SparseIndex load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot open index file: " + path.string());
        std::string name = path.filename().string();
        std::string line;
        if (!std::getline(in, line) || line != "clir-sparse v1")
            throw DataError(name + ": bad magic (not a sparse index)");

        SparseIndex idx;
        auto expect = [&](const char* tag) {
            if (!std::getline(in, line)) throw DataError(name + ": truncated");
            std::istringstream ss(line);
            std::string got;
            ss >> got;
            if (got != tag) throw DataError(name + ": expected " + tag + " section");
            return ss;
        };
        {
            auto ss = expect("docs");
            size_t n;
            ss >> n;
            int64_t total = 0;
            for (size_t i = 0; i < n; ++i) {
                if (!std::getline(in, line) || line.size() < 2 || line[0] != 'D')
                    throw DataError(name + ": bad document record");
                std::istringstream ds(line.substr(2));
                std::string jdocid;
                int32_t len;
                ds >> jdocid >> len;
                idx.docids_.push_back(nlohmann::json::parse(jdocid).get<std::string>());
                idx.doc_lengths_.push_back(len);
                total += len;
            }
            idx.avg_doc_len_ = n == 0 ? 0.0 : double(total) / double(n);
        }
        {
            auto ss = expect("terms");
            size_t n;
            ss >> n;
            idx.doc_terms_.resize(idx.docids_.size());
            for (size_t t = 0; t < n; ++t) {
                if (!std::getline(in, line) || line.size() < 2 || line[0] != 'T')
                    throw DataError(name + ": bad term record");
                std::istringstream ts(line.substr(2));
                std::string jterm;
                ts >> jterm;
                Term term = nlohmann::json::parse(jterm).get<std::string>();
                int32_t tid = idx.intern(term);
                std::string cell;
                while (ts >> cell) {
                    auto colon = cell.find(':');
                    if (colon == std::string::npos) throw DataError(name + ": bad posting " + cell);
                    int32_t doc = int32_t(parse_ll(cell.substr(0, colon), name));
                    int32_t tf = int32_t(parse_ll(cell.substr(colon + 1), name));
                    if (doc < 0 || doc >= idx.doc_count())
                        throw DataError(name + ": posting ordinal out of range");
                    idx.postings_[size_t(tid)].push_back({doc, tf});
                    idx.doc_terms_[size_t(doc)].push_back({tid, tf});
                }
            }
        }
        return idx;
    }

  private:
    int32_t intern(const Term& t) {
        auto [it, fresh] = term_ids_.emplace(t, int32_t(terms_.size()));
        if (fresh) {
            terms_.push_back(t);
            postings_.emplace_back();
        }
        return it->second;
    }

    std::vector<std::string> docids_;
    std::vector<int32_t> doc_lengths_;
    double avg_doc_len_ = 0.0;
    std::vector<Term> terms_;
    std::unordered_map<Term, int32_t> term_ids_;
    std::vector<std::vector<Posting>> postings_;
    std::vector<std::vector<std::pair<int32_t, int32_t>>> doc_terms_;
};

namespace detail {

/// Shared scorer for plain and weighted queries. Only documents containing at
/// least one query term are scored; ties break by ascending docid.
inline std::vector<std::pair<int32_t, double>> scored_search_ords(
    const SparseIndex& idx, const std::vector<std::pair<Term, double>>& wterms, int32_t k,
    const Bm25Params& p) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    std::vector<double> acc(size_t(idx.doc_count()), 0.0);
    std::vector<char> touched(size_t(idx.doc_count()), 0);
    for (const auto& [term, weight] : wterms) {
        if (weight == 0.0) continue;
        int32_t tid = idx.term_id(term);
        if (tid < 0) continue;
        double idf = idx.idf(tid);
        for (const SparseIndex::Posting& post : idx.postings(tid)) {
            double tf = double(post.tf);
            double dl = double(idx.doc_length(post.doc));
            double denom = tf + p.k1 * (1.0 - p.b + p.b * dl / idx.avg_doc_len());
            acc[size_t(post.doc)] += weight * idf * tf * (p.k1 + 1.0) / denom;
            touched[size_t(post.doc)] = 1;
        }
    }
    std::vector<int32_t> docs;
    for (int32_t d = 0; d < idx.doc_count(); ++d)
        if (touched[size_t(d)]) docs.push_back(d);
    std::sort(docs.begin(), docs.end(), [&](int32_t a, int32_t b) {
        if (acc[size_t(a)] != acc[size_t(b)]) return acc[size_t(a)] > acc[size_t(b)];
        return idx.docid(a) < idx.docid(b);
    });
    if (docs.size() > size_t(k)) docs.resize(size_t(k));
    std::vector<std::pair<int32_t, double>> hits;
    hits.reserve(docs.size());
    for (int32_t d : docs) hits.push_back({d, acc[size_t(d)]});
    return hits;
}

inline std::vector<SearchHit> scored_search(const SparseIndex& idx,
                                            const std::vector<std::pair<Term, double>>& wterms,
                                            int32_t k, const Bm25Params& p) {
    std::vector<SearchHit> hits;
    for (auto [ord, score] : scored_search_ords(idx, wterms, k, p))
        hits.push_back({idx.docid(ord), score});
    return hits;
}

/// Query terms with multiplicity folded into weights, first-appearance order.
inline std::vector<std::pair<Term, double>> query_counts(const std::vector<Term>& query) {
    std::vector<std::pair<Term, double>> wterms;
    for (const Term& t : query) {
        auto it = std::find_if(wterms.begin(), wterms.end(),
                               [&](const auto& kv) { return kv.first == t; });
        if (it == wterms.end())
            wterms.push_back({t, 1.0});
        else
            it->second += 1.0;
    }
    return wterms;
}

}  // namespace detail

inline std::vector<SearchHit> bm25_search(const SparseIndex& idx, const std::vector<Term>& query,
                                          int32_t k, const Bm25Params& p = {}) {
    return detail::scored_search(idx, detail::query_counts(query), k, p);
}

inline std::vector<SearchHit> weighted_search(const SparseIndex& idx, const WeightedQuery& wq,
                                              int32_t k, const Bm25Params& p = {}) {
    return detail::scored_search(idx, wq.terms, k, p);
}

/// RM3 expansion: relevance model over the top fb_docs feedback documents,
/// P(t|d) = tf/dl weighted by the document's BM25 score, truncated to the top
/// fb_terms terms, then mixed with the original query distribution.
inline WeightedQuery rm3_expand(const SparseIndex& idx, const std::vector<Term>& query,
                                const Rm3Params& rp = {}, const Bm25Params& bp = {}) {
    if (rp.fb_docs < 1 || rp.fb_terms < 1)
        throw std::invalid_argument("fb_docs and fb_terms must be >= 1");
    if (rp.orig_weight < 0.0 || rp.orig_weight > 1.0)
        throw std::invalid_argument("orig_weight must be in [0, 1]");

    std::vector<std::pair<Term, double>> orig = detail::query_counts(query);
    double total = 0.0;
    for (auto& [t, w] : orig) total += w;
    for (auto& [t, w] : orig) w /= total == 0.0 ? 1.0 : total;

    auto sort_result = [](std::vector<std::pair<Term, double>> terms) {
        std::sort(terms.begin(), terms.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        return WeightedQuery{std::move(terms)};
    };

    auto feedback = detail::scored_search_ords(idx, orig, rp.fb_docs, bp);
    if (feedback.empty() || rp.orig_weight == 1.0) return sort_result(std::move(orig));

    // relevance model weights over feedback docs
    std::unordered_map<int32_t, double> rm;
    for (auto [ord, score] : feedback) {
        double dl = double(idx.doc_length(ord));
        if (dl == 0.0) continue;
        for (auto [tid, tf] : idx.doc_terms(ord)) rm[tid] += score * double(tf) / dl;
    }
    std::vector<std::pair<Term, double>> expansion;
    expansion.reserve(rm.size());
    for (auto [tid, w] : rm) expansion.push_back({idx.term(tid), w});
    std::sort(expansion.begin(), expansion.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (expansion.size() > size_t(rp.fb_terms)) expansion.resize(size_t(rp.fb_terms));
    double esum = 0.0;
    for (auto& [t, w] : expansion) esum += w;
    for (auto& [t, w] : expansion) w /= esum == 0.0 ? 1.0 : esum;

    // mix: orig_weight * P_orig + (1 - orig_weight) * P_fb, zero weights dropped
    std::vector<std::pair<Term, double>> mixed;
    for (auto& [t, w] : orig) mixed.push_back({t, rp.orig_weight * w});
    for (auto& [t, w] : expansion) {
        auto it = std::find_if(mixed.begin(), mixed.end(),
                               [&](const auto& kv) { return kv.first == t; });
        double add = (1.0 - rp.orig_weight) * w;
        if (it == mixed.end())
            mixed.push_back({t, add});
        else
            it->second += add;
    }
    std::erase_if(mixed, [](const auto& kv) { return kv.second == 0.0; });
    return sort_result(std::move(mixed));
}

}  // namespace clir
