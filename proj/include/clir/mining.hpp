#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "clir/chat.hpp"
#include "clir/common.hpp"
#include "clir/corpus.hpp"
#include "clir/scorer.hpp"
#include "clir/sparse.hpp"
#include "clir/text.hpp"

namespace clir {

struct MiningParams {
    int32_t min_query_doc_chars = 150;  // a document must have at least this many chars to query
    int32_t top_k = 20;                 // candidates examined per query document
    double max_score_ratio = 0.65;      // reject when cand_score/query_score exceeds this
    double max_lcs_frac = 0.60;         // reject when LCS covers more of the candidate
    int32_t min_non_lcs_chars = 20;     // reject when fewer candidate chars fall outside the LCS
    int32_t min_cand_chars = 150;       // reject shorter candidates
};

struct MinedPair {
    std::string doc_a;   // the query document
    std::string doc_b;   // the candidate document
    double bm25_ratio;   // cand_score / query_score, <= max_score_ratio
};

enum class Slot { DocA, DocB };

inline const char* slot_name(Slot s) {
    return s == Slot::DocA ? "DOCA" : "DOCB";
}

struct GeneratedExample {
    std::string query;       // English query text
    std::string pos_docid;
    std::string neg_docid;
    int64_t pair_id = 0;     // index into the mined-pair list
    Slot origin_slot = Slot::DocA;
};

struct QcParams {
    std::vector<Term> banned_words = {"articles", "reports", "speaker", "these"};
    double margin = 0.15;
};

// ---------------------------------------------------------------------------
// Longest common substring
// ---------------------------------------------------------------------------

/// Length in Unicode scalars of the longest contiguous common substring.
/// Classic rolling dynamic program, exact.
inline int64_t lcs_len(std::string_view a, std::string_view b) {
    std::vector<uint32_t> ca = utf8_decode(a);
    std::vector<uint32_t> cb = utf8_decode(b);
    if (ca.empty() || cb.empty()) return 0;
    if (cb.size() > ca.size()) std::swap(ca, cb);
    std::vector<int32_t> prev(cb.size() + 1, 0), cur(cb.size() + 1, 0);
    int64_t best = 0;
    for (size_t i = 1; i <= ca.size(); ++i) {
        for (size_t j = 1; j <= cb.size(); ++j) {
            if (ca[i - 1] == cb[j - 1]) {
                cur[j] = prev[j - 1] + 1;
                best = std::max(best, int64_t(cur[j]));
            } else {
                cur[j] = 0;
            }
        }
        std::swap(prev, cur);
    }
    return best;
}

// ---------------------------------------------------------------------------
// Pair-selection filters
// ---------------------------------------------------------------------------

enum class RejectReason { None, ScoreRatio, LcsFraction, NonLcsChars, MinLength };

inline const char* reject_reason_name(RejectReason r) {
    switch (r) {
        case RejectReason::None: return "accepted";
        case RejectReason::ScoreRatio: return "score ratio";
        case RejectReason::LcsFraction: return "lcs fraction";
        case RejectReason::NonLcsChars: return "non-lcs chars";
        case RejectReason::MinLength: return "min length";
    }
    return "?";
}

struct FilterDecision {
    bool accept = false;
    RejectReason reason = RejectReason::None;
};

/// The four elimination rules, checked in order; the reported reason is the
/// first failing rule. Scores must come from the same BM25 ranked list.
inline FilterDecision filter_candidate(const Document& query_doc, const Document& cand,
                                       double query_score, double cand_score,
                                       const MiningParams& p) {
    if (query_score <= 0.0)
        throw std::invalid_argument("query document score must be positive");
    if (cand_score / query_score > p.max_score_ratio)
        return {false, RejectReason::ScoreRatio};
    int64_t cand_len = char_count(cand.text);
    int64_t lcs = lcs_len(query_doc.text, cand.text);
    if (double(lcs) > p.max_lcs_frac * double(cand_len))
        return {false, RejectReason::LcsFraction};
    if (cand_len - lcs < p.min_non_lcs_chars)
        return {false, RejectReason::NonLcsChars};
    if (cand_len < p.min_cand_chars)
        return {false, RejectReason::MinLength};
    return {true, RejectReason::None};
}

/// Mines document pairs: every sufficiently long document queries the index,
/// its top candidates run through the filters, and the surviving edges are
/// greedily matched (ascending score ratio, so the most distinct pairs go
/// first) under the one-pair-per-document constraint.
inline std::vector<MinedPair> mine_pairs(const SparseIndex& idx, const Collection& coll,
                                         const MiningParams& p, const Bm25Params& bp = {}) {
    struct Edge {
        double ratio;
        int32_t query_doc;
        int32_t cand_doc;
    };
    std::vector<Edge> edges;

    for (int32_t q = 0; q < idx.doc_count(); ++q) {
        const Document& query_doc = coll[size_t(q)];
        if (char_count(query_doc.text) < p.min_query_doc_chars) continue;
        std::vector<Term> terms = tokenize(query_doc.text);
        if (terms.empty()) continue;

        auto ranked = bm25_search(idx, terms, idx.doc_count(), bp);
        double query_score = 0.0;
        bool found = false;
        for (const SearchHit& hit : ranked)
            if (hit.docid == query_doc.docid) {
                query_score = hit.score;
                found = true;
                break;
            }
        if (!found || query_score <= 0.0) continue;

        int32_t taken = 0;
        for (const SearchHit& hit : ranked) {
            if (hit.docid == query_doc.docid) continue;
            if (taken >= p.top_k) break;
            ++taken;
            int32_t cand_ord = *coll.lookup(hit.docid);
            if (filter_candidate(query_doc, coll[size_t(cand_ord)], query_score, hit.score, p)
                    .accept)
                edges.push_back({hit.score / query_score, q, cand_ord});
        }
    }

    std::sort(edges.begin(), edges.end(), [&](const Edge& a, const Edge& b) {
        if (a.ratio != b.ratio) return a.ratio < b.ratio;
        if (coll[size_t(a.query_doc)].docid != coll[size_t(b.query_doc)].docid)
            return coll[size_t(a.query_doc)].docid < coll[size_t(b.query_doc)].docid;
        return coll[size_t(a.cand_doc)].docid < coll[size_t(b.cand_doc)].docid;
    });

    std::vector<char> used(coll.size(), 0);
    std::vector<MinedPair> pairs;
    for (const Edge& e : edges) {
        if (used[size_t(e.query_doc)] || used[size_t(e.cand_doc)]) continue;
        used[size_t(e.query_doc)] = used[size_t(e.cand_doc)] = 1;
        pairs.push_back({coll[size_t(e.query_doc)].docid, coll[size_t(e.cand_doc)].docid, e.ratio});
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// Prompt construction and response parsing
// ---------------------------------------------------------------------------

inline constexpr std::string_view kPromptTemplate =
    "You must write questions for a news quiz to appear in the newspaper. A news quiz asks "
    "about events in the news, NOT about news articles. Here are two articles that appeared "
    "in this week's news: <<{first}>> <<{second}>> For each article give five factual news "
    "quiz English questions, one per line with no extraneous words, that are answered by the "
    "events described in that document and are not answered by the events described in the "
    "other document. The quiz questions must never refer to individual news articles, or "
    "assume the quiz-taker has seen those articles. Precede the first five with DOCA: and "
    "the second with DOCB:";

inline std::string build_prompt(const Document& first, const Document& second) {
    std::string prompt(kPromptTemplate);
    auto substitute = [&](std::string_view placeholder, const std::string& text) {
        size_t at = prompt.find(placeholder);
        prompt.replace(at, placeholder.size(), text);
    };
    substitute("{first}", first.text);
    substitute("{second}", second.text);
    return prompt;
}

struct ParsedQueries {
    std::vector<std::string> doca;
    std::vector<std::string> docb;
    std::vector<std::string> warnings;
};

namespace detail {
inline std::vector<std::string> numbered_lines(std::string_view block) {
    std::vector<std::string> out;
    size_t start = 0;
    while (start <= block.size()) {
        size_t nl = block.find('\n', start);
        std::string_view line = block.substr(start, nl == std::string_view::npos ? block.size() - start
                                                                                 : nl - start);
        start = nl == std::string_view::npos ? block.size() + 1 : nl + 1;
        size_t i = line.find_first_not_of(" \t\r");
        if (i == std::string_view::npos) continue;
        size_t digits = i;
        while (digits < line.size() && line[digits] >= '0' && line[digits] <= '9') ++digits;
        if (digits == i) continue;  // not a numbered line
        if (digits >= line.size() || (line[digits] != '.' && line[digits] != ')')) continue;
        std::string_view rest = line.substr(digits + 1);
        size_t b = rest.find_first_not_of(" \t");
        size_t e = rest.find_last_not_of(" \t\r");
        if (b == std::string_view::npos) continue;
        out.emplace_back(rest.substr(b, e - b + 1));
    }
    return out;
}
}  // namespace detail

/// Splits a completion's content into the DOCA:/DOCB: blocks and extracts the
/// numbered queries. Expects up to five per block; extras are dropped with a
/// warning, an empty block is an error.
inline ParsedQueries parse_content(std::string_view content) {
    size_t pa = content.find("DOCA:");
    size_t pb = content.find("DOCB:");
    if (pa == std::string_view::npos || pb == std::string_view::npos || pb < pa)
        throw DataError("response content missing DOCA:/DOCB: markers");
    ParsedQueries pq;
    pq.doca = detail::numbered_lines(content.substr(pa + 5, pb - pa - 5));
    pq.docb = detail::numbered_lines(content.substr(pb + 5));
    for (auto* block : {&pq.doca, &pq.docb}) {
        const char* name = block == &pq.doca ? "DOCA" : "DOCB";
        if (block->empty())
            throw DataError(std::string("response block ") + name + " has no queries");
        if (block->size() > 5) {
            pq.warnings.push_back(std::string(name) + " block has " +
                                  std::to_string(block->size()) + " queries; keeping first 5");
            block->resize(5);
        }
    }
    return pq;
}

/// Parses a full chat-completion response body; the content lives at
/// choices[0].message.content.
inline ParsedQueries parse_response(std::string_view body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("response is not valid JSON: ") + e.what());
    }
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
        throw DataError("response has no choices");
    const nlohmann::json& msg = j["choices"][0];
    if (!msg.contains("message") || !msg["message"].contains("content") ||
        !msg["message"]["content"].is_string())
        throw DataError("response missing choices[0].message.content");
    return parse_content(msg["message"]["content"].get<std::string>());
}

// ---------------------------------------------------------------------------
// Quality control
// ---------------------------------------------------------------------------

/// Keep unless a banned word appears as a whole token (case-insensitive).
inline bool qc_banned(const std::string& query, const QcParams& qc) {
    for (const Term& tok : tokenize(query))
        for (const Term& banned : qc.banned_words)
            if (tok == banned) return false;
    return true;
}

/// Keep iff score(query, pos) - score(query, neg) >= margin (inclusive).
inline bool qc_margin(RelevanceScorer& scorer, const std::string& query,
                      const std::string& pos_text, const std::string& neg_text,
                      const QcParams& qc) {
    return scorer.score(query, pos_text) - scorer.score(query, neg_text) >= qc.margin;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct PairFailure {
    int64_t pair_id = 0;
    std::string error;
};

struct GenerateOptions {
    int max_retries = 3;             // transport retries per pair
    int initial_backoff_ms = 500;
    double backoff_multiplier = 2.0;
    int max_backoff_ms = 8000;
    int min_interval_ms = 0;         // rate limit between request starts
    std::filesystem::path audit_dir; // raw responses persisted here when set
    std::function<void(int)> sleep_ms;  // injectable; defaults to real sleep
};

struct GenerateResult {
    std::vector<GeneratedExample> examples;
    std::vector<PairFailure> failures;
};

/// Runs each mined pair through prompt -> chat endpoint -> parse. DOCA queries
/// yield examples with doc_a positive, DOCB the reverse. Transport errors and
/// HTTP 429/5xx are retried with exponential backoff; parse failures are
/// recorded and skipped; the pipeline always continues to the next pair.
inline GenerateResult generate_examples(ChatClient& client, const std::vector<MinedPair>& pairs,
                                        const Collection& coll,
                                        const GenerateOptions& opt = {}) {
    GenerateResult res;
    std::function<void(int)> sleep_fn = opt.sleep_ms;
    if (!sleep_fn)
        sleep_fn = [](int ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); };
    if (!opt.audit_dir.empty()) std::filesystem::create_directories(opt.audit_dir);

    for (int64_t pid = 0; pid < int64_t(pairs.size()); ++pid) {
        const MinedPair& pair = pairs[size_t(pid)];
        const Document& a = coll.by_docid(pair.doc_a);
        const Document& b = coll.by_docid(pair.doc_b);
        if (opt.min_interval_ms > 0 && pid > 0) sleep_fn(opt.min_interval_ms);

        std::string prompt = build_prompt(a, b);
        ChatResult r;
        int backoff = opt.initial_backoff_ms;
        for (int attempt = 0;; ++attempt) {
            r = client.complete(prompt);
            bool retryable = !r.ok || r.status == 429 || r.status >= 500;
            if (!retryable || attempt >= opt.max_retries) break;
            sleep_fn(backoff);
            backoff = std::min(int(backoff * opt.backoff_multiplier), opt.max_backoff_ms);
        }
        if (!r.ok) {
            res.failures.push_back({pid, "transport error: " + r.error});
            continue;
        }
        if (!opt.audit_dir.empty())
            write_file(opt.audit_dir / ("pair_" + std::to_string(pid) + ".json"), r.body);
        if (r.status != 200) {
            res.failures.push_back({pid, "http status " + std::to_string(r.status)});
            continue;
        }
        ParsedQueries pq;
        try {
            pq = parse_response(r.body);
        } catch (const DataError& e) {
            res.failures.push_back({pid, e.what()});
            continue;
        }
        for (const std::string& q : pq.doca)
            res.examples.push_back({q, pair.doc_a, pair.doc_b, pid, Slot::DocA});
        for (const std::string& q : pq.docb)
            res.examples.push_back({q, pair.doc_b, pair.doc_a, pid, Slot::DocB});
    }
    return res;
}

}  // namespace clir
