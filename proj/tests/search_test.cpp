#include "clir/search.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <thread>

#include "testutil.hpp"

using namespace clir;
using testutil::TempDir;

namespace {

TokenMatrix random_unit_rows(int rows, int dim, uint64_t seed) {
    TokenMatrix m(rows, dim);
    Rng rng(seed);
    for (int32_t r = 0; r < rows; ++r) {
        double s = 0;
        for (int32_t j = 0; j < dim; ++j) {
            m.row(r)[j] = 2.0 * rng.next_double() - 1.0;
            s += m.row(r)[j] * m.row(r)[j];
        }
        double inv = 1.0 / std::sqrt(s);
        for (int32_t j = 0; j < dim; ++j) m.row(r)[j] *= inv;
    }
    return m;
}

/// Rank every document by maxsim over its decompressed representation: the
/// equivalence oracle for exhaustive-parameter search_plaid.
std::vector<SearchHit> brute_decompressed_ranking(const PlaidIndex& idx, const TokenMatrix& q) {
    std::vector<SearchHit> hits;
    for (size_t d = 0; d < idx.docids.size(); ++d)
        hits.push_back({idx.docids[d], testutil::brute_maxsim(q, idx.decompress_doc(int32_t(d)))});
    std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.docid < b.docid;
    });
    return hits;
}

}  // namespace

TEST(MaxSim, IdenticalSingleVectorScoresOne) {
    TokenMatrix v = random_unit_rows(1, 128, 1);
    EXPECT_NEAR(maxsim(v, v), 1.0, 1e-12);
}

TEST(MaxSim, EveryQueryRowPresentInDoc) {
    TokenMatrix q = random_unit_rows(32, 128, 3);
    TokenMatrix d(40, 128);
    // doc contains every query row plus noise rows
    for (int32_t r = 0; r < 32; ++r)
        std::copy(q.row(r), q.row(r) + 128, d.row(r));
    TokenMatrix noise = random_unit_rows(8, 128, 5);
    for (int32_t r = 0; r < 8; ++r) std::copy(noise.row(r), noise.row(r) + 128, d.row(32 + r));
    EXPECT_NEAR(maxsim(q, d), 32.0, 1e-9);
}

TEST(MaxSim, MatchesDoubleLoopOracle) {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        TokenMatrix q = random_unit_rows(4, 128, seed);
        TokenMatrix d = random_unit_rows(7, 128, seed + 100);
        EXPECT_NEAR(maxsim(q, d), testutil::brute_maxsim(q, d), 1e-9);
    }
}

TEST(MaxSim, BoundedByQueryRowCount) {
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        TokenMatrix q = random_unit_rows(int(seed % 6) + 1, 64, seed);
        TokenMatrix d = random_unit_rows(9, 64, seed + 50);
        EXPECT_LE(maxsim(q, d), double(q.rows) + 1e-9);
    }
}

TEST(MaxSim, PermutationInvariantAndMonotoneUnderAppend) {
    TokenMatrix q = random_unit_rows(5, 64, 7);
    TokenMatrix d = random_unit_rows(6, 64, 9);
    double base = maxsim(q, d);

    TokenMatrix reversed(6, 64);
    for (int32_t r = 0; r < 6; ++r) std::copy(d.row(r), d.row(r) + 64, reversed.row(5 - r));
    EXPECT_EQ(maxsim(q, reversed), base);

    TokenMatrix extended(8, 64);
    std::copy(d.data.begin(), d.data.end(), extended.data.begin());
    TokenMatrix extra = random_unit_rows(2, 64, 11);
    std::copy(extra.data.begin(), extra.data.end(), extended.data.begin() + 6 * 64);
    EXPECT_GE(maxsim(q, extended), base - 1e-12);
}

TEST(MaxSim, DimensionMismatchRejected) {
    TokenMatrix q = random_unit_rows(2, 32, 1);
    TokenMatrix d = random_unit_rows(2, 64, 1);
    EXPECT_THROW(maxsim(q, d), std::invalid_argument);
}

TEST(SearchExact, KLargerThanCorpusRanksEverything) {
    auto fx = testutil::clustered_corpus(3, 4);
    HashProvider provider(128, 1);
    auto hits = search_exact(fx.corpus, provider, EncoderConfig{}, fx.queries[0], 100);
    EXPECT_EQ(hits.size(), fx.corpus.size());
    for (size_t i = 1; i < hits.size(); ++i) EXPECT_GE(hits[i - 1].score, hits[i].score);
}

TEST(SearchExact, ExactCopyOfQueryWins) {
    Collection coll;
    coll.add({"match", "rare tokens exactly querying", Lang::en});
    coll.add({"other1", "completely different words here", Lang::en});
    coll.add({"other2", "unrelated content again", Lang::en});
    HashProvider provider(128, 5);
    auto hits = search_exact(coll, provider, EncoderConfig{}, "rare tokens exactly querying", 3);
    ASSERT_EQ(hits.size(), 3u);
    EXPECT_EQ(hits[0].docid, "match");
}

TEST(SearchExact, IdenticalDocsTieBreakByDocid) {
    Collection coll;
    coll.add({"z_doc", "same words", Lang::en});
    coll.add({"a_doc", "same words", Lang::en});
    HashProvider provider(128, 5);
    auto hits = search_exact(coll, provider, EncoderConfig{}, "same words", 2);
    ASSERT_EQ(hits.size(), 2u);
    EXPECT_EQ(hits[0].docid, "a_doc");
    EXPECT_EQ(hits[0].score, hits[1].score);
}

// Exhaustive parameters (n_probe = K, n_candidates = N) must reproduce the
// brute-force ranking over decompressed representations exactly.
TEST(SearchPlaid, ExhaustiveEqualsDecompressedBruteForce) {
    auto fx = testutil::clustered_corpus(6, 5);
    HashProvider provider(128, 11);
    EncoderConfig cfg;
    PlaidIndex idx = build_plaid(fx.corpus, provider, cfg, {.k = 12, .iters = 6, .seed = 11});
    SearchParams params{.k = int32_t(fx.corpus.size()),
                        .n_probe = idx.centroids.k,
                        .n_candidates = int32_t(fx.corpus.size())};
    for (const std::string& query : fx.queries) {
        auto got = search_plaid(idx, provider, query, params);
        auto want = brute_decompressed_ranking(idx, encode_query(provider, query, cfg));
        ASSERT_EQ(got.size(), want.size());
        for (size_t i = 0; i < got.size(); ++i) {
            EXPECT_EQ(got[i].docid, want[i].docid) << "rank " << i;
            EXPECT_EQ(got[i].score, want[i].score) << "rank " << i;
        }
    }
}

// Unique single-token documents whose embeddings come from an exact
// float-representable table: with K = token count the centroids equal the
// tokens, alpha is 0, and compressed search is bit-for-bit the exact search.
TEST(SearchPlaid, LosslessRegimeMatchesExactSearch) {
    TempDir tmp("lossless");
    const int n = 8, dim = 16;
    Collection coll;
    std::string table;
    for (int i = 0; i < n; ++i) {
        std::string term = "t" + std::to_string(i);
        coll.add({"doc" + std::to_string(i), term, Lang::en});
        table += term;
        for (int j = 0; j < dim; ++j) table += j == i ? " 1" : " 0";
        table += "\n";
    }
    testutil::write_text(tmp.file("table.txt"), table);
    TableProvider provider = TableProvider::load(tmp.file("table.txt"), 3);
    EncoderConfig cfg{.dim = dim, .query_len = 8, .doc_maxlen = 20};

    PlaidIndex idx = build_plaid(coll, provider, cfg, {.k = n, .iters = 3, .seed = 3});
    EXPECT_EQ(idx.alpha, 0.0);

    SearchParams params{.k = n, .n_probe = n, .n_candidates = n};
    for (int i = 0; i < n; ++i) {
        std::string query = "t" + std::to_string(i);
        auto plaid = search_plaid(idx, provider, query, params);
        auto exact = search_exact(coll, provider, cfg, query, n);
        ASSERT_EQ(plaid.size(), exact.size());
        for (size_t r = 0; r < plaid.size(); ++r) {
            EXPECT_EQ(plaid[r].docid, exact[r].docid);
            EXPECT_EQ(plaid[r].score, exact[r].score);  // bit-for-bit
        }
    }
}

TEST(SearchPlaid, ClusteredRecallAgainstExact) {
    auto fx = testutil::clustered_corpus(10, 8);
    HashProvider provider(128, 17);
    EncoderConfig cfg;
    PlaidIndex idx = build_plaid(fx.corpus, provider, cfg, {.k = 32, .iters = 6, .seed = 17});
    SearchParams params{.k = 8, .n_probe = 4, .n_candidates = 30};
    double total = 0;
    for (const std::string& query : fx.queries) {
        auto approx = search_plaid(idx, provider, query, params);
        auto exact = search_exact(fx.corpus, provider, cfg, query, 8);
        total += overlap_recall_at(approx, exact, 8);
    }
    EXPECT_GE(total / double(fx.queries.size()), 0.9);
}

TEST(SearchPlaid, RecallMonotoneInProbesAndCandidates) {
    auto fx = testutil::clustered_corpus(8, 6);
    HashProvider provider(128, 19);
    EncoderConfig cfg;
    PlaidIndex idx = build_plaid(fx.corpus, provider, cfg, {.k = 24, .iters = 6, .seed = 19});

    auto mean_recall = [&](SearchParams params) {
        double total = 0;
        for (const std::string& query : fx.queries) {
            auto approx = search_plaid(idx, provider, query, params);
            auto exact = search_exact(fx.corpus, provider, cfg, query, params.k);
            total += overlap_recall_at(approx, exact, size_t(params.k));
        }
        return total / double(fx.queries.size());
    };

    double prev = -1.0;
    for (int32_t probe : {1, 2, 4, 8, 24}) {
        double r = mean_recall({.k = 6, .n_probe = probe, .n_candidates = 20});
        EXPECT_GE(r, prev - 1e-12) << "n_probe " << probe;
        prev = r;
    }
    prev = -1.0;
    for (int32_t cand : {6, 12, 24, 48}) {
        double r = mean_recall({.k = 6, .n_probe = 4, .n_candidates = cand});
        EXPECT_GE(r, prev - 1e-12) << "n_candidates " << cand;
        prev = r;
    }
}

TEST(SearchPlaid, FewerCandidatesThanKReturnsWhatExists) {
    auto fx = testutil::clustered_corpus(2, 3);
    HashProvider provider(128, 23);
    PlaidIndex idx =
        build_plaid(fx.corpus, provider, EncoderConfig{}, {.k = 4, .iters = 3, .seed = 23});
    // a query of pure out-of-vocabulary terms still reaches some lists but few docs
    auto hits = search_plaid(idx, provider, fx.queries[0], {.k = 100, .n_probe = 1, .n_candidates = 100});
    EXPECT_LE(hits.size(), fx.corpus.size());
}

TEST(SearchPlaid, ConcurrentQueriesAgree) {
    auto fx = testutil::clustered_corpus(4, 5);
    HashProvider provider(128, 31);
    PlaidIndex idx =
        build_plaid(fx.corpus, provider, EncoderConfig{}, {.k = 8, .iters = 4, .seed = 31});
    SearchParams params{.k = 5, .n_probe = 4, .n_candidates = 10};
    auto expected = search_plaid(idx, provider, fx.queries[0], params);
    std::vector<std::thread> workers;
    std::vector<std::vector<SearchHit>> results(4);
    for (int w = 0; w < 4; ++w)
        workers.emplace_back([&, w] {
            for (int i = 0; i < 10; ++i)
                results[size_t(w)] = search_plaid(idx, provider, fx.queries[0], params);
        });
    for (auto& t : workers) t.join();
    for (const auto& r : results) {
        ASSERT_EQ(r.size(), expected.size());
        for (size_t i = 0; i < r.size(); ++i) {
            EXPECT_EQ(r[i].docid, expected[i].docid);
            EXPECT_EQ(r[i].score, expected[i].score);
        }
    }
}

TEST(SearchPlaid, InvalidParamsRejected) {
    auto fx = testutil::clustered_corpus(2, 3);
    HashProvider provider(128, 29);
    PlaidIndex idx =
        build_plaid(fx.corpus, provider, EncoderConfig{}, {.k = 4, .iters = 3, .seed = 29});
    EXPECT_THROW(search_plaid(idx, provider, "x", {.k = 0, .n_probe = 1, .n_candidates = 5}),
                 std::invalid_argument);
    EXPECT_THROW(search_plaid(idx, provider, "x", {.k = 5, .n_probe = 1, .n_candidates = 3}),
                 std::invalid_argument);
}
