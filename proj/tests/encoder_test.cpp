#include "clir/encoder.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "testutil.hpp"

using namespace clir;
using testutil::TempDir;

namespace {

double norm(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST(HashEmbed, Deterministic) {
    auto a = hash_embed("kofia", 128, 42);
    auto b = hash_embed("kofia", 128, 42);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, hash_embed("kofia", 128, 43));
    EXPECT_NE(a, hash_embed("kofib", 128, 42));
}

TEST(HashEmbed, UnitNorm) {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        Term t = "t" + std::to_string(rng.next_u64());
        EXPECT_NEAR(norm(hash_embed(t, 128, 7)), 1.0, 1e-6);
    }
}

TEST(HashEmbed, DistinctTermsRarelyAligned) {
    Rng rng(9);
    int aligned = 0;
    for (int i = 0; i < 1000; ++i) {
        auto a = hash_embed("a" + std::to_string(rng.next_u64()), 128, 1);
        auto b = hash_embed("b" + std::to_string(rng.next_u64()), 128, 1);
        if (std::abs(cosine(a, b)) >= 0.9) ++aligned;
    }
    EXPECT_LE(aligned, 10);  // >= 99% of pairs below 0.9
}

TEST(EncodeQuery, PadsWithMaskRows) {
    HashProvider provider(128, 3);
    EncoderConfig cfg;
    TokenMatrix m = encode_query(provider, "one two three four five", cfg);
    ASSERT_EQ(m.rows, 32);
    ASSERT_EQ(m.dim, 128);
    auto mask = provider.embed(cfg.mask_symbol);
    for (int32_t r = 5; r < 32; ++r)
        for (int32_t j = 0; j < 128; ++j) EXPECT_EQ(m.row(r)[j], mask[size_t(j)]);
    // first rows are the token embeddings in order
    auto one = provider.embed("one");
    for (int32_t j = 0; j < 128; ++j) EXPECT_EQ(m.row(0)[j], one[size_t(j)]);
}

TEST(EncodeQuery, EmptyTextIsAllMask) {
    HashProvider provider(128, 3);
    EncoderConfig cfg;
    TokenMatrix m = encode_query(provider, "", cfg);
    ASSERT_EQ(m.rows, 32);
    auto mask = provider.embed(cfg.mask_symbol);
    for (int32_t r = 0; r < 32; ++r)
        for (int32_t j = 0; j < 128; ++j) EXPECT_EQ(m.row(r)[j], mask[size_t(j)]);
}

TEST(EncodeQuery, TruncatesLongQueries) {
    HashProvider provider(128, 3);
    EncoderConfig cfg;
    std::string text;
    for (int i = 0; i < 40; ++i) text += "tok" + std::to_string(i) + " ";
    TokenMatrix m = encode_query(provider, text, cfg);
    EXPECT_EQ(m.rows, 32);
    auto last = provider.embed("tok31");
    for (int32_t j = 0; j < 128; ++j) EXPECT_EQ(m.row(31)[j], last[size_t(j)]);
}

TEST(EncodeQuery, RowCountAlwaysQueryLen) {
    HashProvider provider(64, 1);
    EncoderConfig cfg{.dim = 64, .query_len = 7, .doc_maxlen = 20};
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        std::string text;
        for (size_t i = 0, n = rng.next_index(15); i < n; ++i)
            text += "w" + std::to_string(rng.next_u64() % 100) + " ";
        EXPECT_EQ(encode_query(provider, text, cfg).rows, 7);
    }
}

TEST(EncodeDoc, TruncatesAtMaxlen) {
    HashProvider provider(32, 1);
    EncoderConfig cfg{.dim = 32, .query_len = 4, .doc_maxlen = 180};
    std::string text;
    for (int i = 0; i < 200; ++i) text += "w" + std::to_string(i) + " ";
    EXPECT_EQ(encode_doc(provider, text, cfg).rows, 180);
    EXPECT_EQ(encode_doc(provider, "single", cfg).rows, 1);
}

TEST(EncodeDoc, EmptyDocBecomesOneMaskRow) {
    HashProvider provider(32, 1);
    EncoderConfig cfg{.dim = 32, .query_len = 4, .doc_maxlen = 180};
    TokenMatrix m = encode_doc(provider, "", cfg);
    ASSERT_EQ(m.rows, 1);
    auto mask = provider.embed(cfg.mask_symbol);
    for (int32_t j = 0; j < 32; ++j) EXPECT_EQ(m.row(0)[j], mask[size_t(j)]);
}

TEST(EncodeDoc, AllRowsUnitNorm) {
    HashProvider provider(128, 11);
    EncoderConfig cfg;
    TokenMatrix m = encode_doc(provider, "some words for the unit norm check", cfg);
    for (int32_t r = 0; r < m.rows; ++r) {
        double s = 0;
        for (int32_t j = 0; j < m.dim; ++j) s += m.row(r)[j] * m.row(r)[j];
        EXPECT_NEAR(std::sqrt(s), 1.0, 1e-6);
    }
}

TEST(EncoderConfig, DimMismatchRejected) {
    HashProvider provider(64, 1);
    EncoderConfig cfg;  // dim 128
    EXPECT_THROW(encode_query(provider, "x", cfg), std::invalid_argument);
}

TEST(EmbeddingTable, ReturnsStoredVectors) {
    TempDir tmp("table");
    std::string table = "alpha";
    for (int i = 0; i < 128; ++i) table += i == 0 ? " 1" : " 0";
    table += "\nbeta";
    for (int i = 0; i < 128; ++i) table += i == 1 ? " 1" : " 0";
    table += "\n";
    testutil::write_text(tmp.file("t.txt"), table);
    TableProvider tp = TableProvider::load(tmp.file("t.txt"), 9);
    EXPECT_EQ(tp.dim(), 128);
    auto a = tp.embed("alpha");
    EXPECT_EQ(a[0], 1.0);
    for (size_t i = 1; i < a.size(); ++i) EXPECT_EQ(a[i], 0.0);
}

TEST(EmbeddingTable, UnknownTermFallsBackToHash) {
    TempDir tmp("table");
    testutil::write_text(tmp.file("t.txt"), "known 1 0 0 0\n");
    TableProvider tp = TableProvider::load(tmp.file("t.txt"), 77);
    EXPECT_EQ(tp.embed("missing"), hash_embed("missing", 4, 77));
}

TEST(EmbeddingTable, InconsistentDimRejected) {
    TempDir tmp("table");
    testutil::write_text(tmp.file("t.txt"), "a 1 0 0 0\nb 1 0\n");
    try {
        TableProvider::load(tmp.file("t.txt"), 0);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(EmbeddingTable, NonUnitRowsNormalized) {
    TempDir tmp("table");
    testutil::write_text(tmp.file("t.txt"), "big 3 4 0 0\n");
    TableProvider tp = TableProvider::load(tmp.file("t.txt"), 0);
    auto v = tp.embed("big");
    EXPECT_NEAR(v[0], 0.6, 1e-12);
    EXPECT_NEAR(v[1], 0.8, 1e-12);
}

// Swapping the hash provider for a table holding the identical values must not
// perturb a single bit of the encoded matrices.
TEST(EmbeddingTable, ProviderSwapIsBitwiseIdentical) {
    TempDir tmp("table");
    EncoderConfig cfg{.dim = 16, .query_len = 8, .doc_maxlen = 20};
    HashProvider hash(16, 5);
    std::string text = "these are the exact same tokens";
    std::vector<Term> vocab = tokenize(text);
    vocab.push_back(cfg.mask_symbol);

    std::string table;
    for (const Term& t : vocab) {
        table += t;
        for (double v : hash.embed(t)) {
            char buf[40];
            std::snprintf(buf, sizeof(buf), " %.17g", v);
            table += buf;
        }
        table += "\n";
    }
    testutil::write_text(tmp.file("t.txt"), table);
    TableProvider tp = TableProvider::load(tmp.file("t.txt"), 5);

    TokenMatrix a = encode_query(hash, text, cfg);
    TokenMatrix b = encode_query(tp, text, cfg);
    ASSERT_EQ(a.data.size(), b.data.size());
    for (size_t i = 0; i < a.data.size(); ++i) EXPECT_EQ(a.data[i], b.data[i]);
}
