#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "clir/chat.hpp"
#include "clir/encoder.hpp"
#include "clir/mining.hpp"
#include "clir/plaid.hpp"
#include "clir/search.hpp"
#include "clir/sparse.hpp"

namespace clir {

/// Documented fine-tuning constants carried as provenance metadata; nothing in
/// this toolkit executes them.
struct TrainMeta {
    double mlm_lr = 1e-5;
    int32_t mlm_batch = 48;
    double retrieval_lr = 5e-6;
    int32_t retrieval_batch = 64;
    int32_t update_steps = 200000;
};

struct LlmSettings {
    std::string url;     // CIRAL_LLM_URL overrides
    std::string model;   // CIRAL_LLM_MODEL overrides
    int32_t max_retries = 3;
    int32_t initial_backoff_ms = 500;
    int32_t min_interval_ms = 0;
};

struct Config {
    uint64_t seed = 1;
    Bm25Params bm25;
    Rm3Params rm3;
    EncoderConfig encoder;
    std::string embedding_table;  // optional; empty -> hash provider
    PlaidBuildParams plaid;       // seed resolved from the global seed
    SearchParams search;
    MiningParams mining;
    QcParams qc;
    LlmSettings llm;
    TrainMeta train;
};

namespace detail {

struct ConfigKeys {
    std::map<std::string, std::function<void(Config&, const std::string&)>> set;
    std::map<std::string, std::function<std::string(const Config&)>> get;
};

inline int64_t cfg_ll(const std::string& key, const std::string& v) {
    return parse_ll(v, "config key " + key);
}

inline const ConfigKeys& config_keys() {
    static const ConfigKeys keys = [] {
        ConfigKeys k;
        auto add = [&](const std::string& key, auto setter, auto getter) {
            k.set[key] = setter;
            k.get[key] = getter;
        };
#define CLIR_CFG_INT(key, expr)                                                              \
    add(key, [](Config& c, const std::string& v) { c.expr = decltype(c.expr)(cfg_ll(key, v)); }, \
        [](const Config& c) { return std::to_string(c.expr); })
#define CLIR_CFG_DBL(key, expr)                                                    \
    add(key, [](Config& c, const std::string& v) { c.expr = parse_double(v, key); }, \
        [](const Config& c) { return dtos(c.expr); })
#define CLIR_CFG_STR(key, expr)                                         \
    add(key, [](Config& c, const std::string& v) { c.expr = v; },        \
        [](const Config& c) { return c.expr; })
        CLIR_CFG_INT("seed", seed);
        CLIR_CFG_DBL("bm25.k1", bm25.k1);
        CLIR_CFG_DBL("bm25.b", bm25.b);
        CLIR_CFG_INT("rm3.fb_docs", rm3.fb_docs);
        CLIR_CFG_INT("rm3.fb_terms", rm3.fb_terms);
        CLIR_CFG_DBL("rm3.orig_weight", rm3.orig_weight);
        CLIR_CFG_INT("encoder.dim", encoder.dim);
        CLIR_CFG_INT("encoder.query_len", encoder.query_len);
        CLIR_CFG_INT("encoder.doc_maxlen", encoder.doc_maxlen);
        CLIR_CFG_STR("encoder.mask", encoder.mask_symbol);
        CLIR_CFG_STR("encoder.table", embedding_table);
        CLIR_CFG_INT("plaid.k", plaid.k);
        CLIR_CFG_INT("plaid.iters", plaid.iters);
        CLIR_CFG_INT("plaid.sample_max", plaid.sample_max);
        CLIR_CFG_INT("search.k", search.k);
        CLIR_CFG_INT("search.n_probe", search.n_probe);
        CLIR_CFG_INT("search.n_candidates", search.n_candidates);
        CLIR_CFG_INT("mine.min_query_doc_chars", mining.min_query_doc_chars);
        CLIR_CFG_INT("mine.top_k", mining.top_k);
        CLIR_CFG_DBL("mine.max_score_ratio", mining.max_score_ratio);
        CLIR_CFG_DBL("mine.max_lcs_frac", mining.max_lcs_frac);
        CLIR_CFG_INT("mine.min_non_lcs_chars", mining.min_non_lcs_chars);
        CLIR_CFG_INT("mine.min_cand_chars", mining.min_cand_chars);
        CLIR_CFG_DBL("qc.margin", qc.margin);
        CLIR_CFG_STR("llm.url", llm.url);
        CLIR_CFG_STR("llm.model", llm.model);
        CLIR_CFG_INT("llm.max_retries", llm.max_retries);
        CLIR_CFG_INT("llm.initial_backoff_ms", llm.initial_backoff_ms);
        CLIR_CFG_INT("llm.min_interval_ms", llm.min_interval_ms);
        CLIR_CFG_DBL("train.mlm_lr", train.mlm_lr);
        CLIR_CFG_INT("train.mlm_batch", train.mlm_batch);
        CLIR_CFG_DBL("train.retrieval_lr", train.retrieval_lr);
        CLIR_CFG_INT("train.retrieval_batch", train.retrieval_batch);
        CLIR_CFG_INT("train.update_steps", train.update_steps);
#undef CLIR_CFG_INT
#undef CLIR_CFG_DBL
#undef CLIR_CFG_STR
        // banned words as a comma-separated list
        k.set["qc.banned"] = [](Config& c, const std::string& v) {
            c.qc.banned_words.clear();
            std::istringstream ss(v);
            std::string word;
            while (std::getline(ss, word, ',')) {
                auto toks = tokenize(word);
                if (toks.size() == 1) c.qc.banned_words.push_back(toks[0]);
            }
        };
        k.get["qc.banned"] = [](const Config& c) {
            std::string out;
            for (const Term& w : c.qc.banned_words) {
                if (!out.empty()) out += ',';
                out += w;
            }
            return out;
        };
        return k;
    }();
    return keys;
}

}  // namespace detail

/// Key = value text file, TOML-style: # comments, [section] headers prefixing
/// the keys that follow, optional double quotes around values.
inline Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path.string());
    Config cfg;
    const auto& keys = detail::config_keys();
    std::string line, section;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string where = path.filename().string() + " line " + std::to_string(lineno);
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        auto strip = [](std::string s) {
            size_t b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            size_t e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        std::string stripped = strip(line);
        if (stripped.empty()) continue;
        if (stripped.front() == '[') {
            if (stripped.back() != ']') throw DataError(where + ": unterminated section header");
            section = stripped.substr(1, stripped.size() - 2);
            continue;
        }
        auto eq = stripped.find('=');
        if (eq == std::string::npos) throw DataError(where + ": expected key = value");
        std::string key = strip(stripped.substr(0, eq));
        std::string value = strip(stripped.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        if (!section.empty()) key = section + "." + key;
        auto it = keys.set.find(key);
        if (it == keys.set.end()) throw DataError(where + ": unknown config key \"" + key + "\"");
        try {
            it->second(cfg, value);
        } catch (const DataError& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    return cfg;
}

/// Sorted key=value dump of every configured value. The API key is excluded:
/// secrets come from the environment and never reach manifests.
inline std::string canonical_config(const Config& cfg) {
    std::string out;
    for (const auto& [key, get] : detail::config_keys().get)
        out += key + " = " + get(cfg) + "\n";
    return out;
}

inline std::string config_hash(const Config& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  (unsigned long long)fnv1a64(canonical_config(cfg)));
    return buf;
}

/// CIRAL_LLM_URL and CIRAL_LLM_MODEL override the config file values.
inline void apply_env(Config& cfg) {
    if (const char* v = std::getenv("CIRAL_LLM_URL")) cfg.llm.url = v;
    if (const char* v = std::getenv("CIRAL_LLM_MODEL")) cfg.llm.model = v;
}

}  // namespace clir
