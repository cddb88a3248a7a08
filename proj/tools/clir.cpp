// clir: command-line front end for the retrieval toolkit. One binary,
// subcommand per pipeline stage; every command is deterministic given its
// config + seed and writes a manifest beside each output.

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "clir/chat.hpp"
#include "clir/config.hpp"
#include "clir/corpus.hpp"
#include "clir/encoder.hpp"
#include "clir/eval.hpp"
#include "clir/mining.hpp"
#include "clir/manifest.hpp"
#include "clir/plaid.hpp"
#include "clir/scorer.hpp"
#include "clir/search.hpp"
#include "clir/sparse.hpp"
#include "clir/train.hpp"

namespace fs = std::filesystem;
using namespace clir;

namespace {

// ---------------------------------------------------------------------------
// Config plumbing: defaults <- config file <- environment <- explicit flags
// ---------------------------------------------------------------------------

struct ConfigFlags {
    std::string config_file;
    std::vector<std::pair<std::string, std::string>> overrides;  // key, raw value

    Config resolve() const {
        Config cfg;
        if (!config_file.empty()) cfg = load_config(config_file);
        apply_env(cfg);
        const auto& keys = detail::config_keys();
        for (const auto& [key, value] : overrides) keys.set.at(key)(cfg, value);
        cfg.plaid.seed = cfg.seed;
        return cfg;
    }
};

/// Registers a flag that records into ConfigFlags::overrides when given.
void add_override(CLI::App* cmd, ConfigFlags& flags, const std::string& flag,
                  const std::string& key, const std::string& help) {
    cmd->add_option(flag, help)->each([&flags, key](const std::string& value) {
        flags.overrides.push_back({key, value});
    });
}

void add_common_flags(CLI::App* cmd, ConfigFlags& flags) {
    cmd->add_option("--config", flags.config_file, "key = value config file");
    add_override(cmd, flags, "--seed", "seed", "global random seed");
}

void add_encoder_flags(CLI::App* cmd, ConfigFlags& flags) {
    add_override(cmd, flags, "--dim", "encoder.dim", "embedding dimension");
    add_override(cmd, flags, "--query-len", "encoder.query_len", "query padding length");
    add_override(cmd, flags, "--doc-maxlen", "encoder.doc_maxlen", "document truncation length");
    add_override(cmd, flags, "--table", "encoder.table", "embedding table file");
}

std::unique_ptr<EmbeddingProvider> make_provider(const Config& cfg, int32_t dim, uint64_t seed) {
    if (!cfg.embedding_table.empty())
        return std::make_unique<TableProvider>(TableProvider::load(cfg.embedding_table, seed));
    return std::make_unique<HashProvider>(dim, seed);
}

// ---------------------------------------------------------------------------
// Shared file formats
// ---------------------------------------------------------------------------

/// Topics file: one "qid<TAB>query text" per line.
std::vector<std::pair<std::string, std::string>> read_queries(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open queries file: " + path.string());
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw DataError(path.filename().string() + " line " + std::to_string(lineno) +
                            ": expected \"qid<TAB>text\"");
        out.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
    return out;
}

void write_pairs(const std::vector<MinedPair>& pairs, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write pairs file: " + path.string());
    for (size_t i = 0; i < pairs.size(); ++i) {
        nlohmann::json rec{{"pair_id", i},
                           {"doc_a", pairs[i].doc_a},
                           {"doc_b", pairs[i].doc_b},
                           {"ratio", pairs[i].bm25_ratio}};
        out << rec.dump() << '\n';
    }
}

std::vector<MinedPair> read_pairs(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open pairs file: " + path.string());
    std::vector<MinedPair> pairs;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            nlohmann::json rec = nlohmann::json::parse(line);
            pairs.push_back({rec.at("doc_a").get<std::string>(), rec.at("doc_b").get<std::string>(),
                             rec.at("ratio").get<double>()});
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.filename().string() + " line " + std::to_string(lineno) + ": " +
                            e.what());
        }
    }
    return pairs;
}

void write_examples(const std::vector<GeneratedExample>& examples, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write examples file: " + path.string());
    for (const GeneratedExample& ex : examples) {
        nlohmann::json rec{{"query", ex.query},
                           {"pos", ex.pos_docid},
                           {"neg", ex.neg_docid},
                           {"pair_id", ex.pair_id},
                           {"slot", slot_name(ex.origin_slot)}};
        out << rec.dump() << '\n';
    }
}

std::vector<GeneratedExample> read_examples(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open examples file: " + path.string());
    std::vector<GeneratedExample> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::string where = path.filename().string() + " line " + std::to_string(lineno);
        try {
            nlohmann::json rec = nlohmann::json::parse(line);
            GeneratedExample ex;
            ex.query = rec.at("query").get<std::string>();
            ex.pos_docid = rec.at("pos").get<std::string>();
            ex.neg_docid = rec.at("neg").get<std::string>();
            ex.pair_id = rec.at("pair_id").get<int64_t>();
            std::string slot = rec.at("slot").get<std::string>();
            if (slot == "DOCA") ex.origin_slot = Slot::DocA;
            else if (slot == "DOCB") ex.origin_slot = Slot::DocB;
            else throw DataError(where + ": unknown slot " + slot);
            out.push_back(std::move(ex));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    return out;
}

std::string sanitize_tsv_field(std::string s) {
    for (char& c : s)
        if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    return s;
}

// ---------------------------------------------------------------------------
// Subcommand implementations
// ---------------------------------------------------------------------------

struct IngestOpts {
    ConfigFlags flags;
    std::string in, out;
};

int run_ingest(const IngestOpts& o) {
    Config cfg = o.flags.resolve();
    Collection coll = load_jsonl(o.in);
    OutputGuard guard;
    guard.add(o.out);
    save_jsonl(coll, o.out);
    write_manifest(o.out, "ingest", {o.in}, cfg);
    guard.release();
    std::cout << "ingested " << coll.size() << " documents\n";
    return 0;
}

struct IndexSparseOpts {
    ConfigFlags flags;
    std::string corpus, out;
};

int run_index_sparse(const IndexSparseOpts& o) {
    Config cfg = o.flags.resolve();
    Collection coll = load_jsonl(o.corpus);
    SparseIndex idx = SparseIndex::build(coll);
    OutputGuard guard;
    guard.add(o.out);
    idx.save(o.out);
    write_manifest(o.out, "index-sparse", {o.corpus}, cfg);
    guard.release();
    std::cout << "indexed " << idx.doc_count() << " documents, " << idx.term_count() << " terms\n";
    return 0;
}

struct IndexPlaidOpts {
    ConfigFlags flags;
    std::string corpus, out;
};

int run_index_plaid(const IndexPlaidOpts& o) {
    Config cfg = o.flags.resolve();
    Collection coll = load_jsonl(o.corpus);
    auto provider = make_provider(cfg, cfg.encoder.dim, cfg.seed);
    OutputGuard guard;
    guard.add(o.out);
    PlaidIndex idx = build_plaid(coll, *provider, cfg.encoder, cfg.plaid);
    save_index(idx, o.out);
    write_manifest(o.out, "index-plaid", {o.corpus}, cfg);
    guard.release();
    std::cout << "indexed " << idx.docids.size() << " documents, " << idx.token_count()
              << " tokens, k=" << idx.centroids.k << ", alpha=" << dtos(idx.alpha) << "\n";
    return 0;
}

struct SearchSparseOpts {
    ConfigFlags flags;
    std::string index, queries, out, tag;
    bool rm3 = false;
};

int run_search_sparse(const SearchSparseOpts& o) {
    Config cfg = o.flags.resolve();
    SparseIndex idx = SparseIndex::load(o.index);
    auto topics = read_queries(o.queries);
    RunFile run;
    std::string tag = o.tag.empty() ? (o.rm3 ? "rm3" : "bm25") : o.tag;
    for (const auto& [qid, text] : topics) {
        std::vector<Term> terms = tokenize(text);
        std::vector<SearchHit> hits;
        if (o.rm3) {
            WeightedQuery wq = rm3_expand(idx, terms, cfg.rm3, cfg.bm25);
            hits = weighted_search(idx, wq, cfg.search.k, cfg.bm25);
        } else {
            hits = bm25_search(idx, terms, cfg.search.k, cfg.bm25);
        }
        run.add_hits(qid, hits, tag);
    }
    OutputGuard guard;
    guard.add(o.out);
    write_run(run, o.out);
    write_manifest(o.out, o.rm3 ? "search-rm3" : "search-bm25", {o.index, o.queries}, cfg);
    guard.release();
    std::cout << "ran " << topics.size() << " queries\n";
    return 0;
}

struct SearchDenseOpts {
    ConfigFlags flags;
    std::string index, corpus, queries, out, tag, compare;
    bool exact = false;
};

int run_search_dense(const SearchDenseOpts& o) {
    Config cfg = o.flags.resolve();
    auto topics = read_queries(o.queries);
    RunFile run;
    std::string tag = o.tag.empty() ? (o.exact ? "exact" : "plaid") : o.tag;

    if (o.exact) {
        Collection coll = load_jsonl(o.corpus);
        auto provider = make_provider(cfg, cfg.encoder.dim, cfg.seed);
        for (const auto& [qid, text] : topics)
            run.add_hits(qid, search_exact(coll, *provider, cfg.encoder, text, cfg.search.k), tag);
    } else {
        PlaidIndex idx = load_index(o.index);
        auto provider = make_provider(cfg, idx.cfg.dim, idx.seed);
        for (const auto& [qid, text] : topics)
            run.add_hits(qid, search_plaid(idx, *provider, text, cfg.search), tag);
    }

    OutputGuard guard;
    guard.add(o.out);
    write_run(run, o.out);
    write_manifest(o.out, o.exact ? "search-exact" : "search-plaid",
                   {o.exact ? o.corpus : o.index, o.queries}, cfg);
    guard.release();

    if (!o.compare.empty()) {
        RunFile ref = read_run(o.compare);
        double total = 0.0;
        size_t counted = 0;
        for (const auto& [topic, entries] : ref.topics()) {
            const auto* mine = run.topic(topic);
            if (!mine) continue;
            std::vector<SearchHit> ref_hits, my_hits;
            for (const RunEntry& e : entries) ref_hits.push_back({e.docid, e.score});
            for (const RunEntry& e : *mine) my_hits.push_back({e.docid, e.score});
            total += overlap_recall_at(my_hits, ref_hits, size_t(cfg.search.k));
            ++counted;
        }
        double mean = counted == 0 ? 0.0 : total / double(counted);
        std::printf("recall@%d vs reference: %.4f\n", cfg.search.k, mean);
    }
    std::cout << "ran " << topics.size() << " queries\n";
    return 0;
}

struct MinePairsOpts {
    ConfigFlags flags;
    std::string corpus, out;
};

int run_mine_pairs(const MinePairsOpts& o) {
    Config cfg = o.flags.resolve();
    Collection coll = load_jsonl(o.corpus);
    SparseIndex idx = SparseIndex::build(coll);
    std::vector<MinedPair> pairs = mine_pairs(idx, coll, cfg.mining, cfg.bm25);
    OutputGuard guard;
    guard.add(o.out);
    write_pairs(pairs, o.out);
    write_manifest(o.out, "mine-pairs", {o.corpus}, cfg);
    guard.release();
    std::cout << "mined " << pairs.size() << " pairs from " << coll.size() << " documents\n";
    return 0;
}

struct GenQueriesOpts {
    ConfigFlags flags;
    std::string pairs, corpus, out, failures, audit_dir, mock;
};

int run_gen_queries(const GenQueriesOpts& o) {
    Config cfg = o.flags.resolve();
    Collection coll = load_jsonl(o.corpus);
    std::vector<MinedPair> pairs = read_pairs(o.pairs);

    std::unique_ptr<ChatClient> client;
    if (!o.mock.empty()) {
        client = std::make_unique<MockChatClient>(read_file(o.mock));
    } else {
        ChatEndpoint ep{cfg.llm.url, cfg.llm.model, ""};
        apply_chat_env(ep);
        if (ep.url.empty())
            throw ExternalServiceError(
                "no chat endpoint configured (set CIRAL_LLM_URL or llm.url, or pass --mock)");
        client = std::make_unique<HttpChatClient>(ep);
    }

    GenerateOptions gen;
    gen.max_retries = cfg.llm.max_retries;
    gen.initial_backoff_ms = cfg.llm.initial_backoff_ms;
    gen.min_interval_ms = cfg.llm.min_interval_ms;
    gen.audit_dir = o.audit_dir.empty() ? o.out + ".audit" : o.audit_dir;

    std::string failures_path = o.failures.empty() ? o.out + ".failures.jsonl" : o.failures;
    OutputGuard guard;
    guard.add(o.out);
    guard.add(failures_path);
    guard.add(gen.audit_dir);

    GenerateResult res = generate_examples(*client, pairs, coll, gen);
    write_examples(res.examples, o.out);
    {
        std::ofstream fout(failures_path, std::ios::binary | std::ios::trunc);
        for (const PairFailure& f : res.failures) {
            nlohmann::json rec{{"pair_id", f.pair_id}, {"error", f.error}};
            fout << rec.dump() << '\n';
        }
    }
    write_manifest(o.out, "gen-queries", {o.pairs, o.corpus}, cfg);
    guard.release();
    std::cout << "generated " << res.examples.size() << " examples, " << res.failures.size()
              << " failed pairs\n";
    if (!pairs.empty() && res.examples.empty() && !res.failures.empty())
        throw ExternalServiceError("every pair failed; see " + failures_path);
    return 0;
}

struct QcOpts {
    ConfigFlags flags;
    std::string examples, corpus, out, scorer_cmd, scorer_url;
};

int run_qc(const QcOpts& o) {
    Config cfg = o.flags.resolve();
    Collection coll = load_jsonl(o.corpus);
    std::vector<GeneratedExample> examples = read_examples(o.examples);

    std::unique_ptr<RelevanceScorer> scorer;
    if (!o.scorer_cmd.empty())
        scorer = std::make_unique<CommandScorer>(o.scorer_cmd);
    else if (!o.scorer_url.empty())
        scorer = std::make_unique<HttpScorer>(o.scorer_url);
    else
        scorer = std::make_unique<HashStubScorer>(cfg.seed);

    std::vector<GeneratedExample> kept;
    size_t banned = 0, margin = 0;
    for (const GeneratedExample& ex : examples) {
        if (!qc_banned(ex.query, cfg.qc)) {
            ++banned;
            continue;
        }
        const Document& pos = coll.by_docid(ex.pos_docid);
        const Document& neg = coll.by_docid(ex.neg_docid);
        if (!qc_margin(*scorer, ex.query, pos.text, neg.text, cfg.qc)) {
            ++margin;
            continue;
        }
        kept.push_back(ex);
    }

    OutputGuard guard;
    guard.add(o.out);
    write_examples(kept, o.out);
    write_manifest(o.out, "qc", {o.examples, o.corpus}, cfg);
    guard.release();
    std::cout << "kept " << kept.size() << " of " << examples.size() << " examples (" << banned
              << " banned-word, " << margin << " margin)\n";
    return 0;
}

struct MakeTriplesOpts {
    ConfigFlags flags;
    std::string examples, corpus, out;
};

int run_make_triples(const MakeTriplesOpts& o) {
    Config cfg = o.flags.resolve();
    Collection coll = load_jsonl(o.corpus);
    std::vector<GeneratedExample> examples = read_examples(o.examples);
    OutputGuard guard;
    guard.add(o.out);
    {
        std::ofstream out(o.out, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write triples file: " + o.out);
        for (const GeneratedExample& ex : examples)
            out << sanitize_tsv_field(ex.query) << '\t'
                << sanitize_tsv_field(coll.by_docid(ex.pos_docid).text) << '\t'
                << sanitize_tsv_field(coll.by_docid(ex.neg_docid).text) << '\n';
    }
    write_manifest(o.out, "make-triples", {o.examples, o.corpus}, cfg);
    guard.release();
    std::cout << "wrote " << examples.size() << " triples\n";
    return 0;
}

struct GradCheckOpts {
    ConfigFlags flags;
    std::string triples, out;
    int count = 20;
    double epsilon = 1e-5;
    double tol = 1e-4;
};

int run_grad_check(const GradCheckOpts& o) {
    Config cfg = o.flags.resolve();
    std::vector<Triple> triples = read_triples(o.triples);
    if (triples.empty()) throw DataError("no triples in " + o.triples);
    if (int32_t(triples.size()) > o.count) triples.resize(size_t(o.count));

    ToyEncoder enc(cfg.encoder.dim, cfg.seed);
    std::ostringstream report;
    double worst = 0.0;
    int skipped = 0;
    for (size_t i = 0; i < triples.size(); ++i) {
        GradCheckResult r = grad_check(enc, triples[i], cfg.encoder, o.epsilon, 32,
                                       cfg.seed + i);
        if (r.near_tie) {
            ++skipped;
            report << "triple " << i << ": skipped (near-tie argmax)\n";
            continue;
        }
        worst = std::max(worst, r.max_rel_err);
        report << "triple " << i << ": max_rel_err " << dtos(r.max_rel_err) << "\n";
    }
    report << "checked " << (triples.size() - size_t(skipped)) << " triples, skipped " << skipped
           << ", worst max_rel_err " << dtos(worst) << "\n";
    std::cout << report.str();
    if (!o.out.empty()) {
        OutputGuard guard;
        guard.add(o.out);
        write_file(o.out, report.str());
        write_manifest(o.out, "grad-check", {o.triples}, cfg);
        guard.release();
    }
    if (worst >= o.tol) {
        std::cerr << "gradient check failed: " << dtos(worst) << " >= " << dtos(o.tol) << "\n";
        return 2;
    }
    return 0;
}

struct EvalOpts {
    ConfigFlags flags;
    std::string run, qrels, metric = "all", gain = "linear", out;
};

int run_eval(const EvalOpts& o) {
    Config cfg = o.flags.resolve();
    RunFile run = read_run(o.run);
    Qrels qrels = read_qrels(o.qrels);
    GainFn fn;
    if (o.gain == "linear") fn = GainFn::Linear;
    else if (o.gain == "exp") fn = GainFn::Exponential;
    else throw DataError("unknown gain function: " + o.gain);

    auto parse_metric = [](const std::string& m) -> std::pair<std::string, int32_t> {
        auto at = m.find('@');
        if (at == std::string::npos) throw DataError("metric must look like ndcg@20: " + m);
        return {m.substr(0, at), int32_t(parse_ll(m.substr(at + 1), "metric cutoff"))};
    };

    std::vector<std::pair<std::string, int32_t>> wanted;
    if (o.metric == "all")
        wanted = {{"ndcg", 20}, {"recall", 100}, {"judged", 20}};
    else
        wanted.push_back(parse_metric(o.metric));

    std::ostringstream tsv;
    for (const auto& [name, cutoff] : wanted) {
        MetricResult res;
        if (name == "ndcg") res = ndcg_at(run, qrels, cutoff, fn);
        else if (name == "recall") res = recall_at(run, qrels, cutoff);
        else if (name == "judged") res = judged_at(run, qrels, cutoff);
        else throw DataError("unknown metric: " + name);
        char buf[32];
        for (const auto& [topic, value] : res.per_topic) {
            std::snprintf(buf, sizeof(buf), "%.4f", value);
            tsv << name << '@' << cutoff << '\t' << topic << '\t' << buf << '\n';
        }
        std::snprintf(buf, sizeof(buf), "%.4f", res.mean);
        tsv << name << '@' << cutoff << "\tall\t" << buf << '\n';
    }
    std::cout << tsv.str();
    if (!o.out.empty()) {
        OutputGuard guard;
        guard.add(o.out);
        write_file(o.out, tsv.str());
        write_manifest(o.out, "eval", {o.run, o.qrels}, cfg);
        guard.release();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-language retrieval toolkit"};
    app.require_subcommand(1);
    std::function<int()> action;

    auto ingest = std::make_shared<IngestOpts>();
    {
        auto* cmd = app.add_subcommand("ingest", "validate and canonicalize a JSONL corpus");
        cmd->add_option("--in", ingest->in, "input corpus JSONL")->required();
        cmd->add_option("--out", ingest->out, "output corpus JSONL")->required();
        add_common_flags(cmd, ingest->flags);
        cmd->callback([&action, ingest] { action = [ingest] { return run_ingest(*ingest); }; });
    }

    auto isparse = std::make_shared<IndexSparseOpts>();
    {
        auto* cmd = app.add_subcommand("index-sparse", "build the inverted index");
        cmd->add_option("--corpus", isparse->corpus, "corpus JSONL")->required();
        cmd->add_option("--out", isparse->out, "index output file")->required();
        add_common_flags(cmd, isparse->flags);
        cmd->callback(
            [&action, isparse] { action = [isparse] { return run_index_sparse(*isparse); }; });
    }

    auto iplaid = std::make_shared<IndexPlaidOpts>();
    {
        auto* cmd = app.add_subcommand("index-plaid", "build the compressed token-vector index");
        cmd->add_option("--corpus", iplaid->corpus, "corpus JSONL")->required();
        cmd->add_option("--out", iplaid->out, "index output directory")->required();
        add_common_flags(cmd, iplaid->flags);
        add_encoder_flags(cmd, iplaid->flags);
        add_override(cmd, iplaid->flags, "--k", "plaid.k", "centroid count (0 = auto)");
        add_override(cmd, iplaid->flags, "--iters", "plaid.iters", "k-means iterations");
        cmd->callback(
            [&action, iplaid] { action = [iplaid] { return run_index_plaid(*iplaid); }; });
    }

    auto sbm25 = std::make_shared<SearchSparseOpts>();
    {
        auto* cmd = app.add_subcommand("search-bm25", "rank with BM25");
        cmd->add_option("--index", sbm25->index, "sparse index file")->required();
        cmd->add_option("--queries", sbm25->queries, "qid<TAB>text file")->required();
        cmd->add_option("--out", sbm25->out, "TREC run output")->required();
        cmd->add_option("--tag", sbm25->tag, "run tag");
        add_common_flags(cmd, sbm25->flags);
        add_override(cmd, sbm25->flags, "--k", "search.k", "results per query");
        add_override(cmd, sbm25->flags, "--k1", "bm25.k1", "BM25 k1");
        add_override(cmd, sbm25->flags, "--b", "bm25.b", "BM25 b");
        cmd->callback(
            [&action, sbm25] { action = [sbm25] { return run_search_sparse(*sbm25); }; });
    }

    auto srm3 = std::make_shared<SearchSparseOpts>();
    srm3->rm3 = true;
    {
        auto* cmd = app.add_subcommand("search-rm3", "rank with BM25 + RM3 expansion");
        cmd->add_option("--index", srm3->index, "sparse index file")->required();
        cmd->add_option("--queries", srm3->queries, "qid<TAB>text file")->required();
        cmd->add_option("--out", srm3->out, "TREC run output")->required();
        cmd->add_option("--tag", srm3->tag, "run tag");
        add_common_flags(cmd, srm3->flags);
        add_override(cmd, srm3->flags, "--k", "search.k", "results per query");
        add_override(cmd, srm3->flags, "--k1", "bm25.k1", "BM25 k1");
        add_override(cmd, srm3->flags, "--b", "bm25.b", "BM25 b");
        add_override(cmd, srm3->flags, "--fb-docs", "rm3.fb_docs", "feedback documents");
        add_override(cmd, srm3->flags, "--fb-terms", "rm3.fb_terms", "expansion terms");
        add_override(cmd, srm3->flags, "--orig-weight", "rm3.orig_weight",
                     "original query weight in [0,1]");
        cmd->callback([&action, srm3] { action = [srm3] { return run_search_sparse(*srm3); }; });
    }

    auto splaid = std::make_shared<SearchDenseOpts>();
    {
        auto* cmd = app.add_subcommand("search-plaid", "approximate late-interaction search");
        cmd->add_option("--index", splaid->index, "plaid index directory")->required();
        cmd->add_option("--queries", splaid->queries, "qid<TAB>text file")->required();
        cmd->add_option("--out", splaid->out, "TREC run output")->required();
        cmd->add_option("--tag", splaid->tag, "run tag");
        cmd->add_option("--compare", splaid->compare,
                        "reference run; report overlap recall@k against it");
        add_common_flags(cmd, splaid->flags);
        add_encoder_flags(cmd, splaid->flags);
        add_override(cmd, splaid->flags, "--k", "search.k", "results per query");
        add_override(cmd, splaid->flags, "--n-probe", "search.n_probe",
                     "centroids probed per query token");
        add_override(cmd, splaid->flags, "--n-candidates", "search.n_candidates",
                     "documents passed to the rerank stage (0 = auto)");
        cmd->callback(
            [&action, splaid] { action = [splaid] { return run_search_dense(*splaid); }; });
    }

    auto sexact = std::make_shared<SearchDenseOpts>();
    sexact->exact = true;
    {
        auto* cmd = app.add_subcommand("search-exact", "brute-force late-interaction search");
        cmd->add_option("--corpus", sexact->corpus, "corpus JSONL")->required();
        cmd->add_option("--queries", sexact->queries, "qid<TAB>text file")->required();
        cmd->add_option("--out", sexact->out, "TREC run output")->required();
        cmd->add_option("--tag", sexact->tag, "run tag");
        cmd->add_option("--compare", sexact->compare,
                        "reference run; report overlap recall@k against it");
        add_common_flags(cmd, sexact->flags);
        add_encoder_flags(cmd, sexact->flags);
        add_override(cmd, sexact->flags, "--k", "search.k", "results per query");
        cmd->callback(
            [&action, sexact] { action = [sexact] { return run_search_dense(*sexact); }; });
    }

    auto mine = std::make_shared<MinePairsOpts>();
    {
        auto* cmd = app.add_subcommand("mine-pairs", "mine document pairs for query generation");
        cmd->add_option("--corpus", mine->corpus, "corpus JSONL")->required();
        cmd->add_option("--out", mine->out, "pairs JSONL output")->required();
        add_common_flags(cmd, mine->flags);
        add_override(cmd, mine->flags, "--min-query-doc-chars", "mine.min_query_doc_chars",
                     "minimum query document length");
        add_override(cmd, mine->flags, "--top-k", "mine.top_k", "candidates per query document");
        add_override(cmd, mine->flags, "--max-score-ratio", "mine.max_score_ratio",
                     "score ratio ceiling");
        add_override(cmd, mine->flags, "--max-lcs-frac", "mine.max_lcs_frac",
                     "LCS fraction ceiling");
        add_override(cmd, mine->flags, "--min-non-lcs-chars", "mine.min_non_lcs_chars",
                     "minimum candidate chars outside the LCS");
        add_override(cmd, mine->flags, "--min-cand-chars", "mine.min_cand_chars",
                     "minimum candidate length");
        cmd->callback([&action, mine] { action = [mine] { return run_mine_pairs(*mine); }; });
    }

    auto gen = std::make_shared<GenQueriesOpts>();
    {
        auto* cmd = app.add_subcommand("gen-queries", "generate training queries per mined pair");
        cmd->add_option("--pairs", gen->pairs, "pairs JSONL from mine-pairs")->required();
        cmd->add_option("--corpus", gen->corpus, "corpus JSONL")->required();
        cmd->add_option("--out", gen->out, "examples JSONL output")->required();
        cmd->add_option("--failures", gen->failures,
                        "failure log JSONL (default <out>.failures.jsonl)");
        cmd->add_option("--audit-dir", gen->audit_dir, "directory for raw response bodies");
        cmd->add_option("--mock", gen->mock,
                        "canned chat-completion body; no endpoint is contacted");
        add_common_flags(cmd, gen->flags);
        cmd->callback([&action, gen] { action = [gen] { return run_gen_queries(*gen); }; });
    }

    auto qc = std::make_shared<QcOpts>();
    {
        auto* cmd = app.add_subcommand("qc", "apply banned-word and margin filters");
        cmd->add_option("--examples", qc->examples, "examples JSONL")->required();
        cmd->add_option("--corpus", qc->corpus, "corpus JSONL")->required();
        cmd->add_option("--out", qc->out, "kept examples JSONL")->required();
        cmd->add_option("--scorer-cmd", qc->scorer_cmd,
                        "shell command speaking the line protocol");
        cmd->add_option("--scorer-url", qc->scorer_url, "http scorer endpoint");
        add_common_flags(cmd, qc->flags);
        add_override(cmd, qc->flags, "--margin", "qc.margin", "required score margin");
        cmd->callback([&action, qc] { action = [qc] { return run_qc(*qc); }; });
    }

    auto mt = std::make_shared<MakeTriplesOpts>();
    {
        auto* cmd = app.add_subcommand("make-triples", "resolve examples into training triples");
        cmd->add_option("--examples", mt->examples, "examples JSONL")->required();
        cmd->add_option("--corpus", mt->corpus, "corpus JSONL")->required();
        cmd->add_option("--out", mt->out, "triples TSV output")->required();
        add_common_flags(cmd, mt->flags);
        cmd->callback([&action, mt] { action = [mt] { return run_make_triples(*mt); }; });
    }

    auto gc = std::make_shared<GradCheckOpts>();
    {
        auto* cmd = app.add_subcommand("grad-check",
                                       "finite-difference check of the loss gradients");
        cmd->add_option("--triples", gc->triples, "triples TSV")->required();
        cmd->add_option("--count", gc->count, "triples to check");
        cmd->add_option("--epsilon", gc->epsilon, "finite-difference step");
        cmd->add_option("--tol", gc->tol, "max relative error tolerance");
        cmd->add_option("--out", gc->out, "report output file");
        add_common_flags(cmd, gc->flags);
        add_override(cmd, gc->flags, "--dim", "encoder.dim", "embedding dimension");
        cmd->callback([&action, gc] { action = [gc] { return run_grad_check(*gc); }; });
    }

    auto ev = std::make_shared<EvalOpts>();
    {
        auto* cmd = app.add_subcommand("eval", "score a run against qrels");
        cmd->add_option("--run", ev->run, "TREC run file")->required();
        cmd->add_option("--qrels", ev->qrels, "TREC qrels file")->required();
        cmd->add_option("--metric", ev->metric, "ndcg@N | recall@N | judged@N | all");
        cmd->add_option("--gain", ev->gain, "ndcg gain: linear | exp");
        cmd->add_option("--out", ev->out, "also write the TSV report here");
        add_common_flags(cmd, ev->flags);
        cmd->callback([&action, ev] { action = [ev] { return run_eval(*ev); }; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        return action();
    } catch (const ExternalServiceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
