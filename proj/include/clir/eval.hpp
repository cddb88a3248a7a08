#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "clir/common.hpp"

namespace clir {

/// Graded relevance judgments keyed by (topic, docid). Topics iterate in
/// lexicographic order.
class Qrels {
  public:
    void add(const std::string& topic, const std::string& docid, int32_t grade) {
        if (grade < 0) throw DataError("negative grade for " + topic + "/" + docid);
        auto [it, fresh] = topics_[topic].emplace(docid, grade);
        if (!fresh) throw DataError("duplicate qrels entry " + topic + "/" + docid);
    }

    bool judged(const std::string& topic, const std::string& docid) const {
        auto t = topics_.find(topic);
        return t != topics_.end() && t->second.count(docid) > 0;
    }

    int32_t grade(const std::string& topic, const std::string& docid) const {
        auto t = topics_.find(topic);
        if (t == topics_.end()) return 0;
        auto d = t->second.find(docid);
        return d == t->second.end() ? 0 : d->second;
    }

    std::vector<std::string> topics() const {
        std::vector<std::string> out;
        for (const auto& [topic, unused] : topics_) out.push_back(topic);
        return out;
    }

    const std::unordered_map<std::string, int32_t>* topic_grades(const std::string& topic) const {
        auto t = topics_.find(topic);
        return t == topics_.end() ? nullptr : &t->second;
    }

    size_t size() const {
        size_t n = 0;
        for (const auto& [topic, grades] : topics_) n += grades.size();
        return n;
    }

  private:
    std::map<std::string, std::unordered_map<std::string, int32_t>> topics_;
};

struct RunEntry {
    std::string docid;
    double score = 0.0;
    int32_t rank = 0;
    std::string tag;
};

/// Ranked output per topic. Validated on construction: ranks are consecutive
/// from 1, scores non-increasing, docids unique within a topic. Topics keep
/// insertion order.
class RunFile {
  public:
    void add_topic(const std::string& topic, std::vector<RunEntry> entries) {
        if (index_.count(topic)) throw DataError("duplicate topic " + topic + " in run");
        std::unordered_set<std::string> seen;
        for (size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].rank != int32_t(i) + 1)
                throw DataError("topic " + topic + ": ranks not consecutive from 1");
            if (i > 0 && entries[i].score > entries[i - 1].score)
                throw DataError("topic " + topic + ": scores increase at rank " +
                                std::to_string(i + 1));
            if (!seen.insert(entries[i].docid).second)
                throw DataError("topic " + topic + ": duplicate docid " + entries[i].docid);
        }
        index_.emplace(topic, topics_.size());
        topics_.emplace_back(topic, std::move(entries));
    }

    /// Ranks assigned from a sorted hit list.
    void add_hits(const std::string& topic, const std::vector<SearchHit>& hits,
                  const std::string& tag) {
        std::vector<RunEntry> entries;
        entries.reserve(hits.size());
        for (size_t i = 0; i < hits.size(); ++i)
            entries.push_back({hits[i].docid, hits[i].score, int32_t(i) + 1, tag});
        add_topic(topic, std::move(entries));
    }

    const std::vector<RunEntry>* topic(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &topics_[it->second].second;
    }

    const std::vector<std::pair<std::string, std::vector<RunEntry>>>& topics() const {
        return topics_;
    }

  private:
    std::vector<std::pair<std::string, std::vector<RunEntry>>> topics_;
    std::unordered_map<std::string, size_t> index_;
};

// ---------------------------------------------------------------------------
// TREC text formats
//   qrels: "topic 0 docid grade"
//   run:   "topic Q0 docid rank score tag"
// ---------------------------------------------------------------------------

inline Qrels read_qrels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open qrels file: " + path.string());
    Qrels qrels;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string where = path.filename().string() + " line " + std::to_string(lineno);
        std::istringstream ss(line);
        std::string topic, iter, docid, grade;
        if (!(ss >> topic)) continue;  // blank line
        if (!(ss >> iter >> docid >> grade))
            throw DataError(where + ": expected \"topic 0 docid grade\"");
        std::string extra;
        if (ss >> extra) throw DataError(where + ": trailing fields");
        long long g = parse_ll(grade, where);
        if (g < 0) throw DataError(where + ": negative grade");
        try {
            qrels.add(topic, docid, int32_t(g));
        } catch (const DataError& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    return qrels;
}

inline RunFile read_run(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open run file: " + path.string());
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<RunEntry>> grouped;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string where = path.filename().string() + " line " + std::to_string(lineno);
        std::istringstream ss(line);
        std::string topic, q0, docid, rank, score, tag;
        if (!(ss >> topic)) continue;
        if (!(ss >> q0 >> docid >> rank >> score >> tag))
            throw DataError(where + ": expected \"topic Q0 docid rank score tag\"");
        if (!grouped.count(topic)) order.push_back(topic);
        grouped[topic].push_back({docid, parse_double(score, where),
                                  int32_t(parse_ll(rank, where)), tag});
    }
    RunFile run;
    for (const std::string& topic : order) run.add_topic(topic, std::move(grouped[topic]));
    return run;
}

inline void write_run(const RunFile& run, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write run file: " + path.string());
    for (const auto& [topic, entries] : run.topics())
        for (const RunEntry& e : entries)
            out << topic << " Q0 " << e.docid << ' ' << e.rank << ' ' << dtos(e.score) << ' '
                << e.tag << '\n';
    if (!out) throw DataError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Metrics. Mean is over the topics present in the qrels; a qrels topic absent
// from the run scores 0, run topics absent from the qrels are ignored.
// ---------------------------------------------------------------------------

struct MetricResult {
    std::vector<std::pair<std::string, double>> per_topic;  // qrels topic order
    double mean = 0.0;
};

enum class GainFn { Linear, Exponential };

namespace detail {
inline double gain(int32_t grade, GainFn fn) {
    return fn == GainFn::Linear ? double(grade) : std::exp2(double(grade)) - 1.0;
}

template <typename PerTopic>
MetricResult metric_over_topics(const Qrels& qrels, PerTopic&& per_topic_fn) {
    MetricResult res;
    for (const std::string& topic : qrels.topics())
        res.per_topic.push_back({topic, per_topic_fn(topic)});
    if (!res.per_topic.empty()) {
        double total = 0.0;
        for (const auto& [topic, v] : res.per_topic) total += v;
        res.mean = total / double(res.per_topic.size());
    }
    return res;
}
}  // namespace detail

/// nDCG@cutoff with log2(rank+1) discount. Unjudged documents count as grade
/// 0; topics with no relevant documents score 0.
inline MetricResult ndcg_at(const RunFile& run, const Qrels& qrels, int32_t cutoff = 20,
                            GainFn fn = GainFn::Linear) {
    if (cutoff < 1) throw std::invalid_argument("cutoff must be >= 1");
    return detail::metric_over_topics(qrels, [&](const std::string& topic) {
        std::vector<int32_t> grades;
        for (const auto& [docid, g] : *qrels.topic_grades(topic)) grades.push_back(g);
        std::sort(grades.begin(), grades.end(), std::greater<>());
        double idcg = 0.0;
        for (size_t i = 0; i < grades.size() && i < size_t(cutoff); ++i)
            idcg += detail::gain(grades[i], fn) / std::log2(double(i) + 2.0);
        if (idcg == 0.0) return 0.0;

        double dcg = 0.0;
        if (const auto* entries = run.topic(topic))
            for (size_t i = 0; i < entries->size() && i < size_t(cutoff); ++i)
                dcg += detail::gain(qrels.grade(topic, (*entries)[i].docid), fn) /
                       std::log2(double(i) + 2.0);
        return dcg / idcg;
    });
}

/// Fraction of relevant (grade > 0) documents retrieved in the top cutoff.
inline MetricResult recall_at(const RunFile& run, const Qrels& qrels, int32_t cutoff = 100) {
    if (cutoff < 1) throw std::invalid_argument("cutoff must be >= 1");
    return detail::metric_over_topics(qrels, [&](const std::string& topic) {
        int64_t relevant = 0;
        for (const auto& [docid, g] : *qrels.topic_grades(topic))
            if (g > 0) ++relevant;
        if (relevant == 0) return 0.0;
        int64_t found = 0;
        if (const auto* entries = run.topic(topic))
            for (size_t i = 0; i < entries->size() && i < size_t(cutoff); ++i)
                if (qrels.grade(topic, (*entries)[i].docid) > 0) ++found;
        return double(found) / double(relevant);
    });
}

/// Fraction of the retrieved top-cutoff documents that have any judgment.
inline MetricResult judged_at(const RunFile& run, const Qrels& qrels, int32_t cutoff = 20) {
    if (cutoff < 1) throw std::invalid_argument("cutoff must be >= 1");
    return detail::metric_over_topics(qrels, [&](const std::string& topic) {
        const auto* entries = run.topic(topic);
        if (!entries || entries->empty()) return 0.0;
        size_t n = std::min(entries->size(), size_t(cutoff));
        size_t judged = 0;
        for (size_t i = 0; i < n; ++i)
            if (qrels.judged(topic, (*entries)[i].docid)) ++judged;
        return double(judged) / double(n);
    });
}

}  // namespace clir
