#pragma once

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>

#include "clir/common.hpp"

namespace clir {

/// Pluggable (query, document) -> [0,1] relevance scorer, the margin-filter
/// hook. Real cross-encoders run out of process; tests use the hash stub.
class RelevanceScorer {
  public:
    virtual ~RelevanceScorer() = default;

    virtual double score(const std::string& query, const std::string& doc) = 0;

    virtual std::vector<double> score_batch(
        const std::vector<std::pair<std::string, std::string>>& pairs) {
        std::vector<double> out;
        out.reserve(pairs.size());
        for (const auto& [q, d] : pairs) out.push_back(score(q, d));
        return out;
    }
};

/// Deterministic test stand-in: hash of (query, doc, seed) mapped into [0,1].
class HashStubScorer final : public RelevanceScorer {
  public:
    explicit HashStubScorer(uint64_t seed = 0) : seed_(seed) {}

    double score(const std::string& query, const std::string& doc) override {
        uint64_t h = splitmix64(fnv1a64(query) ^ splitmix64(fnv1a64(doc) ^ seed_));
        return double(h >> 11) * 0x1.0p-53;
    }

  private:
    uint64_t seed_;
};

namespace detail {
/// The line protocol is one record per line; embedded tabs/newlines in the
/// texts are flattened to spaces.
inline std::string sanitize_line_field(std::string s) {
    for (char& c : s)
        if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    return s;
}
}  // namespace detail

/// Runs a shell command with "query\tdoc" lines on stdin and reads one decimal
/// score in [0,1] per line from its stdout.
class CommandScorer final : public RelevanceScorer {
  public:
    explicit CommandScorer(std::string command) : command_(std::move(command)) {}

    double score(const std::string& query, const std::string& doc) override {
        return score_batch({{query, doc}}).front();
    }

    std::vector<double> score_batch(
        const std::vector<std::pair<std::string, std::string>>& pairs) override {
        if (pairs.empty()) return {};
        namespace fs = std::filesystem;
        static int counter = 0;
        std::string stem = "clir-scorer-" + std::to_string(::getpid()) + "-" +
                           std::to_string(counter++);
        fs::path in_path = fs::temp_directory_path() / (stem + ".in");
        fs::path out_path = fs::temp_directory_path() / (stem + ".out");

        std::string input;
        for (const auto& [q, d] : pairs) {
            input += detail::sanitize_line_field(q);
            input += '\t';
            input += detail::sanitize_line_field(d);
            input += '\n';
        }
        write_file(in_path, input);

        // subshell so redirections bind to the whole command, pipelines included
        std::string shell = "( " + command_ + " ) < " + in_path.string() + " > " + out_path.string();
        int rc = std::system(shell.c_str());
        std::string output;
        if (fs::exists(out_path)) output = read_file(out_path);
        fs::remove(in_path);
        fs::remove(out_path);
        if (rc != 0)
            throw ExternalServiceError("scorer command failed (exit " + std::to_string(rc) +
                                       "): " + command_);

        std::vector<double> scores;
        std::istringstream ss(output);
        std::string line;
        while (std::getline(ss, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            scores.push_back(parse_score(line));
        }
        if (scores.size() != pairs.size())
            throw ExternalServiceError("scorer returned " + std::to_string(scores.size()) +
                                       " scores for " + std::to_string(pairs.size()) + " pairs");
        return scores;
    }

  private:
    static double parse_score(const std::string& line) {
        double v;
        try {
            v = parse_double(line, "scorer output");
        } catch (const DataError& e) {
            throw ExternalServiceError(e.what());
        }
        if (v < 0.0 || v > 1.0)
            throw ExternalServiceError("scorer value out of [0,1]: " + line);
        return v;
    }

    std::string command_;
};

/// POSTs "query\tdoc" to an HTTP endpoint and parses the decimal score body.
class HttpScorer final : public RelevanceScorer {
  public:
    explicit HttpScorer(std::string url) : url_(std::move(url)) {
        auto scheme_end = url_.find("://");
        if (scheme_end == std::string::npos || url_.compare(0, scheme_end, "http") != 0)
            throw ExternalServiceError("only http scorer endpoints are supported: " + url_);
        auto path_start = url_.find('/', scheme_end + 3);
        base_ = path_start == std::string::npos ? url_ : url_.substr(0, path_start);
        path_ = path_start == std::string::npos ? "/" : url_.substr(path_start);
    }

    double score(const std::string& query, const std::string& doc) override {
        httplib::Client cli(base_);
        std::string body =
            detail::sanitize_line_field(query) + "\t" + detail::sanitize_line_field(doc);
        auto res = cli.Post(path_, body, "text/plain");
        if (!res) throw ExternalServiceError("scorer request failed: " +
                                             httplib::to_string(res.error()));
        if (res->status != 200)
            throw ExternalServiceError("scorer returned HTTP " + std::to_string(res->status));
        std::string text = res->body;
        while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
        try {
            double v = parse_double(text, "scorer response");
            if (v < 0.0 || v > 1.0)
                throw ExternalServiceError("scorer value out of [0,1]: " + text);
            return v;
        } catch (const DataError& e) {
            throw ExternalServiceError(e.what());
        }
    }

  private:
    std::string url_;
    std::string base_;
    std::string path_;
};

}  // namespace clir
