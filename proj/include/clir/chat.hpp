#pragma once

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "clir/common.hpp"

namespace clir {

struct ChatResult {
    bool ok = false;     // a response arrived (any HTTP status)
    int status = 0;
    std::string body;
    std::string error;   // transport error description when !ok
};

class ChatClient {
  public:
    virtual ~ChatClient() = default;
    virtual ChatResult complete(const std::string& prompt) = 0;
};

/// Replays a canned chat-completion body. Can be scripted to fail the first
/// N calls with a transport error, for retry tests.
class MockChatClient final : public ChatClient {
  public:
    explicit MockChatClient(std::string body, int status = 200)
        : body_(std::move(body)), status_(status) {}

    void fail_first(int n, std::string error) {
        fail_remaining_ = n;
        fail_error_ = std::move(error);
    }

    int calls() const { return calls_; }

    ChatResult complete(const std::string&) override {
        ++calls_;
        if (fail_remaining_ > 0) {
            --fail_remaining_;
            return {false, 0, "", fail_error_};
        }
        return {true, status_, body_, ""};
    }

  private:
    std::string body_;
    int status_;
    int calls_ = 0;
    int fail_remaining_ = 0;
    std::string fail_error_;
};

struct ChatEndpoint {
    std::string url;    // full endpoint URL, e.g. http://host:8080/v1/chat/completions
    std::string model;
    std::string api_key;
};

/// Reads CIRAL_LLM_URL, CIRAL_LLM_MODEL, CIRAL_LLM_KEY. Unset variables leave
/// the corresponding field untouched.
inline void apply_chat_env(ChatEndpoint& ep) {
    if (const char* v = std::getenv("CIRAL_LLM_URL")) ep.url = v;
    if (const char* v = std::getenv("CIRAL_LLM_MODEL")) ep.model = v;
    if (const char* v = std::getenv("CIRAL_LLM_KEY")) ep.api_key = v;
}

namespace detail {
struct SplitUrl {
    std::string base;  // scheme://host[:port]
    std::string path;
};

inline SplitUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ExternalServiceError("endpoint URL missing scheme: " + url);
    if (url.compare(0, scheme_end, "http") != 0)
        throw ExternalServiceError("only http endpoints are supported: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/v1/chat/completions"};
    return {url.substr(0, path_start), url.substr(path_start)};
}
}  // namespace detail

/// Chat-completion endpoint client. One POST per call; the request carries the
/// model name and a single user message holding the prompt.
class HttpChatClient final : public ChatClient {
  public:
    explicit HttpChatClient(ChatEndpoint ep, int timeout_sec = 120) : ep_(std::move(ep)) {
        if (ep_.url.empty()) throw ExternalServiceError("chat endpoint URL not configured");
        auto split = detail::split_url(ep_.url);
        base_ = split.base;
        path_ = split.path;
        timeout_sec_ = timeout_sec;
    }

    ChatResult complete(const std::string& prompt) override {
        httplib::Client cli(base_);
        cli.set_connection_timeout(timeout_sec_, 0);
        cli.set_read_timeout(timeout_sec_, 0);
        httplib::Headers headers;
        if (!ep_.api_key.empty()) headers.emplace("Authorization", "Bearer " + ep_.api_key);
        nlohmann::json req{{"model", ep_.model},
                           {"messages", nlohmann::json::array({nlohmann::json{
                                            {"role", "user"}, {"content", prompt}}})}};
        auto res = cli.Post(path_, headers, req.dump(), "application/json");
        if (!res) return {false, 0, "", httplib::to_string(res.error())};
        return {true, res->status, res->body, ""};
    }

  private:
    ChatEndpoint ep_;
    std::string base_;
    std::string path_;
    int timeout_sec_ = 120;
};

}  // namespace clir
