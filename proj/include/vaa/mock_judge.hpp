#pragma once
// Deterministic in-process judge server speaking the chat-completion wire
// protocol on localhost. Tests script exact response payloads; unscripted
// requests fall back to a hash-seeded default policy so full pipeline runs
// need no third-party endpoint.

#include <atomic>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#ifdef _res
#undef _res  // glibc resolv.h macro leaks through httplib and mangles later headers
#endif

#include "vaa/common.hpp"
#include "vaa/core.hpp"

namespace vaa {

class MockJudgeServer {
  public:
    struct Options {
        std::vector<std::string> scripted;  // raw completion contents served in order
        bool default_policy = true;         // serve hash-derived verdicts once the script runs out
        int port = 0;                       // 0 binds an ephemeral port
    };

    MockJudgeServer() : MockJudgeServer(Options{}) {}

    explicit MockJudgeServer(Options opts) : opts_(std::move(opts)) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            handle(req, res);
        });
        if (opts_.port > 0)
            port_ = server_.bind_to_port("127.0.0.1", opts_.port) ? opts_.port : -1;
        else
            port_ = server_.bind_to_any_port("127.0.0.1");
        if (port_ <= 0) throw transport_error("mock judge failed to bind a port");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~MockJudgeServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    MockJudgeServer(const MockJudgeServer&) = delete;
    MockJudgeServer& operator=(const MockJudgeServer&) = delete;

    int port() const { return port_; }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int calls() const { return calls_.load(); }

    JudgeEndpoint endpoint(const std::string& model_id = "mock-judge") const {
        JudgeEndpoint ep;
        ep.base_url = base_url();
        ep.model_id = model_id;
        ep.api_key_env = "";
        return ep;
    }

    // Most recent request, for asserting on wire details in tests.
    std::string last_body() const {
        std::lock_guard<std::mutex> lock(m_);
        return last_body_;
    }
    std::string last_authorization() const {
        std::lock_guard<std::mutex> lock(m_);
        return last_authorization_;
    }

  private:
    void handle(const httplib::Request& req, httplib::Response& res) {
        calls_.fetch_add(1);
        {
            std::lock_guard<std::mutex> lock(m_);
            last_body_ = req.body;
            last_authorization_ = req.get_header_value("Authorization");
        }
        std::string prompt;
        ojson body = ojson::parse(req.body, nullptr, false);
        if (!body.is_discarded() && body.contains("messages") && body["messages"].is_array() &&
            !body["messages"].empty() && body["messages"][0].contains("content") &&
            body["messages"][0]["content"].is_string())
            prompt = body["messages"][0]["content"].get<std::string>();

        std::string content;
        {
            std::lock_guard<std::mutex> lock(m_);
            if (served_ < opts_.scripted.size()) {
                content = opts_.scripted[served_++];
            } else if (opts_.default_policy) {
                content = default_content(prompt);
            } else {
                res.status = 500;
                res.set_content("script exhausted", "text/plain");
                return;
            }
        }
        ojson reply;
        reply["id"] = "mock-completion";
        reply["choices"] = ojson::array(
            {ojson{{"index", 0}, {"message", ojson{{"role", "assistant"}, {"content", content}}}}});
        res.set_content(reply.dump(), "application/json");
    }

    // Scores derive from the prompt hash only, so identical requests always
    // judge identically across runs.
    static std::string default_content(const std::string& prompt) {
        std::uint64_t h = fnv1a64(prompt);
        if (prompt.find("factual_correctness_score") != std::string::npos) {
            int fc = static_cast<int>(h % 3) - 1;
            int lc = static_cast<int>((h >> 8) % 3) - 1;
            int rs = static_cast<int>((h >> 16) % 3) - 1;
            ojson j;
            j["factual_correctness_evaluation"] = "Deterministic mock assessment of the think text.";
            j["factual_correctness_score"] = fc;
            j["logical_consistency_evaluation"] = "Deterministic mock assessment of think vs answer.";
            j["logical_consistency_score"] = lc;
            j["reasoning_structure_evaluation"] = "Deterministic mock assessment of structure.";
            j["reasoning_structure_score"] = rs;
            return j.dump();
        }
        if (prompt.find("stance_score") != std::string::npos) {
            int score = static_cast<int>(h % 7) + 1;
            ojson j;
            j["evaluation_rationale"] = "Deterministic mock stance rating.";
            j["stance_score"] = score;
            return j.dump();
        }
        ojson j;
        j["note"] = "unrecognized rubric";
        return j.dump();
    }

    Options opts_;
    httplib::Server server_;
    std::thread thread_;
    std::atomic<int> calls_{0};
    mutable std::mutex m_;
    std::size_t served_ = 0;
    std::string last_body_;
    std::string last_authorization_;
    int port_ = 0;
};

}  // namespace vaa
