// Standalone deterministic judge endpoint for local runs and demos. Serves
// hash-derived verdicts over the chat-completions shape until interrupted.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <thread>

#include "vaa/mock_judge.hpp"

int main(int argc, char** argv) {
    vaa::MockJudgeServer::Options opts;
    opts.port = argc > 1 ? std::atoi(argv[1]) : 8878;
    vaa::MockJudgeServer server(opts);
    std::printf("%s\n", server.base_url().c_str());
    std::fflush(stdout);
    for (;;) std::this_thread::sleep_for(std::chrono::seconds(3600));
}
