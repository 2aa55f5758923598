#pragma once
// JSON Lines persistence. Streams are append-only; every append flushes so a
// killed process loses at most the line it was writing. The reader tolerates
// one torn line at the tail (the crash case) and rejects corruption anywhere
// else.

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vaa/common.hpp"
#include "vaa/core.hpp"

namespace vaa {

class JsonlWriter {
  public:
    explicit JsonlWriter(const std::filesystem::path& path, bool truncate = false) : path_(path) {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        out_.open(path, (truncate ? std::ios::trunc : std::ios::app) | std::ios::binary);
        if (!out_) throw data_error("cannot open for writing: " + path.string());
    }

    void write(const ojson& record) {
        out_ << record.dump() << '\n';
        out_.flush();
        if (!out_) throw data_error("write failed: " + path_.string());
    }

  private:
    std::filesystem::path path_;
    std::ofstream out_;
};

// Calls fn for each parsed line. A final line without a trailing newline is a
// torn write from a crash and is skipped; a malformed line elsewhere throws.
inline std::size_t for_each_jsonl(const std::filesystem::path& path,
                                  const std::function<void(const ojson&)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return 0;
    std::size_t count = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        bool complete = !in.eof();  // getline hit a newline, not end of file
        ojson j = ojson::parse(line, nullptr, false);
        if (j.is_discarded()) {
            if (!complete) break;  // torn tail line, ignore
            throw data_error("corrupt record in " + path.string());
        }
        fn(j);
        ++count;
    }
    return count;
}

inline std::vector<ojson> read_jsonl(const std::filesystem::path& path) {
    std::vector<ojson> records;
    for_each_jsonl(path, [&](const ojson& j) { records.push_back(j); });
    return records;
}

}  // namespace vaa
