#pragma once
// Shared plumbing: the error taxonomy, content hashing for record ids, and a
// couple of string helpers used by several modules.

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vaa {

// Every throwing path in the library uses one of these, so callers can tell
// bad configuration from bad data from a failing upstream service.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct config_error : error {
    using error::error;
};
struct data_error : error {
    using error::error;
};
struct ordering_error : error {
    using error::error;
};
struct transport_error : error {
    using error::error;
};
struct context_overflow_error : error {
    using error::error;
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string to_hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

// Record ids are the hash of a canonical serialization of the record's
// defining inputs (never its outputs), so a rerun recognizes finished work.
inline std::string content_id(std::string_view canonical_bytes) {
    return to_hex16(fnv1a64(canonical_bytes));
}

// Fixed-width float formatting for CSV output. %.17g round-trips doubles and
// keeps rerun output byte-identical.
inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
}

// Lowercases, drops punctuation, collapses whitespace. "Right." and " RIGHT"
// both normalize to "right"; small models drift in casing and trailing dots.
inline std::string normalize_answer(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) {
            out.push_back(static_cast<char>(std::tolower(u)));
        } else if (std::isspace(u) && !out.empty() && out.back() != ' ') {
            out.push_back(' ');
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

inline std::vector<std::string> split_words(std::string_view s) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                words.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

}  // namespace vaa
