#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace instancegen {

// ---------------------------------------------------------------------------
// Errors. The CLI maps ValidationError -> exit 2 and BackendError -> exit 3.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad user input, malformed files, schema violations.
struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

/// A backend is missing, misbehaving, timed out or returned garbage.
struct BackendError : Error {
    explicit BackendError(const std::string& msg) : Error(msg) {}
};

// ---------------------------------------------------------------------------
// Logging: single sink, swappable for tests.
// ---------------------------------------------------------------------------

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3 };

using LogSink = std::function<void(LogLevel, const std::string&)>;

void set_log_sink(LogSink sink);   // null restores the stderr default
void set_log_level(LogLevel min_level);
void log_message(LogLevel level, const std::string& msg);

inline void log_info(const std::string& msg) { log_message(LogLevel::Info, msg); }
inline void log_warn(const std::string& msg) { log_message(LogLevel::Warn, msg); }
inline void log_debug(const std::string& msg) { log_message(LogLevel::Debug, msg); }

// ---------------------------------------------------------------------------
// Deterministic hashing / RNG. All synthetic randomness goes through these so
// fixtures and frozen test values hold on any platform.
// ---------------------------------------------------------------------------

constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ull) {
    std::uint64_t h = seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// splitmix64 stream; small, portable, and stable across stdlib versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, n). n must be > 0.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    /// Uniform double in [0, 1).
    double next_unit() { return double(next_u64() >> 11) * (1.0 / 9007199254740992.0); }

    /// Uniform double in [lo, hi).
    double next_range(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

private:
    std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Formatting helpers (gcc 11 has no std::format).
// ---------------------------------------------------------------------------

/// Fixed-decimal string, e.g. format_fixed(0.753, 2) == "0.75".
inline std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

/// Locate a data file shipped with the source tree (prompts/, data/).
/// Looks relative to cwd first, then under the configured source dir.
std::string find_data_file(const std::string& relative);

}  // namespace instancegen
