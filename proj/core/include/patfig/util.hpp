#ifndef PATFIG_UTIL_HPP
#define PATFIG_UTIL_HPP

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace patfig {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Deterministic 64-bit stream generator. Same seed, same sequence, on every
/// platform; std::uniform_int_distribution is implementation-defined so all
/// bounded draws go through next_below().
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform draw in [0, bound). Rejection sampling, exact uniformity.
    std::uint64_t next_below(std::uint64_t bound) {
        if (bound == 0) throw Error("SplitMix64::next_below: bound must be positive");
        const std::uint64_t threshold = (0ULL - bound) % bound;
        for (;;) {
            std::uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    double next_double() {  // [0, 1)
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

private:
    std::uint64_t state_;
};

std::uint64_t fnv1a64(const std::string& s);

/// Per-figure seed derived from the global seed and the figure id, so plans do
/// not depend on corpus ordering or worker scheduling.
std::uint64_t mix_seed(std::uint64_t global_seed, const std::string& figure_id);

/// Runs fn(i) for i in [0, count) on `workers` threads. Exceptions from
/// workers are rethrown on the calling thread. workers == 0 or 1 runs inline.
void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

/// round-half-up mask count: round(ratio*n), but at least 1 when n > 0 and
/// ratio > 0 so every sample trains at least one position.
std::size_t mask_count(std::size_t n, double ratio);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

/// Writes to path + ".partial", then renames onto path.
void write_text_file_atomic(const std::string& path, const std::string& content);

std::vector<std::string> read_lines(const std::string& path);

}  // namespace patfig

#endif
