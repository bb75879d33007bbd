#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace sspod {

/// Identifies one reproducible random sequence: the pair (master_seed,
/// stream_index) fully determines every draw taken from it.
struct RandomStream {
    std::uint64_t master_seed = 0;
    std::uint64_t stream_index = 0;

    RandomStream substream(std::uint64_t index) const { return {master_seed, index}; }
};

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Derive an independent master seed for a named purpose (e.g. "lhs",
/// "noise") so that different generators never share a sequence.
inline std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view purpose) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : purpose) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return detail::splitmix64(master_seed ^ detail::splitmix64(h));
}

/// Pseudo-random engine bound to one RandomStream. The engine state is
/// keyed on both seed words and both index words, so substreams never
/// replay each other and replay is independent of scheduling.
class StreamEngine {
public:
    explicit StreamEngine(const RandomStream& stream) : engine_(make_engine(stream)) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }

    /// rows x cols standard Gaussian matrix filled column by column, so a
    /// wider request extends a narrower one drawn from the same stream.
    Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd z(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j) {
            for (Eigen::Index i = 0; i < rows; ++i) z(i, j) = normal();
        }
        return z;
    }

    Eigen::VectorXd normal_vector(Eigen::Index size) {
        Eigen::VectorXd z(size);
        for (Eigen::Index i = 0; i < size; ++i) z(i) = normal();
        return z;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    static std::mt19937_64 make_engine(const RandomStream& s) {
        const std::array<std::uint32_t, 4> words{
            static_cast<std::uint32_t>(s.master_seed), static_cast<std::uint32_t>(s.master_seed >> 32),
            static_cast<std::uint32_t>(s.stream_index), static_cast<std::uint32_t>(s.stream_index >> 32)};
        std::seed_seq seq(words.begin(), words.end());
        return std::mt19937_64(seq);
    }

    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace sspod
