#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mteq {

// Seeds carry a 4-bit namespace tag in their top bits so that training and
// evaluation streams can never collide. Raw user seeds live in Namespace::User.
enum class SeedNamespace : std::uint8_t {
    User = 0,
    Train = 1,
    Eval = 2,
    Channel = 3,
    Init = 4,
    Shuffle = 5,
};

std::uint64_t splitmix64(std::uint64_t x);

// Deterministic child seed: mixes (parent, tag, index) and stamps the namespace.
std::uint64_t derive_seed(std::uint64_t parent, SeedNamespace ns, std::uint64_t index = 0);

// Same as derive_seed but keeps the parent's namespace.
std::uint64_t split_seed(std::uint64_t parent, std::uint64_t index);

SeedNamespace seed_namespace(std::uint64_t seed);

// Seedable 64-bit stream. Engine choice is fixed (mt19937_64) so results are
// bit-reproducible with a given standard library.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

    std::uint64_t seed() const { return seed_; }
    std::mt19937_64& engine() { return engine_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform integer on [0, n).
    std::uint64_t uniform_index(std::uint64_t n);

    // Uniform double on [0, 1).
    double uniform01();

    RngStream split(std::uint64_t index) const { return RngStream(split_seed(seed_, index)); }

    // Fresh seed in this stream's namespace; successive calls differ.
    std::uint64_t child_seed() { return split_seed(seed_, children_++); }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::uint64_t children_ = 0;
};

// 64-bit FNV-1a, used for config and dataset digests.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace mteq
