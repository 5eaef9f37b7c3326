#include "mteq/rng.hpp"

namespace mteq {

namespace {
constexpr int kNamespaceShift = 60;
constexpr std::uint64_t kPayloadMask = (std::uint64_t{1} << kNamespaceShift) - 1;
}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, SeedNamespace ns, std::uint64_t index) {
    const auto tag = static_cast<std::uint64_t>(ns);
    std::uint64_t h = splitmix64(parent ^ splitmix64(tag + 0x51ed2701ULL));
    h = splitmix64(h ^ splitmix64(index + 0x7f4a7c15ULL));
    return (h & kPayloadMask) | (tag << kNamespaceShift);
}

std::uint64_t split_seed(std::uint64_t parent, std::uint64_t index) {
    return derive_seed(parent, seed_namespace(parent), index);
}

SeedNamespace seed_namespace(std::uint64_t seed) {
    return static_cast<SeedNamespace>(seed >> kNamespaceShift);
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
    // Rejection sampling so the draw stays unbiased for any n.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t r;
    do {
        r = engine_();
    } while (r >= limit);
    return r % n;
}

double RngStream::uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace mteq
