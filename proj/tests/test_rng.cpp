#include <doctest.h>

#include <set>

#include "mteq/rng.hpp"

using namespace mteq;

TEST_CASE("derived seeds carry their namespace tag") {
    const std::uint64_t master = 1234;
    CHECK(seed_namespace(master) == SeedNamespace::User);
    const auto t = derive_seed(master, SeedNamespace::Train, 7);
    const auto e = derive_seed(master, SeedNamespace::Eval, 7);
    CHECK(seed_namespace(t) == SeedNamespace::Train);
    CHECK(seed_namespace(e) == SeedNamespace::Eval);
    CHECK(t != e);
    CHECK(seed_namespace(split_seed(t, 3)) == SeedNamespace::Train);
}

TEST_CASE("split seeds are distinct across indices") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) {
        seen.insert(split_seed(99, i));
    }
    CHECK(seen.size() == 1000);
}

TEST_CASE("rng stream is reproducible and uniform_index stays in range") {
    RngStream a(5), b(5);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    RngStream c(6);
    for (int i = 0; i < 1000; ++i) {
        CHECK(c.uniform_index(9) < 9);
        const double u = c.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}
