#include <cstdint>
#include <set>

#include "distenc/rng.hpp"
#include "doctest.h"

using namespace distenc;

// Reference outputs computed with an independent implementation of the same
// published algorithm. Matching these pins the generator bit-for-bit.
TEST_CASE("generator reproduces the reference output sequence") {
    {
        SplitMix64 g(0);
        CHECK(g.next_u64() == 0xe220a8397b1dcdafull);
        CHECK(g.next_u64() == 0x6e789e6aa1b965f4ull);
        CHECK(g.next_u64() == 0x06c45d188009454full);
        CHECK(g.next_u64() == 0xf88bb8a8724c81ecull);
    }
    {
        SplitMix64 g(42);
        CHECK(g.next_u64() == 0xbdd732262feb6e95ull);
        CHECK(g.next_u64() == 0x28efe333b266f103ull);
        CHECK(g.next_u64() == 0x47526757130f9f52ull);
        CHECK(g.next_u64() == 0x581ce1ff0e4ae394ull);
    }
    {
        SplitMix64 g(1234567);
        CHECK(g.next_u64() == 0x599ed017fb08fc85ull);
        CHECK(g.next_u64() == 0x2c73f08458540fa5ull);
    }
}

TEST_CASE("unit draws land in [0,1) and match the reference values") {
    SplitMix64 g(0);
    CHECK(g.next_unit() == doctest::Approx(0.8833108082136426).epsilon(1e-15));
    CHECK(g.next_unit() == doctest::Approx(0.43152799704850997).epsilon(1e-15));
    SplitMix64 h(987654321);
    for (int i = 0; i < 10000; ++i) {
        const double u = h.next_unit();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("uniform draws respect their bounds") {
    SplitMix64 g(7);
    for (int i = 0; i < 10000; ++i) {
        const float x = g.next_uniform(-2.5f, 3.5f);
        CHECK(x >= -2.5f);
        CHECK(x < 3.5f);
    }
}

TEST_CASE("bounded integer draws cover [0, n) and nothing else") {
    SplitMix64 g(11);
    std::set<uint64_t> seen;
    for (int i = 0; i < 4000; ++i) {
        const uint64_t v = g.next_below(7);
        CHECK(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);  // all residues reached
}

TEST_CASE("seed derivation is frozen and stream-separated") {
    CHECK(derive_seed(42, 0) == 0x28efe333b266f103ull);
    CHECK(derive_seed(42, 1) == 0x5fd30d2fcbef75e3ull);
    CHECK(derive_seed(0, 0) == 0x6e789e6aa1b965f4ull);

    // Distinct streams from one master seed do not collide in practice.
    std::set<uint64_t> derived;
    for (uint64_t s = 0; s < 1000; ++s) derived.insert(derive_seed(42, s));
    CHECK(derived.size() == 1000);

    // Same (master, stream) is reproducible.
    CHECK(derive_seed(123456789, 55) == derive_seed(123456789, 55));
}

TEST_CASE("identical seeds replay the stream") {
    SplitMix64 a(2026), b(2026);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}
