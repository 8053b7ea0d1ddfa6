#include "nbcloze/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <vector>

using namespace nbcloze;

TEST_CASE("uniform_below stays in range and is deterministic") {
    Rng a(123), b(123);
    for (int i = 0; i < 1000; ++i) {
        std::uint64_t x = uniform_below(a, 7);
        CHECK(x < 7);
        CHECK(x == uniform_below(b, 7));
    }
    Rng c(1);
    for (int i = 0; i < 100; ++i) CHECK(uniform_below(c, 1) == 0);
}

TEST_CASE("uniform_unit lies in [0, 1)") {
    Rng rng(9);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 5000; ++i) {
        double u = uniform_unit(rng);
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    // Unseeded expectations, just sanity: the draws actually spread out.
    CHECK(lo < 0.05);
    CHECK(hi > 0.95);
}

TEST_CASE("shuffle_in_place permutes deterministically") {
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
    Rng a(77);
    shuffle_in_place(v, a);

    std::vector<int> w{0, 1, 2, 3, 4, 5, 6, 7};
    Rng b(77);
    shuffle_in_place(w, b);
    CHECK(v == w);

    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});

    // Empty and singleton vectors are fine.
    std::vector<int> tiny{42};
    shuffle_in_place(tiny, a);
    CHECK(tiny == std::vector<int>{42});
    std::vector<int> none;
    shuffle_in_place(none, a);
    CHECK(none.empty());
}

TEST_CASE("fnv1a64 matches the published test vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
    CHECK(fnv1a64("a", fnv1a64("")) == fnv1a64("a")); // seed chaining
    CHECK(fnv1a64("ab") != fnv1a64("ba"));
}

TEST_CASE("splitmix64 matches the reference sequence") {
    // First three outputs of the reference generator seeded with 0 advance
    // the state by the golden-gamma; as a pure function that is:
    CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
    CHECK(splitmix64(1) == 0x910a2dec89025cc1ULL);
    CHECK(splitmix64(splitmix64(0)) != splitmix64(0));
}
