#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "iglide/rng.hpp"

using iglide::RngStream;

TEST_CASE("rng: same seed reproduces the sequence") {
    RngStream a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("rng: draw i depends only on (seed, i), not on stream history") {
    RngStream a(7);
    a.next_u64();
    a.next_u64();
    const std::uint64_t third = a.next_u64();
    RngStream b(7);
    b.next_u64();
    b.next_u64();
    REQUIRE(b.next_u64() == third);
}

TEST_CASE("rng: fork derives from seed only, independent of position") {
    RngStream a(5), b(5);
    for (int i = 0; i < 10; ++i) a.next_u64();  // advance one copy
    REQUIRE(a.fork(3).next_u64() == b.fork(3).next_u64());
    REQUIRE(a.fork(3).next_u64() != b.fork(4).next_u64());
}

TEST_CASE("rng: derive_seed matches the documented fork rule") {
    RngStream a(91);
    REQUIRE(iglide::derive_seed(91, 17) == a.fork(17).seed());
}

TEST_CASE("rng: uniform stays in [0,1) and uniform_pos in (0,1]") {
    RngStream r(1);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const double v = r.uniform_pos();
        REQUIRE(v > 0.0);
        REQUIRE(v <= 1.0);
    }
}

TEST_CASE("rng: uniform_in respects bounds") {
    RngStream r(2);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform_in(-3.0, 5.0);
        REQUIRE(u >= -3.0);
        REQUIRE(u < 5.0);
    }
}

TEST_CASE("rng: normal has roughly standard moments") {
    RngStream r(3);
    const int n = 200000;
    double s = 0.0, q = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        s += x;
        q += x * x;
    }
    const double mean = s / n;
    const double var = q / n - mean * mean;
    REQUIRE(std::abs(mean) < 0.01);
    REQUIRE(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("rng: normal consumes exactly two draws") {
    RngStream a(11), b(11);
    a.normal();
    b.next_u64();
    b.next_u64();
    REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("rng: shuffle yields a permutation and is seed-stable") {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[static_cast<std::size_t>(i)] = i;
    RngStream r(9);
    auto w = v;
    r.shuffle(w);
    REQUIRE(std::set<int>(w.begin(), w.end()).size() == 50);
    RngStream r2(9);
    auto w2 = v;
    r2.shuffle(w2);
    REQUIRE(w == w2);
}

TEST_CASE("rng: distinct seeds give distinct streams") {
    RngStream a(0), b(1);
    int same = 0;
    for (int i = 0; i < 64; ++i) {
        if (a.next_u64() == b.next_u64()) ++same;
    }
    REQUIRE(same == 0);
}
