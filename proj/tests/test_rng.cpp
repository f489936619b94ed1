#include <catch2/catch_amalgamated.hpp>

#include "moto/rng.hpp"

using moto::Rng;

TEST_CASE("same seed gives identical streams") {
    Rng a(123), b(123);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 100; ++i) same += (a.next_u64() == b.next_u64());
    REQUIRE(same == 0);
}

TEST_CASE("child streams are independent of parent consumption") {
    Rng a(7);
    Rng c1 = a.child(42);
    a.next_u64();
    a.next_u64();
    Rng b(7);
    Rng c2 = b.child(42);
    for (int i = 0; i < 100; ++i) REQUIRE(c1.next_u64() == c2.next_u64());
}

TEST_CASE("distinct child ids give distinct streams") {
    Rng a(7);
    Rng c1 = a.child(1), c2 = a.child(2);
    int same = 0;
    for (int i = 0; i < 100; ++i) same += (c1.next_u64() == c2.next_u64());
    REQUIRE(same == 0);
}

TEST_CASE("uniform is in [0,1) and roughly uniform") {
    Rng r(99);
    double sum = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    REQUIRE(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("uniform(lo,hi) respects bounds") {
    Rng r(5);
    for (int i = 0; i < 1000; ++i) {
        double u = r.uniform(-0.25, 0.25);
        REQUIRE(u >= -0.25);
        REQUIRE(u < 0.25);
    }
}

TEST_CASE("normal has near-zero mean and unit variance") {
    Rng r(11);
    double sum = 0, sq = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        double x = r.normal();
        sum += x;
        sq += x * x;
    }
    double mean = sum / n;
    REQUIRE(std::abs(mean) < 0.02);
    REQUIRE(std::abs(sq / n - mean * mean - 1.0) < 0.03);
}

TEST_CASE("index(n) covers the full range without bias artifacts") {
    Rng r(3);
    std::vector<int> counts(10, 0);
    for (int i = 0; i < 100000; ++i) {
        std::size_t k = r.index(10);
        REQUIRE(k < 10);
        ++counts[k];
    }
    for (int c : counts) REQUIRE(std::abs(c - 10000) < 600);
}

TEST_CASE("bernoulli hits its rate") {
    Rng r(8);
    int hits = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) hits += r.bernoulli(0.5);
    REQUIRE(std::abs(hits / double(n) - 0.5) < 0.01);
    Rng r2(8);
    for (int i = 0; i < 1000; ++i) REQUIRE_FALSE(r2.bernoulli(0.0));
    for (int i = 0; i < 1000; ++i) REQUIRE(r2.bernoulli(1.0));
}
