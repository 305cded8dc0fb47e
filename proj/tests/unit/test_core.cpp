#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dtbsm/common.hpp"
#include "dtbsm/parallel.hpp"
#include "dtbsm/rng.hpp"

using namespace dtbsm;

TEST(Rng, SameStateGivesSameStream) {
    RngState a{123}, b{123};
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
    EXPECT_EQ(a.state, b.state);
}

TEST(Rng, UniformStaysInUnitInterval) {
    RngState rng{9};
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / 100000.0, 0.5, 0.01);
}

TEST(Rng, BelowCoversRange) {
    RngState rng{5};
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const auto k = rng.below(7);
        ASSERT_LT(k, 7u);
        seen.insert(k);
    }
    EXPECT_EQ(seen.size(), 7u);
}

TEST(Rng, NormalMoments) {
    RngState rng{77};
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    const double mean = sum / n;
    EXPECT_NEAR(mean, 0.0, 0.01);
    EXPECT_NEAR(sq / n - mean * mean, 1.0, 0.02);
}

TEST(Rng, SplitSeedSeparatesComponentsAndIndices) {
    std::set<std::uint64_t> seeds;
    for (const char* name : {"pool", "q_learning", "sweep", "random_selection"})
        for (std::uint64_t i = 0; i < 50; ++i) seeds.insert(split_seed(42, name, i));
    EXPECT_EQ(seeds.size(), 200u);
    EXPECT_EQ(split_seed(42, "pool", 3), split_seed(42, "pool", 3));
    EXPECT_NE(split_seed(42, "pool", 3), split_seed(43, "pool", 3));
}

TEST(Rng, SplitSeedMatchesDocumentedFormula) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : std::string("smoothing")) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    auto mix = [](std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    EXPECT_EQ(split_seed(7, "smoothing", 4), mix(mix(7 ^ h) + 4));
}

TEST(Common, MedianOddAndEven) {
    EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
    EXPECT_DOUBLE_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
}

TEST(Common, MatrixRowsAndMaxAbs) {
    Matrix m(2, 3, 1.0);
    m(1, 2) = -4.0;
    EXPECT_EQ(m.row(1)[2], -4.0);
    EXPECT_EQ(m.max_abs(), 4.0);
    Matrix c = m;
    EXPECT_TRUE(c == m);
    c(0, 0) = 2.0;
    EXPECT_FALSE(c == m);
}

TEST(Common, ErrorCarriesCode) {
    try {
        throw Error(ErrorCode::InfeasibleMass, "x");
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InfeasibleMass);
        EXPECT_EQ(error_name(e.code()), "InfeasibleMass");
    }
}

TEST(Parallel, VisitsEveryIndexOnceAndRethrows) {
    for (int threads : {1, 3}) {
        std::vector<int> hits(100, 0);
        parallel_for(hits.size(), threads, [&](std::size_t i, int) { ++hits[i]; });
        for (int h : hits) EXPECT_EQ(h, 1);
        EXPECT_THROW(parallel_for(10, threads,
                                  [](std::size_t i, int) {
                                      if (i == 4) throw Error(ErrorCode::InvalidInput, "boom");
                                  }),
                     Error);
    }
}
