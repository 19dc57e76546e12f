#include <random>

#include <gtest/gtest.h>

#include "wnnrec/bitcode.hpp"

using wnnrec::BitCode;

TEST(BitCode, RejectsBadLengthAndNonBinaryElements)
{
    EXPECT_THROW(BitCode(0), wnnrec::DomainError);
    EXPECT_THROW(BitCode(129), wnnrec::DomainError);
    EXPECT_THROW((BitCode{1, 2, 0}), wnnrec::DomainError);
}

TEST(BitCode, SetGetAcrossWordBoundary)
{
    BitCode c(100);
    c.set(0, true);
    c.set(63, true);
    c.set(64, true);
    c.set(99, true);
    EXPECT_EQ(c.popcount(), 4u);
    EXPECT_TRUE(c[63]);
    EXPECT_TRUE(c[64]);
    EXPECT_FALSE(c[65]);
    c.set(63, false);
    EXPECT_EQ(c.popcount(), 3u);
    EXPECT_THROW((void)c.at(100), wnnrec::DomainError);
}

TEST(BitCode, PackedHammingMatchesBitwiseCount)
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + rng() % 128;
        BitCode a(n);
        BitCode b(n);
        std::size_t expected = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool x = rng() & 1;
            const bool y = rng() & 1;
            a.set(i, x);
            b.set(i, y);
            expected += x != y;
        }
        EXPECT_EQ(wnnrec::hamming_distance(a, b), expected);
    }
    EXPECT_THROW((void)wnnrec::hamming_distance(BitCode(3), BitCode(4)), wnnrec::DomainError);
}

TEST(BitCode, VectorRoundTrip)
{
    const BitCode c{1, 0, 1, 1};
    EXPECT_EQ(c.to_string(), "1011");
    EXPECT_EQ(BitCode(c.to_vector()), c);
}
