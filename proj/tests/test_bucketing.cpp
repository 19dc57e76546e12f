#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "wnnrec/bucketing.hpp"

using namespace wnnrec;

namespace {

// Unit vector at angle acos(c) from the x axis, so its cosine distance to (1, 0) is 1 - c.
std::vector<double> at_cosine(double c, double scale = 1.0)
{
    return {scale * c, scale * std::sqrt(1.0 - c * c)};
}

BucketCache genre_cache()
{
    return BucketCache({{"drama", at_cosine(0.8), BitCode{0, 0}},
                        {"comedy", at_cosine(0.5), BitCode{0, 1}},
                        {"action", at_cosine(0.2), BitCode{1, 0}}});
}

} // namespace

TEST(CosineDistance, ParallelOrthogonalAntiparallel)
{
    const std::vector<double> a{1.0, 2.0, 3.0};
    const std::vector<double> twice{2.0, 4.0, 6.0};
    const std::vector<double> neg{-1.0, -2.0, -3.0};
    const std::vector<double> ortho{3.0, 0.0, -1.0};
    EXPECT_NEAR(cosine_distance(a, twice), 0.0, 1e-12);
    EXPECT_NEAR(cosine_distance(a, ortho), 1.0, 1e-12);
    EXPECT_NEAR(cosine_distance(a, neg), 2.0, 1e-12);
}

TEST(CosineDistance, RejectsZeroAndMismatchedVectors)
{
    const std::vector<double> a{1.0, 0.0};
    const std::vector<double> zero{0.0, 0.0};
    const std::vector<double> three{1.0, 0.0, 0.0};
    EXPECT_THROW(cosine_distance(a, zero), DomainError);
    EXPECT_THROW(cosine_distance(a, three), DomainError);
}

TEST(Bucketing, WorkedExamplePicksClosestLabel)
{
    const auto cache = genre_cache();
    const std::vector<double> query{1.0, 0.0};
    EXPECT_NEAR(cosine_distance(query, cache.buckets()[0].embedding), 0.2, 1e-12);
    EXPECT_NEAR(cosine_distance(query, cache.buckets()[1].embedding), 0.5, 1e-12);
    EXPECT_NEAR(cosine_distance(query, cache.buckets()[2].embedding), 0.8, 1e-12);
    const auto match = nearest_bucket(cache, query);
    EXPECT_EQ(match.label, "drama");
    EXPECT_EQ(match.code, (BitCode{0, 0}));
}

TEST(Bucketing, ScaleInvariant)
{
    const auto cache = genre_cache();
    for (const double s : {1e-6, 0.3, 1.0, 42.0, 1e6}) {
        const std::vector<double> q = at_cosine(0.45, s);
        EXPECT_EQ(nearest_bucket(cache, q).label, "comedy") << s;
    }
}

TEST(Bucketing, EquidistantQueryKeepsFirstBucket)
{
    BucketCache cache({{"a", {1.0, 0.0}, BitCode{1}}, {"b", {0.0, 1.0}, BitCode{0}}});
    const std::vector<double> q{1.0, 1.0};
    EXPECT_EQ(nearest_bucket(cache, q).label, "a");
}

TEST(Bucketing, MatchesBruteForceOracle)
{
    std::mt19937_64 rng(19);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<Bucket> buckets;
    for (int b = 0; b < 20; ++b) {
        std::vector<double> e(8);
        for (auto& x : e) {
            x = g(rng);
        }
        BitCode code(5);
        for (std::size_t j = 0; j < 5; ++j) {
            code.set(j, (b >> j) & 1);
        }
        buckets.push_back({"b" + std::to_string(b), e, code});
    }
    const BucketCache cache(buckets);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> q(8);
        for (auto& x : q) {
            x = g(rng);
        }
        // oracle: normalise both sides, take the largest dot product
        const auto unit = [](std::vector<double> v) {
            double n = 0.0;
            for (const double x : v) {
                n += x * x;
            }
            for (auto& x : v) {
                x /= std::sqrt(n);
            }
            return v;
        };
        const auto uq = unit(q);
        std::size_t best = 0;
        double best_dot = -2.0;
        for (std::size_t b = 0; b < buckets.size(); ++b) {
            const auto ub = unit(buckets[b].embedding);
            double d = 0.0;
            for (std::size_t i = 0; i < 8; ++i) {
                d += uq[i] * ub[i];
            }
            if (d > best_dot) {
                best_dot = d;
                best = b;
            }
        }
        const auto match = nearest_bucket(cache, q);
        EXPECT_EQ(match.label, buckets[best].label);
        EXPECT_EQ(match.code, buckets[best].code);
    }
}

TEST(Bucketing, QueryDimensionMismatch)
{
    const auto cache = genre_cache();
    const std::vector<double> q{1.0, 0.0, 0.0};
    EXPECT_THROW(nearest_bucket(cache, q), DomainError);
}

TEST(BucketCacheJson, RoundTrip)
{
    const auto cache = genre_cache();
    const auto doc = cache_to_json(cache);
    const auto loaded = load_cache(doc);
    ASSERT_EQ(loaded.buckets().size(), 3u);
    for (std::size_t b = 0; b < 3; ++b) {
        EXPECT_EQ(loaded.buckets()[b].label, cache.buckets()[b].label);
        EXPECT_EQ(loaded.buckets()[b].embedding, cache.buckets()[b].embedding);
        EXPECT_EQ(loaded.buckets()[b].code, cache.buckets()[b].code);
    }
}

TEST(BucketCacheJson, MalformedDocumentsAreFormatErrors)
{
    const auto good = cache_to_json(genre_cache());
    EXPECT_THROW(load_cache(nlohmann::json::array()), FormatError);

    auto no_version = good;
    no_version.erase("version");
    EXPECT_THROW(load_cache(no_version), FormatError);

    auto empty = good;
    empty["buckets"] = nlohmann::json::array();
    EXPECT_THROW(load_cache(empty), FormatError);

    auto ragged = good;
    ragged["buckets"][1]["embedding"] = {1.0, 2.0, 3.0};
    EXPECT_THROW(load_cache(ragged), FormatError);

    auto zero = good;
    zero["buckets"][0]["embedding"] = {0.0, 0.0};
    EXPECT_THROW(load_cache(zero), FormatError);

    auto wide = good;
    wide["buckets"][2]["code"] = {1, 0, 1};
    EXPECT_THROW(load_cache(wide), FormatError);

    auto dup = good;
    dup["buckets"][1]["label"] = "drama";
    EXPECT_THROW(load_cache(dup), FormatError);

    auto missing = good;
    missing["buckets"][0].erase("label");
    EXPECT_THROW(load_cache(missing), FormatError);
}
