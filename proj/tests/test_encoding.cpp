#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "wnnrec/encoding.hpp"

using namespace wnnrec;

namespace {

MovieFeatures movie(std::set<std::string> genres, std::int64_t votes, double avg, std::string lang)
{
    return MovieFeatures{std::move(genres), votes, avg, std::move(lang)};
}

// Ten movies with hand-picked genre / language frequencies and spread-out vote statistics.
std::vector<MovieFeatures> small_fixture()
{
    return {
        movie({"Drama", "Comedy", "Romance"}, 0, 2.0, "en"),
        movie({"Drama", "Comedy", "Action"}, 5, 3.0, "en"),
        movie({"Drama", "Comedy", "Horror"}, 10, 4.0, "en"),
        movie({"Drama", "Comedy", "Thriller"}, 20, 5.0, "en"),
        movie({"Drama", "Comedy", "Romance"}, 40, 6.0, "en"),
        movie({"Drama", "Romance", "Action"}, 80, 6.5, "en"),
        movie({"Romance", "Action", "Horror"}, 160, 7.0, "fr"),
        movie({"Thriller", "Crime", "Animation"}, 320, 7.5, "fr"),
        movie({"Family", "Fantasy"}, 640, 8.0, "ja"),
        movie({"War", "Western"}, 1280, 9.0, "de"),
    };
}

} // namespace

TEST(EncodeRating, CumulativePrefix)
{
    EXPECT_EQ(encode_rating(Rating::from_value(1.0)), (BitCode{1, 1, 0, 0, 0, 0, 0, 0, 0, 0}));
    EXPECT_EQ(encode_rating(Rating::from_value(1.5)), (BitCode{1, 1, 1, 0, 0, 0, 0, 0, 0, 0}));
    EXPECT_EQ(encode_rating(Rating::from_value(5.0)), (BitCode{1, 1, 1, 1, 1, 1, 1, 1, 1, 1}));
}

TEST(EncodeRating, InvalidRatingsAreDomainErrors)
{
    for (const double bad : {0.0, 3.7, 5.5, -1.0, 10.0}) {
        EXPECT_THROW(Rating::from_value(bad), DomainError) << bad;
    }
    EXPECT_THROW(Rating::from_halves(11), DomainError);
}

TEST(DecodeRating, PopcountHalvedAndClamped)
{
    EXPECT_EQ(decode_rating(BitCode{1, 1, 1, 1, 1, 1, 1, 1, 1, 1}).value(), 5.0);
    EXPECT_EQ(decode_rating(BitCode(10)).value(), 0.5);
    EXPECT_EQ(decode_rating(BitCode{1, 1, 0, 1, 0, 0, 0, 0, 0, 0}).value(), 1.5);
    EXPECT_THROW(decode_rating(BitCode(9)), DomainError);
}

TEST(DecodeRating, RoundTripsEveryRating)
{
    for (int h = 1; h <= 10; ++h) {
        const Rating r = Rating::from_halves(h);
        EXPECT_EQ(decode_rating(encode_rating(r)), r);
    }
}

TEST(IsAccurate, ToleranceWindow)
{
    const auto r = [](double v) { return Rating::from_value(v); };
    EXPECT_TRUE(is_accurate(r(3.5), r(3.0), 1.0));
    EXPECT_TRUE(is_accurate(r(3.0), r(3.0), 1.0));
    EXPECT_FALSE(is_accurate(r(4.5), r(3.0), 1.0));
    EXPECT_TRUE(is_accurate(r(4.0), r(3.0)));
    EXPECT_FALSE(is_accurate(r(4.0), r(3.0), 0.5));
    EXPECT_THROW(is_accurate(r(1.0), r(1.0), 0.0), DomainError);
}

TEST(IsAccurate, Symmetric)
{
    for (int a = 1; a <= 10; ++a) {
        for (int b = 1; b <= 10; ++b) {
            for (const double t : {0.5, 1.0, 2.0}) {
                EXPECT_EQ(is_accurate(Rating::from_halves(a), Rating::from_halves(b), t),
                          is_accurate(Rating::from_halves(b), Rating::from_halves(a), t));
            }
        }
    }
}

TEST(FitEncoder, SmallFixtureVocabulariesAndThresholds)
{
    const auto cfg = fit_encoder(small_fixture());
    EXPECT_EQ(cfg.genre_vocab, (std::vector<std::string>{"Drama", "Comedy", "Romance", "Action", "Horror", "Thriller",
                                                         "Animation", "Crime", "Family", "Fantasy"}));
    EXPECT_EQ(cfg.review_count_thresholds, (std::vector<std::int64_t>{1, 5, 10, 20, 40, 80, 160, 320, 640, 1280}));
    EXPECT_EQ(cfg.avg_rating_thresholds, (std::vector<double>{4.0, 6.0, 7.5}));
    EXPECT_EQ(cfg.language_buckets, (std::vector<std::string>{"en", "fr", "de", "ja", "other"}));
}

TEST(FitEncoder, EmptyCorpusIsDomainError)
{
    EXPECT_THROW(fit_encoder(std::vector<MovieFeatures>{}), DomainError);
}

TEST(FitEncoder, DegenerateCountsBecomeStrictlyIncreasing)
{
    std::vector<MovieFeatures> corpus(20, movie({"Drama"}, 7, 6.0, "en"));
    const auto cfg = fit_encoder(corpus);
    EXPECT_EQ(cfg.review_count_thresholds, (std::vector<std::int64_t>{7, 8, 9, 10, 11, 12, 13, 14, 15, 16}));
    EXPECT_TRUE(std::is_sorted(cfg.avg_rating_thresholds.begin(), cfg.avg_rating_thresholds.end()));
    EXPECT_LT(cfg.avg_rating_thresholds[0], cfg.avg_rating_thresholds[1]);
    EXPECT_NO_THROW(cfg.validate());
}

TEST(FitEncoder, ShortGenreVocabIsPaddedWithUnmatchableLabels)
{
    std::vector<MovieFeatures> corpus{movie({"Drama", "Comedy"}, 3, 5.0, "en"), movie({"Horror"}, 9, 7.0, "en")};
    const auto cfg = fit_encoder(corpus);
    ASSERT_EQ(cfg.genre_vocab.size(), 10u);
    // a movie carrying a padding label verbatim still lights no padding bit
    MovieFeatures tricky = movie({cfg.genre_vocab[5], "Drama"}, 3, 5.0, "en");
    const BitCode code = encode_movie(tricky, cfg);
    EXPECT_EQ(cfg.genre_vocab[1], "Drama");
    for (std::size_t i = 0; i < 10; ++i) {
        EXPECT_EQ(code[i], i == 1) << i;
    }
}

TEST(FitEncoder, ThousandMovieDecilesMatchCountingOracle)
{
    std::mt19937_64 rng(11);
    std::lognormal_distribution<double> votes(4.0, 1.5);
    std::uniform_real_distribution<double> avg(0.5, 9.5);
    std::vector<MovieFeatures> corpus;
    for (int i = 0; i < 1000; ++i) {
        corpus.push_back(movie({"Drama"}, static_cast<std::int64_t>(votes(rng)), std::round(avg(rng) * 10) / 10, "en"));
    }
    const auto cfg = fit_encoder(corpus);

    // Oracle: smallest observed value v with #{x <= v} >= p * n (nearest-rank
    // definition by counting, no index arithmetic), then the same dedup rule.
    std::vector<std::int64_t> values;
    for (const auto& m : corpus) {
        values.push_back(m.vote_count);
    }
    std::vector<std::int64_t> expected;
    std::int64_t prev = 0;
    for (int k = 1; k <= 10; ++k) {
        std::int64_t best = std::numeric_limits<std::int64_t>::max();
        for (const auto v : values) {
            const auto at_most = std::count_if(values.begin(), values.end(), [v](auto x) { return x <= v; });
            if (at_most * 10 >= k * 1000 && v < best) {
                best = v;
            }
        }
        prev = std::max(best, prev + 1);
        expected.push_back(prev);
    }
    EXPECT_EQ(cfg.review_count_thresholds, expected);
}

TEST(EncodeMovie, HandDerivedFixtureCode)
{
    const auto cfg = fit_encoder(small_fixture());
    // Drama+Romance, median vote_count (40), vote_average exactly Q2 (6.0), top language.
    const BitCode code = encode_movie(movie({"Drama", "Romance"}, 40, 6.0, "en"), cfg);
    const BitCode expected{1, 0, 1, 0, 0, 0, 0, 0, 0, 0,  // genres: Drama, Romance
                           1, 1, 1, 1, 1, 0, 0, 0, 0, 0,  // 40 >= 1,5,10,20,40
                           1, 1, 0,                       // 6.0 >= 4.0, 6.0
                           0, 0, 0};                      // bucket 0 (en)
    EXPECT_EQ(code, expected) << code.to_string();
}

TEST(EncodeMovie, ReviewCountExtremesAndUnknownLanguage)
{
    const auto cfg = fit_encoder(small_fixture());
    const BitCode none = encode_movie(movie({}, 0, 0.0, "xx"), cfg);
    for (std::size_t i = 0; i < 23; ++i) {
        EXPECT_FALSE(none[i]) << i;
    }
    // unknown language -> "other", bucket index 4 = 100
    EXPECT_TRUE(none[23]);
    EXPECT_FALSE(none[24]);
    EXPECT_FALSE(none[25]);

    const BitCode top = encode_movie(movie({}, 1280, 9.0, "ja"), cfg);
    for (std::size_t i = 10; i < 23; ++i) {
        EXPECT_TRUE(top[i]) << i;
    }
    // ja is bucket 3 = 011
    EXPECT_FALSE(top[23]);
    EXPECT_TRUE(top[24]);
    EXPECT_TRUE(top[25]);
}

TEST(EncodeMovie, ThermometerMonotoneProperty)
{
    const auto cfg = fit_encoder(small_fixture());
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::int64_t> votes(0, 2000);
    std::uniform_real_distribution<double> avg(0.0, 10.0);
    for (int trial = 0; trial < 2000; ++trial) {
        auto a = movie({}, votes(rng), avg(rng), "en");
        auto b = movie({}, votes(rng), avg(rng), "en");
        const BitCode ca = encode_movie(a, cfg);
        const BitCode cb = encode_movie(b, cfg);
        ASSERT_EQ(ca.size(), 26u);
        for (std::size_t i = 10; i < 20; ++i) {
            if (a.vote_count <= b.vote_count) {
                ASSERT_LE(ca[i], cb[i]);
            }
        }
        for (std::size_t i = 20; i < 23; ++i) {
            if (a.vote_average <= b.vote_average) {
                ASSERT_LE(ca[i], cb[i]);
            }
        }
    }
}

TEST(EncoderConfig, JsonRoundTripAndVersionCheck)
{
    const auto cfg = fit_encoder(small_fixture());
    const auto doc = encoder_to_json(cfg);
    EXPECT_EQ(doc["version"], "encoder-v1");
    EXPECT_EQ(encoder_from_json(doc), cfg);

    auto wrong = doc;
    wrong["version"] = "encoder-v0";
    EXPECT_THROW(encoder_from_json(wrong), FormatError);
    auto broken = doc;
    broken["review_count_thresholds"] = {3, 2, 1, 4, 5, 6, 7, 8, 9, 10};
    EXPECT_THROW(encoder_from_json(broken), FormatError);
}
