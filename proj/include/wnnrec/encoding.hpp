#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "bitcode.hpp"
#include "errors.hpp"

namespace wnnrec {

/// Star rating on the 0.5 .. 5.0 grid, stored as a count of half stars (1..10).
class Rating {
public:
    static constexpr int min_halves = 1;
    static constexpr int max_halves = 10;

    static Rating from_halves(int halves)
    {
        if (halves < min_halves || halves > max_halves) {
            throw DomainError("rating half-steps out of range: " + std::to_string(halves));
        }
        return Rating(halves);
    }

    static Rating from_value(double value)
    {
        const double doubled = value * 2.0;
        const double rounded = std::round(doubled);
        if (!std::isfinite(value) || std::abs(doubled - rounded) > 1e-9 || rounded < min_halves ||
            rounded > max_halves) {
            throw DomainError("invalid rating " + std::to_string(value) +
                              " (expected 0.5 .. 5.0 in steps of 0.5)");
        }
        return Rating(static_cast<int>(rounded));
    }

    static bool is_valid(double value) noexcept
    {
        const double doubled = value * 2.0;
        return std::isfinite(value) && doubled == std::round(doubled) && doubled >= min_halves &&
               doubled <= max_halves;
    }

    [[nodiscard]] int halves() const noexcept { return halves_; }
    [[nodiscard]] double value() const noexcept { return halves_ / 2.0; }

    friend auto operator<=>(const Rating&, const Rating&) = default;

private:
    explicit Rating(int halves) : halves_(halves) {}
    int halves_ = min_halves;
};

inline constexpr std::size_t rating_code_bits = 10;
inline constexpr std::size_t movie_code_bits = 26;
inline constexpr double default_tolerance = 1.0;

/// Cumulative code: the first 2r bits are set.
inline BitCode encode_rating(Rating r)
{
    BitCode code(rating_code_bits);
    for (int i = 0; i < r.halves(); ++i) {
        code.set(static_cast<std::size_t>(i), true);
    }
    return code;
}

/// popcount / 2 clamped to the rating grid, so non-cumulative predicted
/// vectors still decode to the nearest valid rating.
inline Rating decode_rating(const BitCode& code)
{
    if (code.size() != rating_code_bits) {
        throw DomainError("decode_rating expects a 10-bit code, got " + std::to_string(code.size()));
    }
    const int ones = static_cast<int>(code.popcount());
    return Rating::from_halves(std::clamp(ones, Rating::min_halves, Rating::max_halves));
}

inline bool is_accurate(Rating predicted, Rating actual, double tolerance = default_tolerance)
{
    if (!(tolerance > 0.0)) {
        throw DomainError("tolerance must be positive");
    }
    return std::abs(predicted.value() - actual.value()) <= tolerance;
}

struct MovieFeatures {
    std::set<std::string> genres;
    std::int64_t vote_count = 0;
    double vote_average = 0.0;
    std::string language = "other";
};

struct EncoderConfig {
    static constexpr std::size_t genre_slots = 10;
    static constexpr std::size_t review_slots = 10;
    static constexpr std::size_t rating_slots = 3;
    static constexpr std::size_t language_bits = 3;
    static constexpr std::size_t max_languages = 8;
    static constexpr const char* version = "encoder-v1";
    static constexpr const char* other_language = "other";

    std::vector<std::string> genre_vocab;
    std::vector<std::int64_t> review_count_thresholds;
    std::vector<double> avg_rating_thresholds;
    std::vector<std::string> language_buckets;

    void validate() const
    {
        if (genre_vocab.size() != genre_slots) {
            throw DomainError("genre_vocab must hold exactly 10 labels");
        }
        if (review_count_thresholds.size() != review_slots) {
            throw DomainError("review_count_thresholds must hold exactly 10 values");
        }
        if (avg_rating_thresholds.size() != rating_slots) {
            throw DomainError("avg_rating_thresholds must hold exactly 3 values");
        }
        if (language_buckets.empty() || language_buckets.size() > max_languages) {
            throw DomainError("language_buckets must hold 1..8 labels");
        }
        for (std::size_t i = 0; i < review_slots; ++i) {
            if (review_count_thresholds[i] < 0 ||
                (i > 0 && review_count_thresholds[i] <= review_count_thresholds[i - 1])) {
                throw DomainError("review_count_thresholds must be strictly increasing and >= 0");
            }
        }
        for (std::size_t i = 0; i < rating_slots; ++i) {
            const double t = avg_rating_thresholds[i];
            if (!(t > 0.0 && t < 10.0) || (i > 0 && t <= avg_rating_thresholds[i - 1])) {
                throw DomainError("avg_rating_thresholds must be strictly increasing in (0, 10)");
            }
        }
    }

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

namespace detail {

inline const std::string sentinel_prefix = "<unused-";

inline bool is_sentinel_genre(const std::string& label)
{
    return label.rfind(sentinel_prefix, 0) == 0;
}

// Nearest-rank quantile of a sorted sample: element at ceil(p * n) - 1.
template <typename T>
T nearest_rank(const std::vector<T>& sorted, std::size_t num, std::size_t den)
{
    const std::size_t n = sorted.size();
    std::size_t rank = (num * n + den - 1) / den;
    rank = std::max<std::size_t>(rank, 1);
    return sorted[std::min(rank, n) - 1];
}

template <typename Map>
std::vector<std::string> most_frequent(const Map& counts, std::size_t limit)
{
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < ranked.size() && i < limit; ++i) {
        out.push_back(ranked[i].first);
    }
    return out;
}

} // namespace detail

/// Derive the categorical vocabularies and quantile thresholds from a corpus.
///
/// Review-count thresholds are the nearest-rank quantiles at 10%, 20%, ..., 100%
/// of vote_count; rating thresholds are Q1/Q2/Q3 of vote_average. Repeated
/// quantiles are pushed up to keep the sequences strictly increasing
/// (+1 for counts, +0.1 for ratings), and count thresholds start at 1 so an
/// unreviewed movie never lights a review bit.
inline EncoderConfig fit_encoder(std::span<const MovieFeatures> movies)
{
    if (movies.empty()) {
        throw DomainError("fit_encoder: empty movie collection");
    }
    EncoderConfig cfg;

    std::map<std::string, std::size_t> genre_counts;
    std::map<std::string, std::size_t> language_counts;
    std::vector<std::int64_t> counts;
    std::vector<double> averages;
    counts.reserve(movies.size());
    averages.reserve(movies.size());
    for (const auto& m : movies) {
        for (const auto& g : m.genres) {
            ++genre_counts[g];
        }
        if (m.language != EncoderConfig::other_language) {
            ++language_counts[m.language];
        }
        counts.push_back(m.vote_count);
        averages.push_back(m.vote_average);
    }

    cfg.genre_vocab = detail::most_frequent(genre_counts, EncoderConfig::genre_slots);
    for (std::size_t i = cfg.genre_vocab.size(); i < EncoderConfig::genre_slots; ++i) {
        cfg.genre_vocab.push_back(detail::sentinel_prefix + std::to_string(i) + ">");
    }

    std::sort(counts.begin(), counts.end());
    std::int64_t prev_count = 0;
    for (std::size_t k = 1; k <= EncoderConfig::review_slots; ++k) {
        const std::int64_t q = detail::nearest_rank(counts, k, 10);
        prev_count = std::max(q, prev_count + 1);
        cfg.review_count_thresholds.push_back(prev_count);
    }

    std::sort(averages.begin(), averages.end());
    double prev_avg = 0.0;
    for (std::size_t k = 1; k <= EncoderConfig::rating_slots; ++k) {
        double q = detail::nearest_rank(averages, k, 4);
        if (q <= prev_avg) {
            q = prev_avg + 0.1;
        }
        cfg.avg_rating_thresholds.push_back(std::min(q, 9.9 - 0.1 * (3 - k)));
        prev_avg = cfg.avg_rating_thresholds.back();
    }

    cfg.language_buckets = detail::most_frequent(language_counts, EncoderConfig::max_languages - 1);
    cfg.language_buckets.push_back(EncoderConfig::other_language);

    cfg.validate();
    return cfg;
}

inline EncoderConfig fit_encoder(const std::vector<MovieFeatures>& movies)
{
    return fit_encoder(std::span<const MovieFeatures>(movies));
}

inline std::size_t language_index(const EncoderConfig& cfg, const std::string& language)
{
    for (std::size_t i = 0; i < cfg.language_buckets.size(); ++i) {
        if (cfg.language_buckets[i] == language) {
            return i;
        }
    }
    for (std::size_t i = 0; i < cfg.language_buckets.size(); ++i) {
        if (cfg.language_buckets[i] == EncoderConfig::other_language) {
            return i;
        }
    }
    return cfg.language_buckets.size() - 1;
}

/// 26-bit layout: [0,10) genre multi-hot, [10,20) review-count thermometer,
/// [20,23) average-rating thermometer, [23,26) language bucket index (MSB first).
inline BitCode encode_movie(const MovieFeatures& f, const EncoderConfig& cfg)
{
    BitCode code(movie_code_bits);
    std::size_t bit = 0;
    for (const auto& label : cfg.genre_vocab) {
        code.set(bit++, !detail::is_sentinel_genre(label) && f.genres.contains(label));
    }
    for (const auto t : cfg.review_count_thresholds) {
        code.set(bit++, f.vote_count >= t);
    }
    for (const auto t : cfg.avg_rating_thresholds) {
        code.set(bit++, f.vote_average >= t);
    }
    const std::size_t lang = language_index(cfg, f.language);
    for (std::size_t i = 0; i < EncoderConfig::language_bits; ++i) {
        code.set(bit++, (lang >> (EncoderConfig::language_bits - 1 - i)) & 1u);
    }
    return code;
}

inline nlohmann::json bitcode_to_json(const BitCode& code)
{
    return code.to_vector();
}

inline BitCode bitcode_from_json(const nlohmann::json& doc, std::size_t expected_width)
{
    if (!doc.is_array() || doc.size() != expected_width) {
        throw FormatError("expected a bit array of width " + std::to_string(expected_width));
    }
    std::vector<int> bits;
    bits.reserve(doc.size());
    for (const auto& b : doc) {
        if (!b.is_number_integer() || (b.get<int>() != 0 && b.get<int>() != 1)) {
            throw FormatError("bit array elements must be 0 or 1");
        }
        bits.push_back(b.get<int>());
    }
    return BitCode(bits);
}

inline nlohmann::json encoder_to_json(const EncoderConfig& cfg)
{
    return {{"version", EncoderConfig::version},
            {"genre_vocab", cfg.genre_vocab},
            {"review_count_thresholds", cfg.review_count_thresholds},
            {"avg_rating_thresholds", cfg.avg_rating_thresholds},
            {"language_buckets", cfg.language_buckets}};
}

inline EncoderConfig encoder_from_json(const nlohmann::json& doc)
{
    if (!doc.is_object() || doc.value("version", "") != EncoderConfig::version) {
        throw FormatError("encoder document missing version tag encoder-v1");
    }
    EncoderConfig cfg;
    try {
        cfg.genre_vocab = doc.at("genre_vocab").get<std::vector<std::string>>();
        cfg.review_count_thresholds = doc.at("review_count_thresholds").get<std::vector<std::int64_t>>();
        cfg.avg_rating_thresholds = doc.at("avg_rating_thresholds").get<std::vector<double>>();
        cfg.language_buckets = doc.at("language_buckets").get<std::vector<std::string>>();
        cfg.validate();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("encoder document: ") + e.what());
    } catch (const DomainError& e) {
        throw FormatError(std::string("encoder document: ") + e.what());
    }
    return cfg;
}

} // namespace wnnrec
