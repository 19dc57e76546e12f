#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <numeric>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "encoding.hpp"
#include "errors.hpp"

namespace wnnrec {

struct RatingEvent {
    std::uint32_t user_id = 0;
    std::uint32_t movie_id = 0;
    Rating rating = Rating::from_halves(1);
    std::int64_t timestamp = 0;

    friend bool operator==(const RatingEvent&, const RatingEvent&) = default;
};

struct UserHistory {
    std::uint32_t user_id = 0;
    std::vector<RatingEvent> events;
};

struct CatalogEntry {
    std::uint32_t movie_id = 0;
    std::uint32_t tmdb_id = 0;
    std::string title;
    MovieFeatures features;
};

struct Catalog {
    std::map<std::uint32_t, CatalogEntry> movies;          // ratings movie id -> entry
    std::unordered_map<std::uint32_t, std::uint32_t> links; // metadata (tmdb) id -> ratings movie id
    std::size_t dropped_unjoinable = 0;
    std::size_t malformed_rows = 0;

    [[nodiscard]] bool contains(std::uint32_t movie_id) const { return movies.contains(movie_id); }
    [[nodiscard]] const CatalogEntry& at(std::uint32_t movie_id) const
    {
        const auto it = movies.find(movie_id);
        if (it == movies.end()) {
            throw NotFoundError("movie " + std::to_string(movie_id) + " is not in the catalog");
        }
        return it->second;
    }
    [[nodiscard]] std::vector<MovieFeatures> features() const
    {
        std::vector<MovieFeatures> out;
        out.reserve(movies.size());
        for (const auto& [id, e] : movies) {
            out.push_back(e.features);
        }
        return out;
    }
};

struct RatingsStats {
    std::size_t rows = 0;
    std::size_t accepted = 0;
    std::size_t malformed = 0;
    std::size_t invalid_rating = 0;
};

struct RatingsLoad {
    std::vector<RatingEvent> events;
    RatingsStats stats;
};

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// RFC 4180 reader: quoted fields may contain commas, doubled quotes and newlines.
class CsvReader {
public:
    explicit CsvReader(std::istream& in) : in_(in) {}

    bool next(std::vector<std::string>& fields)
    {
        fields.clear();
        std::string field;
        bool in_quotes = false;
        bool any = false;
        char c;
        while (in_.get(c)) {
            any = true;
            if (in_quotes) {
                if (c == '"') {
                    if (in_.peek() == '"') {
                        in_.get(c);
                        field.push_back('"');
                    } else {
                        in_quotes = false;
                    }
                } else {
                    field.push_back(c);
                }
            } else if (c == '"') {
                in_quotes = true;
            } else if (c == ',') {
                fields.push_back(std::move(field));
                field.clear();
            } else if (c == '\n') {
                fields.push_back(std::move(field));
                return true;
            } else if (c != '\r') {
                field.push_back(c);
            }
        }
        if (any) {
            fields.push_back(std::move(field));
        }
        return any;
    }

private:
    std::istream& in_;
};

namespace detail {

inline std::ifstream open_input(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return in;
}

template <typename T>
bool parse_number(std::string_view s, T& out)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) {
        s.remove_suffix(1);
    }
    if (s.empty()) {
        return false;
    }
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

inline std::map<std::string, std::size_t> header_index(const std::vector<std::string>& header)
{
    std::map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < header.size(); ++i) {
        idx.emplace(header[i], i);
    }
    return idx;
}

inline std::size_t require_column(const std::map<std::string, std::size_t>& idx, const std::string& name,
                                  const std::string& file)
{
    const auto it = idx.find(name);
    if (it == idx.end()) {
        throw FormatError(file + ": missing column '" + name + "'");
    }
    return it->second;
}

} // namespace detail

/// Streams `userId,movieId,rating,timestamp` rows to `sink`. A leading header
/// row is skipped. Rows that do not parse are counted as malformed; ratings
/// off the 0.5 grid are counted separately. Either way the row is skipped.
inline RatingsStats for_each_rating(const std::filesystem::path& path,
                                    const std::function<void(const RatingEvent&)>& sink)
{
    auto in = detail::open_input(path);
    RatingsStats stats;
    std::string line;
    bool first = true;
    std::string_view cols[4];
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (first) {
            first = false;
            if (line.rfind("userId", 0) == 0) {
                continue;
            }
        }
        if (line.empty()) {
            continue;
        }
        ++stats.rows;
        std::string_view rest(line);
        std::size_t n = 0;
        bool extra = false;
        while (true) {
            const auto comma = rest.find(',');
            if (n == 4) {
                extra = true;
                break;
            }
            cols[n++] = rest.substr(0, comma);
            if (comma == std::string_view::npos) {
                break;
            }
            rest.remove_prefix(comma + 1);
        }
        RatingEvent ev;
        double value = 0.0;
        std::int64_t ts = 0;
        if (extra || n != 4 || !detail::parse_number(cols[0], ev.user_id) ||
            !detail::parse_number(cols[1], ev.movie_id) || !detail::parse_number(cols[2], value) ||
            !detail::parse_number(cols[3], ts)) {
            ++stats.malformed;
            continue;
        }
        if (!Rating::is_valid(value)) {
            ++stats.invalid_rating;
            continue;
        }
        ev.rating = Rating::from_value(value);
        ev.timestamp = ts;
        ++stats.accepted;
        sink(ev);
    }
    if (stats.rows == 0) {
        throw FormatError(path.string() + ": no rating rows");
    }
    if (stats.malformed * 10 > stats.rows) {
        throw FormatError(path.string() + ": " + std::to_string(stats.malformed) + " of " +
                          std::to_string(stats.rows) + " rows are malformed (limit 10%)");
    }
    return stats;
}

inline RatingsLoad load_ratings(const std::filesystem::path& path)
{
    RatingsLoad out;
    out.stats = for_each_rating(path, [&](const RatingEvent& ev) { out.events.push_back(ev); });
    return out;
}

/// Pulls every `name` value out of the quasi-JSON list-of-records text the
/// metadata file uses (single quotes, sometimes broken).
inline std::set<std::string> extract_genre_names(const std::string& field)
{
    static const std::regex name_re(R"re(['"]name['"]\s*:\s*(?:'([^']*)'|"([^"]*)"))re");
    std::set<std::string> names;
    for (auto it = std::sregex_iterator(field.begin(), field.end(), name_re); it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        std::string name = m[1].matched ? m[1].str() : m[2].str();
        if (!name.empty()) {
            names.insert(std::move(name));
        }
    }
    return names;
}

/// Joins movies_metadata.csv (keyed by TMDB id) to ratings movie ids through
/// links.csv. Missing vote fields default to 0, missing language to "other".
inline Catalog load_catalog(const std::filesystem::path& metadata_path, const std::filesystem::path& links_path)
{
    Catalog cat;
    {
        auto in = detail::open_input(links_path);
        CsvReader csv(in);
        std::vector<std::string> row;
        if (!csv.next(row)) {
            throw FormatError(links_path.string() + ": empty file");
        }
        const auto idx = detail::header_index(row);
        const auto movie_col = detail::require_column(idx, "movieId", links_path.string());
        const auto tmdb_col = detail::require_column(idx, "tmdbId", links_path.string());
        while (csv.next(row)) {
            std::uint32_t movie = 0;
            std::uint32_t tmdb = 0;
            if (row.size() <= std::max(movie_col, tmdb_col) || !detail::parse_number(row[movie_col], movie) ||
                !detail::parse_number(row[tmdb_col], tmdb)) {
                continue;
            }
            cat.links.emplace(tmdb, movie);
        }
    }

    auto in = detail::open_input(metadata_path);
    CsvReader csv(in);
    std::vector<std::string> row;
    if (!csv.next(row)) {
        throw FormatError(metadata_path.string() + ": empty file");
    }
    const auto idx = detail::header_index(row);
    const std::string file = metadata_path.string();
    const auto id_col = detail::require_column(idx, "id", file);
    const auto genres_col = detail::require_column(idx, "genres", file);
    const auto lang_col = detail::require_column(idx, "original_language", file);
    const auto count_col = detail::require_column(idx, "vote_count", file);
    const auto avg_col = detail::require_column(idx, "vote_average", file);
    const auto title_col = idx.contains("title") ? idx.at("title") : id_col;
    const std::size_t needed = std::max({id_col, genres_col, lang_col, count_col, avg_col, title_col});

    while (csv.next(row)) {
        std::uint32_t tmdb = 0;
        if (row.size() <= needed || !detail::parse_number(row[id_col], tmdb)) {
            ++cat.malformed_rows;
            continue;
        }
        const auto link = cat.links.find(tmdb);
        if (link == cat.links.end()) {
            ++cat.dropped_unjoinable;
            continue;
        }
        CatalogEntry entry;
        entry.movie_id = link->second;
        entry.tmdb_id = tmdb;
        entry.title = row[title_col];
        entry.features.genres = extract_genre_names(row[genres_col]);
        double count = 0.0;
        if (!detail::parse_number(row[count_col], count) || count < 0) {
            count = 0.0;
        }
        entry.features.vote_count = static_cast<std::int64_t>(count);
        double avg = 0.0;
        if (!detail::parse_number(row[avg_col], avg) || !(avg >= 0.0 && avg <= 10.0)) {
            avg = 0.0;
        }
        entry.features.vote_average = avg;
        entry.features.language = row[lang_col].empty() ? std::string(EncoderConfig::other_language) : row[lang_col];
        cat.movies.emplace(entry.movie_id, std::move(entry));
    }
    return cat;
}

// ---------------------------------------------------------------------------
// Per-user experiment samples
// ---------------------------------------------------------------------------

/// Groups catalog-joinable events by user. Repeated ratings of one movie keep
/// the latest (by timestamp, then file order); events end up sorted by
/// (timestamp, movie_id).
inline std::map<std::uint32_t, UserHistory> build_histories(std::span<const RatingEvent> events, const Catalog& catalog)
{
    std::map<std::uint32_t, std::unordered_map<std::uint32_t, RatingEvent>> latest;
    for (const auto& ev : events) {
        if (!catalog.contains(ev.movie_id)) {
            continue;
        }
        auto& per_user = latest[ev.user_id];
        const auto [it, inserted] = per_user.emplace(ev.movie_id, ev);
        if (!inserted && ev.timestamp >= it->second.timestamp) {
            it->second = ev;
        }
    }
    std::map<std::uint32_t, UserHistory> out;
    for (auto& [user, movies] : latest) {
        UserHistory h{user, {}};
        h.events.reserve(movies.size());
        for (const auto& [m, ev] : movies) {
            h.events.push_back(ev);
        }
        std::sort(h.events.begin(), h.events.end(), [](const RatingEvent& a, const RatingEvent& b) {
            return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.movie_id < b.movie_id;
        });
        out.emplace(user, std::move(h));
    }
    return out;
}

/// Uniform sample without replacement among users with >= min_events
/// joinable events; result sorted by user id.
inline std::vector<UserHistory> sample_users(std::span<const RatingEvent> events, const Catalog& catalog,
                                             std::size_t n_users, std::size_t min_events, std::uint64_t seed)
{
    if (n_users == 0) {
        throw DomainError("sample_users: n_users must be >= 1");
    }
    auto histories = build_histories(events, catalog);
    std::vector<std::uint32_t> eligible;
    for (const auto& [user, h] : histories) {
        if (h.events.size() >= min_events) {
            eligible.push_back(user);
        }
    }
    if (eligible.size() < n_users) {
        throw DomainError("sample_users: only " + std::to_string(eligible.size()) + " users have >= " +
                          std::to_string(min_events) + " events, need " + std::to_string(n_users) +
                          " (short by " + std::to_string(n_users - eligible.size()) + ")");
    }
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n_users; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, eligible.size() - 1);
        std::swap(eligible[i], eligible[pick(rng)]);
    }
    eligible.resize(n_users);
    std::sort(eligible.begin(), eligible.end());
    std::vector<UserHistory> out;
    out.reserve(n_users);
    for (const auto user : eligible) {
        out.push_back(std::move(histories.at(user)));
    }
    return out;
}

struct HistorySplit {
    std::vector<RatingEvent> train;
    std::vector<RatingEvent> test;
};

/// Earliest train_n events train; the next min(test_cap, rest) test.
inline HistorySplit split_history(const UserHistory& h, std::size_t train_n, std::size_t test_cap)
{
    if (h.events.size() < train_n + 1) {
        throw DomainError("split_history: user " + std::to_string(h.user_id) + " has " +
                          std::to_string(h.events.size()) + " events, need " + std::to_string(train_n + 1));
    }
    HistorySplit s;
    const auto mid = h.events.begin() + static_cast<std::ptrdiff_t>(train_n);
    const std::size_t n_test = std::min(test_cap, h.events.size() - train_n);
    s.train.assign(h.events.begin(), mid);
    s.test.assign(mid, mid + static_cast<std::ptrdiff_t>(n_test));
    return s;
}

/// Seeded random variant: sizes as split_history, membership drawn at random,
/// each side kept in chronological order.
inline HistorySplit split_history_random(const UserHistory& h, std::size_t train_n, std::size_t test_cap,
                                         std::uint64_t seed)
{
    if (h.events.size() < train_n + 1) {
        throw DomainError("split_history_random: too few events for user " + std::to_string(h.user_id));
    }
    std::vector<std::size_t> order(h.events.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    const std::size_t n_test = std::min(test_cap, h.events.size() - train_n);
    for (std::size_t i = 0; i < train_n + n_test; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_n));
    std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(train_n),
                                      order.begin() + static_cast<std::ptrdiff_t>(train_n + n_test));
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    HistorySplit s;
    for (const auto i : train_idx) {
        s.train.push_back(h.events[i]);
    }
    for (const auto i : test_idx) {
        s.test.push_back(h.events[i]);
    }
    return s;
}

} // namespace wnnrec
