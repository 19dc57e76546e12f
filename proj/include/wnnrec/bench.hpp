#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <exception>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "baselines.hpp"
#include "dataset.hpp"
#include "encoding.hpp"
#include "errors.hpp"
#include "wnn.hpp"

namespace wnnrec {

enum class ModelKind { wnn, weighted, cf };

inline std::string to_string(ModelKind m)
{
    switch (m) {
    case ModelKind::wnn:
        return "wnn";
    case ModelKind::weighted:
        return "weighted";
    case ModelKind::cf:
        return "cf";
    }
    return "?";
}

inline ModelKind model_from_string(const std::string& s)
{
    if (s == "wnn") {
        return ModelKind::wnn;
    }
    if (s == "weighted") {
        return ModelKind::weighted;
    }
    if (s == "cf") {
        return ModelKind::cf;
    }
    throw ConfigError("unknown model '" + s + "' (expected wnn, weighted or cf)");
}

struct DataPaths {
    std::filesystem::path ratings;
    std::filesystem::path metadata;
    std::filesystem::path links;
};

/// WNNREC_RATINGS / WNNREC_METADATA / WNNREC_LINKS override configured paths.
inline DataPaths apply_env_overrides(DataPaths paths)
{
    if (const char* v = std::getenv("WNNREC_RATINGS"); v && *v) {
        paths.ratings = v;
    }
    if (const char* v = std::getenv("WNNREC_METADATA"); v && *v) {
        paths.metadata = v;
    }
    if (const char* v = std::getenv("WNNREC_LINKS"); v && *v) {
        paths.links = v;
    }
    return paths;
}

struct ExperimentConfig {
    ModelKind model = ModelKind::wnn;
    std::size_t reviews_per_user = 5;
    std::size_t n_users = 250;
    double tolerance = default_tolerance;
    std::size_t test_cap = 25;
    std::uint64_t seed = 1;
    bool random_split = false;
    bool cf_full_fit = false;
    std::size_t threads = 0; // 0: hardware concurrency
    AgentConfig wnn;
    NetParams weighted;
    MFParams cf;
    DataPaths data;
};

struct ResultRow {
    ModelKind model = ModelKind::wnn;
    std::size_t reviews_per_user = 0;
    double macro_accuracy = 0.0;
    double macro_accuracy_half = 0.0; // at tolerance 0.5
    double micro_accuracy = 0.0;
    std::vector<double> per_user_accuracies;
    double train_time_s = 0.0;
    double predict_time_s = 0.0;
    std::size_t n_users_effective = 0;
};

/// Catalog, fitted encoder, and the catalog-joinable rating events.
struct Corpus {
    Catalog catalog;
    EncoderConfig encoder;
    std::vector<RatingEvent> events;
    RatingsStats ratings_stats;
};

inline Corpus make_corpus(Catalog catalog, std::vector<RatingEvent> events)
{
    Corpus c;
    c.encoder = fit_encoder(catalog.features());
    c.catalog = std::move(catalog);
    c.events.reserve(events.size());
    for (const auto& ev : events) {
        if (c.catalog.contains(ev.movie_id)) {
            c.events.push_back(ev);
        }
    }
    return c;
}

inline Corpus load_corpus(const DataPaths& paths)
{
    Corpus c;
    c.catalog = load_catalog(paths.metadata, paths.links);
    if (c.catalog.movies.empty()) {
        throw FormatError("catalog is empty after joining metadata with links");
    }
    c.encoder = fit_encoder(c.catalog.features());
    c.ratings_stats = for_each_rating(paths.ratings, [&](const RatingEvent& ev) {
        if (c.catalog.contains(ev.movie_id)) {
            c.events.push_back(ev);
        }
    });
    return c;
}

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt)
{
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Runs fn(i) for i in [0, n) on `threads` workers.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn)
{
    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) {
                            failure = std::current_exception();
                        }
                    }
                }
            });
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

inline double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace detail

/// Per-user outcome tallies; accuracies are reduced in user-id order.
struct UserOutcome {
    std::size_t hits = 0;
    std::size_t hits_half = 0;
    std::size_t total = 0;
};

inline void fill_accuracies(ResultRow& row, const std::vector<UserOutcome>& outcomes)
{
    double sum = 0.0;
    double sum_half = 0.0;
    std::size_t hits = 0;
    std::size_t total = 0;
    row.per_user_accuracies.clear();
    for (const auto& o : outcomes) {
        const double acc = o.total ? static_cast<double>(o.hits) / static_cast<double>(o.total) : 0.0;
        row.per_user_accuracies.push_back(acc);
        sum += acc;
        sum_half += o.total ? static_cast<double>(o.hits_half) / static_cast<double>(o.total) : 0.0;
        hits += o.hits;
        total += o.total;
    }
    const double n = static_cast<double>(outcomes.size());
    row.n_users_effective = outcomes.size();
    row.macro_accuracy = outcomes.empty() ? 0.0 : sum / n;
    row.macro_accuracy_half = outcomes.empty() ? 0.0 : sum_half / n;
    row.micro_accuracy = total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

inline void score(UserOutcome& o, Rating predicted, Rating actual, double tolerance)
{
    ++o.total;
    o.hits += is_accurate(predicted, actual, tolerance) ? 1 : 0;
    o.hits_half += is_accurate(predicted, actual, 0.5) ? 1 : 0;
}

/// Evaluates one model on pre-split users. `splits[u]` belongs to `users[u]`.
inline ResultRow evaluate_splits(const ExperimentConfig& cfg, const Corpus& corpus,
                                 const std::vector<UserHistory>& users, const std::vector<HistorySplit>& splits)
{
    ResultRow row;
    row.model = cfg.model;
    row.reviews_per_user = cfg.reviews_per_user;
    std::vector<UserOutcome> outcomes(users.size());
    const auto encode = [&](std::uint32_t movie) { return encode_movie(corpus.catalog.at(movie).features, corpus.encoder); };

    switch (cfg.model) {
    case ModelKind::wnn: {
        std::vector<double> train_s(users.size());
        std::vector<double> predict_s(users.size());
        detail::parallel_for(users.size(), cfg.threads, [&](std::size_t u) {
            AgentConfig ac = cfg.wnn;
            ac.seed = detail::mix_seed(cfg.wnn.seed ^ cfg.seed, users[u].user_id);
            Agent agent(ac);
            auto t0 = std::chrono::steady_clock::now();
            for (const auto& ev : splits[u].train) {
                agent.reset_state();
                agent.train(encode(ev.movie_id), ev.rating, ev.timestamp);
            }
            train_s[u] = detail::seconds_since(t0);
            t0 = std::chrono::steady_clock::now();
            for (const auto& ev : splits[u].test) {
                agent.reset_state();
                score(outcomes[u], agent.predict(encode(ev.movie_id)).rating, ev.rating, cfg.tolerance);
            }
            predict_s[u] = detail::seconds_since(t0);
        });
        for (std::size_t u = 0; u < users.size(); ++u) {
            row.train_time_s += train_s[u];
            row.predict_time_s += predict_s[u];
        }
        break;
    }
    case ModelKind::weighted: {
        std::vector<double> train_s(users.size());
        std::vector<double> predict_s(users.size());
        detail::parallel_for(users.size(), cfg.threads, [&](std::size_t u) {
            std::vector<TrainingPair> pairs;
            for (const auto& ev : splits[u].train) {
                pairs.push_back({encode(ev.movie_id), ev.rating});
            }
            auto t0 = std::chrono::steady_clock::now();
            const DenseNet net = net_train_user(pairs, cfg.weighted, detail::mix_seed(cfg.seed, users[u].user_id));
            train_s[u] = detail::seconds_since(t0);
            t0 = std::chrono::steady_clock::now();
            for (const auto& ev : splits[u].test) {
                score(outcomes[u], net_predict(net, encode(ev.movie_id)), ev.rating, cfg.tolerance);
            }
            predict_s[u] = detail::seconds_since(t0);
        });
        for (std::size_t u = 0; u < users.size(); ++u) {
            row.train_time_s += train_s[u];
            row.predict_time_s += predict_s[u];
        }
        break;
    }
    case ModelKind::cf: {
        // (user, movie) keys of every held-out event; none may reach the fit set.
        std::set<std::pair<std::uint32_t, std::uint32_t>> held_out;
        std::set<std::uint32_t> sampled;
        for (std::size_t u = 0; u < users.size(); ++u) {
            sampled.insert(users[u].user_id);
            for (const auto& ev : splits[u].test) {
                held_out.emplace(ev.user_id, ev.movie_id);
            }
        }
        std::vector<RatingTriple> fit;
        if (cfg.cf_full_fit) {
            std::set<std::pair<std::uint32_t, std::uint32_t>> train_keys;
            for (const auto& s : splits) {
                for (const auto& ev : s.train) {
                    train_keys.emplace(ev.user_id, ev.movie_id);
                }
            }
            for (const auto& ev : corpus.events) {
                // sampled users contribute only their training events
                if (sampled.contains(ev.user_id) && !train_keys.contains({ev.user_id, ev.movie_id})) {
                    continue;
                }
                fit.push_back({ev.user_id, ev.movie_id, ev.rating.value()});
            }
        } else {
            for (const auto& s : splits) {
                for (const auto& ev : s.train) {
                    fit.push_back({ev.user_id, ev.movie_id, ev.rating.value()});
                }
            }
        }
        for (const auto& t : fit) {
            if (held_out.contains({t.user, t.item})) {
                throw std::logic_error("cf fit set contains a held-out test event");
            }
        }
        auto t0 = std::chrono::steady_clock::now();
        const MFModel model = mf_fit(fit, cfg.cf, cfg.seed);
        row.train_time_s = detail::seconds_since(t0);
        t0 = std::chrono::steady_clock::now();
        for (std::size_t u = 0; u < users.size(); ++u) {
            for (const auto& ev : splits[u].test) {
                score(outcomes[u], mf_predict(model, ev.user_id, ev.movie_id), ev.rating, cfg.tolerance);
            }
        }
        row.predict_time_s = detail::seconds_since(t0);
        break;
    }
    }
    fill_accuracies(row, outcomes);
    return row;
}

inline std::vector<HistorySplit> split_users(const ExperimentConfig& cfg, const std::vector<UserHistory>& users)
{
    std::vector<HistorySplit> splits;
    splits.reserve(users.size());
    for (const auto& h : users) {
        splits.push_back(cfg.random_split
                             ? split_history_random(h, cfg.reviews_per_user, cfg.test_cap,
                                                     detail::mix_seed(cfg.seed, h.user_id))
                             : split_history(h, cfg.reviews_per_user, cfg.test_cap));
    }
    return splits;
}

inline void validate(const ExperimentConfig& cfg)
{
    if (cfg.reviews_per_user == 0 || cfg.n_users == 0 || cfg.test_cap == 0) {
        throw ConfigError("reviews_per_user, n_users and test_cap must be positive");
    }
    if (!(cfg.tolerance > 0.0)) {
        throw ConfigError("tolerance must be positive");
    }
}

/// Samples users with >= R + test_cap events, splits, trains, and scores.
inline ResultRow run_experiment(const ExperimentConfig& cfg, const Corpus& corpus)
{
    validate(cfg);
    const auto users = sample_users(corpus.events, corpus.catalog, cfg.n_users,
                                    cfg.reviews_per_user + cfg.test_cap, cfg.seed);
    return evaluate_splits(cfg, corpus, users, split_users(cfg, users));
}

inline ResultRow run_experiment(const ExperimentConfig& cfg)
{
    validate(cfg);
    return run_experiment(cfg, load_corpus(apply_env_overrides(cfg.data)));
}

struct SuiteConfig {
    ExperimentConfig base;
    std::vector<ModelKind> models{ModelKind::weighted, ModelKind::wnn, ModelKind::cf};
    std::vector<std::size_t> reviews_per_user{5, 10, 25, 100, 200};
};

/// Cells are (R, model), deduplicated, run R-major in first-seen model order.
inline std::vector<ResultRow> run_suite(const SuiteConfig& suite, const Corpus& corpus)
{
    std::vector<ModelKind> models;
    for (const auto m : suite.models) {
        if (std::find(models.begin(), models.end(), m) == models.end()) {
            models.push_back(m);
        }
    }
    std::vector<std::size_t> rs;
    for (const auto r : suite.reviews_per_user) {
        if (std::find(rs.begin(), rs.end(), r) == rs.end()) {
            rs.push_back(r);
        }
    }
    if (models.empty() || rs.empty()) {
        throw ConfigError("suite grid is empty");
    }
    std::vector<ResultRow> rows;
    for (const auto r : rs) {
        for (const auto m : models) {
            ExperimentConfig cfg = suite.base;
            cfg.model = m;
            cfg.reviews_per_user = r;
            try {
                rows.push_back(run_experiment(cfg, corpus));
            } catch (const std::exception& e) {
                throw std::runtime_error("cell (model=" + to_string(m) + ", R=" + std::to_string(r) +
                                         ") failed: " + e.what());
            }
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Config documents
// ---------------------------------------------------------------------------

inline NetParams net_params_from_json(const nlohmann::json& doc, NetParams p = {})
{
    p.hidden = doc.value("hidden", p.hidden);
    p.learning_rate = doc.value("learning_rate", p.learning_rate);
    p.epochs = doc.value("epochs", p.epochs);
    p.init_range = doc.value("init_range", p.init_range);
    return p;
}

inline MFParams mf_params_from_json(const nlohmann::json& doc, MFParams p = {})
{
    p.factors = doc.value("factors", p.factors);
    p.learning_rate = doc.value("learning_rate", p.learning_rate);
    p.regularization = doc.value("regularization", p.regularization);
    p.epochs = doc.value("epochs", p.epochs);
    p.init_range = doc.value("init_range", p.init_range);
    return p;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& doc)
{
    if (!doc.is_object()) {
        throw ConfigError("experiment config must be a JSON object");
    }
    ExperimentConfig cfg;
    try {
        if (doc.contains("model") && doc["model"].is_string()) {
            cfg.model = model_from_string(doc["model"].get<std::string>());
        }
        if (doc.contains("reviews_per_user") && doc["reviews_per_user"].is_number()) {
            cfg.reviews_per_user = doc["reviews_per_user"].get<std::size_t>();
        }
        cfg.n_users = doc.value("n_users", cfg.n_users);
        cfg.tolerance = doc.value("tolerance", cfg.tolerance);
        cfg.test_cap = doc.value("test_cap", cfg.test_cap);
        cfg.seed = doc.value("seed", cfg.seed);
        cfg.threads = doc.value("threads", cfg.threads);
        cfg.cf_full_fit = doc.value("cf_full_fit", cfg.cf_full_fit);
        const std::string split = doc.value("split", std::string("chronological"));
        if (split != "chronological" && split != "random") {
            throw ConfigError("split must be 'chronological' or 'random'");
        }
        cfg.random_split = split == "random";
        if (doc.contains("wnn")) {
            cfg.wnn = agent_config_from_json(doc["wnn"]);
        }
        if (doc.contains("weighted")) {
            cfg.weighted = net_params_from_json(doc["weighted"]);
        }
        if (doc.contains("cf")) {
            cfg.cf = mf_params_from_json(doc["cf"]);
        }
        if (doc.contains("data")) {
            const auto& d = doc["data"];
            cfg.data.ratings = d.value("ratings", std::string());
            cfg.data.metadata = d.value("metadata", std::string());
            cfg.data.links = d.value("links", std::string());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    validate(cfg);
    return cfg;
}

/// Suite documents are experiment configs whose "model" / "reviews_per_user"
/// may be arrays ("models" is accepted as an alias).
inline SuiteConfig suite_config_from_json(const nlohmann::json& doc)
{
    SuiteConfig suite;
    suite.base = experiment_config_from_json(doc);
    try {
        const auto* models = doc.contains("models") ? &doc["models"] : (doc.contains("model") ? &doc["model"] : nullptr);
        if (models) {
            suite.models.clear();
            if (models->is_array()) {
                for (const auto& m : *models) {
                    suite.models.push_back(model_from_string(m.get<std::string>()));
                }
            } else {
                suite.models.push_back(model_from_string(models->get<std::string>()));
            }
        }
        if (doc.contains("reviews_per_user")) {
            const auto& r = doc["reviews_per_user"];
            suite.reviews_per_user = r.is_array() ? r.get<std::vector<std::size_t>>()
                                                  : std::vector<std::size_t>{r.get<std::size_t>()};
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("suite config: ") + e.what());
    }
    return suite;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

enum class ReportFormat { csv, json, markdown };

inline ReportFormat report_format_from_string(const std::string& s)
{
    if (s == "csv") {
        return ReportFormat::csv;
    }
    if (s == "json") {
        return ReportFormat::json;
    }
    if (s == "md" || s == "markdown" || s == "markdown-table") {
        return ReportFormat::markdown;
    }
    throw ConfigError("unknown report format '" + s + "'");
}

inline nlohmann::json rows_to_json(const std::vector<ResultRow>& rows)
{
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
        out.push_back({{"model", to_string(r.model)},
                       {"R", r.reviews_per_user},
                       {"macro_accuracy", r.macro_accuracy},
                       {"macro_accuracy_half", r.macro_accuracy_half},
                       {"micro_accuracy", r.micro_accuracy},
                       {"per_user_accuracies", r.per_user_accuracies},
                       {"train_time_s", r.train_time_s},
                       {"predict_time_s", r.predict_time_s},
                       {"n_users_effective", r.n_users_effective}});
    }
    return out;
}

inline std::vector<ResultRow> rows_from_json(const nlohmann::json& doc)
{
    if (!doc.is_array()) {
        throw FormatError("result document must be an array of rows");
    }
    std::vector<ResultRow> rows;
    try {
        for (const auto& r : doc) {
            ResultRow row;
            row.model = model_from_string(r.at("model").get<std::string>());
            row.reviews_per_user = r.at("R").get<std::size_t>();
            row.macro_accuracy = r.at("macro_accuracy").get<double>();
            row.macro_accuracy_half = r.value("macro_accuracy_half", 0.0);
            row.micro_accuracy = r.value("micro_accuracy", 0.0);
            row.per_user_accuracies = r.value("per_user_accuracies", std::vector<double>{});
            row.train_time_s = r.value("train_time_s", 0.0);
            row.predict_time_s = r.value("predict_time_s", 0.0);
            row.n_users_effective = r.value("n_users_effective", std::size_t{0});
            rows.push_back(std::move(row));
        }
    } catch (const std::exception& e) {
        throw FormatError(std::string("result document: ") + e.what());
    }
    return rows;
}

inline std::string format_rows(const std::vector<ResultRow>& rows, ReportFormat format)
{
    if (rows.empty()) {
        throw DomainError("no result rows to report");
    }
    std::ostringstream out;
    out << std::setprecision(17);
    switch (format) {
    case ReportFormat::csv:
        out << "model,R,macro_accuracy,train_time_s,predict_time_s,n_users_effective\n";
        for (const auto& r : rows) {
            out << to_string(r.model) << ',' << r.reviews_per_user << ',' << r.macro_accuracy << ','
                << r.train_time_s << ',' << r.predict_time_s << ',' << r.n_users_effective << '\n';
        }
        break;
    case ReportFormat::json:
        out << rows_to_json(rows).dump(2) << '\n';
        break;
    case ReportFormat::markdown: {
        const std::pair<ModelKind, const char*> columns[] = {{ModelKind::weighted, "Accuracy (Weighted Network)"},
                                                            {ModelKind::wnn, "Accuracy (WNN)"},
                                                            {ModelKind::cf, "Accuracy (Collaborative Filtering)"}};
        std::vector<std::size_t> rs;
        std::vector<std::pair<ModelKind, const char*>> present;
        for (const auto& r : rows) {
            if (std::find(rs.begin(), rs.end(), r.reviews_per_user) == rs.end()) {
                rs.push_back(r.reviews_per_user);
            }
        }
        for (const auto& c : columns) {
            if (std::any_of(rows.begin(), rows.end(), [&](const ResultRow& r) { return r.model == c.first; })) {
                present.push_back(c);
            }
        }
        out << "| Reviews Per User |";
        for (const auto& c : present) {
            out << ' ' << c.second << " |";
        }
        out << "\n|---|";
        for (std::size_t i = 0; i < present.size(); ++i) {
            out << "---|";
        }
        out << '\n' << std::fixed << std::setprecision(4);
        for (const auto r : rs) {
            out << "| " << r << " |";
            for (const auto& c : present) {
                const auto it = std::find_if(rows.begin(), rows.end(), [&](const ResultRow& row) {
                    return row.model == c.first && row.reviews_per_user == r;
                });
                out << ' ';
                if (it != rows.end()) {
                    out << it->macro_accuracy;
                } else {
                    out << '-';
                }
                out << " |";
            }
            out << '\n';
        }
        break;
    }
    }
    return out.str();
}

inline void emit_report(const std::vector<ResultRow>& rows, ReportFormat format, const std::filesystem::path& path)
{
    const std::string text = format_rows(rows, format);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << text) || !out.flush()) {
        throw IoError("cannot write report to " + path.string());
    }
}

/// Reads back the CSV emitted by emit_report (accuracy, timing and count columns).
inline std::vector<ResultRow> parse_csv_report(const std::string& text)
{
    std::istringstream in(text);
    CsvReader csv(in);
    std::vector<std::string> f;
    if (!csv.next(f) || f.size() != 6 || f[0] != "model") {
        throw FormatError("report CSV header mismatch");
    }
    std::vector<ResultRow> rows;
    while (csv.next(f)) {
        if (f.size() == 1 && f[0].empty()) {
            continue;
        }
        if (f.size() != 6) {
            throw FormatError("report CSV row has " + std::to_string(f.size()) + " fields");
        }
        ResultRow r;
        r.model = model_from_string(f[0]);
        if (!detail::parse_number(f[1], r.reviews_per_user) || !detail::parse_number(f[2], r.macro_accuracy) ||
            !detail::parse_number(f[3], r.train_time_s) || !detail::parse_number(f[4], r.predict_time_s) ||
            !detail::parse_number(f[5], r.n_users_effective)) {
            throw FormatError("report CSV row has a non-numeric field");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace wnnrec
