#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "httplib.h"
#include "json.hpp"

#include "dataset.hpp"
#include "encoding.hpp"
#include "errors.hpp"
#include "wnn.hpp"

namespace wnnrec {

/// Read-only movie data shared by every agent.
class MovieCatalog {
public:
    MovieCatalog(Catalog catalog, EncoderConfig encoder) : catalog_(std::move(catalog)), encoder_(std::move(encoder))
    {
        for (const auto& [id, entry] : catalog_.movies) {
            by_votes_.push_back(id);
        }
        std::stable_sort(by_votes_.begin(), by_votes_.end(), [&](std::uint32_t a, std::uint32_t b) {
            const auto va = catalog_.movies.at(a).features.vote_count;
            const auto vb = catalog_.movies.at(b).features.vote_count;
            return va != vb ? va > vb : a < b;
        });
    }

    explicit MovieCatalog(Catalog catalog) : MovieCatalog(catalog, fit_encoder(catalog.features())) {}

    [[nodiscard]] const Catalog& catalog() const noexcept { return catalog_; }
    [[nodiscard]] const EncoderConfig& encoder() const noexcept { return encoder_; }
    // Movie ids ordered by vote_count desc, then id asc.
    [[nodiscard]] const std::vector<std::uint32_t>& by_votes() const noexcept { return by_votes_; }

    [[nodiscard]] const CatalogEntry& movie(std::uint32_t id) const { return catalog_.at(id); }
    [[nodiscard]] BitCode encode(std::uint32_t id) const { return encode_movie(movie(id).features, encoder_); }

private:
    Catalog catalog_;
    EncoderConfig encoder_;
    std::vector<std::uint32_t> by_votes_;
};

struct ServiceConfig {
    std::filesystem::path snapshot_dir;
    AgentConfig defaults;
    bool stateless_context = true;
    std::size_t default_pool = 1000;
};

struct RateResult {
    PairId pair_id = 0;
    std::uint32_t movie_id = 0;
    Rating predicted = Rating::from_halves(1);
};

struct Recommendation {
    std::uint32_t movie_id = 0;
    Rating predicted = Rating::from_halves(1);
};

struct MemoryEntry {
    PairId pair_id = 0;
    std::uint32_t movie_id = 0;
    Rating rating = Rating::from_halves(1);
    std::int64_t timestamp = 0;
};

/// One live agent per end user, persisted as a snapshot after every mutation.
///
/// The registry map is guarded by a shared mutex; each agent has its own
/// mutex so requests to one agent serialize while different agents proceed
/// in parallel.
class AgentRegistry {
public:
    static constexpr const char* snapshot_version = "service-agent-v1";

    AgentRegistry(std::shared_ptr<const MovieCatalog> catalog, ServiceConfig cfg)
        : catalog_(std::move(catalog)), cfg_(std::move(cfg))
    {
        cfg_.defaults.validate();
        std::filesystem::create_directories(cfg_.snapshot_dir);
        for (const auto& file : std::filesystem::directory_iterator(cfg_.snapshot_dir)) {
            if (file.path().extension() != ".json") {
                continue;
            }
            std::ifstream in(file.path());
            nlohmann::json doc;
            try {
                doc = nlohmann::json::parse(in);
            } catch (const nlohmann::json::exception& e) {
                throw FormatError("snapshot " + file.path().string() + ": " + e.what());
            }
            auto slot = slot_from_json(doc);
            const std::string id = slot->id;
            slots_.emplace(id, std::move(slot));
        }
    }

    [[nodiscard]] const MovieCatalog& movies() const noexcept { return *catalog_; }
    [[nodiscard]] std::size_t size() const
    {
        std::shared_lock lock(map_mutex_);
        return slots_.size();
    }

    std::string create_agent(const nlohmann::json& overrides = nlohmann::json::object())
    {
        AgentConfig cfg = cfg_.defaults;
        if (!overrides.is_null() && !(overrides.is_object() && overrides.empty())) {
            cfg = agent_config_from_json(overrides, cfg);
        }
        auto slot = std::make_shared<Slot>(new_id(), Agent(cfg));
        persist(*slot);
        std::unique_lock lock(map_mutex_);
        const std::string id = slot->id;
        slots_.emplace(id, std::move(slot));
        return id;
    }

    RateResult rate(const std::string& agent_id, std::uint32_t movie_id, double rating)
    {
        const Rating r = Rating::from_value(rating);
        auto slot = find(agent_id);
        const BitCode input = catalog_->encode(movie_id);
        std::lock_guard lock(slot->mutex);
        if (cfg_.stateless_context) {
            slot->agent.reset_state();
        }
        const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
        const PairId id = slot->agent.train(input, r, now);
        slot->pair_movies.emplace(id, movie_id);
        try {
            persist(*slot);
        } catch (...) {
            // not acknowledged: roll back so memory matches the last snapshot
            slot->agent.delete_pair(id);
            slot->pair_movies.erase(id);
            throw;
        }
        return {id, movie_id, predict_locked(*slot, input)};
    }

    Rating predict_one(const std::string& agent_id, std::uint32_t movie_id)
    {
        auto slot = find(agent_id);
        const BitCode input = catalog_->encode(movie_id);
        std::lock_guard lock(slot->mutex);
        return predict_locked(*slot, input);
    }

    /// Default pool: the `default_pool` most-voted movies this agent has not rated.
    std::vector<Recommendation> recommend(const std::string& agent_id, std::size_t n,
                                          const std::optional<std::vector<std::uint32_t>>& pool = std::nullopt)
    {
        if (n == 0) {
            throw DomainError("n must be >= 1");
        }
        auto slot = find(agent_id);
        std::lock_guard lock(slot->mutex);
        std::vector<std::uint32_t> candidates;
        if (pool) {
            for (const auto id : *pool) {
                if (catalog_->catalog().contains(id) &&
                    std::find(candidates.begin(), candidates.end(), id) == candidates.end()) {
                    candidates.push_back(id);
                }
            }
        } else {
            std::set<std::uint32_t> rated;
            for (const auto& [pair, movie] : slot->pair_movies) {
                rated.insert(movie);
            }
            for (const auto id : catalog_->by_votes()) {
                if (candidates.size() >= cfg_.default_pool) {
                    break;
                }
                if (!rated.contains(id)) {
                    candidates.push_back(id);
                }
            }
        }
        std::vector<Recommendation> recs;
        recs.reserve(candidates.size());
        for (const auto id : candidates) {
            recs.push_back({id, predict_locked(*slot, catalog_->encode(id))});
        }
        std::sort(recs.begin(), recs.end(), [&](const Recommendation& a, const Recommendation& b) {
            if (a.predicted != b.predicted) {
                return a.predicted > b.predicted;
            }
            const auto va = catalog_->movie(a.movie_id).features.vote_count;
            const auto vb = catalog_->movie(b.movie_id).features.vote_count;
            return va != vb ? va > vb : a.movie_id < b.movie_id;
        });
        if (recs.size() > n) {
            recs.resize(n);
        }
        return recs;
    }

    std::vector<MemoryEntry> memory_list(const std::string& agent_id)
    {
        auto slot = find(agent_id);
        std::lock_guard lock(slot->mutex);
        std::vector<MemoryEntry> out;
        for (const auto& p : slot->agent.memory()) {
            const auto it = slot->pair_movies.find(p.id);
            out.push_back({p.id, it == slot->pair_movies.end() ? 0u : it->second, p.target, p.timestamp});
        }
        return out;
    }

    void memory_delete(const std::string& agent_id, PairId pair_id)
    {
        auto slot = find(agent_id);
        std::lock_guard lock(slot->mutex);
        const auto before = slot->agent.to_json();
        const auto movies_before = slot->pair_movies;
        slot->agent.delete_pair(pair_id);
        slot->pair_movies.erase(pair_id);
        try {
            persist(*slot);
        } catch (...) {
            slot->agent = Agent::from_json(before);
            slot->pair_movies = movies_before;
            throw;
        }
    }

    /// Case-insensitive title substring match, most-voted first.
    [[nodiscard]] std::vector<std::uint32_t> movies_search(const std::string& query, std::size_t limit) const
    {
        const auto lower = [](std::string s) {
            std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
            return s;
        };
        const std::string q = lower(query);
        std::vector<std::uint32_t> out;
        for (const auto id : catalog_->by_votes()) {
            if (out.size() >= limit) {
                break;
            }
            if (q.empty() || lower(catalog_->movie(id).title).find(q) != std::string::npos) {
                out.push_back(id);
            }
        }
        return out;
    }

private:
    struct Slot {
        Slot(std::string id_, Agent agent_) : id(std::move(id_)), agent(std::move(agent_)) {}
        std::string id;
        std::mutex mutex;
        Agent agent;
        std::map<PairId, std::uint32_t> pair_movies;
    };

    std::shared_ptr<Slot> find(const std::string& id) const
    {
        std::shared_lock lock(map_mutex_);
        const auto it = slots_.find(id);
        if (it == slots_.end()) {
            throw NotFoundError("no agent with id '" + id + "'");
        }
        return it->second;
    }

    // Prediction in the stateless context; the agent's recurrent state is restored.
    Rating predict_locked(Slot& slot, const BitCode& input)
    {
        const BitCode saved = slot.agent.prev_state();
        if (cfg_.stateless_context) {
            slot.agent.reset_state();
        }
        const Rating r = slot.agent.predict(input).rating;
        slot.agent.restore_state(saved);
        return r;
    }

    std::string new_id()
    {
        std::lock_guard lock(id_mutex_);
        while (true) {
            std::ostringstream s;
            s << std::hex;
            s.width(16);
            s.fill('0');
            s << id_rng_();
            std::shared_lock map_lock(map_mutex_);
            if (!slots_.contains(s.str()) && !std::filesystem::exists(snapshot_path(s.str()))) {
                return s.str();
            }
        }
    }

    [[nodiscard]] std::filesystem::path snapshot_path(const std::string& id) const
    {
        return cfg_.snapshot_dir / (id + ".json");
    }

    // write temp, fsync, rename: a reader sees either the old or the new snapshot
    void persist(const Slot& slot) const
    {
        nlohmann::json movies = nlohmann::json::array();
        for (const auto& [pair, movie] : slot.pair_movies) {
            movies.push_back({pair, movie});
        }
        const nlohmann::json doc = {{"version", snapshot_version},
                                    {"agent_id", slot.id},
                                    {"agent", slot.agent.to_json()},
                                    {"pair_movies", std::move(movies)}};
        const std::string text = doc.dump();
        const auto final_path = snapshot_path(slot.id);
        const auto tmp_path = cfg_.snapshot_dir / (slot.id + ".json.tmp");
        std::FILE* f = std::fopen(tmp_path.c_str(), "wb");
        if (!f) {
            throw IoError("cannot write snapshot " + tmp_path.string());
        }
        const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size() && std::fflush(f) == 0 &&
                        ::fsync(::fileno(f)) == 0;
        std::fclose(f);
        if (!ok) {
            throw IoError("failed writing snapshot " + tmp_path.string());
        }
        std::error_code ec;
        std::filesystem::rename(tmp_path, final_path, ec);
        if (ec) {
            throw IoError("cannot publish snapshot " + final_path.string() + ": " + ec.message());
        }
    }

    static std::shared_ptr<Slot> slot_from_json(const nlohmann::json& doc)
    {
        if (!doc.is_object() || doc.value("version", "") != snapshot_version) {
            throw FormatError("snapshot missing version tag service-agent-v1");
        }
        try {
            auto slot = std::make_shared<Slot>(doc.at("agent_id").get<std::string>(), Agent::from_json(doc.at("agent")));
            for (const auto& item : doc.at("pair_movies")) {
                slot->pair_movies.emplace(item.at(0).get<PairId>(), item.at(1).get<std::uint32_t>());
            }
            return slot;
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("snapshot: ") + e.what());
        }
    }

    std::shared_ptr<const MovieCatalog> catalog_;
    ServiceConfig cfg_;
    mutable std::shared_mutex map_mutex_;
    std::map<std::string, std::shared_ptr<Slot>> slots_;
    std::mutex id_mutex_;
    std::mt19937_64 id_rng_{std::random_device{}()};
};

// ---------------------------------------------------------------------------
// HTTP binding
// ---------------------------------------------------------------------------

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message)
{
    send_json(res, status, {{"error", code}, {"message", message}});
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn)
{
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const NotFoundError& e) {
            send_error(res, 404, "not_found", e.what());
        } catch (const DomainError& e) {
            send_error(res, 400, "bad_request", e.what());
        } catch (const ConfigError& e) {
            send_error(res, 400, "bad_request", e.what());
        } catch (const nlohmann::json::exception& e) {
            send_error(res, 400, "bad_request", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal", e.what());
        }
    };
}

inline std::uint32_t parse_movie_id(const std::string& s)
{
    std::uint32_t id = 0;
    if (!parse_number(s, id)) {
        throw DomainError("movie id must be a non-negative integer");
    }
    return id;
}

inline nlohmann::json movie_json(const MovieCatalog& movies, std::uint32_t id)
{
    const auto& m = movies.movie(id);
    return {{"movie_id", id},
            {"title", m.title},
            {"genres", m.features.genres},
            {"vote_average", m.features.vote_average},
            {"vote_count", m.features.vote_count}};
}

} // namespace detail

/// Routes under /agents and /movies; permissive CORS for the browser UI.
inline void install_routes(httplib::Server& server, AgentRegistry& registry)
{
    using detail::guarded;
    using detail::send_json;

    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Post("/agents", guarded([&](const httplib::Request& req, httplib::Response& res) {
                    nlohmann::json overrides = nlohmann::json::object();
                    if (!req.body.empty()) {
                        overrides = nlohmann::json::parse(req.body);
                    }
                    send_json(res, 201, {{"agent_id", registry.create_agent(overrides)}});
                }));

    server.Get("/movies", guarded([&](const httplib::Request& req, httplib::Response& res) {
                   std::size_t limit = 20;
                   if (req.has_param("limit") && !detail::parse_number(req.get_param_value("limit"), limit)) {
                       throw DomainError("limit must be a non-negative integer");
                   }
                   nlohmann::json out = nlohmann::json::array();
                   for (const auto id : registry.movies_search(req.get_param_value("q"), limit)) {
                       out.push_back(detail::movie_json(registry.movies(), id));
                   }
                   send_json(res, 200, out);
               }));

    server.Post(R"(/agents/([^/]+)/ratings)", guarded([&](const httplib::Request& req, httplib::Response& res) {
                    const auto body = nlohmann::json::parse(req.body);
                    if (!body.contains("movie_id") || !body.contains("rating") || !body["rating"].is_number()) {
                        throw DomainError("body needs movie_id and numeric rating");
                    }
                    const auto r = registry.rate(req.matches[1], body["movie_id"].get<std::uint32_t>(),
                                                 body["rating"].get<double>());
                    send_json(res, 201,
                              {{"pair_id", r.pair_id},
                               {"updated_predictions_hint", {{"movie_id", r.movie_id}, {"rating", r.predicted.value()}}}});
                }));

    server.Get(R"(/agents/([^/]+)/predictions/([^/]+))",
               guarded([&](const httplib::Request& req, httplib::Response& res) {
                   const auto movie = detail::parse_movie_id(req.matches[2]);
                   const Rating r = registry.predict_one(req.matches[1], movie);
                   send_json(res, 200, {{"movie_id", movie}, {"rating", r.value()}});
               }));

    server.Get(R"(/agents/([^/]+)/recommendations)",
               guarded([&](const httplib::Request& req, httplib::Response& res) {
                   std::size_t n = 10;
                   if (req.has_param("n") && !detail::parse_number(req.get_param_value("n"), n)) {
                       throw DomainError("n must be a positive integer");
                   }
                   std::optional<std::vector<std::uint32_t>> pool;
                   if (req.has_param("pool")) {
                       pool.emplace();
                       std::stringstream ss(req.get_param_value("pool"));
                       for (std::string item; std::getline(ss, item, ',');) {
                           if (!item.empty()) {
                               pool->push_back(detail::parse_movie_id(item));
                           }
                       }
                   }
                   nlohmann::json out = nlohmann::json::array();
                   for (const auto& rec : registry.recommend(req.matches[1], n, pool)) {
                       auto item = detail::movie_json(registry.movies(), rec.movie_id);
                       item["predicted_rating"] = rec.predicted.value();
                       out.push_back(std::move(item));
                   }
                   send_json(res, 200, out);
               }));

    server.Get(R"(/agents/([^/]+)/memory)", guarded([&](const httplib::Request& req, httplib::Response& res) {
                   nlohmann::json out = nlohmann::json::array();
                   for (const auto& m : registry.memory_list(req.matches[1])) {
                       nlohmann::json item = {{"pair_id", m.pair_id},
                                              {"movie_id", m.movie_id},
                                              {"rating", m.rating.value()},
                                              {"timestamp", m.timestamp}};
                       if (registry.movies().catalog().contains(m.movie_id)) {
                           item["title"] = registry.movies().movie(m.movie_id).title;
                       }
                       out.push_back(std::move(item));
                   }
                   send_json(res, 200, out);
               }));

    server.Delete(R"(/agents/([^/]+)/memory/([^/]+))",
                  guarded([&](const httplib::Request& req, httplib::Response& res) {
                      PairId pair = 0;
                      if (!detail::parse_number(std::string(req.matches[2]), pair)) {
                          throw DomainError("pair id must be a non-negative integer");
                      }
                      registry.memory_delete(req.matches[1], pair);
                      send_json(res, 200, {{"deleted", pair}});
                  }));
}

} // namespace wnnrec
