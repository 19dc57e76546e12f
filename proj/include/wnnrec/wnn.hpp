#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "bitcode.hpp"
#include "encoding.hpp"
#include "errors.hpp"

namespace wnnrec {

enum class Metric { hamming, discrimination };

inline std::string to_string(Metric m)
{
    return m == Metric::hamming ? "hamming" : "discrimination";
}

inline Metric metric_from_string(const std::string& s)
{
    if (s == "hamming") {
        return Metric::hamming;
    }
    if (s == "discrimination") {
        return Metric::discrimination;
    }
    throw ConfigError("unknown metric '" + s + "'");
}

using PairId = std::uint64_t;

struct AgentConfig {
    std::size_t input_size = movie_code_bits;
    std::size_t output_size = rating_code_bits;
    std::size_t extra_fanin = 4;
    bool recurrent = true;
    Metric metric = Metric::hamming;
    std::size_t k_nearest = 3;
    std::uint64_t seed = 0;

    // Inner keys are input_size + 1 bits at most and output keys are
    // input_size bits, so both stay within one BitCode.
    void validate() const
    {
        if (input_size == 0 || input_size >= BitCode::max_bits) {
            throw DomainError("input_size must be in [1, 127]");
        }
        if (output_size == 0 || output_size > BitCode::max_bits) {
            throw DomainError("output_size must be in [1, 128]");
        }
        if (extra_fanin + 1 > input_size) {
            throw DomainError("extra_fanin must be < input_size (sources are distinct inputs)");
        }
        if (k_nearest == 0) {
            throw DomainError("k_nearest must be >= 1");
        }
    }

    [[nodiscard]] std::size_t inner_size() const noexcept { return input_size; }

    friend bool operator==(const AgentConfig&, const AgentConfig&) = default;
};

/// Source wiring. Inner neuron i reads input i first, then `extra_fanin`
/// distinct other inputs, then (if recurrent) its own previous state bit.
/// Every output neuron reads the whole inner state in index order.
struct ConnectionMap {
    std::vector<std::vector<std::uint32_t>> inner_inputs;
    bool inner_recurrent = true;

    friend bool operator==(const ConnectionMap&, const ConnectionMap&) = default;
};

inline ConnectionMap draw_connections(const AgentConfig& cfg)
{
    ConnectionMap map;
    map.inner_recurrent = cfg.recurrent;
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::uint32_t> pool;
    for (std::size_t i = 0; i < cfg.inner_size(); ++i) {
        pool.clear();
        for (std::uint32_t j = 0; j < cfg.input_size; ++j) {
            if (j != i) {
                pool.push_back(j);
            }
        }
        std::vector<std::uint32_t> sources{static_cast<std::uint32_t>(i)};
        // partial Fisher-Yates: draw extra_fanin distinct others
        for (std::size_t d = 0; d < cfg.extra_fanin; ++d) {
            std::uniform_int_distribution<std::size_t> pick(d, pool.size() - 1);
            std::swap(pool[d], pool[pick(rng)]);
            sources.push_back(pool[d]);
        }
        map.inner_inputs.push_back(std::move(sources));
    }
    return map;
}

/// Key -> target tally table for one neuron.
///
/// Entries keep the ids of the memory pairs that contributed to them. Entry
/// order (the distance tie-break order) is the id of the earliest surviving
/// contributor, which is exactly the order a replay of the memory registry
/// would insert keys in; this keeps incrementally maintained tables identical
/// to rebuilt ones.
class LookupTable {
public:
    struct Entry {
        BitCode key;
        std::uint32_t ones = 0;
        std::uint32_t zeros = 0;
        std::vector<PairId> contributors;

        [[nodiscard]] int majority() const noexcept { return ones > zeros ? 1 : (zeros > ones ? 0 : -1); }

        friend bool operator==(const Entry&, const Entry&) = default;
    };

    LookupTable() = default;
    explicit LookupTable(std::size_t key_width) : key_width_(key_width) {}

    [[nodiscard]] std::size_t key_width() const noexcept { return key_width_; }
    [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
    [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }
    [[nodiscard]] std::span<const Entry> entries() const noexcept { return entries_; }

    [[nodiscard]] const Entry* find(const BitCode& key) const
    {
        const auto it = index_.find(key);
        return it == index_.end() ? nullptr : &entries_[it->second];
    }

    // Contributor ids must arrive in increasing order (training and replay both do).
    void add(const BitCode& key, bool target, PairId contributor)
    {
        check_width(key);
        auto it = index_.find(key);
        if (it == index_.end()) {
            it = index_.emplace(key, entries_.size()).first;
            entries_.push_back(Entry{key, 0, 0, {}});
        }
        Entry& e = entries_[it->second];
        (target ? e.ones : e.zeros) += 1;
        e.contributors.push_back(contributor);
    }

    void remove(const BitCode& key, bool target, PairId contributor)
    {
        check_width(key);
        const auto it = index_.find(key);
        if (it == index_.end()) {
            throw NotFoundError("lookup table has no entry for the replayed key");
        }
        const std::size_t slot = it->second;
        Entry& e = entries_[slot];
        const auto pos = std::lower_bound(e.contributors.begin(), e.contributors.end(), contributor);
        std::uint32_t& count = target ? e.ones : e.zeros;
        if (pos == e.contributors.end() || *pos != contributor || count == 0) {
            throw NotFoundError("lookup table entry has no tally from pair " + std::to_string(contributor));
        }
        const bool was_first = pos == e.contributors.begin();
        e.contributors.erase(pos);
        --count;

        if (e.contributors.empty()) {
            entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(slot));
            reindex();
        } else if (was_first) {
            Entry moved = std::move(entries_[slot]);
            entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(slot));
            const auto where = std::upper_bound(
                entries_.begin(), entries_.end(), moved.contributors.front(),
                [](PairId id, const Entry& other) { return id < other.contributors.front(); });
            entries_.insert(where, std::move(moved));
            reindex();
        }
    }

    void clear()
    {
        entries_.clear();
        index_.clear();
    }

    friend bool operator==(const LookupTable& a, const LookupTable& b)
    {
        return a.key_width_ == b.key_width_ && a.entries_ == b.entries_;
    }

private:
    void check_width(const BitCode& key) const
    {
        if (key.size() != key_width_) {
            throw DomainError("key width " + std::to_string(key.size()) + " does not match table width " +
                              std::to_string(key_width_));
        }
    }

    void reindex()
    {
        index_.clear();
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            index_.emplace(entries_[i].key, i);
        }
    }

    std::size_t key_width_ = 0;
    std::vector<Entry> entries_;
    std::unordered_map<BitCode, std::size_t, BitCodeHash> index_;
};

inline constexpr double discrimination_floor = 0.01;

/// Per-bit weights |p_j(1) - p_j(0)| + 0.01, where p_j(c) is the fraction of
/// stored keys with majority c that have bit j set. Tied-majority keys count
/// toward neither class; an empty class contributes p = 0.
inline std::vector<double> discrimination_weights(const LookupTable& table)
{
    const std::size_t width = table.key_width();
    std::vector<double> set_in_class[2] = {std::vector<double>(width, 0.0), std::vector<double>(width, 0.0)};
    double class_size[2] = {0.0, 0.0};
    for (const auto& e : table.entries()) {
        const int c = e.majority();
        if (c < 0) {
            continue;
        }
        class_size[c] += 1.0;
        for (std::size_t j = 0; j < width; ++j) {
            if (e.key[j]) {
                set_in_class[c][j] += 1.0;
            }
        }
    }
    std::vector<double> w(width);
    for (std::size_t j = 0; j < width; ++j) {
        const double p1 = class_size[1] > 0 ? set_in_class[1][j] / class_size[1] : 0.0;
        const double p0 = class_size[0] > 0 ? set_in_class[0][j] / class_size[0] : 0.0;
        w[j] = std::abs(p1 - p0) + discrimination_floor;
    }
    return w;
}

inline double discrimination_distance(const BitCode& a, const BitCode& b, std::span<const double> weights)
{
    const BitCode diff = a ^ b;
    double d = 0.0;
    for (std::size_t word = 0; word < 2; ++word) {
        std::uint64_t bits = diff.words()[word];
        while (bits != 0) {
            const int j = std::countr_zero(bits);
            d += weights[word * 64 + static_cast<std::size_t>(j)];
            bits &= bits - 1;
        }
    }
    return d;
}

/// Neuron firing rule: exact key hit -> majority of its tally; otherwise the
/// pooled tally of the k nearest stored keys (distance ties by entry order).
/// Tally ties and empty tables fall back to `default_bit`.
inline bool lookup_bit(const LookupTable& table, const BitCode& key, Metric metric, std::size_t k_nearest,
                       bool default_bit)
{
    if (key.size() != table.key_width()) {
        throw DomainError("lookup_bit: key width " + std::to_string(key.size()) + " != table width " +
                          std::to_string(table.key_width()));
    }
    if (table.empty()) {
        return default_bit;
    }
    const auto decide = [default_bit](std::uint64_t ones, std::uint64_t zeros) {
        return ones == zeros ? default_bit : ones > zeros;
    };
    if (const auto* hit = table.find(key)) {
        return decide(hit->ones, hit->zeros);
    }

    const auto entries = table.entries();
    const std::size_t k = std::min(k_nearest, entries.size());
    std::vector<std::size_t> order(entries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    if (metric == Metric::hamming) {
        std::vector<std::size_t> dist(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            dist[i] = hamming_distance(key, entries[i].key);
        }
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                          [&](std::size_t a, std::size_t b) { return dist[a] != dist[b] ? dist[a] < dist[b] : a < b; });
    } else {
        const auto weights = discrimination_weights(table);
        std::vector<double> dist(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            dist[i] = discrimination_distance(key, entries[i].key, weights);
        }
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                          [&](std::size_t a, std::size_t b) { return dist[a] != dist[b] ? dist[a] < dist[b] : a < b; });
    }

    std::uint64_t ones = 0;
    std::uint64_t zeros = 0;
    for (std::size_t i = 0; i < k; ++i) {
        ones += entries[order[i]].ones;
        zeros += entries[order[i]].zeros;
    }
    return decide(ones, zeros);
}

struct MemoryPair {
    PairId id = 0;
    BitCode input;
    Rating target = Rating::from_halves(1);
    BitCode context_state;
    std::int64_t timestamp = 0;

    friend bool operator==(const MemoryPair&, const MemoryPair&) = default;
};

struct Prediction {
    Rating rating;
    BitCode z_bits;
};

/// Three-layer weightless agent: input -> inner state (auto-associative,
/// optionally recurrent on each neuron's own previous bit) -> output code.
///
/// The memory registry is the source of truth; tables are a cache over it
/// that train/delete_pair maintain incrementally. Not thread-safe: callers
/// serialize access to one agent.
class Agent {
public:
    static constexpr const char* version = "agent-v1";

    explicit Agent(AgentConfig cfg) : Agent(cfg, (cfg.validate(), draw_connections(cfg))) {}

    Agent(AgentConfig cfg, ConnectionMap connections)
        : config_(cfg), connections_(std::move(connections)), prev_state_(cfg.inner_size())
    {
        config_.validate();
        validate_connections();
        for (std::size_t i = 0; i < config_.inner_size(); ++i) {
            q_tables_.emplace_back(inner_key_width(i));
        }
        for (std::size_t j = 0; j < config_.output_size; ++j) {
            z_tables_.emplace_back(config_.inner_size());
        }
    }

    [[nodiscard]] const AgentConfig& config() const noexcept { return config_; }
    [[nodiscard]] const ConnectionMap& connections() const noexcept { return connections_; }
    [[nodiscard]] const std::vector<LookupTable>& q_tables() const noexcept { return q_tables_; }
    [[nodiscard]] const std::vector<LookupTable>& z_tables() const noexcept { return z_tables_; }
    [[nodiscard]] const BitCode& prev_state() const noexcept { return prev_state_; }
    [[nodiscard]] const std::vector<MemoryPair>& memory() const noexcept { return memory_; }
    [[nodiscard]] PairId next_id() const noexcept { return next_id_; }

    void reset_state() { prev_state_ = BitCode(config_.inner_size()); }

    void restore_state(const BitCode& state)
    {
        if (state.size() != config_.inner_size()) {
            throw DomainError("restore_state: width mismatch");
        }
        prev_state_ = state;
    }

    BitCode next_state(const BitCode& input)
    {
        check_input(input);
        BitCode state(config_.inner_size());
        for (std::size_t i = 0; i < config_.inner_size(); ++i) {
            const BitCode key = inner_key(i, input, prev_state_);
            state.set(i, lookup_bit(q_tables_[i], key, config_.metric, config_.k_nearest, input[i]));
        }
        prev_state_ = state;
        return state;
    }

    Prediction predict(const BitCode& input)
    {
        const BitCode state = next_state(input);
        BitCode z(config_.output_size);
        for (std::size_t j = 0; j < config_.output_size; ++j) {
            z.set(j, lookup_bit(z_tables_[j], state, config_.metric, config_.k_nearest, false));
        }
        return Prediction{rating_from_output(z), z};
    }

    /// Store (input, target) with the current context and update every neuron.
    /// `timestamp` defaults to the pair id; the agent never reads a clock.
    PairId train(const BitCode& input, Rating target, std::optional<std::int64_t> timestamp = std::nullopt)
    {
        check_input(input);
        if (config_.output_size != rating_code_bits) {
            throw DomainError("train(Rating) needs a 10-bit output layer");
        }
        MemoryPair pair{next_id_, input, target, prev_state_,
                        timestamp.value_or(static_cast<std::int64_t>(next_id_))};
        apply(pair, true);
        memory_.push_back(pair);
        ++next_id_;
        prev_state_ = settled_state(pair);
        return pair.id;
    }

    void delete_pair(PairId id)
    {
        const auto it = std::lower_bound(memory_.begin(), memory_.end(), id,
                                         [](const MemoryPair& p, PairId v) { return p.id < v; });
        if (it == memory_.end() || it->id != id) {
            throw NotFoundError("no memory pair with id " + std::to_string(id));
        }
        apply(*it, false);
        memory_.erase(it);
    }

    void rebuild_tables()
    {
        for (auto& t : q_tables_) {
            t.clear();
        }
        for (auto& t : z_tables_) {
            t.clear();
        }
        for (const auto& pair : memory_) {
            apply(pair, true);
        }
    }

    [[nodiscard]] bool tables_equal(const Agent& other) const
    {
        return q_tables_ == other.q_tables_ && z_tables_ == other.z_tables_;
    }

    [[nodiscard]] nlohmann::json to_json() const;
    static Agent from_json(const nlohmann::json& doc);

    // Inner key: the neuron's input sources in wiring order, then its own
    // previous-state bit when recurrent.
    [[nodiscard]] BitCode inner_key(std::size_t neuron, const BitCode& input, const BitCode& context) const
    {
        const auto& sources = connections_.inner_inputs[neuron];
        BitCode key(inner_key_width(neuron));
        std::size_t b = 0;
        for (const auto s : sources) {
            key.set(b++, input[s]);
        }
        if (connections_.inner_recurrent) {
            key.set(b, context[neuron]);
        }
        return key;
    }

private:
    [[nodiscard]] std::size_t inner_key_width(std::size_t neuron) const
    {
        return connections_.inner_inputs[neuron].size() + (connections_.inner_recurrent ? 1 : 0);
    }

    [[nodiscard]] Rating rating_from_output(const BitCode& z) const
    {
        if (z.size() == rating_code_bits) {
            return decode_rating(z);
        }
        const int ones = static_cast<int>(z.popcount());
        return Rating::from_halves(std::clamp(ones, Rating::min_halves, Rating::max_halves));
    }

    // Every inner key contains the neuron's own input bit and every tally at
    // that key targets that bit, so the post-update exact-match state is the
    // input itself.
    [[nodiscard]] static BitCode settled_state(const MemoryPair& pair) { return pair.input; }

    void apply(const MemoryPair& pair, bool add)
    {
        for (std::size_t i = 0; i < config_.inner_size(); ++i) {
            const BitCode key = inner_key(i, pair.input, pair.context_state);
            if (add) {
                q_tables_[i].add(key, pair.input[i], pair.id);
            } else {
                q_tables_[i].remove(key, pair.input[i], pair.id);
            }
        }
        const BitCode state = settled_state(pair);
        const BitCode target = encode_rating(pair.target);
        for (std::size_t j = 0; j < config_.output_size; ++j) {
            if (add) {
                z_tables_[j].add(state, target[j], pair.id);
            } else {
                z_tables_[j].remove(state, target[j], pair.id);
            }
        }
    }

    void check_input(const BitCode& input) const
    {
        if (input.size() != config_.input_size) {
            throw DomainError("input width " + std::to_string(input.size()) + " != agent input size " +
                              std::to_string(config_.input_size));
        }
    }

    void validate_connections() const
    {
        if (connections_.inner_recurrent != config_.recurrent ||
            connections_.inner_inputs.size() != config_.inner_size()) {
            throw DomainError("connection map does not match config");
        }
        for (std::size_t i = 0; i < connections_.inner_inputs.size(); ++i) {
            const auto& src = connections_.inner_inputs[i];
            if (src.size() != config_.extra_fanin + 1 || src.front() != i) {
                throw DomainError("inner neuron " + std::to_string(i) + " has malformed sources");
            }
            std::vector<std::uint32_t> sorted = src;
            std::sort(sorted.begin(), sorted.end());
            if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end() ||
                sorted.back() >= config_.input_size) {
                throw DomainError("inner neuron " + std::to_string(i) + " sources must be distinct inputs");
            }
        }
    }

    AgentConfig config_;
    ConnectionMap connections_;
    std::vector<LookupTable> q_tables_;
    std::vector<LookupTable> z_tables_;
    BitCode prev_state_;
    std::vector<MemoryPair> memory_;
    PairId next_id_ = 1;

    friend Agent agent_from_parts(AgentConfig, ConnectionMap, BitCode, std::vector<MemoryPair>, PairId);
};

inline nlohmann::json agent_config_to_json(const AgentConfig& cfg)
{
    return {{"input_size", cfg.input_size}, {"output_size", cfg.output_size},
            {"extra_fanin", cfg.extra_fanin}, {"recurrent", cfg.recurrent},
            {"metric", to_string(cfg.metric)},  {"k_nearest", cfg.k_nearest},
            {"seed", cfg.seed}};
}

/// Reads a (possibly partial) config object on top of `base`.
inline AgentConfig agent_config_from_json(const nlohmann::json& doc, AgentConfig base = {})
{
    if (!doc.is_object()) {
        throw ConfigError("agent config must be a JSON object");
    }
    try {
        for (const auto& [key, value] : doc.items()) {
            if (key == "input_size") {
                base.input_size = value.get<std::size_t>();
            } else if (key == "output_size") {
                base.output_size = value.get<std::size_t>();
            } else if (key == "extra_fanin") {
                base.extra_fanin = value.get<std::size_t>();
            } else if (key == "recurrent") {
                base.recurrent = value.get<bool>();
            } else if (key == "metric") {
                base.metric = metric_from_string(value.get<std::string>());
            } else if (key == "k_nearest") {
                base.k_nearest = value.get<std::size_t>();
            } else if (key == "seed") {
                base.seed = value.get<std::uint64_t>();
            } else {
                throw ConfigError("unknown agent config field '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("agent config: ") + e.what());
    }
    try {
        base.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    return base;
}

inline Agent agent_from_parts(AgentConfig cfg, ConnectionMap connections, BitCode prev_state,
                              std::vector<MemoryPair> memory, PairId next_id)
{
    Agent agent(cfg, std::move(connections));
    if (prev_state.size() != cfg.inner_size()) {
        throw FormatError("prev_state width does not match inner size");
    }
    for (std::size_t i = 0; i < memory.size(); ++i) {
        if ((i > 0 && memory[i].id <= memory[i - 1].id) || memory[i].id >= next_id) {
            throw FormatError("memory ids must be strictly increasing and below next_id");
        }
    }
    agent.prev_state_ = prev_state;
    agent.memory_ = std::move(memory);
    agent.next_id_ = next_id;
    agent.rebuild_tables();
    return agent;
}

inline nlohmann::json Agent::to_json() const
{
    nlohmann::json memory = nlohmann::json::array();
    for (const auto& p : memory_) {
        memory.push_back({{"id", p.id},
                          {"input", bitcode_to_json(p.input)},
                          {"target", p.target.value()},
                          {"context_state", bitcode_to_json(p.context_state)},
                          {"timestamp", p.timestamp}});
    }
    return {{"version", version},
            {"config", agent_config_to_json(config_)},
            {"connections", {{"inner_inputs", connections_.inner_inputs},
                             {"inner_recurrent", connections_.inner_recurrent}}},
            {"prev_state", bitcode_to_json(prev_state_)},
            {"memory", std::move(memory)},
            {"next_id", next_id_}};
}

inline Agent Agent::from_json(const nlohmann::json& doc)
{
    if (!doc.is_object() || !doc.contains("version") || doc["version"] != version) {
        throw FormatError("agent document missing version tag agent-v1");
    }
    try {
        const AgentConfig cfg = agent_config_from_json(doc.at("config"));
        ConnectionMap connections;
        connections.inner_inputs =
            doc.at("connections").at("inner_inputs").get<std::vector<std::vector<std::uint32_t>>>();
        connections.inner_recurrent = doc.at("connections").at("inner_recurrent").get<bool>();
        const BitCode prev = bitcode_from_json(doc.at("prev_state"), cfg.inner_size());
        std::vector<MemoryPair> memory;
        for (const auto& p : doc.at("memory")) {
            MemoryPair pair;
            pair.id = p.at("id").get<PairId>();
            pair.input = bitcode_from_json(p.at("input"), cfg.input_size);
            pair.target = Rating::from_value(p.at("target").get<double>());
            pair.context_state = bitcode_from_json(p.at("context_state"), cfg.inner_size());
            pair.timestamp = p.at("timestamp").get<std::int64_t>();
            memory.push_back(std::move(pair));
        }
        return agent_from_parts(cfg, std::move(connections), prev, std::move(memory),
                                doc.at("next_id").get<PairId>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("agent document: ") + e.what());
    } catch (const DomainError& e) {
        throw FormatError(std::string("agent document: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("agent document: ") + e.what());
    }
}

inline std::string save_agent(const Agent& agent)
{
    return agent.to_json().dump();
}

inline Agent load_agent(std::string_view document)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(document);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("agent document: ") + e.what());
    }
    return Agent::from_json(doc);
}

} // namespace wnnrec
