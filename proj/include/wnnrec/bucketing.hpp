#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bitcode.hpp"
#include "encoding.hpp"
#include "errors.hpp"

namespace wnnrec {

/// 1 - cos(a, b); 0 for parallel, 2 for antiparallel vectors.
inline double cosine_distance(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size() || a.empty()) {
        throw DomainError("cosine_distance: dimension mismatch");
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (!(na > 0.0) || !(nb > 0.0)) {
        throw DomainError("cosine_distance: zero-norm vector");
    }
    const double cos = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
    return 1.0 - cos;
}

struct Bucket {
    std::string label;
    std::vector<double> embedding;
    BitCode code;
};

struct BucketMatch {
    std::string label;
    BitCode code;
};

/// Fixed set of labelled embeddings; an unseen category is coded as its
/// closest bucket so the agent's input width never changes.
class BucketCache {
public:
    static constexpr const char* version = "buckets-v1";

    explicit BucketCache(std::vector<Bucket> buckets) : buckets_(std::move(buckets))
    {
        if (buckets_.empty()) {
            throw DomainError("bucket cache is empty");
        }
        dimension_ = buckets_.front().embedding.size();
        const std::size_t width = buckets_.front().code.size();
        std::set<std::string> labels;
        for (const auto& b : buckets_) {
            if (b.embedding.size() != dimension_ || dimension_ == 0) {
                throw DomainError("bucket '" + b.label + "' has a different embedding dimension");
            }
            if (b.code.size() != width || width == 0) {
                throw DomainError("bucket '" + b.label + "' has a different code width");
            }
            double norm = 0.0;
            for (const double x : b.embedding) {
                norm += x * x;
            }
            if (!(norm > 0.0)) {
                throw DomainError("bucket '" + b.label + "' has a zero-norm embedding");
            }
            if (!labels.insert(b.label).second) {
                throw DomainError("duplicate bucket label '" + b.label + "'");
            }
        }
    }

    [[nodiscard]] std::size_t dimension() const noexcept { return dimension_; }
    [[nodiscard]] std::size_t code_width() const noexcept { return buckets_.front().code.size(); }
    [[nodiscard]] const std::vector<Bucket>& buckets() const noexcept { return buckets_; }

    [[nodiscard]] BucketMatch nearest(std::span<const double> query) const
    {
        if (query.size() != dimension_) {
            throw DomainError("query dimension " + std::to_string(query.size()) + " != cache dimension " +
                              std::to_string(dimension_));
        }
        std::size_t best = 0;
        double best_d = cosine_distance(query, buckets_[0].embedding);
        for (std::size_t i = 1; i < buckets_.size(); ++i) {
            const double d = cosine_distance(query, buckets_[i].embedding);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return {buckets_[best].label, buckets_[best].code};
    }

private:
    std::vector<Bucket> buckets_;
    std::size_t dimension_ = 0;
};

inline BucketMatch nearest_bucket(const BucketCache& cache, std::span<const double> query)
{
    return cache.nearest(query);
}

/// Accepts {"version": "buckets-v1", "buckets": [{label, embedding, code}, ...]}.
inline BucketCache load_cache(const nlohmann::json& doc)
{
    if (!doc.is_object() || doc.value("version", "") != BucketCache::version || !doc.contains("buckets") ||
        !doc["buckets"].is_array()) {
        throw FormatError("bucket document must carry version buckets-v1 and a buckets array");
    }
    std::vector<Bucket> buckets;
    try {
        for (const auto& item : doc["buckets"]) {
            Bucket b;
            b.label = item.at("label").get<std::string>();
            b.embedding = item.at("embedding").get<std::vector<double>>();
            const auto& code = item.at("code");
            b.code = bitcode_from_json(code, code.is_array() ? code.size() : 0);
            buckets.push_back(std::move(b));
        }
        return BucketCache(std::move(buckets));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bucket document: ") + e.what());
    } catch (const DomainError& e) {
        throw FormatError(std::string("bucket document: ") + e.what());
    }
}

inline nlohmann::json cache_to_json(const BucketCache& cache)
{
    nlohmann::json items = nlohmann::json::array();
    for (const auto& b : cache.buckets()) {
        items.push_back({{"label", b.label}, {"embedding", b.embedding}, {"code", bitcode_to_json(b.code)}});
    }
    return {{"version", BucketCache::version}, {"buckets", std::move(items)}};
}

} // namespace wnnrec
