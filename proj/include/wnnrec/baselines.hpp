#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "bitcode.hpp"
#include "encoding.hpp"
#include "errors.hpp"

namespace wnnrec {

// ---------------------------------------------------------------------------
// Per-user dense network: in -> hidden -> out, logistic everywhere.
// ---------------------------------------------------------------------------

struct NetParams {
    std::size_t hidden = 32;
    double learning_rate = 0.05;
    std::size_t epochs = 200;
    double init_range = 0.5;

    friend bool operator==(const NetParams&, const NetParams&) = default;
};

inline double logistic(double z)
{
    return 1.0 / (1.0 + std::exp(-z));
}

// log(1 + e^z) without overflow.
inline double softplus(double z)
{
    return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

class DenseNet {
public:
    DenseNet(std::size_t inputs, std::size_t hidden, std::size_t outputs)
        : inputs_(inputs), hidden_(hidden), outputs_(outputs),
          w1_(hidden * inputs, 0.0), b1_(hidden, 0.0), w2_(outputs * hidden, 0.0), b2_(outputs, 0.0)
    {
        if (inputs == 0 || hidden == 0 || outputs == 0) {
            throw DomainError("DenseNet layer sizes must be positive");
        }
    }

    [[nodiscard]] std::size_t inputs() const noexcept { return inputs_; }
    [[nodiscard]] std::size_t hidden() const noexcept { return hidden_; }
    [[nodiscard]] std::size_t outputs() const noexcept { return outputs_; }
    [[nodiscard]] std::size_t parameter_count() const noexcept
    {
        return w1_.size() + b1_.size() + w2_.size() + b2_.size();
    }

    // Row-major: w1(h, i) connects input i to hidden unit h.
    double& w1(std::size_t h, std::size_t i) { return w1_[h * inputs_ + i]; }
    double& b1(std::size_t h) { return b1_[h]; }
    double& w2(std::size_t o, std::size_t h) { return w2_[o * hidden_ + h]; }
    double& b2(std::size_t o) { return b2_[o]; }

    /// Flat parameter vector in the order w1, b1, w2, b2.
    [[nodiscard]] std::vector<double> parameters() const
    {
        std::vector<double> out;
        out.reserve(parameter_count());
        for (const auto* v : {&w1_, &b1_, &w2_, &b2_}) {
            out.insert(out.end(), v->begin(), v->end());
        }
        return out;
    }

    void set_parameters(std::span<const double> flat)
    {
        if (flat.size() != parameter_count()) {
            throw DomainError("parameter vector has the wrong length");
        }
        auto it = flat.begin();
        for (auto* v : {&w1_, &b1_, &w2_, &b2_}) {
            std::copy(it, it + static_cast<std::ptrdiff_t>(v->size()), v->begin());
            it += static_cast<std::ptrdiff_t>(v->size());
        }
    }

    void apply_step(std::span<const double> gradient, double rate)
    {
        auto it = gradient.begin();
        for (auto* v : {&w1_, &b1_, &w2_, &b2_}) {
            for (auto& p : *v) {
                p -= rate * *it++;
            }
        }
    }

    struct Activations {
        std::vector<double> hidden;
        std::vector<double> pre_output;
        std::vector<double> output;
    };

    [[nodiscard]] Activations activations(const BitCode& x) const
    {
        check_input(x);
        Activations a{std::vector<double>(hidden_), std::vector<double>(outputs_), std::vector<double>(outputs_)};
        for (std::size_t h = 0; h < hidden_; ++h) {
            double z = b1_[h];
            const double* row = &w1_[h * inputs_];
            for (std::size_t i = 0; i < inputs_; ++i) {
                if (x[i]) {
                    z += row[i];
                }
            }
            a.hidden[h] = logistic(z);
        }
        for (std::size_t o = 0; o < outputs_; ++o) {
            double z = b2_[o];
            const double* row = &w2_[o * hidden_];
            for (std::size_t h = 0; h < hidden_; ++h) {
                z += row[h] * a.hidden[h];
            }
            a.pre_output[o] = z;
            a.output[o] = logistic(z);
        }
        return a;
    }

    [[nodiscard]] std::vector<double> forward(const BitCode& x) const { return activations(x).output; }

    /// Summed per-bit binary cross-entropy.
    [[nodiscard]] double loss(const BitCode& x, const BitCode& target) const
    {
        check_target(target);
        const auto a = activations(x);
        double l = 0.0;
        for (std::size_t o = 0; o < outputs_; ++o) {
            const double z = a.pre_output[o];
            // -[t log y + (1-t) log(1-y)] with log y = -softplus(-z), log(1-y) = -softplus(z)
            l += target[o] ? softplus(-z) : softplus(z);
        }
        return l;
    }

    /// Adds d loss / d parameters (flat layout) into `grad`.
    void accumulate_gradient(const BitCode& x, const BitCode& target, std::span<double> grad) const
    {
        check_target(target);
        if (grad.size() != parameter_count()) {
            throw DomainError("gradient buffer has the wrong length");
        }
        const auto a = activations(x);
        double* g_w1 = grad.data();
        double* g_b1 = g_w1 + w1_.size();
        double* g_w2 = g_b1 + b1_.size();
        double* g_b2 = g_w2 + w2_.size();

        std::vector<double> delta_hidden(hidden_, 0.0);
        for (std::size_t o = 0; o < outputs_; ++o) {
            const double delta = a.output[o] - (target[o] ? 1.0 : 0.0);
            g_b2[o] += delta;
            for (std::size_t h = 0; h < hidden_; ++h) {
                g_w2[o * hidden_ + h] += delta * a.hidden[h];
                delta_hidden[h] += w2_[o * hidden_ + h] * delta;
            }
        }
        for (std::size_t h = 0; h < hidden_; ++h) {
            const double d = delta_hidden[h] * a.hidden[h] * (1.0 - a.hidden[h]);
            g_b1[h] += d;
            for (std::size_t i = 0; i < inputs_; ++i) {
                if (x[i]) {
                    g_w1[h * inputs_ + i] += d;
                }
            }
        }
    }

    [[nodiscard]] std::vector<double> gradient(const BitCode& x, const BitCode& target) const
    {
        std::vector<double> g(parameter_count(), 0.0);
        accumulate_gradient(x, target, g);
        return g;
    }

    friend bool operator==(const DenseNet&, const DenseNet&) = default;

private:
    void check_input(const BitCode& x) const
    {
        if (x.size() != inputs_) {
            throw DomainError("net input width mismatch");
        }
    }
    void check_target(const BitCode& t) const
    {
        if (t.size() != outputs_) {
            throw DomainError("net target width mismatch");
        }
    }

    std::size_t inputs_;
    std::size_t hidden_;
    std::size_t outputs_;
    std::vector<double> w1_, b1_, w2_, b2_;
};

struct TrainingPair {
    BitCode input;
    Rating target;
};

inline DenseNet init_net(std::size_t inputs, std::size_t outputs, const NetParams& params, std::uint64_t seed)
{
    DenseNet net(inputs, params.hidden, outputs);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-params.init_range, params.init_range);
    std::vector<double> flat(net.parameter_count());
    for (auto& p : flat) {
        p = u(rng);
    }
    net.set_parameters(flat);
    return net;
}

inline double mean_loss(const DenseNet& net, std::span<const TrainingPair> data)
{
    double total = 0.0;
    for (const auto& p : data) {
        total += net.loss(p.input, encode_rating(p.target));
    }
    return total / static_cast<double>(data.size());
}

/// Full-batch gradient descent on the mean loss.
inline DenseNet net_train_user(std::span<const TrainingPair> history, const NetParams& params, std::uint64_t seed)
{
    if (history.empty()) {
        throw DomainError("net_train_user: empty history");
    }
    DenseNet net = init_net(history.front().input.size(), rating_code_bits, params, seed);
    std::vector<BitCode> targets;
    targets.reserve(history.size());
    for (const auto& p : history) {
        targets.push_back(encode_rating(p.target));
    }
    std::vector<double> grad(net.parameter_count());
    const double scale = params.learning_rate / static_cast<double>(history.size());
    for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t n = 0; n < history.size(); ++n) {
            net.accumulate_gradient(history[n].input, targets[n], grad);
        }
        net.apply_step(grad, scale);
    }
    return net;
}

/// Bits are y >= 0.5, decoded with the shared rating decoder.
inline Rating net_predict(const DenseNet& net, const BitCode& input)
{
    const auto y = net.forward(input);
    BitCode bits(y.size());
    for (std::size_t j = 0; j < y.size(); ++j) {
        bits.set(j, y[j] >= 0.5);
    }
    return decode_rating(bits);
}

// ---------------------------------------------------------------------------
// Global biased matrix factorization.
// ---------------------------------------------------------------------------

struct MFParams {
    std::size_t factors = 32;
    double learning_rate = 0.01;
    double regularization = 0.05;
    std::size_t epochs = 30;
    double init_range = 0.05;

    friend bool operator==(const MFParams&, const MFParams&) = default;
};

struct RatingTriple {
    std::uint32_t user = 0;
    std::uint32_t item = 0;
    double rating = 0.0;
};

inline double round_to_half(double r)
{
    return std::round(std::clamp(r, 0.5, 5.0) * 2.0) / 2.0;
}

class MFModel {
public:
    MFModel() = default;

    [[nodiscard]] double global_mean() const noexcept { return mu_; }
    [[nodiscard]] std::size_t factors() const noexcept { return factors_; }
    [[nodiscard]] const std::vector<double>& rmse_history() const noexcept { return rmse_history_; }

    [[nodiscard]] std::optional<std::size_t> user_index(std::uint32_t user) const
    {
        const auto it = user_index_.find(user);
        return it == user_index_.end() ? std::nullopt : std::optional<std::size_t>(it->second);
    }
    [[nodiscard]] std::optional<std::size_t> item_index(std::uint32_t item) const
    {
        const auto it = item_index_.find(item);
        return it == item_index_.end() ? std::nullopt : std::optional<std::size_t>(it->second);
    }

    /// mu + b_u + b_i + p_u . q_i with absent terms as 0, clamped to [0.5, 5].
    [[nodiscard]] double predict_raw(std::uint32_t user, std::uint32_t item) const
    {
        double r = mu_;
        const auto u = user_index(user);
        const auto i = item_index(item);
        if (u) {
            r += user_bias_[*u];
        }
        if (i) {
            r += item_bias_[*i];
        }
        if (u && i) {
            r += dot(*u, *i);
        }
        return std::clamp(r, 0.5, 5.0);
    }

    [[nodiscard]] Rating predict(std::uint32_t user, std::uint32_t item) const
    {
        return Rating::from_value(round_to_half(predict_raw(user, item)));
    }

    [[nodiscard]] double rmse(std::span<const RatingTriple> data) const
    {
        double se = 0.0;
        for (const auto& t : data) {
            const double e = t.rating - predict_raw(t.user, t.item);
            se += e * e;
        }
        return std::sqrt(se / static_cast<double>(data.size()));
    }

    // Hand-set parameters (tests, fixtures).
    void set_global_mean(double mu) { mu_ = mu; }
    std::size_t add_user(std::uint32_t user, double bias, std::vector<double> factors)
    {
        ensure_width(factors);
        user_index_.emplace(user, user_bias_.size());
        user_bias_.push_back(bias);
        user_factors_.insert(user_factors_.end(), factors.begin(), factors.end());
        return user_bias_.size() - 1;
    }
    std::size_t add_item(std::uint32_t item, double bias, std::vector<double> factors)
    {
        ensure_width(factors);
        item_index_.emplace(item, item_bias_.size());
        item_bias_.push_back(bias);
        item_factors_.insert(item_factors_.end(), factors.begin(), factors.end());
        return item_bias_.size() - 1;
    }
    double& user_bias(std::size_t u) { return user_bias_[u]; }
    double& item_bias(std::size_t i) { return item_bias_[i]; }

    friend MFModel mf_fit(std::span<const RatingTriple>, const MFParams&, std::uint64_t);
    friend bool operator==(const MFModel&, const MFModel&) = default;

private:
    void ensure_width(const std::vector<double>& f)
    {
        if (user_bias_.empty() && item_bias_.empty()) {
            factors_ = f.size();
        } else if (f.size() != factors_) {
            throw DomainError("factor vector width mismatch");
        }
    }

    [[nodiscard]] double dot(std::size_t u, std::size_t i) const
    {
        double s = 0.0;
        const double* p = &user_factors_[u * factors_];
        const double* q = &item_factors_[i * factors_];
        for (std::size_t f = 0; f < factors_; ++f) {
            s += p[f] * q[f];
        }
        return s;
    }

    double mu_ = 0.0;
    std::size_t factors_ = 0;
    std::unordered_map<std::uint32_t, std::size_t> user_index_;
    std::unordered_map<std::uint32_t, std::size_t> item_index_;
    std::vector<double> user_bias_;
    std::vector<double> item_bias_;
    std::vector<double> user_factors_;
    std::vector<double> item_factors_;
    std::vector<double> rmse_history_;
};

/// SGD on squared error with L2; order reshuffled every epoch from `seed`.
/// rmse_history()[0] is the RMSE before the first epoch.
inline MFModel mf_fit(std::span<const RatingTriple> ratings, const MFParams& params, std::uint64_t seed)
{
    if (ratings.empty()) {
        throw DomainError("mf_fit: empty training set");
    }
    MFModel m;
    m.factors_ = params.factors;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> init(-params.init_range, params.init_range);

    double sum = 0.0;
    std::vector<std::pair<std::size_t, std::size_t>> idx;
    idx.reserve(ratings.size());
    for (const auto& t : ratings) {
        sum += t.rating;
        auto [u_it, u_new] = m.user_index_.emplace(t.user, m.user_bias_.size());
        if (u_new) {
            m.user_bias_.push_back(0.0);
            for (std::size_t f = 0; f < params.factors; ++f) {
                m.user_factors_.push_back(init(rng));
            }
        }
        auto [i_it, i_new] = m.item_index_.emplace(t.item, m.item_bias_.size());
        if (i_new) {
            m.item_bias_.push_back(0.0);
            for (std::size_t f = 0; f < params.factors; ++f) {
                m.item_factors_.push_back(init(rng));
            }
        }
        idx.emplace_back(u_it->second, i_it->second);
    }
    m.mu_ = sum / static_cast<double>(ratings.size());
    m.rmse_history_.push_back(m.rmse(ratings));

    std::vector<std::size_t> order(ratings.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const double lr = params.learning_rate;
    const double reg = params.regularization;
    const std::size_t nf = params.factors;
    for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (const std::size_t n : order) {
            const auto [u, i] = idx[n];
            double* p = m.user_factors_.data() + u * nf;
            double* q = m.item_factors_.data() + i * nf;
            const double e = ratings[n].rating - (m.mu_ + m.user_bias_[u] + m.item_bias_[i] + m.dot(u, i));
            m.user_bias_[u] += lr * (e - reg * m.user_bias_[u]);
            m.item_bias_[i] += lr * (e - reg * m.item_bias_[i]);
            for (std::size_t f = 0; f < nf; ++f) {
                const double pf = p[f];
                p[f] += lr * (e * q[f] - reg * pf);
                q[f] += lr * (e * pf - reg * q[f]);
            }
        }
        m.rmse_history_.push_back(m.rmse(ratings));
    }
    return m;
}

inline Rating mf_predict(const MFModel& model, std::uint32_t user, std::uint32_t item)
{
    return model.predict(user, item);
}

inline nlohmann::json net_params_to_json(const NetParams& p)
{
    return {{"hidden", p.hidden}, {"learning_rate", p.learning_rate}, {"epochs", p.epochs}, {"init_range", p.init_range}};
}

inline nlohmann::json mf_params_to_json(const MFParams& p)
{
    return {{"factors", p.factors},
            {"learning_rate", p.learning_rate},
            {"regularization", p.regularization},
            {"epochs", p.epochs},
            {"init_range", p.init_range}};
}

} // namespace wnnrec
