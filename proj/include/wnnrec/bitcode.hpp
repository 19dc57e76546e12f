#pragma once

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace wnnrec {

/// Fixed-length binary vector packed into two 64-bit words.
///
/// Every code the engine handles (26-bit movie inputs, 10-bit rating codes,
/// neuron keys of at most n_I + 1 bits) fits in 128 bits, so distance kernels
/// reduce to two XOR + popcount operations. Bits beyond `size()` are always 0.
class BitCode {
public:
    static constexpr std::size_t max_bits = 128;

    BitCode() = default;

    explicit BitCode(std::size_t length) : length_(static_cast<std::uint32_t>(length))
    {
        if (length == 0 || length > max_bits) {
            throw DomainError("BitCode length must be in [1, 128], got " + std::to_string(length));
        }
    }

    BitCode(std::initializer_list<int> bits) : BitCode(std::vector<int>(bits)) {}

    explicit BitCode(std::span<const int> bits) : BitCode(bits.size())
    {
        for (std::size_t i = 0; i < bits.size(); ++i) {
            if (bits[i] != 0 && bits[i] != 1) {
                throw DomainError("BitCode element " + std::to_string(i) + " is not 0/1");
            }
            set(i, bits[i] == 1);
        }
    }

    explicit BitCode(const std::vector<int>& bits) : BitCode(std::span<const int>(bits)) {}

    [[nodiscard]] std::size_t size() const noexcept { return length_; }
    [[nodiscard]] bool empty() const noexcept { return length_ == 0; }

    [[nodiscard]] bool operator[](std::size_t i) const noexcept
    {
        return (words_[i >> 6] >> (i & 63)) & 1u;
    }

    [[nodiscard]] bool at(std::size_t i) const
    {
        if (i >= length_) {
            throw DomainError("BitCode index out of range");
        }
        return (*this)[i];
    }

    void set(std::size_t i, bool value) noexcept
    {
        const std::uint64_t mask = std::uint64_t{1} << (i & 63);
        if (value) {
            words_[i >> 6] |= mask;
        } else {
            words_[i >> 6] &= ~mask;
        }
    }

    [[nodiscard]] std::size_t popcount() const noexcept
    {
        return static_cast<std::size_t>(std::popcount(words_[0]) + std::popcount(words_[1]));
    }

    [[nodiscard]] const std::array<std::uint64_t, 2>& words() const noexcept { return words_; }

    [[nodiscard]] std::vector<int> to_vector() const
    {
        std::vector<int> out(length_);
        for (std::size_t i = 0; i < length_; ++i) {
            out[i] = (*this)[i] ? 1 : 0;
        }
        return out;
    }

    [[nodiscard]] std::string to_string() const
    {
        std::string out(length_, '0');
        for (std::size_t i = 0; i < length_; ++i) {
            if ((*this)[i]) {
                out[i] = '1';
            }
        }
        return out;
    }

    // XOR of two equal-width codes; caller checks widths.
    [[nodiscard]] BitCode operator^(const BitCode& other) const noexcept
    {
        BitCode out = *this;
        out.words_[0] ^= other.words_[0];
        out.words_[1] ^= other.words_[1];
        return out;
    }

    friend bool operator==(const BitCode&, const BitCode&) = default;

private:
    std::array<std::uint64_t, 2> words_{};
    std::uint32_t length_ = 0;
};

[[nodiscard]] inline std::size_t hamming_distance(const BitCode& a, const BitCode& b)
{
    if (a.size() != b.size()) {
        throw DomainError("hamming_distance: width mismatch");
    }
    const auto& wa = a.words();
    const auto& wb = b.words();
    return static_cast<std::size_t>(std::popcount(wa[0] ^ wb[0]) + std::popcount(wa[1] ^ wb[1]));
}

struct BitCodeHash {
    std::size_t operator()(const BitCode& code) const noexcept
    {
        const auto& w = code.words();
        std::uint64_t h = w[0] * 0x9E3779B97F4A7C15ull;
        h ^= (w[1] + 0x632BE59BD9B4E019ull + (h << 6) + (h >> 2));
        h ^= code.size();
        return static_cast<std::size_t>(h ^ (h >> 31));
    }
};

} // namespace wnnrec
