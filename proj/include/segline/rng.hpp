#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace segline {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). The key is
/// the 64-bit seed; each call to next_block() encrypts the next counter value.
class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;

    explicit Philox4x32(std::uint64_t seed) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    static Block encrypt(Block ctr, std::array<std::uint32_t, 2> key) noexcept {
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
            key[0] += kW0;
            key[1] += kW1;
        }
        return ctr;
    }

    Block next_block() noexcept {
        const Block out = encrypt(counter_, key_);
        for (auto& word : counter_) {
            if (++word != 0) {
                break;
            }
        }
        return out;
    }

    std::uint64_t next_u64() noexcept {
        if (pos_ == 2) {
            buffer_ = next_block();
            pos_ = 0;
        }
        const std::uint64_t v = (std::uint64_t{buffer_[2 * pos_ + 1]} << 32) | buffer_[2 * pos_];
        ++pos_;
        return v;
    }

    /// Uniform on (0, 1): 53 random bits, offset by half an ulp so 0 never occurs.
    double uniform() noexcept { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    /// Standard normal by Box–Muller; the second variate is cached.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double t = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

private:
    static constexpr std::uint32_t kM0 = 0xD2511F53;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57;
    static constexpr std::uint32_t kW0 = 0x9E3779B9;
    static constexpr std::uint32_t kW1 = 0xBB67AE85;

    std::array<std::uint32_t, 2> key_;
    Block counter_{0, 0, 0, 0};
    Block buffer_{};
    int pos_ = 2;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace segline
