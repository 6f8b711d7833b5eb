#pragma once

#include <cstdint>
#include <string_view>

namespace autoselect {

/// Deterministic keyed random stream. A stream is addressed by
/// (seed, purpose tag, index); the same key always replays the same
/// sequence, and independent keys never share state, so skipping a
/// draw in one code path cannot shift any other stream.
///
/// Core generator is xoshiro256++ seeded through SplitMix64 from a
/// 64-bit FNV-1a mix of the key. Uniform doubles are built from the
/// top 53 bits (bit-exact everywhere); normals use Box-Muller.
class RngStream {
public:
    RngStream(uint64_t seed, std::string_view tag, uint64_t index = 0);

    uint64_t next_u64();
    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);   // [lo, hi)
    double normal();                        // standard normal
    /// integer in [0, n), n > 0; rejection-sampled, bias-free
    uint64_t uniform_index(uint64_t n);

private:
    uint64_t s_[4];
    double cached_normal_ = 0.0;
    bool have_cached_ = false;
};

/// 64-bit FNV-1a over the bytes of a string. Used for split hashing and
/// stream keying; constants are part of the on-disk/CSV contract.
uint64_t fnv1a64(std::string_view bytes);

} // namespace autoselect
