#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace msfl {

// Philox 4x32-10 counter-based generator (Salmon et al., SC'11).
//
// Every random decision in the simulator draws from a stream addressed by
// (seed, domain, a, b), where a/b are entity coordinates such as round and
// client id. Streams are stateless to construct and independent of thread
// scheduling, so parallel runs reproduce serial runs bit for bit.
namespace philox {

std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> counter,
                                   std::array<std::uint32_t, 2> key);

}  // namespace philox

// Stream domains. Each subsystem owns one so substreams never collide.
enum class StreamDomain : std::uint32_t {
    topology = 1,
    datagen = 2,
    eval_set = 3,
    participation = 4,
    local_shuffle = 5,
    model_init = 6,
    fading = 7,
    mobility = 8,
    probe = 9,
    test = 15,
};

class RngStream {
  public:
    RngStream(std::uint64_t seed, StreamDomain domain, std::uint64_t a = 0,
              std::uint64_t b = 0);

    std::uint32_t next_u32();
    std::uint64_t next_u64();

    // Uniform on [0, 1) with 53 random bits.
    double next_double();
    // Uniform on [lo, hi).
    double next_uniform(double lo, double hi);
    // Unbiased uniform integer on [0, n). n must be positive.
    std::uint64_t next_below(std::uint64_t n);
    // Standard normal via Box-Muller; pairs are cached.
    double next_normal();
    // Exponential with unit mean.
    double next_exponential();
    // Gamma(shape, 1) via Marsaglia-Tsang, with the alpha<1 boost step.
    double next_gamma(double shape);

    // Fisher-Yates shuffle using this stream.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 3> prefix_;  // (a, b, domain)
    std::uint32_t block_index_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int buffer_pos_ = 4;
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;

    void refill();
};

}  // namespace msfl
