#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Core>

namespace cfrl {

// Deterministic random streams. All distributions are hand-rolled on top of
// mt19937_64 so that results are reproducible bit-for-bit across runs of the
// same binary, independent of the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Uniform in [-1, 1), the pseudocode's 2*(rand - 0.5).
  double uniform_pm1() { return 2.0 * (uniform() - 0.5); }

  // Standard normal via Box-Muller; consumes two uniforms per draw.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  void fill_uniform_pm1(Eigen::Ref<Eigen::MatrixXd> m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = uniform_pm1();
  }

  void fill_normal(Eigen::Ref<Eigen::MatrixXd> m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = normal();
  }

 private:
  std::mt19937_64 gen_;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

// Derives an independent child seed from a parent seed and a tag. Used to
// give every trial, method, and evaluation its own reproducible stream.
inline std::uint64_t substream(std::uint64_t seed, std::string_view tag) {
  return detail::splitmix64(seed ^ detail::fnv1a(tag));
}

inline std::uint64_t substream(std::uint64_t seed, std::string_view tag,
                               std::uint64_t index) {
  return detail::splitmix64(substream(seed, tag) + 0x9e3779b97f4a7c15ull * (index + 1));
}

}  // namespace cfrl
