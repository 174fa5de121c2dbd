#include "psf/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "psf/error.hpp"

namespace psf {

std::uint64_t fnv1a(std::string_view text, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  return mix64(seed ^ fnv1a(tag));
}

Engine make_engine(std::uint64_t seed, std::string_view tag) {
  return Engine(derive_seed(seed, tag));
}

double uniform(Engine& engine, double lo, double hi) {
  // 53 random bits -> [0, 1).
  const double u = static_cast<double>(engine() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

std::size_t uniform_index(Engine& engine, std::size_t n) {
  // Lemire-style rejection keeps the draw exactly uniform.
  const std::uint64_t bound = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = engine();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

double standard_normal(Engine& engine) {
  double u1;
  do {
    u1 = uniform(engine, 0.0, 1.0);
  } while (u1 <= 0.0);
  const double u2 = uniform(engine, 0.0, 1.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void fill_normal(Engine& engine, Eigen::Ref<Eigen::VectorXd> out) {
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = standard_normal(engine);
}

std::string engine_state(const Engine& engine) {
  std::ostringstream os;
  os << engine;
  return os.str();
}

void restore_engine(Engine& engine, const std::string& state) {
  std::istringstream is(state);
  is >> engine;
  if (is.fail()) throw DataError("invalid random engine state");
}

}  // namespace psf
