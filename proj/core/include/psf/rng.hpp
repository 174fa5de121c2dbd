#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace psf {

using Engine = std::mt19937_64;

// 64-bit FNV-1a over the bytes of `text`, starting from `basis`.
std::uint64_t fnv1a(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL);

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Derives an independent stream seed from a top-level seed and a purpose tag.
// All randomness in the project flows through this: seed ⊕ hash(tag), mixed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

Engine make_engine(std::uint64_t seed, std::string_view tag);

// Standard normal draw by Box-Muller. Stateless apart from the engine, so the
// engine state alone determines the stream (no cached second value).
double standard_normal(Engine& engine);

// Uniform draw on [lo, hi).
double uniform(Engine& engine, double lo, double hi);

// Uniform integer on [0, n).
std::size_t uniform_index(Engine& engine, std::size_t n);

void fill_normal(Engine& engine, Eigen::Ref<Eigen::VectorXd> out);

// Engine state as text (the standard stream representation) and back.
std::string engine_state(const Engine& engine);
void restore_engine(Engine& engine, const std::string& state);

}  // namespace psf
