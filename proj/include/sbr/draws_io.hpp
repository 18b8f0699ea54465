#pragma once

#include <filesystem>

#include "sbr/sampler.hpp"

namespace sbr {

/// Columnar little-endian dump of a PosteriorDraws object. Layout:
///   magic "SBRDRAWS", u32 version (1), u32 n_chains, u32 n_kept, u32 dim,
///   dim names (u32 length + UTF-8 bytes),
///   dim columns, each n_chains * n_kept f64 values (chain-major),
///   per chain: f64 step size, u32 metric length, metric f64 values,
///   per chain and kept iteration: f64 step_size, i32 tree_depth, i32 n_leapfrog,
///   u8 divergent, f64 accept_stat, f64 log_density, f64 energy.
void write_draws(const std::filesystem::path& path, const PosteriorDraws& draws);
PosteriorDraws read_draws(const std::filesystem::path& path);

}  // namespace sbr
