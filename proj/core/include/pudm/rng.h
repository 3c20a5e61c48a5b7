#pragma once

#include <cstdint>
#include <random>

#include "pudm/mat.h"

namespace pudm {

using Rng = std::mt19937_64;

// Deterministic sub-stream derivation so independent consumers (parameter
// init, per-step noise, shape sampling, ...) never share a stream.
uint64_t derive_seed(uint64_t seed, uint64_t salt);

void fill_gaussian(Mat& m, Rng& rng);
void fill_uniform(Mat& m, Rng& rng, double lo, double hi);

Mat gaussian_mat(int rows, int cols, Rng& rng);

}  // namespace pudm
