#include "pudm/rng.h"

namespace pudm {

uint64_t derive_seed(uint64_t seed, uint64_t salt) {
  // splitmix64 finalizer over seed xor a salt-spread offset.
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void fill_gaussian(Mat& m, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : m.d) v = n(rng);
}

void fill_uniform(Mat& m, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : m.d) v = u(rng);
}

Mat gaussian_mat(int rows, int cols, Rng& rng) {
  Mat m(rows, cols);
  fill_gaussian(m, rng);
  return m;
}

}  // namespace pudm
