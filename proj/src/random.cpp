#include "irgn/random.hpp"

#include <vector>

namespace irgn {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

GridFunction gaussian_vector(std::size_t n, double weight, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> values(n);
  for (double& v : values) v = normal(engine);
  return GridFunction(std::move(values), weight);
}

GridFunction random_unit(std::size_t n, double weight, std::uint64_t seed) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    GridFunction g = gaussian_vector(n, weight, seed + attempt);
    const double len = norm(g);
    if (len > 0.0) return g *= 1.0 / len;
  }
}

}  // namespace irgn
