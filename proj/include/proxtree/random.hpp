#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace proxtree {

using Rng = std::mt19937_64;

// Mixes a master seed with a list of stream identifiers (tree index, fold,
// replication, ...). Every parallel unit of work draws from its own derived
// stream, so results do not depend on scheduling.
std::uint64_t derive_seed(std::uint64_t master,
                          std::initializer_list<std::uint64_t> stream);

inline Rng make_rng(std::uint64_t master,
                    std::initializer_list<std::uint64_t> stream) {
  return Rng(derive_seed(master, stream));
}

// Uniform random permutation of 0..n-1 (Fisher-Yates).
std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng);

// Uniform index in [0, n).
std::size_t uniform_index(std::size_t n, Rng& rng);

}  // namespace proxtree
