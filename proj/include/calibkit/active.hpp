#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace calibkit {

/// Positions of the p smallest |score| values, most uncertain first. Ties go
/// to the lower position. Returns the whole pool when it has at most p entries.
std::vector<std::size_t> select_uncertain(std::span<const double> scores, std::size_t p);

/// p distinct entries of `pool` drawn uniformly without replacement.
std::vector<std::size_t> select_random(std::span<const std::size_t> pool, std::size_t p, std::mt19937_64& rng);

}  // namespace calibkit
