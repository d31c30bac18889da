#include "calibkit/active.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace calibkit {

std::vector<std::size_t> select_uncertain(std::span<const double> scores, std::size_t p) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t take = std::min(p, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          const double fa = std::abs(scores[a]);
                          const double fb = std::abs(scores[b]);
                          return fa < fb || (fa == fb && a < b);
                      });
    order.resize(take);
    return order;
}

std::vector<std::size_t> select_random(std::span<const std::size_t> pool, std::size_t p, std::mt19937_64& rng) {
    std::vector<std::size_t> shuffled(pool.begin(), pool.end());
    const std::size_t take = std::min(p, shuffled.size());
    // Partial Fisher-Yates: only the first `take` slots are drawn.
    for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, shuffled.size() - 1);
        std::swap(shuffled[i], shuffled[pick(rng)]);
    }
    shuffled.resize(take);
    return shuffled;
}

}  // namespace calibkit
