#include "carbonfl/rng.hpp"

#include <algorithm>
#include <numeric>

namespace carbonfl {

std::vector<int> Rng::sample_without_replacement(int n, int k) {
    std::vector<int> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    // Partial Fisher-Yates: fix positions [0, k).
    for (int i = 0; i < k; ++i) {
        const uint64_t j = i + next_below(static_cast<uint64_t>(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

}  // namespace carbonfl
