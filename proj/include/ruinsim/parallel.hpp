#pragma once

// Block-parallel path loop. Paths are cut into fixed blocks; each block fills
// its own accumulator and the accumulators are merged in block order, so the
// result does not depend on the number of workers.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ruinsim {

inline constexpr std::size_t kBlockSize = 1024;

/// Running mean and M2 (Chan et al. pairwise merge).
struct MeanAccumulator {
    double n = 0.0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double v) noexcept
    {
        n += 1.0;
        const double delta = v - mean;
        mean += delta / n;
        m2 += delta * (v - mean);
    }

    void merge(const MeanAccumulator& o) noexcept
    {
        if (o.n == 0.0)
            return;
        if (n == 0.0) {
            *this = o;
            return;
        }
        const double total = n + o.n;
        const double delta = o.mean - mean;
        mean += delta * (o.n / total);
        m2 += o.m2 + delta * delta * (n * o.n / total);
        n = total;
    }

    double variance() const noexcept { return n > 1.0 ? m2 / (n - 1.0) : 0.0; }
    double stderr_of_mean() const noexcept { return n > 0.0 ? std::sqrt(variance() / n) : 0.0; }
};

inline unsigned resolve_workers(unsigned requested) noexcept
{
    if (requested > 0)
        return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs block(acc, begin, end) over [0, n) and merges with acc.merge(other) in block order.
template <typename Acc, typename MakeAcc, typename Block>
Acc run_blocked(std::size_t n, unsigned workers, MakeAcc make_acc, Block block)
{
    const std::size_t blocks = (n + kBlockSize - 1) / kBlockSize;
    std::vector<Acc> partial;
    partial.reserve(blocks);
    for (std::size_t b = 0; b < blocks; ++b)
        partial.push_back(make_acc());

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto work = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= blocks)
                return;
            try {
                block(partial[b], b * kBlockSize, std::min(n, (b + 1) * kBlockSize));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
                next.store(blocks);
                return;
            }
        }
    };

    const unsigned count = std::min<std::size_t>(resolve_workers(workers), std::max<std::size_t>(blocks, 1));
    if (count <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < count; ++w)
            pool.emplace_back(work);
    }
    if (failure)
        std::rethrow_exception(failure);

    Acc total = make_acc();
    for (const auto& p : partial)
        total.merge(p);
    return total;
}

} // namespace ruinsim
