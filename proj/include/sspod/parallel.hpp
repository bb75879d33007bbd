#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace sspod {

/// Run body(i) for i in [0, count) on up to `threads` workers.
///
/// Each index is processed exactly once and must write only to its own
/// output slot. If any call throws, the exception from the lowest failing
/// index is rethrown after all workers stop, so error reporting does not
/// depend on scheduling.
template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
    const unsigned workers = static_cast<unsigned>(std::clamp<std::size_t>(threads == 0 ? 1 : threads, 1, std::max<std::size_t>(count, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> first_failure{count};
    std::vector<std::exception_ptr> errors(count);

    auto run = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count || i > first_failure.load()) return;
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
                std::size_t seen = first_failure.load();
                while (i < seen && !first_failure.compare_exchange_weak(seen, i)) {
                }
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();

    if (const std::size_t f = first_failure.load(); f < count) std::rethrow_exception(errors[f]);
}

}  // namespace sspod
