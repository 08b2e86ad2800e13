#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace hmore {

/// Worker count used by library loops. Defaults to HMORE_THREADS when set,
/// otherwise the hardware concurrency.
int thread_count();
/// Overrides the worker count; values < 1 restore the default.
void set_thread_count(int n);

/// Runs body(i) for every i in [0, n). Indices are split into contiguous
/// blocks, one per worker; body must only write state owned by index i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

/// Sums body(i) for i in [0, n). Each term is computed independently and the
/// terms are added in index order, so the result does not depend on the
/// worker count.
double ordered_sum(std::size_t n, const std::function<double(std::size_t)>& body);

/// RAII override of the worker count.
class ScopedThreadCount {
public:
    explicit ScopedThreadCount(int n);
    ~ScopedThreadCount();
    ScopedThreadCount(const ScopedThreadCount&) = delete;
    ScopedThreadCount& operator=(const ScopedThreadCount&) = delete;

private:
    int previous_;
};

}  // namespace hmore
