#pragma once

#include <cstddef>
#include <functional>

namespace nnaee {

/// Worker count used by shot- and case-level loops. Defaults to 1.
void set_thread_count(int n);
int thread_count();

/// Runs body(i) for i in [0, n); calls nested inside a worker run serially.
/// Iterations must write disjoint outputs;
/// callers reduce results afterwards in index order so output never depends on scheduling.
/// The first exception thrown by any iteration is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &body);

} // namespace nnaee
