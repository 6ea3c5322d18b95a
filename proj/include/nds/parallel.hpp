#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace nds {

/// Worker-pool width used by the parallel kernels. 0 means "all cores".
struct ExecPolicy {
    int jobs = 0;

    static ExecPolicy serial() { return ExecPolicy{1}; }

    int resolved_jobs() const {
#ifdef _OPENMP
        if (jobs <= 0) return omp_get_max_threads();
        return jobs;
#else
        return 1;
#endif
    }
};

/// Parallel map over [0, n). Every iteration must be independent and
/// deterministic in isolation; callers that reduce must do so afterwards in
/// index order so results do not depend on the schedule. Exceptions thrown by
/// the body are captured and rethrown once on the calling thread.
template <typename Fn>
void parallel_for(std::size_t n, const ExecPolicy& policy, Fn&& fn) {
    const int jobs = policy.resolved_jobs();
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
#ifdef _OPENMP
    std::string first_error;
    bool failed = false;
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        if (failed) continue;
        try {
            fn(static_cast<std::size_t>(i));
        } catch (const std::exception& e) {
#pragma omp critical
            {
                if (!failed) {
                    failed = true;
                    first_error = e.what();
                }
            }
        }
    }
    if (failed) throw std::runtime_error(first_error);
#else
    for (std::size_t i = 0; i < n; ++i) fn(i);
#endif
}

}  // namespace nds
