// Benchmark of the level-sampling kernels: plain serial loop vs the blocked
// kernel at several worker counts, on both the Milstein and the synthetic
// samplers. The blocked kernel must produce identical statistics at every
// worker count; this also spot-checks that while timing.

#include "mlmc/engine.hpp"
#include "mlmc/presets.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void bench_sampler(const char* name, const mlmc::Sampler& sampler, double h_fine,
                   double h_coarse, std::int64_t count) {
    std::printf("%s: %lld coupled samples at h = %g\n", name,
                static_cast<long long>(count), h_fine);

    auto t0 = std::chrono::steady_clock::now();
    auto serial = mlmc::sample_level_serial(sampler, 1, h_fine, h_coarse, 1234, 0, count);
    double serial_time = seconds_since(t0);
    std::printf("  serial reference   %8.3f s  (%.3g samples/s)  mean % .6e\n", serial_time,
                count / serial_time, serial.mean);

    int max_workers = 1;
#ifdef _OPENMP
    max_workers = omp_get_max_threads();
#endif
    mlmc::WelfordAccumulator first;
    for (int workers = 1; workers <= max_workers; workers *= 2) {
        t0 = std::chrono::steady_clock::now();
        auto blocked =
            mlmc::sample_level_blocked(sampler, 1, h_fine, h_coarse, 1234, 0, count, workers);
        double blocked_time = seconds_since(t0);
        if (workers == 1) first = blocked;
        bool identical = blocked.mean == first.mean && blocked.m2 == first.m2 &&
                         blocked.count == first.count && blocked.work == first.work;
        std::printf("  blocked x%-2d        %8.3f s  (%.3g samples/s)  speedup %5.2f  %s\n",
                    workers, blocked_time, count / blocked_time, serial_time / blocked_time,
                    identical ? "bit-identical" : "MISMATCH ACROSS WORKER COUNTS");
    }
    std::printf("\n");
}

} // namespace

int main(int argc, char** argv) {
    std::int64_t gbm_samples = 200000;
    std::int64_t synthetic_samples = 20000000;
    if (argc > 1 && std::strcmp(argv[1], "--quick") == 0) {
        gbm_samples = 20000;
        synthetic_samples = 1000000;
    }

    mlmc::Preset ex2 = mlmc::preset_by_name("ex2");
    bench_sampler("gbm-milstein (ex2)", *ex2.sampler, 1.0 / 64.0, 1.0 / 16.0, gbm_samples);

    mlmc::Preset ex1 = mlmc::preset_by_name("ex1-gmres");
    bench_sampler("synthetic (ex1-gmres)", *ex1.sampler, 1.0 / 32.0, 1.0 / 16.0,
                  synthetic_samples);
    return 0;
}
