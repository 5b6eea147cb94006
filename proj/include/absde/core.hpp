#pragma once

// Error types, small numeric helpers and the deterministic parallel loop
// shared by every module.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <exception>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace absde {

enum class Errc {
    invalid_argument,
    non_grid_anticipation,
    horizon_violation,
    non_finite_generator,
    index_out_of_range,
    domain_escape,
    rank_deficient,
    non_finite_target,
    misaligned_delay,
    ensemble_span_mismatch,
    negative_b,
    stability_guard,
    joint_transform_delay_mismatch,
    not_converged,
    monotonicity_precondition_failed,
    delay_order_violated,
    span_mismatch,
    hypothesis_construction_failed,
    config_error,
    io_error,
};

inline const char* to_string(Errc code) {
    switch (code) {
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::non_grid_anticipation: return "NonGridAnticipation";
    case Errc::horizon_violation: return "HorizonViolation";
    case Errc::non_finite_generator: return "NonFiniteGenerator";
    case Errc::index_out_of_range: return "IndexOutOfRange";
    case Errc::domain_escape: return "DomainEscape";
    case Errc::rank_deficient: return "RankDeficient";
    case Errc::non_finite_target: return "NonFiniteTarget";
    case Errc::misaligned_delay: return "MisalignedDelay";
    case Errc::ensemble_span_mismatch: return "EnsembleSpanMismatch";
    case Errc::negative_b: return "NegativeB";
    case Errc::stability_guard: return "StabilityGuard";
    case Errc::joint_transform_delay_mismatch: return "JointTransformDelayMismatch";
    case Errc::not_converged: return "NotConverged";
    case Errc::monotonicity_precondition_failed: return "MonotonicityPreconditionFailed";
    case Errc::delay_order_violated: return "DelayOrderViolated";
    case Errc::span_mismatch: return "SpanMismatch";
    case Errc::hypothesis_construction_failed: return "HypothesisConstructionFailed";
    case Errc::config_error: return "ConfigError";
    case Errc::io_error: return "IoError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
    if (!cond) fail(code, what);
}

inline constexpr double kPi = 3.14159265358979323846;

/// Grid-alignment tolerance, in units of the step.
inline constexpr double kGridEps = 1e-9;

/// printf-style formatting into a std::string.
template <typename... Args>
std::string strformat(const char* fmt, Args... args) {
    int n = std::snprintf(nullptr, 0, fmt, args...);
    std::string out(static_cast<std::size_t>(n), '\0');
    std::snprintf(out.data(), out.size() + 1, fmt, args...);
    return out;
}

/// Round-trip-exact decimal form of a double, used by every report writer.
inline std::string fmt_double(double v) { return strformat("%.17g", v); }

// ---------------------------------------------------------------------------
// Parallelism
// ---------------------------------------------------------------------------

namespace detail {
inline std::atomic<unsigned>& thread_cap() {
    static std::atomic<unsigned> cap{0};
    return cap;
}
}  // namespace detail

/// Caps worker threads for all parallel loops; 0 means hardware concurrency.
inline void set_max_threads(unsigned n) { detail::thread_cap().store(n); }

inline unsigned max_threads() {
    unsigned cap = detail::thread_cap().load();
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    return cap == 0 ? hw : cap;
}

/// Runs fn(i) for i in [0, n). Each index is independent, so results do not
/// depend on the worker count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    unsigned workers = static_cast<unsigned>(std::min<std::size_t>(max_threads(), n));
    if (workers <= 1 || n < 256) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::vector<std::exception_ptr> errors(workers);
    std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk;
        std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, &errors, w, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Fixed block size for reductions; partial sums are combined in block order
/// so a reduction is bit-identical for any thread count.
inline constexpr std::size_t kReduceBlock = 4096;

template <typename Fn>
double deterministic_sum(std::size_t n, Fn&& term) {
    std::size_t blocks = (n + kReduceBlock - 1) / kReduceBlock;
    std::vector<double> partial(blocks, 0.0);
    parallel_for(blocks, [&](std::size_t b) {
        double s = 0.0;
        std::size_t hi = std::min(n, (b + 1) * kReduceBlock);
        for (std::size_t i = b * kReduceBlock; i < hi; ++i) s += term(i);
        partial[b] = s;
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

/// Sample mean and standard error of the mean.
struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
};

template <typename Fn>
MeanStderr mean_stderr(std::size_t n, Fn&& sample) {
    std::vector<double> vals(n);
    parallel_for(n, [&](std::size_t i) { vals[i] = sample(i); });
    double mean = deterministic_sum(n, [&](std::size_t i) { return vals[i]; }) / static_cast<double>(n);
    double ss = deterministic_sum(n, [&](std::size_t i) {
        double d = vals[i] - mean;
        return d * d;
    });
    double var = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size() && x.size() >= 2, Errc::invalid_argument, "loglog_slope needs >= 2 points");
    double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace absde
