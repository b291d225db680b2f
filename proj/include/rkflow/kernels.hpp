#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <utility>

#include "rkflow/errors.hpp"

namespace rkflow {

// Radial kernel of Matern smoothness nu, normalized to k(0) = 1.  The kernel
// is defined through its frequency distribution: k(r) is the characteristic
// function E[cos(r s)] of the unit-scale Student-t law with 2*nu degrees of
// freedom (the projection of the q-variate frequency measure onto any unit
// direction).  nu = +infinity is the Gaussian kernel k(r) = exp(-r^2/2).
//
// Admissible range is nu > 2: the fourth frequency moment, and with it the
// curvature constants below, diverges at nu <= 2.
struct KernelSpec {
    double nu;

    static KernelSpec matern(double nu) { return KernelSpec{nu}; }
    static KernelSpec gaussian() {
        return KernelSpec{std::numeric_limits<double>::infinity()};
    }

    bool is_gaussian() const { return std::isinf(nu); }

    bool valid() const { return std::isinf(nu) || nu > 2.0; }

    void require_valid() const {
        if (!(nu > 2.0) && !std::isinf(nu)) {
            throw invalid_kernel_error(
                "kernel smoothness nu must be > 2 (or infinity); got nu = " +
                std::to_string(nu));
        }
    }
};

namespace detail {

// Gauss-Kronrod 7-15 pair on [-1, 1] (QUADPACK dqk15 constants).
template <typename Real>
struct GaussKronrod15 {
    static constexpr Real xgk[8] = {
        Real(0.9914553711208126392068547L), Real(0.9491079123427585245261897L),
        Real(0.8648644233597690727897128L), Real(0.7415311855993944398638648L),
        Real(0.5860872354676911302941448L), Real(0.4058451513773971669066064L),
        Real(0.2077849550078984676006894L), Real(0.0L)};
    static constexpr Real wgk[8] = {
        Real(0.0229353220105292249637320L), Real(0.0630920926299785532907007L),
        Real(0.1047900103222501838398763L), Real(0.1406532597155259187451896L),
        Real(0.1690047266392679028265834L), Real(0.1903505780647854099132564L),
        Real(0.2044329400752988924141620L), Real(0.2094821410847278280129992L)};
    static constexpr Real wg[4] = {
        Real(0.1294849661688696932706114L), Real(0.2797053914892766679014678L),
        Real(0.3818300505051189449503698L), Real(0.4179591836734693877551020L)};
};

template <typename Real, typename F>
void gk15(const F& f, Real a, Real b, Real& kronrod, Real& err) {
    using GK = GaussKronrod15<Real>;
    const Real half = (b - a) / Real(2);
    const Real center = (a + b) / Real(2);
    Real result_g = GK::wg[3] * f(center);
    Real result_k = GK::wgk[7] * f(center);
    for (int i = 0; i < 7; ++i) {
        const Real dx = half * GK::xgk[i];
        const Real sum = f(center - dx) + f(center + dx);
        result_k += GK::wgk[i] * sum;
        if (i % 2 == 1) result_g += GK::wg[i / 2] * sum;
    }
    kronrod = result_k * half;
    err = std::abs((result_k - result_g) * half);
}

// Globally adaptive bisection.  Each segment must meet its share of the
// absolute tolerance, with a floor near machine precision so the recursion
// cannot chase roundoff; contributions accumulate through Kahan summation.
template <typename Real, typename F>
Real integrate_adaptive(const F& f, Real a, Real b, Real abs_tol) {
    struct Segment {
        Real a, b, tol;
        int depth;
    };
    const Real eps = std::numeric_limits<Real>::epsilon();
    Real sum = 0, comp = 0;
    Segment stack[2048];
    int top = 0;
    stack[top++] = {a, b, abs_tol, 0};
    while (top > 0) {
        const Segment seg = stack[--top];
        Real value, err;
        gk15(f, seg.a, seg.b, value, err);
        const Real floor_tol = Real(16) * eps * (std::abs(value) + Real(1e-3));
        if (err <= std::max(seg.tol, floor_tol) || seg.depth >= 54 ||
            top >= 2046) {
            const Real y = value - comp;
            const Real t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        } else {
            const Real mid = (seg.a + seg.b) / Real(2);
            stack[top++] = {seg.a, mid, seg.tol / Real(2), seg.depth + 1};
            stack[top++] = {mid, seg.b, seg.tol / Real(2), seg.depth + 1};
        }
    }
    return sum;
}

// Characteristic function of the unit-scale Student-t with m = 2*nu degrees
// of freedom, evaluated by quadrature of 2 * int_0^S cos(r s) f_m(s) ds.
// S is chosen so the density tail mass beyond it is below 1e-13 (for the
// extended-precision path, 1e-19).
template <typename Real>
Real student_t_char_function(double nu, Real r, Real abs_tol, Real tail_tol) {
    const Real m = Real(2) * Real(nu);
    // log of the t-density normalizing constant
    const Real log_norm = std::lgamma((m + 1) / 2) - std::lgamma(m / 2) -
                          Real(0.5) * std::log(m * Real(M_PI));
    const Real norm = std::exp(log_norm);
    // tail bound: int_S^inf (1 + s^2/m)^{-(m+1)/2} ds <= m^{(m+1)/2} S^{-m}/m
    Real cutoff = std::exp(
        (log_norm + ((m + 1) / 2 - 1) * std::log(m) - std::log(tail_tol)) / m);
    if (cutoff < Real(50)) cutoff = Real(50);

    const auto integrand = [&](Real s) {
        const Real density =
            norm * std::exp(-((m + 1) / 2) * std::log1p(s * s / m));
        return std::cos(r * s) * density;
    };
    return Real(2) *
           integrate_adaptive<Real>(integrand, Real(0), cutoff, abs_tol / 2);
}

// Full-internal-precision kernel evaluation (no memoization).  Exposed for
// tests that difference the kernel at tiny steps, where the public double
// result is already at the rounding floor.
inline long double eval_kernel_precise(const KernelSpec& spec, long double r) {
    spec.require_valid();
    if (r < 0) throw invalid_input_error("eval_kernel: r must be >= 0");
    if (spec.is_gaussian()) return std::exp(-r * r / 2.0L);
    if (r == 0.0L) return 1.0L;
    return student_t_char_function<long double>(spec.nu, r, 1e-17L, 1e-19L);
}

}  // namespace detail

// k(r) for the kernel described by spec, to absolute accuracy 1e-10 (the
// quadrature targets 1e-12).  Positive, strictly decreasing, k(0) = 1.
// Results are memoized per (nu, r) behind a mutex.
inline double eval_kernel(const KernelSpec& spec, double r) {
    spec.require_valid();
    if (r < 0) throw invalid_input_error("eval_kernel: r must be >= 0");
    if (spec.is_gaussian()) return std::exp(-r * r / 2.0);
    if (r == 0.0) return 1.0;

    static std::map<std::pair<double, double>, double> cache;
    static std::mutex cache_mutex;
    const auto key = std::make_pair(spec.nu, r);
    {
        std::lock_guard<std::mutex> lock(cache_mutex);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    const double value =
        detail::student_t_char_function<double>(spec.nu, r, 1e-12, 1e-13);
    {
        std::lock_guard<std::mutex> lock(cache_mutex);
        cache.emplace(key, value);
    }
    return value;
}

// (-k''(0), k''''(0)): the second and fourth frequency moments.
struct KernelDerivatives {
    double neg_k2;
    double k4;
};

inline KernelDerivatives derivatives_at_zero(const KernelSpec& spec) {
    spec.require_valid();
    if (spec.is_gaussian()) return {1.0, 3.0};
    const double nu = spec.nu;
    return {nu / (nu - 1.0), 3.0 * nu * nu / ((nu - 1.0) * (nu - 2.0))};
}

// Embedding constant kappa = sqrt(k(0)) + sqrt(-k''(0)) + sqrt(k''''(0)),
// bounding a vector field, its Jacobian and its Hessian by kappa times the
// kernel-space norm.  Gaussian limit: 2 + sqrt(3).
inline double kappa(const KernelSpec& spec) {
    const KernelDerivatives d = derivatives_at_zero(spec);
    return 1.0 + std::sqrt(d.neg_k2) + std::sqrt(d.k4);
}

// Decay radius: the unique root of k(x) = 1/(2N).  Beyond it all kernel
// values are small enough that any N-point Gram matrix is diagonally
// dominant with smallest eigenvalue >= 1/2.
inline double beta(const KernelSpec& spec, int n_points) {
    spec.require_valid();
    if (n_points < 2) throw invalid_input_error("beta: N must be >= 2");
    const double target = 1.0 / (2.0 * n_points);
    double lo = 0.0;
    double hi = 100.0;
    while (eval_kernel(spec, hi) > target) {
        hi *= 2.0;
        if (hi > 1e9) throw invalid_input_error("beta: bracket expansion failed");
    }
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        if (eval_kernel(spec, mid) > target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace rkflow
