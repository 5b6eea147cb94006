#pragma once

// Reference computations that do not share code with the library: dense
// midpoint integration against the Gaussian density and closed forms.

#include <cmath>
#include <functional>

namespace oracle {

inline constexpr double pi = 3.14159265358979323846;

/// E[f(x + sqrt(h) N)] by a dense midpoint rule on [-z_max, z_max].
inline double gauss_expect(const std::function<double(double)>& f, double x, double h, int n = 400000,
                           double z_max = 12.0) {
    if (h == 0.0) return f(x);
    const double dz = 2.0 * z_max / n;
    const double s = std::sqrt(h);
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
        double z = -z_max + (k + 0.5) * dz;
        acc += std::exp(-0.5 * z * z) * f(x + s * z);
    }
    return acc * dz / std::sqrt(2.0 * pi);
}

/// E[(x + sqrt(h) N)^d] by the binomial expansion with Gaussian moments.
inline double shifted_moment(int d, double x, double h) {
    double total = 0.0;
    double binom = 1.0;
    for (int k = 0; k <= d; ++k) {
        if (k > 0) binom = binom * (d - k + 1) / k;
        if (k % 2 == 1) continue;
        double m = 1.0;
        for (int j = k - 1; j > 0; j -= 2) m *= j;
        total += binom * std::pow(x, d - k) * std::pow(h, k / 2.0) * m;
    }
    return total;
}

/// E|N(0, v)|.
inline double abs_moment(double v) { return std::sqrt(2.0 * v / pi); }

/// Explicit Euler for y' = a(t) y + b(t) backward from y(T) = yT, returned at t0.
inline double ode_backward(const std::function<double(double)>& a, const std::function<double(double)>& b,
                           double yT, double t0, double T, int n = 200000) {
    double h = (T - t0) / n, y = yT;
    for (int k = n; k > 0; --k) {
        double t = t0 + k * h;
        // RK4 backward in time for -dy/dt = a y + b
        auto rhs = [&](double tt, double yy) { return a(tt) * yy + b(tt); };
        double k1 = rhs(t, y), k2 = rhs(t - h / 2, y + h / 2 * k1), k3 = rhs(t - h / 2, y + h / 2 * k2),
               k4 = rhs(t - h, y + h * k3);
        y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return y;
}

}  // namespace oracle
