#pragma once

// Conditional expectations E[ phi(x + sqrt(h) N) ] given the present state x:
// Gauss-Hermite quadrature for smooth slices, adaptive Gauss-Kronrod for
// slices with kinks, and least-squares polynomial regression for ensembles.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "absde/core.hpp"

namespace absde {

/// Gauss-Hermite rule normalised against the standard normal:
/// E[phi(N)] ~= sum_k weight_k * phi(sqrt(2) * node_k), weights summing to 1.
class QuadratureRule {
public:
    explicit QuadratureRule(std::size_t n_nodes = 16) : n_(n_nodes) {
        require(n_nodes >= 1 && n_nodes <= 200, Errc::invalid_argument, "n_nodes must be in [1, 200]");
        compute_nodes();
        check_exactness();
    }

    std::size_t n_nodes() const { return n_; }
    /// Physicists' abscissae z_k.
    const std::vector<double>& nodes() const { return nodes_; }
    /// Weights divided by sqrt(pi).
    const std::vector<double>& weights() const { return weights_; }
    /// sqrt(2) * z_k, the standard-normal abscissae.
    const std::vector<double>& normal_nodes() const { return scaled_; }

    /// Highest moment degree integrated exactly.
    std::size_t exact_degree() const { return 2 * n_ - 1; }

private:
    void compute_nodes() {
        // Newton iteration on orthonormal Hermite polynomials.
        const double pim4 = 0.7511255444649425;
        const int n = static_cast<int>(n_);
        nodes_.assign(n_, 0.0);
        weights_.assign(n_, 0.0);
        const int m = (n + 1) / 2;
        double z = 0.0;
        for (int i = 0; i < m; ++i) {
            if (i == 0)
                z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
            else if (i == 1)
                z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
            else if (i == 2)
                z = 1.86 * z - 0.86 * nodes_[0];
            else if (i == 3)
                z = 1.91 * z - 0.91 * nodes_[1];
            else
                z = 2.0 * z - nodes_[static_cast<std::size_t>(i - 2)];
            double pp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p1 = pim4, p2 = 0.0;
                for (int j = 0; j < n; ++j) {
                    double p3 = p2;
                    p2 = p1;
                    p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
                }
                pp = std::sqrt(2.0 * n) * p2;
                double z1 = z;
                z = z1 - p1 / pp;
                if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
            }
            if (n % 2 == 1 && i == m - 1) z = 0.0;
            nodes_[static_cast<std::size_t>(i)] = z;
            nodes_[static_cast<std::size_t>(n - 1 - i)] = -z;
            double w = 2.0 / (pp * pp);
            weights_[static_cast<std::size_t>(i)] = w;
            weights_[static_cast<std::size_t>(n - 1 - i)] = w;
        }
        // ascending order, normalised
        std::vector<std::size_t> order(n_);
        for (std::size_t k = 0; k < n_; ++k) order[k] = k;
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return nodes_[a] < nodes_[b]; });
        std::vector<double> zs(n_), ws(n_);
        double total = 0.0;
        for (std::size_t k = 0; k < n_; ++k) total += weights_[k];
        for (std::size_t k = 0; k < n_; ++k) {
            zs[k] = nodes_[order[k]];
            ws[k] = weights_[order[k]] / total;
        }
        nodes_ = std::move(zs);
        weights_ = std::move(ws);
        scaled_.resize(n_);
        for (std::size_t k = 0; k < n_; ++k) scaled_[k] = std::sqrt(2.0) * nodes_[k];
    }

    void check_exactness() const {
        double even_moment = 1.0;  // E[N^d] for even d, (d-1)!!
        for (std::size_t d = 0; d <= exact_degree(); ++d) {
            if (d >= 2 && d % 2 == 0) even_moment *= static_cast<double>(d - 1);
            double exact = d % 2 == 0 ? even_moment : 0.0;
            double got = 0.0, scale = 0.0;
            for (std::size_t k = 0; k < n_; ++k) {
                double term = weights_[k] * std::pow(scaled_[k], static_cast<double>(d));
                got += term;
                scale += std::abs(term);
            }
            require(std::abs(got - exact) <= 1e-12 * std::max(1.0, scale), Errc::invalid_argument,
                    strformat("Gauss-Hermite rule with %zu nodes fails the degree-%zu moment check", n_, d));
        }
    }

    std::size_t n_;
    std::vector<double> nodes_;
    std::vector<double> weights_;
    std::vector<double> scaled_;
};

/// Adaptive Gauss-Kronrod integration against the normal density on
/// [-z_max, z_max], split at 0. For slices with kinks, where Gauss-Hermite
/// converges only like 1/n.
struct AdaptiveRule {
    double tolerance = 1e-10;
    double z_max = 8.5;
    unsigned max_depth = 18;
};

/// Conditional expectation of slice(x_now + sqrt(h) N); h = 0 returns slice(x_now).
template <typename Slice>
double quad_condexp(const Slice& slice, double x_now, double h, const QuadratureRule& rule) {
    require(h >= 0.0, Errc::invalid_argument, "variance h must be >= 0");
    if (h == 0.0) return slice(x_now);
    const double s = std::sqrt(h);
    const auto& zs = rule.normal_nodes();
    const auto& ws = rule.weights();
    double acc = 0.0;
    for (std::size_t k = 0; k < zs.size(); ++k) acc += ws[k] * slice(x_now + s * zs[k]);
    return acc;
}

template <typename Slice>
double quad_condexp(const Slice& slice, double x_now, double h, const AdaptiveRule& rule) {
    require(h >= 0.0, Errc::invalid_argument, "variance h must be >= 0");
    if (h == 0.0) return slice(x_now);
    const double s = std::sqrt(h);
    const double norm = 1.0 / std::sqrt(2.0 * kPi);
    auto integrand = [&](double z) { return norm * std::exp(-0.5 * z * z) * slice(x_now + s * z); };
    using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
    double left = GK::integrate(integrand, -rule.z_max, 0.0, rule.max_depth, rule.tolerance);
    double right = GK::integrate(integrand, 0.0, rule.z_max, rule.max_depth, rule.tolerance);
    return left + right;
}

/// Conditional covariation E[slice(x + dW) dW] / h with dW ~ N(0, h).
template <typename Slice>
double quad_covariation(const Slice& slice, double x_now, double h, const QuadratureRule& rule) {
    require(h > 0.0, Errc::invalid_argument, "covariation needs h > 0");
    const double s = std::sqrt(h);
    const auto& zs = rule.normal_nodes();
    const auto& ws = rule.weights();
    double acc = 0.0;
    for (std::size_t k = 0; k < zs.size(); ++k) acc += ws[k] * slice(x_now + s * zs[k]) * (s * zs[k]);
    return acc / h;
}

enum class Interp { linear, cubic };
enum class Extrapolation { linear, forbid };

/// Read-only view of one time row of a uniform spatial grid.
class SurfaceSlice {
public:
    SurfaceSlice(double x_lo, double hx, std::span<const double> values, Interp interp = Interp::cubic,
                 Extrapolation extrap = Extrapolation::linear)
        : x_lo_(x_lo), hx_(hx), v_(values), interp_(interp), extrap_(extrap) {
        require(values.size() >= 4, Errc::invalid_argument, "a slice needs at least 4 nodes");
    }

    double operator()(double x) const {
        const std::size_t n = v_.size();
        double u = (x - x_lo_) / hx_;
        double last = static_cast<double>(n - 1);
        if (u < 0.0 || u > last) {
            if (extrap_ == Extrapolation::forbid)
                fail(Errc::domain_escape, strformat("x = %g leaves [%g, %g]", x, x_lo_, x_lo_ + last * hx_));
            if (u < 0.0) return v_[0] + (v_[1] - v_[0]) * u;
            return v_[n - 1] + (v_[n - 1] - v_[n - 2]) * (u - last);
        }
        std::size_t j = std::min(static_cast<std::size_t>(u), n - 2);
        if (interp_ == Interp::linear) {
            double fr = u - static_cast<double>(j);
            return v_[j] * (1.0 - fr) + v_[j + 1] * fr;
        }
        std::size_t b = j == 0 ? 0 : std::min(j - 1, n - 4);
        double s = u - static_cast<double>(b);
        double l0 = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0;
        double l1 = s * (s - 2.0) * (s - 3.0) / 2.0;
        double l2 = -s * (s - 1.0) * (s - 3.0) / 2.0;
        double l3 = s * (s - 1.0) * (s - 2.0) / 6.0;
        return l0 * v_[b] + l1 * v_[b + 1] + l2 * v_[b + 2] + l3 * v_[b + 3];
    }

private:
    double x_lo_;
    double hx_;
    std::span<const double> v_;
    Interp interp_;
    Extrapolation extrap_;
};

// ---------------------------------------------------------------------------
// Regression
// ---------------------------------------------------------------------------

struct RegressionBasis {
    std::size_t degree = 4;
};

/// Polynomial least squares on standardised states. The factorisation depends
/// only on the states, so one Regressor serves every target at that time.
class Regressor {
public:
    Regressor(std::span<const double> states, RegressionBasis basis) : n_(states.size()) {
        require(n_ > basis.degree + 1, Errc::invalid_argument, "regression needs n_paths > degree + 1");
        double mean = deterministic_sum(n_, [&](std::size_t i) { return states[i]; }) / static_cast<double>(n_);
        double var = deterministic_sum(n_, [&](std::size_t i) {
                         double d = states[i] - mean;
                         return d * d;
                     }) / static_cast<double>(n_);
        center_ = mean;
        scale_ = std::sqrt(var);
        requested_ = basis.degree;
        degree_ = basis.degree;
        if (!(scale_ > 1e-12 * std::max(1.0, std::abs(mean)))) {
            degree_ = 0;
            scale_ = 1.0;
            degenerate_ = true;
        }
        states_.assign(states.begin(), states.end());
        while (true) {
            const std::size_t q = degree_ + 1;
            auto sums = block_sums(q * q, [&](std::size_t i, double* acc) {
                double pw[16];
                powers(states_[i], pw);
                for (std::size_t a = 0; a < q; ++a)
                    for (std::size_t b = 0; b < q; ++b) acc[a * q + b] += pw[a] * pw[b];
            });
            Eigen::MatrixXd gram(q, q);
            for (std::size_t a = 0; a < q; ++a)
                for (std::size_t b = 0; b < q; ++b) gram(a, b) = sums[a * q + b] / static_cast<double>(n_);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
            double lmin = eig.eigenvalues().minCoeff(), lmax = eig.eigenvalues().maxCoeff();
            if (degree_ == 0 || (lmin > 0.0 && lmax / lmin < 1e12)) {
                gram_inv_ = gram.inverse();
                break;
            }
            --degree_;
        }
    }

    std::size_t degree_used() const { return degree_; }
    /// Degree lowered because the Gram matrix was ill-conditioned.
    bool rank_reduced() const { return !degenerate_ && degree_ < requested_; }
    /// All states (numerically) equal, as at t = 0; the fit is the sample mean.
    bool degenerate() const { return degenerate_; }
    std::size_t size() const { return n_; }

    /// Coefficients in the standardised basis ((x - center) / scale)^a.
    Eigen::VectorXd fit(std::span<const double> targets) const {
        require(targets.size() == n_, Errc::invalid_argument, "targets and states differ in length");
        const std::size_t q = degree_ + 1;
        auto sums = block_sums(q, [&](std::size_t i, double* acc) {
            double pw[16];
            powers(states_[i], pw);
            for (std::size_t a = 0; a < q; ++a) acc[a] += pw[a] * targets[i];
        });
        Eigen::VectorXd rhs(q);
        for (std::size_t a = 0; a < q; ++a) {
            rhs(a) = sums[a] / static_cast<double>(n_);
            if (!std::isfinite(rhs(a))) fail(Errc::non_finite_target, "regression target is not finite");
        }
        return gram_inv_ * rhs;
    }

    double evaluate(const Eigen::VectorXd& coef, double x) const {
        double s = (x - center_) / scale_;
        double acc = 0.0;
        for (std::size_t a = coef.size(); a-- > 0;) acc = acc * s + coef(static_cast<Eigen::Index>(a));
        return acc;
    }

    /// Fitted values at each path's own state.
    void fitted(std::span<const double> targets, std::span<double> out) const {
        auto coef = fit(targets);
        parallel_for(n_, [&](std::size_t i) { out[i] = evaluate(coef, states_[i]); });
    }

    double center() const { return center_; }
    double scale() const { return scale_; }
    const Eigen::MatrixXd& gram_inverse() const { return gram_inv_; }
    double state(std::size_t i) const { return states_[i]; }

private:
    void powers(double x, double* pw) const {
        double s = (x - center_) / scale_;
        pw[0] = 1.0;
        for (std::size_t a = 1; a <= degree_; ++a) pw[a] = pw[a - 1] * s;
    }

    template <typename Acc>
    std::vector<double> block_sums(std::size_t width, Acc&& acc) const {
        std::size_t blocks = (n_ + kReduceBlock - 1) / kReduceBlock;
        std::vector<double> partial(blocks * width, 0.0);
        parallel_for(blocks, [&](std::size_t b) {
            double* dst = partial.data() + b * width;
            std::size_t hi = std::min(n_, (b + 1) * kReduceBlock);
            for (std::size_t i = b * kReduceBlock; i < hi; ++i) acc(i, dst);
        });
        std::vector<double> total(width, 0.0);
        for (std::size_t b = 0; b < blocks; ++b)
            for (std::size_t k = 0; k < width; ++k) total[k] += partial[b * width + k];
        return total;
    }

    std::size_t n_;
    std::size_t requested_ = 0;
    std::size_t degree_ = 0;
    double center_ = 0.0;
    double scale_ = 1.0;
    bool degenerate_ = false;
    std::vector<double> states_;
    Eigen::MatrixXd gram_inv_;
};

/// Result of a one-off regression: coefficients in raw monomials x^k with
/// their standard errors, and a prediction function with its standard error.
struct RegressionResult {
    std::size_t degree_used = 0;
    bool rank_reduced = false;
    std::vector<double> coefficients;
    std::vector<double> coefficient_stderr;
    double residual_sd = 0.0;

    double operator()(double x) const {
        double acc = 0.0;
        for (std::size_t k = coefficients.size(); k-- > 0;) acc = acc * x + coefficients[k];
        return acc;
    }

    double predict_stderr(double x) const {
        const std::size_t q = coefficients.size();
        double var = 0.0, xa = 1.0;
        for (std::size_t a = 0; a < q; ++a, xa *= x) {
            double xb = 1.0;
            for (std::size_t b = 0; b < q; ++b, xb *= x) var += xa * xb * covariance[a * q + b];
        }
        return std::sqrt(std::max(var, 0.0));
    }

    std::vector<double> covariance;  // raw-basis, row-major q x q
};

inline RegressionResult regress_condexp(std::span<const double> targets, std::span<const double> states,
                                        RegressionBasis basis = {}) {
    require(targets.size() == states.size(), Errc::invalid_argument, "targets and states differ in length");
    for (double t : targets)
        if (!std::isfinite(t)) fail(Errc::non_finite_target, "regression target is not finite");
    Regressor reg(states, basis);
    Eigen::VectorXd b = reg.fit(targets);
    const std::size_t q = reg.degree_used() + 1;
    const std::size_t n = targets.size();
    double rss = deterministic_sum(n, [&](std::size_t i) {
        double r = targets[i] - reg.evaluate(b, states[i]);
        return r * r;
    });
    double s2 = rss / static_cast<double>(n - q);
    Eigen::MatrixXd cov_std = reg.gram_inverse() * (s2 / static_cast<double>(n));

    // ((x - m) / s)^a = sum_k C(a, k) (-m)^{a-k} s^{-a} x^k
    Eigen::MatrixXd to_raw = Eigen::MatrixXd::Zero(q, q);
    const double m = reg.center(), sc = reg.scale();
    for (std::size_t a = 0; a < q; ++a) {
        double binom = 1.0;
        for (std::size_t k = 0; k <= a; ++k) {
            if (k > 0) binom = binom * static_cast<double>(a - k + 1) / static_cast<double>(k);
            to_raw(k, a) = binom * std::pow(-m, static_cast<double>(a - k)) / std::pow(sc, static_cast<double>(a));
        }
    }
    Eigen::VectorXd raw = to_raw * b;
    Eigen::MatrixXd cov_raw = to_raw * cov_std * to_raw.transpose();

    RegressionResult out;
    out.degree_used = reg.degree_used();
    out.rank_reduced = reg.rank_reduced();
    out.residual_sd = std::sqrt(s2);
    out.coefficients.resize(q);
    out.coefficient_stderr.resize(q);
    out.covariance.resize(q * q);
    for (std::size_t k = 0; k < q; ++k) {
        out.coefficients[k] = raw(static_cast<Eigen::Index>(k));
        out.coefficient_stderr[k] = std::sqrt(std::max(0.0, cov_raw(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k))));
        for (std::size_t j = 0; j < q; ++j)
            out.covariance[k * q + j] = cov_raw(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
    }
    return out;
}

}  // namespace absde
