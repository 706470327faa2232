#pragma once

// Real-coefficient polynomials and rational transfer functions in the
// per-unit Laplace variable s (omega_1 = 1 p.u.).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gfpc/error.hpp"

namespace gfpc {

using cplx = std::complex<double>;

/// Relative coefficient tolerance used for polynomial / transfer function equality.
inline constexpr double kCoeffRelTol = 1e-9;

/// Polynomial with real coefficients stored in ascending degree order.
/// Trailing zero coefficients are trimmed, so the leading coefficient is nonzero
/// unless the polynomial is the zero polynomial `{0}`.
class Polynomial {
public:
    Polynomial() : c_{0.0} {}
    explicit Polynomial(std::vector<double> ascending) : c_(std::move(ascending)) { trim(); }
    Polynomial(std::initializer_list<double> ascending) : c_(ascending) { trim(); }

    static Polynomial constant(double value) { return Polynomial{value}; }

    /// value * s^power
    static Polynomial monomial(double value, std::size_t power) {
        std::vector<double> c(power + 1, 0.0);
        c[power] = value;
        return Polynomial(std::move(c));
    }

    /// Monic polynomial with the given roots. Complex roots should come in
    /// conjugate pairs; the imaginary residue of the product is discarded.
    static Polynomial from_roots(std::span<const cplx> roots) {
        std::vector<cplx> acc{cplx{1.0, 0.0}};
        for (const cplx& r : roots) {
            std::vector<cplx> next(acc.size() + 1, cplx{});
            for (std::size_t k = 0; k < acc.size(); ++k) {
                next[k + 1] += acc[k];
                next[k] -= r * acc[k];
            }
            acc = std::move(next);
        }
        std::vector<double> c(acc.size());
        std::transform(acc.begin(), acc.end(), c.begin(), [](cplx z) { return z.real(); });
        return Polynomial(std::move(c));
    }

    [[nodiscard]] std::size_t degree() const noexcept { return c_.size() - 1; }
    [[nodiscard]] bool is_zero() const noexcept { return c_.size() == 1 && c_[0] == 0.0; }
    [[nodiscard]] std::span<const double> coeffs() const noexcept { return c_; }
    [[nodiscard]] double operator[](std::size_t k) const noexcept { return k < c_.size() ? c_[k] : 0.0; }
    [[nodiscard]] double leading() const noexcept { return c_.back(); }

    [[nodiscard]] double max_abs_coeff() const noexcept {
        double m = 0.0;
        for (double v : c_) m = std::max(m, std::abs(v));
        return m;
    }

    /// Horner evaluation; works for double and std::complex<double>.
    template <typename T>
    [[nodiscard]] T operator()(T s) const {
        T acc = T(c_.back());
        for (std::size_t k = c_.size() - 1; k-- > 0;) acc = acc * s + T(c_[k]);
        return acc;
    }

    [[nodiscard]] Polynomial derivative() const {
        if (c_.size() == 1) return Polynomial{};
        std::vector<double> d(c_.size() - 1);
        for (std::size_t k = 1; k < c_.size(); ++k) d[k - 1] = static_cast<double>(k) * c_[k];
        return Polynomial(std::move(d));
    }

    Polynomial operator-() const {
        std::vector<double> c = c_;
        for (double& v : c) v = -v;
        return Polynomial(std::move(c));
    }

    friend Polynomial operator+(const Polynomial& a, const Polynomial& b) {
        std::vector<double> c(std::max(a.c_.size(), b.c_.size()), 0.0);
        for (std::size_t k = 0; k < c.size(); ++k) c[k] = a[k] + b[k];
        return Polynomial(std::move(c));
    }
    friend Polynomial operator-(const Polynomial& a, const Polynomial& b) { return a + (-b); }

    friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
        std::vector<double> c(a.c_.size() + b.c_.size() - 1, 0.0);
        for (std::size_t i = 0; i < a.c_.size(); ++i)
            for (std::size_t j = 0; j < b.c_.size(); ++j) c[i + j] += a.c_[i] * b.c_[j];
        return Polynomial(std::move(c));
    }
    friend Polynomial operator*(double k, const Polynomial& p) {
        std::vector<double> c = p.c_;
        for (double& v : c) v *= k;
        return Polynomial(std::move(c));
    }
    friend Polynomial operator*(const Polynomial& p, double k) { return k * p; }

    friend bool operator==(const Polynomial&, const Polynomial&) = default;

private:
    void trim() {
        if (c_.empty()) c_.push_back(0.0);
        while (c_.size() > 1 && c_.back() == 0.0) c_.pop_back();
    }

    std::vector<double> c_;
};

/// Coefficient-wise equality relative to the larger coefficient magnitude of the pair.
inline bool approx_equal(const Polynomial& a, const Polynomial& b, double rel_tol = kCoeffRelTol) {
    const double scale = std::max({a.max_abs_coeff(), b.max_abs_coeff(), std::numeric_limits<double>::min()});
    const std::size_t n = std::max(a.degree(), b.degree()) + 1;
    for (std::size_t k = 0; k < n; ++k)
        if (std::abs(a[k] - b[k]) > rel_tol * scale) return false;
    return true;
}

namespace detail {

inline cplx newton_polish(const Polynomial& p, cplx z, int iterations = 4) {
    const Polynomial dp = p.derivative();
    double best = std::abs(p(z));
    for (int it = 0; it < iterations && best > 0.0; ++it) {
        const cplx d = dp(z);
        if (d == cplx{}) break;
        const cplx candidate = z - p(z) / d;
        const double r = std::abs(p(candidate));
        if (!(r < best)) break;
        z = candidate;
        best = r;
    }
    return z;
}

// Makes complex roots of a real polynomial exact conjugate pairs.
inline void pair_conjugates(std::vector<cplx>& roots, double imag_tol) {
    std::vector<bool> used(roots.size(), false);
    for (std::size_t i = 0; i < roots.size(); ++i) {
        if (used[i]) continue;
        if (std::abs(roots[i].imag()) <= imag_tol) {
            roots[i] = {roots[i].real(), 0.0};
            used[i] = true;
            continue;
        }
        std::size_t best = roots.size();
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t j = i + 1; j < roots.size(); ++j) {
            if (used[j]) continue;
            const double dist = std::abs(roots[j] - std::conj(roots[i]));
            if (dist < best_dist) {
                best_dist = dist;
                best = j;
            }
        }
        used[i] = true;
        if (best == roots.size() || best_dist > 1e-6 * (1.0 + std::abs(roots[i]))) continue;
        used[best] = true;
        const cplx mean{0.5 * (roots[i].real() + roots[best].real()),
                        0.5 * (std::abs(roots[i].imag()) + std::abs(roots[best].imag()))};
        roots[i] = mean;
        roots[best] = std::conj(mean);
    }
}

inline std::vector<cplx> monic_quadratic_roots(double b, double c) {
    const double disc = b * b - 4.0 * c;
    if (disc >= 0.0) {
        const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
        if (q == 0.0) return {cplx{0.0}, cplx{0.0}};
        return {cplx{q}, cplx{c / q}};
    }
    const double im = 0.5 * std::sqrt(-disc);
    return {cplx{-0.5 * b, im}, cplx{-0.5 * b, -im}};
}

// x^3 + a x^2 + b x + c, trigonometric / Cardano split on the discriminant.
inline std::vector<cplx> monic_cubic_roots(double a, double b, double c) {
    constexpr double kPi = 3.14159265358979323846;
    const double q = (a * a - 3.0 * b) / 9.0;
    const double r = (2.0 * a * a * a - 9.0 * a * b + 27.0 * c) / 54.0;
    const double q3 = q * q * q;
    const double shift = a / 3.0;
    if (r * r < q3) {
        const double theta = std::acos(std::clamp(r / std::sqrt(q3), -1.0, 1.0));
        const double m = -2.0 * std::sqrt(q);
        return {cplx{m * std::cos(theta / 3.0) - shift},
                cplx{m * std::cos((theta + 2.0 * kPi) / 3.0) - shift},
                cplx{m * std::cos((theta - 2.0 * kPi) / 3.0) - shift}};
    }
    const double big_a = -std::copysign(std::cbrt(std::abs(r) + std::sqrt(r * r - q3)), r);
    const double big_b = big_a == 0.0 ? 0.0 : q / big_a;
    const double re = -0.5 * (big_a + big_b) - shift;
    const double im = 0.5 * std::sqrt(3.0) * (big_a - big_b);
    return {cplx{big_a + big_b - shift}, cplx{re, im}, cplx{re, -im}};
}

inline std::vector<cplx> companion_roots(const Polynomial& monic) {
    const std::size_t n = monic.degree();
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 1; i < n; ++i) companion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
    for (std::size_t i = 0; i < n; ++i) companion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n - 1)) = -monic[i];
    Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
    if (solver.info() != Eigen::Success) throw Error(Errc::numerical, "companion eigen-solver did not converge");
    std::vector<cplx> out;
    out.reserve(n);
    for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) out.push_back(solver.eigenvalues()[i]);
    return out;
}

}  // namespace detail

/// All deg(p) roots of p, with multiplicity. Exact zero roots are factored out
/// first; degrees 1..3 use closed forms, higher degrees a companion-matrix
/// eigen-solve. Every root is Newton-polished against p.
inline std::vector<cplx> roots(const Polynomial& p) {
    if (p.degree() == 0) throw Error(Errc::invalid_argument, "roots of a degree-0 polynomial are undefined");

    std::size_t zeros = 0;
    while (p[zeros] == 0.0) ++zeros;
    std::vector<double> reduced(p.coeffs().begin() + static_cast<std::ptrdiff_t>(zeros), p.coeffs().end());
    const double lead = reduced.back();
    for (double& v : reduced) v /= lead;
    const Polynomial monic(std::move(reduced));

    std::vector<cplx> out(zeros, cplx{0.0});
    std::vector<cplx> found;
    switch (monic.degree()) {
        case 0: break;
        case 1: found = {cplx{-monic[0]}}; break;
        case 2: found = detail::monic_quadratic_roots(monic[1], monic[0]); break;
        case 3: found = detail::monic_cubic_roots(monic[2], monic[1], monic[0]); break;
        default: found = detail::companion_roots(monic); break;
    }
    for (cplx& z : found) z = detail::newton_polish(monic, z);
    detail::pair_conjugates(found, 1e-14 * std::max(1.0, monic.max_abs_coeff()));
    out.insert(out.end(), found.begin(), found.end());
    return out;
}

/// Ratio num/den stored with a monic denominator (leading coefficient 1).
class RationalTF {
public:
    RationalTF() : num_{0.0}, den_{1.0} {}
    RationalTF(Polynomial num, Polynomial den) : num_(std::move(num)), den_(std::move(den)) {
        if (den_.is_zero()) throw Error(Errc::invalid_argument, "transfer function denominator is the zero polynomial");
        const double lead = den_.leading();
        num_ = (1.0 / lead) * num_;
        den_ = (1.0 / lead) * den_;
    }

    static RationalTF constant(double k) { return {Polynomial{k}, Polynomial{1.0}}; }
    /// k / s
    static RationalTF integrator(double k) { return {Polynomial{k}, Polynomial{0.0, 1.0}}; }

    [[nodiscard]] const Polynomial& num() const noexcept { return num_; }
    [[nodiscard]] const Polynomial& den() const noexcept { return den_; }
    [[nodiscard]] bool is_zero() const noexcept { return num_.is_zero(); }

    [[nodiscard]] cplx operator()(cplx s) const { return num_(s) / den_(s); }
    [[nodiscard]] double dc_gain() const { return num_[0] / den_[0]; }

    friend RationalTF operator+(const RationalTF& a, const RationalTF& b) {
        return {a.num_ * b.den_ + b.num_ * a.den_, a.den_ * b.den_};
    }
    friend RationalTF operator-(const RationalTF& a, const RationalTF& b) {
        return {a.num_ * b.den_ - b.num_ * a.den_, a.den_ * b.den_};
    }
    friend RationalTF operator*(const RationalTF& a, const RationalTF& b) {
        return {a.num_ * b.num_, a.den_ * b.den_};
    }
    friend RationalTF operator*(double k, const RationalTF& a) { return {k * a.num_, a.den_}; }

private:
    Polynomial num_;
    Polynomial den_;
};

inline bool approx_equal(const RationalTF& a, const RationalTF& b, double rel_tol = kCoeffRelTol) {
    return approx_equal(a.num(), b.num(), rel_tol) && approx_equal(a.den(), b.den(), rel_tol);
}

enum class ArithOp { add, sub, mul };

/// Coefficient-level arithmetic; no pole-zero cancellation is attempted.
inline RationalTF arith(const RationalTF& a, const RationalTF& b, ArithOp op) {
    switch (op) {
        case ArithOp::add: return a + b;
        case ArithOp::sub: return a - b;
        case ArithOp::mul: return a * b;
    }
    throw Error(Errc::invalid_argument, "unknown arithmetic operation");
}

/// Unity negative feedback around `loop`: L / (1 + L).
inline RationalTF feedback(const RationalTF& loop) {
    Polynomial den = loop.den() + loop.num();
    if (den.is_zero()) throw Error(Errc::degenerate_loop, "1 + L(s) is identically zero");
    return {loop.num(), std::move(den)};
}

/// tf(j*omega) for each omega (per-unit angular frequency).
inline std::vector<cplx> freq_response(const RationalTF& tf, std::span<const double> omegas, double pole_tol = 1e-12) {
    std::vector<cplx> out;
    out.reserve(omegas.size());
    for (double w : omegas) {
        const cplx s{0.0, w};
        const cplx d = tf.den()(s);
        double scale = 0.0;
        double wk = 1.0;
        for (double c : tf.den().coeffs()) {
            scale += std::abs(c) * wk;
            wk *= std::abs(w);
        }
        if (std::abs(d) <= pole_tol * scale)
            throw Error(Errc::pole_on_grid, "imaginary-axis pole at omega = " + std::to_string(w) + " p.u.");
        out.push_back(tf.num()(s) / d);
    }
    return out;
}

/// n points log-spaced over [lo, hi], both ends included.
inline std::vector<double> logspace(double lo, double hi, std::size_t n) {
    if (!(lo > 0.0) || !(hi > lo) || n < 2) throw Error(Errc::invalid_argument, "logspace needs 0 < lo < hi and n >= 2");
    std::vector<double> out(n);
    const double a = std::log10(lo);
    const double step = (std::log10(hi) - a) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) out[i] = std::pow(10.0, a + step * static_cast<double>(i));
    out.front() = lo;
    out.back() = hi;
    return out;
}

}  // namespace gfpc
