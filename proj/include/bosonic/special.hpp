#pragma once

#include <array>
#include <cmath>
#include <complex>

#include "bosonic/linalg.hpp"

namespace bosonic {

namespace detail {

// Weideman's rational expansion of the Faddeeva function, valid for Im z >= 0.
// N=48 keeps the relative error near 2e-14 over the whole half plane.
struct WeidemanTable {
    static constexpr int N = 48;
    std::array<double, N> a{};  // highest power first
    double L = 0.0;

    WeidemanTable() {
        const int M = 2 * N, M2 = 2 * M;
        L = std::sqrt(N / std::sqrt(2.0));
        std::array<double, M2> f{};
        for (int i = 0; i < M2; ++i) {
            const int k = i < M ? i : i - M2;  // k runs over -M..M-1, f(-M) = 0
            if (k == -M) continue;
            const double t = L * std::tan(0.5 * k * kPi / M);
            f[i] = std::exp(-t * t) * (L * L + t * t);
        }
        for (int n = 1; n <= N; ++n) {
            double re = 0.0;
            for (int i = 0; i < M2; ++i) re += f[i] * std::cos(2.0 * kPi * i * n / M2);
            a[N - n] = re / M2;
        }
    }
};

inline const WeidemanTable& weideman() {
    static const WeidemanTable t;
    return t;
}

}  // namespace detail

// w(z) = exp(-z^2) erfc(-iz) for Im z >= 0.
inline cplx faddeeva_upper(cplx z) {
    const auto& t = detail::weideman();
    const cplx iz(-z.imag(), z.real());
    const cplx den = t.L - iz;
    const cplx Z = (t.L + iz) / den;
    cplx p = 0.0;
    for (double c : t.a) p = p * Z + c;
    return 2.0 * p / (den * den) + (1.0 / std::sqrt(kPi)) / den;
}

// log-weight lw, complex mean mu, complex variance v of a 1-D Gaussian term c*G_{mu,v}.
// Returns the integral of the term from -inf to x without overflowing when
// |c| is tiny and the imaginary mean large.
inline cplx gaussian_term_cdf(cplx lw, cplx mu, cplx v, double x) {
    if (mu.imag() == 0.0 && v.imag() == 0.0) return std::exp(lw) * 0.5 * std::erfc((mu.real() - x) / std::sqrt(2.0 * v.real()));
    const cplx u = (mu - x) / std::sqrt(2.0 * v);
    const cplx iu(-u.imag(), u.real());
    if (u.real() >= 0.0) return 0.5 * std::exp(lw - u * u) * faddeeva_upper(iu);
    return std::exp(lw) - 0.5 * std::exp(lw - u * u) * faddeeva_upper(-iu);
}

// erfc for complex argument, built on the same kernel (used in tests and small helpers).
inline cplx erfc_complex(cplx u) {
    const cplx iu(-u.imag(), u.real());
    if (u.real() >= 0.0) return std::exp(-u * u) * faddeeva_upper(iu);
    return 2.0 - std::exp(-u * u) * faddeeva_upper(-iu);
}

}  // namespace bosonic
