#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

#include "bosonic/measurement.hpp"
#include "bosonic/mixture.hpp"

namespace bosonic {

// Axis limits in units of sqrt(hbar).
struct GridSpec {
    double qmin = -5, qmax = 5;
    int nq = 101;
    double pmin = -5, pmax = 5;
    int np = 101;

    static GridSpec square(double half_width, int n) { return {-half_width, half_width, n, -half_width, half_width, n}; }
    void validate() const {
        if (nq < 2 || np < 2 || !(qmax > qmin) || !(pmax > pmin)) throw InvalidParameter("grid needs >= 2 points and max > min");
    }
};

struct WignerGrid {
    std::vector<double> q, p;  // absolute coordinates
    RMat w;                    // w(i, j) at (q[i], p[j])
    double imag_ratio = 0.0;   // max|Im W| / max|Re W|
};

inline std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
    return v;
}

inline WignerGrid wigner_grid(const State& s, const GridSpec& g) {
    if (s.num_modes() != 1) throw InvalidModes("wigner_grid needs a single-mode state; trace out the rest first");
    g.validate();
    const double u = std::sqrt(s.hbar());
    WignerGrid out;
    out.q = linspace(g.qmin * u, g.qmax * u, g.nq);
    out.p = linspace(g.pmin * u, g.pmax * u, g.np);
    out.w.resize(g.nq, g.np);
    MixtureEvaluator ev(s);
    double mi = 0.0, mr = 0.0;
    for (int i = 0; i < g.nq; ++i)
        for (int j = 0; j < g.np; ++j) {
            const double x[2] = {out.q[i], out.p[j]};
            const cplx w = ev(x);
            out.w(i, j) = w.real();
            mi = std::max(mi, std::abs(w.imag()));
            mr = std::max(mr, std::abs(w.real()));
        }
    out.imag_ratio = mr > 0 ? mi / mr : 0.0;
    return out;
}

// chi(r) = integral of W(xi) exp(i xi^T Omega r).
inline cplx characteristic_fn(const State& s, const RVec& r) {
    if (r.size() != s.dim()) throw DimensionMismatch("characteristic function argument size");
    const RVec k = omega(s.num_modes()) * r;
    const CVec kc = k.cast<cplx>();
    std::vector<cplx> quad(s.covs().size());
    for (std::size_t i = 0; i < quad.size(); ++i) quad[i] = (kc.transpose() * s.cov(static_cast<int>(i)) * kc)(0, 0);
    cplx acc = 0.0;
    for (const auto& p : s.peaks()) acc += std::exp(p.lw + cplx(0, 1) * kc.dot(p.mean) - 0.5 * quad[p.cov]);
    return acc;
}

// tr(rho_a rho_b) = (2 pi hbar)^N * integral of W_a W_b.
inline double state_overlap(const State& a, const State& b) {
    if (a.num_modes() != b.num_modes()) throw DimensionMismatch("overlap of states with different mode counts");
    if (a.hbar() != b.hbar()) throw HbarMismatch("overlap of states with different hbar");
    std::vector<std::vector<std::pair<CMat, cplx>>> fac(a.covs().size(), std::vector<std::pair<CMat, cplx>>(b.covs().size()));
    for (std::size_t i = 0; i < a.covs().size(); ++i)
        for (std::size_t j = 0; j < b.covs().size(); ++j) {
            SymLDLT f(a.cov(static_cast<int>(i)) + b.cov(static_cast<int>(j)));
            fac[i][j] = {f.inverse(), -f.log_sqrt_det_2pi()};
        }
    const double lpre = a.num_modes() * std::log(2 * kPi * a.hbar());
    cplx acc = 0.0, mag = 0.0;
    for (const auto& pa : a.peaks())
        for (const auto& pb : b.peaks()) {
            const auto& [inv, ln] = fac[pa.cov][pb.cov];
            const CVec d = pa.mean - pb.mean;
            const cplx t = std::exp(pa.lw + pb.lw + ln + lpre - 0.5 * (d.transpose() * inv * d)(0, 0));
            acc += t;
            mag += std::abs(t);
        }
    return detail::checked_probability(acc, std::abs(mag) + 1e-300);
}

// Wigner function of |n><n|.
inline double fock_wigner(int n, double q, double p, double hbar) {
    const double x = 2 * (q * q + p * p) / hbar;
    double l0 = 1.0, l1 = 1.0 - x;
    double ln = n == 0 ? l0 : l1;
    for (int k = 1; k < n; ++k) {
        const double l2 = ((2 * k + 1 - x) * l1 - k * l0) / (k + 1);
        l0 = l1;
        l1 = l2;
        ln = l2;
    }
    return (n % 2 ? -1.0 : 1.0) / (kPi * hbar) * std::exp(-x / 2) * ln;
}

struct FidelityResult {
    double fidelity = 0.0;
    int points = 0;          // per axis at convergence
    double last_change = 0.0;
};

// <n|rho|n> by trapezoid quadrature of (2 pi hbar) * integral W_rho W_n, refining the grid until two
// successive values agree to tol. The box reaches where the Fock Wigner function is below 1e-16.
inline FidelityResult fock_fidelity_detail(const State& s, int n, double tol = 1e-10, int max_points = 2049) {
    if (s.num_modes() != 1) throw InvalidModes("fock_fidelity needs a single-mode state");
    if (n < 0) throw InvalidParameter("photon number must be non-negative");
    const double hbar = s.hbar();
    double L = std::sqrt(hbar) * (std::sqrt(2.0 * n + 1) + 6.5);
    MixtureEvaluator ev(s);
    auto integrate = [&](int m) {
        const double h = 2 * L / (m - 1);
        double acc = 0.0;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                const double x[2] = {-L + i * h, -L + j * h};
                acc += ev(x).real() * fock_wigner(n, x[0], x[1], hbar);
            }
        return acc * h * h * 2 * kPi * hbar;
    };
    FidelityResult r;
    int m = 65;
    double prev = integrate(m);
    for (m = 2 * m - 1; m <= max_points; m = 2 * m - 1) {
        const double cur = integrate(m);
        r.last_change = std::abs(cur - prev);
        prev = cur;
        r.points = m;
        if (r.last_change <= tol) break;
    }
    r.fidelity = prev;
    return r;
}

inline double fock_fidelity(const State& s, int n) { return fock_fidelity_detail(s, n).fidelity; }

// ---------------------------------------------------------------------------
// CSV output

inline void write_wigner_csv(const WignerGrid& g, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw InvalidParameter("cannot open " + path);
    f << "q,p,w\n" << std::setprecision(17);
    for (std::size_t i = 0; i < g.q.size(); ++i)
        for (std::size_t j = 0; j < g.p.size(); ++j) f << g.q[i] << ',' << g.p[j] << ',' << g.w(i, j) << '\n';
}

inline void write_marginal_csv(const std::vector<double>& x, const std::vector<double>& d, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw InvalidParameter("cannot open " + path);
    f << "x,density\n" << std::setprecision(17);
    for (std::size_t i = 0; i < x.size(); ++i) f << x[i] << ',' << d[i] << '\n';
}

inline std::vector<double> marginal_on(const Mixture& m, const std::vector<double>& xs) {
    if (m.dim() != 1) throw DimensionMismatch("marginal_on needs a one-dimensional mixture");
    MixtureEvaluator ev(m);
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = ev(&xs[i]).real();
    return out;
}

}  // namespace bosonic
