#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bosonic/channels.hpp"
#include "bosonic/mixture.hpp"

namespace bosonic {

enum class Representation { Real, Complex };

// ---------------------------------------------------------------------------
// Gaussian primitives

inline State single_gaussian(const CVec& mean, const CMat& cov, double hbar) {
    State s(static_cast<int>(mean.size() / 2), hbar);
    s.add_peak(1.0, mean, s.add_cov(cov));
    return s;
}

inline State vacuum(int modes = 1, double hbar = 2.0) {
    if (modes < 1) throw InvalidModes("vacuum needs at least one mode");
    return single_gaussian(CVec::Zero(2 * modes), hbar / 2 * CMat::Identity(2 * modes, 2 * modes), hbar);
}

inline State coherent(cplx alpha, double hbar = 2.0) {
    CVec m(2);
    m << std::sqrt(2 * hbar) * alpha.real(), std::sqrt(2 * hbar) * alpha.imag();
    return single_gaussian(m, hbar / 2 * CMat::Identity(2, 2), hbar);
}

// R(phi/2) diag(e^{-2r}, e^{2r}) R(phi/2)^T * hbar/2
inline State squeezed(double r, double phi = 0.0, double hbar = 2.0) {
    const RMat S = squeeze_symplectic(r, phi).S;
    return single_gaussian(CVec::Zero(2), (hbar / 2 * S * S.transpose()).cast<cplx>(), hbar);
}

inline State displaced_squeezed(cplx alpha, double r, double phi = 0.0, double hbar = 2.0) {
    State s = squeezed(r, phi, hbar);
    return apply_channel(s, displacement(alpha, hbar), 0);
}

inline State thermal(double nbar, double hbar = 2.0) {
    if (nbar < 0) throw InvalidParameter("thermal occupation must be non-negative");
    return single_gaussian(CVec::Zero(2), hbar * (nbar + 0.5) * CMat::Identity(2, 2), hbar);
}

// ---------------------------------------------------------------------------
// Qubit amplitudes  cos(theta/2)|0> + e^{-i phi} sin(theta/2)|1>

struct Bloch {
    double theta = 0.0;
    double phi = 0.0;
};

inline Bloch bloch_from_amplitudes(cplx a0, cplx a1) {
    Bloch b;
    b.theta = 2 * std::atan2(std::abs(a1), std::abs(a0));
    b.phi = (std::abs(a0) > 0 && std::abs(a1) > 0) ? -std::arg(a1 / a0) : 0.0;
    return b;
}

// |M> = (e^{-i pi/8}|0> + e^{i pi/8}|1>)/sqrt2
inline Bloch magic_bloch() {
    return bloch_from_amplitudes(std::polar(1 / std::sqrt(2.0), -kPi / 8), std::polar(1 / std::sqrt(2.0), kPi / 8));
}

// ---------------------------------------------------------------------------
// GKP

struct GkpParams {
    double theta = 0.0;
    double phi = 0.0;
    double epsilon = 0.1;
    int cutoff = 12;
    Representation representation = Representation::Real;
    double dust = 1e-12;
};

namespace detail {

inline int mod4(int k) { return ((k % 4) + 4) % 4; }

// Coefficient of the ideal lattice point (k, l) * sqrt(pi hbar)/2, up to the common 1/(4 sqrt(pi)).
inline double gkp_coefficient(int k, int l, double theta, double phi) {
    const bool ke = (k % 2 == 0), le = (l % 2 == 0);
    const int km = mod4(k), lm = mod4(l);
    if (ke && le) return 1.0;
    if (ke) return km == 0 ? std::cos(theta) : -std::cos(theta);
    if (le) return lm == 0 ? std::sin(theta) * std::cos(phi) : -std::sin(theta) * std::cos(phi);
    if (km == lm) return -std::sin(theta) * std::sin(phi);
    return std::sin(theta) * std::sin(phi);
}

// Lattice extent beyond which exp(-a n^2) < e^{-50}.
inline int extent_for(double a) { return static_cast<int>(std::ceil(std::sqrt(50.0 / a))) + 2; }

// Drops dust, keeping the weights tied to the full-lattice normalization, and
// records how much weight lies outside what is stored.
inline State dust_prune_and_flag(State s, double dust) {
    if (dust > 0) {
        const cplx before = s.total_weight();
        s = prune(s, dust);
        s.scale_log(log_of(before) - s.log_total_weight());
    }
    s.diag.truncated_mass = std::abs(1.0 - s.total_weight());
    if (s.diag.truncated_mass > 1e-10)
        s.diag.warnings.push_back("cutoff leaves weight " + std::to_string(s.diag.truncated_mass) +
                                  " outside the stored lattice");
    return s;
}

}  // namespace detail

// Ideal delta lattice: zero covariance, weights from the coefficient table. Not
// evaluable as a Wigner function; it is the input to Fock damping.
inline State gkp_ideal_lattice(double theta, double phi, int cutoff, double hbar = 2.0) {
    State s(1, hbar);
    const int c0 = s.add_cov(CMat::Zero(2, 2));
    const double h = std::sqrt(kPi * hbar) / 2;
    for (int k = -cutoff; k <= cutoff; ++k)
        for (int l = -cutoff; l <= cutoff; ++l) {
            const double c = detail::gkp_coefficient(k, l, theta, phi) / (4 * std::sqrt(kPi));
            if (std::abs(c) < 1e-15) continue;
            CVec m(2);
            m << k * h, l * h;
            s.add_peak(c, m, c0);
        }
    return s;
}

inline State gkp_real(const GkpParams& g, double hbar) {
    const double e2 = std::exp(-2 * g.epsilon);
    const double shrink = 2 * std::exp(-g.epsilon) / (1 + e2);
    const double var = hbar / 2 * (1 - e2) / (1 + e2);
    const double decay = (1 - e2) / (hbar * (1 + e2));  // multiplies |mu|^2 of the ideal point
    const double h = std::sqrt(kPi * hbar) / 2;
    const int full = std::max(g.cutoff, detail::extent_for(decay * h * h));

    auto raw = [&](int k, int l) {
        const double c = detail::gkp_coefficient(k, l, g.theta, g.phi);
        return c * std::exp(-decay * h * h * (double(k) * k + double(l) * l));
    };
    double norm = 0.0;
    for (int k = -full; k <= full; ++k)
        for (int l = -full; l <= full; ++l) norm += raw(k, l);
    if (!(std::abs(norm) > 0)) throw InvalidState("GKP weights sum to zero");

    State s(1, hbar);
    const int c0 = s.add_cov(var * CMat::Identity(2, 2));
    for (int k = -g.cutoff; k <= g.cutoff; ++k)
        for (int l = -g.cutoff; l <= g.cutoff; ++l) {
            const double c = raw(k, l);
            if (std::abs(detail::gkp_coefficient(k, l, g.theta, g.phi)) < 1e-15) continue;
            CVec m(2);
            m << shrink * k * h, shrink * l * h;
            s.add_peak(c / norm, m, c0);
        }
    return detail::dust_prune_and_flag(std::move(s), g.dust);
}

// Dyads of the damped comb teeth n = 2t + bit; ket tooth n_j, bra tooth n_i.
inline State gkp_complex(const GkpParams& g, double hbar) {
    const double al = 1.0 / std::tanh(g.epsilon);
    const double be = -1.0 / std::sinh(g.epsilon);
    const double sq = std::sqrt(kPi * hbar);
    const cplx a[2] = {std::cos(g.theta / 2), std::polar(std::sin(g.theta / 2), -g.phi)};

    auto logc = [&](int nj, int ni, int bj, int bi) -> cplx {
        const cplx amp = a[bj] * std::conj(a[bi]);
        if (std::abs(amp) < 1e-300) return cplx(-std::numeric_limits<double>::infinity(), 0);
        return std::log(amp) - al * kPi * (double(nj) * nj + double(ni) * ni) / 2 +
               be * be * kPi * double(ni + nj) * (ni + nj) / (4 * al);
    };
    // full-lattice normalization: tooth amplitudes fall like exp(-pi n^2 / (2 alpha))
    const int full = std::max(g.cutoff, detail::extent_for(kPi / (2 * al) * 4) + 2);
    cplx norm = 0.0;
    for (int bj = 0; bj < 2; ++bj)
        for (int bi = 0; bi < 2; ++bi)
            for (int t = -full; t <= full; ++t)
                for (int u = -full; u <= full; ++u) {
                    const cplx l = logc(2 * t + bj, 2 * u + bi, bj, bi);
                    if (std::isfinite(l.real())) norm += std::exp(l);
                }
    if (!(std::abs(norm) > 0)) throw InvalidState("GKP weights sum to zero");
    const cplx lnorm = std::log(norm);

    State s(1, hbar);
    CMat cv = CMat::Zero(2, 2);
    cv(0, 0) = hbar / 2 / al;
    cv(1, 1) = hbar / 2 * al;
    const int c0 = s.add_cov(cv);
    for (int bj = 0; bj < 2; ++bj)
        for (int bi = 0; bi < 2; ++bi)
            for (int t = -g.cutoff; t <= g.cutoff; ++t)
                for (int u = -g.cutoff; u <= g.cutoff; ++u) {
                    const int nj = 2 * t + bj, ni = 2 * u + bi;
                    const cplx l = logc(nj, ni, bj, bi);
                    if (!std::isfinite(l.real())) continue;
                    CVec m(2);
                    m << -be * sq * (ni + nj) / (2 * al), cplx(0, be * sq * (nj - ni) / 2);
                    s.add_peak_log(l - lnorm, m, c0);
                }
    return detail::dust_prune_and_flag(std::move(s), g.dust);
}

inline State gkp(const GkpParams& g, double hbar = 2.0) {
    if (!(g.epsilon > 0)) throw InvalidParameter("GKP epsilon must be positive");
    if (g.cutoff < 1) throw InvalidParameter("GKP cutoff must be >= 1");
    return g.representation == Representation::Real ? gkp_real(g, hbar) : gkp_complex(g, hbar);
}

// Smallest lattice cutoff whose stored peaks miss less than `tol` of the weight.
inline int gkp_cutoff_for(double epsilon, double tol = 1e-10, double hbar = 2.0) {
    if (!(epsilon > 0)) throw InvalidParameter("GKP epsilon must be positive");
    for (int c = std::max(4, static_cast<int>(3 / std::sqrt(epsilon))); c <= 1000; ++c) {
        GkpParams g{kPi / 2, kPi / 4, epsilon, c};
        if (gkp_real(g, hbar).diag.truncated_mass < tol) return c;
    }
    throw InvalidParameter("no lattice cutoff reaches the requested truncation");
}

// ---------------------------------------------------------------------------
// cos-modulated Gaussian as a real mixture

namespace detail {

struct RealPeak {
    double w;
    double q, p;
    double vq, vp;
};

// w * G_{(a,0), diag(vq,vp)}(q,p) * cos(omega p + phase), with the cosine written as
// a sum of Gaussians (theta-function identity, truncation error ~exp(-2 pi^2 D)).
inline std::vector<RealPeak> cosine_to_gaussians(double w, double a, double vq, double vp, double omega, double phase,
                                                 double D, double dust) {
    std::vector<RealPeak> out;
    if (omega == 0.0) {
        out.push_back({w * std::cos(phase), a, 0.0, vq, vp});
        return out;
    }
    omega = std::abs(omega);
    const double C = std::exp(kPi * kPi * D / 4) / (2 * std::sqrt(kPi * D));
    const double v2 = kPi * kPi * D / (2 * omega * omega);
    const double vs = vp + v2;
    const double fac = std::sqrt(v2 / vs);
    // terms carry the large factor C and cancel in alternation, so dust is judged against |w|, not the largest term
    const double bmax = std::sqrt(2 * vs * (std::log(C) - std::log(std::max(dust, 1e-300)) + 10));
    const int M = static_cast<int>(std::ceil(bmax * omega / kPi)) + 1;
    const double cph = std::cos(phase), sph = std::sin(phase);
    for (int m2 = -2 * M; m2 <= 2 * M; ++m2) {
        double amp;
        if (m2 % 2 == 0) {
            amp = cph * ((m2 / 2) % 2 == 0 ? 1.0 : -1.0);
        } else {
            const int mm = (m2 - 1) / 2 - (m2 < 0 ? 1 : 0);  // floor((m2-1)/2)
            amp = -sph * (((mm % 2) + 2) % 2 == 0 ? 1.0 : -1.0);
        }
        if (std::abs(amp) < 1e-15) continue;
        const double b = kPi * (m2 / 2.0) / omega;
        const double wt = w * C * amp * fac * std::exp(-b * b / (2 * vs));
        out.push_back({wt, a, b * vp / vs, vq, vp * v2 / vs});
    }
    std::vector<RealPeak> kept;
    for (const auto& r : out)
        if (std::abs(r.w) >= dust * std::abs(w)) kept.push_back(r);
    return kept;
}

inline void add_real_peaks(State& s, const std::vector<RealPeak>& ps) {
    for (const auto& r : ps) {
        CMat cv = CMat::Zero(2, 2);
        cv(0, 0) = r.vq;
        cv(1, 1) = r.vp;
        CVec m(2);
        m << r.q, r.p;
        s.add_peak(r.w, m, s.add_cov(cv));
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Cat states  |alpha> + e^{i pi k}|-alpha>

struct CatParams {
    cplx alpha = 2.0;
    double k = 0.0;
    Representation representation = Representation::Complex;
    double D = 6.0;
    double dust = 1e-12;
};

inline State cat(const CatParams& c, double hbar = 2.0) {
    const double a2 = std::norm(c.alpha);
    const double denom = 1 + std::exp(-2 * a2) * std::cos(kPi * c.k);
    if (std::abs(denom) < 1e-14) throw InvalidState("cat normalization diverges (alpha = 0 with odd parity)");
    const double N = 1.0 / (2 * denom);
    const double sq = std::sqrt(2 * hbar);
    const CMat vac = hbar / 2 * CMat::Identity(2, 2);

    if (c.representation == Representation::Complex) {
        State s(1, hbar);
        const int c0 = s.add_cov(vac);
        CVec mp(2);
        mp << sq * c.alpha.real(), sq * c.alpha.imag();
        s.add_peak(N, mp, c0);
        s.add_peak(N, -mp, c0);
        CVec mz(2);
        mz << cplx(0, sq * c.alpha.imag()), cplx(0, -sq * c.alpha.real());
        const cplx lz = cplx(-2 * a2 + std::log(N), -kPi * c.k);
        s.add_peak_log(lz, mz, c0);
        s.add_peak_log(std::conj(lz), mz.conjugate(), c0);
        return s;
    }

    if (!(c.D > 0)) throw InvalidParameter("cat precision parameter D must be positive");
    const double a = std::abs(c.alpha);
    State s(1, hbar);
    const int c0 = s.add_cov(vac);
    CVec mp(2);
    mp << sq * a, 0.0;
    s.add_peak(N, mp, c0);
    s.add_peak(N, -mp, c0);
    detail::add_real_peaks(
        s, detail::cosine_to_gaussians(2 * N, 0.0, hbar / 2, hbar / 2, 2 * std::sqrt(2 / hbar) * a, kPi * c.k, c.D, c.dust));
    s.normalize();
    if (c.alpha.imag() != 0.0) s = apply_symplectic(s, rotation(std::arg(c.alpha)), 0);
    return s;
}

// ---------------------------------------------------------------------------
// Fock-state approximation from n+1 zero-mean Gaussians

struct FockParams {
    int n = 1;
    double r = 0.05;
};

inline State fock(const FockParams& f, double hbar = 2.0) {
    if (f.n < 0) throw InvalidParameter("photon number must be non-negative");
    if (f.n == 0) return vacuum(1, hbar);
    if (!(f.r > 0)) throw InvalidParameter("construction parameter r must be positive");
    if (f.r >= 1.0 / std::sqrt(double(f.n))) throw Unphysical("fock approximation needs r < 1/sqrt(n)");
    const double r2 = f.r * f.r;
    State s(1, hbar);
    double binom = 1.0;
    for (int m = 0; m <= f.n; ++m) {
        if (m > 0) binom = binom * (f.n - m + 1) / m;
        const int j = f.n - m;
        const double c = ((j % 2) ? -1.0 : 1.0) * binom * (1 - f.n * r2) / (1 - j * r2);
        const double v = hbar / 2 * (1 + j * r2) / (1 - j * r2);
        s.add_peak(c, CVec::Zero(2), s.add_cov(v * CMat::Identity(2, 2)));
    }
    s.normalize();
    return s;
}

// ---------------------------------------------------------------------------
// Equal-squeezing superpositions  sum_n kappa_n D(gamma_n) S(r) |0>

struct Component {
    cplx kappa = 1.0;
    cplx gamma = 0.0;
    double r = 0.0;
};

namespace detail {

// Wigner function of |D(g)S(r)0><D(d)S(r)0| as c * G_{mu, Sigma}.
inline void dyad(cplx g, cplx d, double r, double hbar, cplx& logc, CVec& mu) {
    const double e = std::exp(2 * r);
    mu.resize(2);
    mu << std::sqrt(hbar / 2) * cplx(g.real() + d.real(), (g.imag() - d.imag()) / e),
        std::sqrt(hbar / 2) * cplx(g.imag() + d.imag(), e * (d.real() - g.real()));
    logc = cplx(-0.5 / e * std::pow(g.imag() - d.imag(), 2) - 0.5 * e * std::pow(g.real() - d.real(), 2),
                -d.imag() * g.real() + g.imag() * d.real());
}

}  // namespace detail

inline State gaussian_superposition(const std::vector<Component>& comps, double hbar = 2.0) {
    if (comps.empty()) throw InvalidParameter("superposition needs at least one component");
    const double r = comps.front().r;
    for (const auto& c : comps)
        if (std::abs(c.r - r) > 1e-15) throw Unsupported("superposition components with different squeezing");
    State s(1, hbar);
    CMat cv = CMat::Zero(2, 2);
    cv(0, 0) = hbar / 2 * std::exp(-2 * r);
    cv(1, 1) = hbar / 2 * std::exp(2 * r);
    const int c0 = s.add_cov(cv);
    for (const auto& a : comps)
        for (const auto& b : comps) {
            if (a.kappa == 0.0 || b.kappa == 0.0) continue;
            cplx lc;
            CVec mu;
            detail::dyad(a.gamma, b.gamma, r, hbar, lc, mu);
            s.add_peak_log(lc + std::log(a.kappa * std::conj(b.kappa)), mu, c0);
        }
    s.normalize();
    return s;
}

// ---------------------------------------------------------------------------
// Squeezed combs: N teeth spaced d (absolute phase-space units), per-tooth squeezing r

struct CombParams {
    int N = 3;
    double d = 2 * std::sqrt(2 * kPi);
    double r = 1.0;
    int logical = 0;
    Representation representation = Representation::Complex;
    double D = 6.0;
    double dust = 1e-12;
};

inline State comb(const CombParams& c, double hbar = 2.0) {
    if (c.N < 1) throw InvalidParameter("comb needs at least one tooth");
    if (!(c.d > 0)) throw InvalidParameter("comb spacing must be positive");
    std::vector<double> q(c.N);
    for (int n = 1; n <= c.N; ++n) q[n - 1] = -(c.N + 1) * c.d / 2 + n * c.d + (c.logical ? c.d / 2 : 0.0);
    const double e = std::exp(2 * c.r);
    const double vq = hbar / 2 / e, vp = hbar / 2 * e;
    State s(1, hbar);
    CMat cv = CMat::Zero(2, 2);
    cv(0, 0) = vq;
    cv(1, 1) = vp;

    if (c.representation == Representation::Complex) {
        const int c0 = s.add_cov(cv);
        for (int k = 0; k < c.N; ++k)
            for (int l = 0; l < c.N; ++l) {
                const double dq = q[k] - q[l];
                CVec m(2);
                m << 0.5 * (q[k] + q[l]), cplx(0, 0.5 * e * dq);
                s.add_peak_log(-e * dq * dq / (4 * hbar), m, c0);
            }
        s.normalize();
        return s;
    }

    const int c0 = s.add_cov(cv);
    for (int k = 0; k < c.N; ++k) {
        CVec m(2);
        m << q[k], 0.0;
        s.add_peak(1.0, m, c0);
    }
    for (int k = 0; k < c.N; ++k)
        for (int l = k + 1; l < c.N; ++l) {
            const double dq = q[k] - q[l];
            detail::add_real_peaks(s, detail::cosine_to_gaussians(2.0, 0.5 * (q[k] + q[l]), vq, vp, dq / hbar, 0.0, c.D, c.dust));
        }
    s.normalize();
    return s;
}

}  // namespace bosonic
