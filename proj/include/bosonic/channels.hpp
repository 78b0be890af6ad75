#pragma once

#include <cmath>
#include <vector>

#include "bosonic/conditioning.hpp"
#include "bosonic/mixture.hpp"

namespace bosonic {

// Sigma -> X Sigma X^T + Y, mu -> X mu + d, on a contiguous block of |X|/2 modes.
struct GaussianChannel {
    RMat X;
    RMat Y;
    RVec d;

    int num_modes() const { return static_cast<int>(X.rows() / 2); }
};

struct SymplecticOp {
    RMat S;
    RVec d;

    int num_modes() const { return static_cast<int>(S.rows() / 2); }
    GaussianChannel channel() const { return {S, RMat::Zero(S.rows(), S.cols()), d}; }
};

// Smallest eigenvalue of the Hermitian matrix Y + i(hbar/2)Omega - i(hbar/2) X Omega X^T.
inline double channel_validity_margin(const GaussianChannel& c, double hbar) {
    const RMat w = omega(c.num_modes());
    const CMat h = c.Y.cast<cplx>() + cplx(0, hbar / 2) * (w - c.X * w * c.X.transpose()).cast<cplx>();
    Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (h + h.adjoint()));
    return es.eigenvalues().minCoeff();
}

inline bool is_valid_channel(const GaussianChannel& c, double hbar, double tol = 1e-10) {
    if (c.X.rows() != c.X.cols() || c.Y.rows() != c.X.rows() || c.Y.cols() != c.X.cols() || c.d.size() != c.X.rows() ||
        c.X.rows() % 2 != 0)
        return false;
    return channel_validity_margin(c, hbar) >= -tol;
}

inline void require_valid(const GaussianChannel& c, double hbar) {
    if (!is_valid_channel(c, hbar)) throw InvalidChannel("channel violates the complete-positivity condition");
}

inline bool is_symplectic(const RMat& S, double tol = 1e-10) {
    if (S.rows() != S.cols() || S.rows() % 2 != 0) return false;
    const RMat w = omega(static_cast<int>(S.rows() / 2));
    return (S * w * S.transpose() - w).cwiseAbs().maxCoeff() <= tol;
}

// compose(first, second): apply `first`, then `second`.
inline GaussianChannel compose(const GaussianChannel& first, const GaussianChannel& second) {
    if (first.X.rows() != second.X.rows()) throw DimensionMismatch("composing channels of different size");
    return {second.X * first.X, second.X * first.Y * second.X.transpose() + second.Y, second.X * first.d + second.d};
}

// ---------------------------------------------------------------------------
// Single-mode channels

inline GaussianChannel identity_channel(int modes = 1) {
    const int n = 2 * modes;
    return {RMat::Identity(n, n), RMat::Zero(n, n), RVec::Zero(n)};
}

inline GaussianChannel loss(double eta, double hbar = 2.0) {
    if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidParameter("loss transmissivity must lie in [0,1]");
    return {std::sqrt(eta) * RMat::Identity(2, 2), (1.0 - eta) * hbar / 2 * RMat::Identity(2, 2), RVec::Zero(2)};
}

inline GaussianChannel thermal_loss(double eta, double nbar, double hbar = 2.0) {
    if (nbar < 0) throw InvalidParameter("thermal occupation must be non-negative");
    GaussianChannel c = loss(eta, hbar);
    c.Y *= (2 * nbar + 1);
    return c;
}

inline GaussianChannel random_displacement(double sigma2) {
    if (sigma2 < 0) throw InvalidParameter("displacement variance must be non-negative");
    return {RMat::Identity(2, 2), sigma2 * RMat::Identity(2, 2), RVec::Zero(2)};
}

inline GaussianChannel amplifier(double kappa, double hbar = 2.0) {
    if (kappa < 1.0) throw InvalidParameter("amplifier gain must be >= 1");
    return {kappa * RMat::Identity(2, 2), (kappa * kappa - 1) * hbar / 2 * RMat::Identity(2, 2), RVec::Zero(2)};
}

inline GaussianChannel displacement(cplx alpha, double hbar = 2.0) {
    RVec d(2);
    d << std::sqrt(2 * hbar) * alpha.real(), std::sqrt(2 * hbar) * alpha.imag();
    return {RMat::Identity(2, 2), RMat::Zero(2, 2), d};
}

inline GaussianChannel displacement_qp(double dq, double dp) {
    RVec d(2);
    d << dq, dp;
    return {RMat::Identity(2, 2), RMat::Zero(2, 2), d};
}

// ---------------------------------------------------------------------------
// Symplectic matrices (mode-wise ordering)

inline SymplecticOp rotation(double theta) {
    RMat r(2, 2);
    r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    return {r, RVec::Zero(2)};
}

// S(r) = diag(e^{-r}, e^{r}); r > 0 squeezes q.
inline SymplecticOp squeeze_symplectic(double r) {
    RMat s = RMat::Zero(2, 2);
    s(0, 0) = std::exp(-r);
    s(1, 1) = std::exp(r);
    return {s, RVec::Zero(2)};
}

// Squeezing along the axis rotated by phi/2: R(phi/2) S(r) R(phi/2)^T.
inline SymplecticOp squeeze_symplectic(double r, double phi) {
    const RMat R = rotation(phi / 2).S;
    return {R * squeeze_symplectic(r).S * R.transpose(), RVec::Zero(2)};
}

// [[c 1, s 1], [-s 1, c 1]] acting on (q1,p1,q2,p2).
inline SymplecticOp beamsplitter(double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    RMat b = RMat::Zero(4, 4);
    for (int i = 0; i < 2; ++i) {
        b(i, i) = c;
        b(i, i + 2) = s;
        b(i + 2, i) = -s;
        b(i + 2, i + 2) = c;
    }
    return {b, RVec::Zero(4)};
}

// exp(i s q^2 / 2hbar): p -> p + s q.
inline SymplecticOp phase_symplectic(double s) {
    RMat m = RMat::Identity(2, 2);
    m(1, 0) = s;
    return {m, RVec::Zero(2)};
}

// Control = first mode. q2 -> q2 + s q1, p1 -> p1 - s p2.
inline SymplecticOp cx_symplectic(double s) {
    RMat m = RMat::Identity(4, 4);
    m(2, 0) = s;
    m(1, 3) = -s;
    return {m, RVec::Zero(4)};
}

inline SymplecticOp direct_sum(const SymplecticOp& a, const SymplecticOp& b) {
    const auto na = a.S.rows(), nb = b.S.rows();
    RMat m = RMat::Zero(na + nb, na + nb);
    m.topLeftCorner(na, na) = a.S;
    m.bottomRightCorner(nb, nb) = b.S;
    RVec d(na + nb);
    d << a.d, b.d;
    return {m, d};
}

// p1 -> p1 + s q2, p2 -> p2 + s q1: the CX conjugated by a quarter turn on mode 2.
inline SymplecticOp cz_symplectic(double s) {
    const SymplecticOp fwd = direct_sum(rotation(0), rotation(kPi / 2));
    const SymplecticOp back = direct_sum(rotation(0), rotation(-kPi / 2));
    return {fwd.S * cx_symplectic(s).S * back.S, RVec::Zero(4)};
}

// Beam splitters and opposite squeezers that realize CX(s):
//   CX(s) = BS(-(theta + pi/2)) [S(r) (+) S(-r)] BS(-theta),
// r = asinh(-s/2), theta = atan2(-2, s)/2. The angles enter with a minus sign because the
// beam splitter above carries +sin in its upper-right block; atan2 picks the branch that
// also works for s < 0.
struct CxDecomposition {
    double r;
    double theta;
    SymplecticOp bs_in, bs_out;
    SymplecticOp product() const {
        return {bs_out.S * direct_sum(squeeze_symplectic(r), squeeze_symplectic(-r)).S * bs_in.S, RVec::Zero(4)};
    }
};

inline CxDecomposition cx_decomposition(double s) {
    if (s == 0.0) throw InvalidParameter("CX decomposition undefined for s = 0");
    CxDecomposition d;
    d.r = std::asinh(-s / 2);
    d.theta = 0.5 * std::atan2(-2.0, s);
    d.bs_in = beamsplitter(-d.theta);
    d.bs_out = beamsplitter(-(d.theta + kPi / 2));
    return d;
}

// Phase gate as rotation times squeezer: P(s) = R(theta) S(r, phi).
struct PhaseDecomposition {
    double theta, r, phi;
};
inline PhaseDecomposition phase_decomposition(double s) {
    PhaseDecomposition d;
    d.theta = std::atan(s / 2);
    d.phi = -(s > 0 ? 1.0 : (s < 0 ? -1.0 : 0.0)) * kPi / 2 - d.theta;
    d.r = std::acosh(std::sqrt(1 + s * s / 4));
    return d;
}

// ---------------------------------------------------------------------------
// Application

// Channel on `modes` of a larger register, identity elsewhere.
inline GaussianChannel embed(const GaussianChannel& c, int total_modes, const std::vector<int>& modes) {
    if (2 * static_cast<int>(modes.size()) != c.X.rows()) throw DimensionMismatch("channel size does not match mode list");
    const auto idx = quad_indices(modes);
    const int n = 2 * total_modes;
    GaussianChannel e{RMat::Identity(n, n), RMat::Zero(n, n), RVec::Zero(n)};
    for (std::size_t i = 0; i < idx.size(); ++i) {
        e.d(idx[i]) = c.d(i);
        for (std::size_t j = 0; j < idx.size(); ++j) {
            e.X(idx[i], idx[j]) = c.X(i, j);
            e.Y(idx[i], idx[j]) = c.Y(i, j);
        }
    }
    return e;
}

inline State apply_channel(const State& s, const GaussianChannel& c, const std::vector<int>& modes) {
    check_modes(s, modes);
    const GaussianChannel e = embed(c, s.num_modes(), modes);
    State out(s.num_modes(), s.hbar());
    std::vector<int> map(s.covs().size());
    for (std::size_t i = 0; i < s.covs().size(); ++i) {
        CMat cv = e.X.cast<cplx>() * s.cov(static_cast<int>(i)) * e.X.transpose().cast<cplx>() + e.Y.cast<cplx>();
        cv = 0.5 * (cv + cv.transpose()).eval();
        map[i] = out.add_cov(cv);
    }
    const CMat X = e.X.cast<cplx>();
    const CVec d = e.d.cast<cplx>();
    out.reserve(s.size());
    for (const auto& p : s.peaks()) out.add_peak_log(p.lw, X * p.mean + d, map[p.cov]);
    out.diag = s.diag;
    return out;
}

inline State apply_channel(const State& s, const GaussianChannel& c, int mode) {
    return apply_channel(s, c, std::vector<int>{mode});
}

inline State apply_symplectic(const State& s, const SymplecticOp& op, const std::vector<int>& modes) {
    return apply_channel(s, op.channel(), modes);
}
inline State apply_symplectic(const State& s, const SymplecticOp& op, int mode) {
    return apply_channel(s, op.channel(), std::vector<int>{mode});
}

// e^{-eps n} on the listed modes: beam splitter (cos theta = e^{-eps}) against vacuum,
// then projection of the ancilla onto vacuum; weights are renormalized afterwards.
// Works for degenerate covariances (e.g. an ideal delta lattice with Sigma = 0).
inline State fock_damping(const State& s, double epsilon, const std::vector<int>& modes, bool renormalize = true) {
    if (!(epsilon > 0)) throw InvalidParameter("Fock damping strength must be positive");
    check_modes(s, modes);
    const int n = s.num_modes(), t = static_cast<int>(modes.size());
    const double c = std::exp(-epsilon), sn = std::sqrt(1 - c * c);
    const double h2 = s.hbar() / 2;

    // extended covariance/mean: original modes followed by one vacuum ancilla per damped mode
    const int N = 2 * (n + t);
    RMat S = RMat::Identity(N, N);
    for (int k = 0; k < t; ++k) {
        const int a = 2 * modes[k], b = 2 * (n + k);
        for (int i = 0; i < 2; ++i) {
            S(a + i, a + i) = c;
            S(a + i, b + i) = sn;
            S(b + i, a + i) = -sn;
            S(b + i, b + i) = c;
        }
    }
    const CMat Sc = S.cast<cplx>();
    State ext(n + t, s.hbar());
    std::vector<int> map(s.covs().size());
    for (std::size_t i = 0; i < s.covs().size(); ++i) {
        CMat big = CMat::Zero(N, N);
        big.topLeftCorner(2 * n, 2 * n) = s.cov(static_cast<int>(i));
        big.bottomRightCorner(2 * t, 2 * t) = h2 * CMat::Identity(2 * t, 2 * t);
        map[i] = ext.add_cov(Sc * big * Sc.transpose());
    }
    for (const auto& p : s.peaks()) {
        CVec m = CVec::Zero(N);
        m.head(2 * n) = p.mean;
        ext.add_peak_log(p.lw, Sc * m, map[p.cov]);
    }
    std::vector<int> b_idx;
    for (int k = 0; k < 2 * t; ++k) b_idx.push_back(2 * n + k);
    std::vector<int> a_idx(2 * n);
    std::iota(a_idx.begin(), a_idx.end(), 0);
    // (2 pi hbar)^t turns the vacuum overlap into a projector, so the unnormalized total is tr(E rho E^dag)
    detail::Target vac{{t * std::log(2 * kPi * s.hbar())}, {CVec::Zero(2 * t)}, {0}, {h2 * CMat::Identity(2 * t, 2 * t)}};
    auto res = detail::condition_kernel(ext, a_idx, b_idx, vac);
    State out = std::move(res.state);
    out.diag = s.diag;
    if (renormalize) out.normalize();
    return out;
}

inline State fock_damping(const State& s, double epsilon, int mode) {
    return fock_damping(s, epsilon, std::vector<int>{mode});
}

}  // namespace bosonic
