#pragma once

#include <map>
#include <utility>
#include <vector>

#include "bosonic/mixture.hpp"

namespace bosonic::detail {

// Projection target on the B quadratures: sum_j d_j G_{mu_j, Sigma_j}.
// A plain general-dyne outcome is the one-term case d=1, mu=r, Sigma=Sigma_M.
// Sigma_j may be zero (homodyne limit after the unmeasured quadratures were dropped).
struct Target {
    std::vector<cplx> lw;
    std::vector<CVec> means;
    std::vector<int> cov;
    std::vector<CMat> covs;
};

struct Conditioned {
    State state;                                // unnormalized: total weight = outcome probability
    std::vector<std::pair<int, int>> source;    // (state peak, target peak) behind every output peak
};

// Schur-complement update of every (peak, target-term) pair.
//   Sigma_A' = Sigma_AA - Sigma_AB (Sigma_BB + Sigma_j)^{-1} Sigma_BA
//   mu_A'    = mu_A + Sigma_AB (Sigma_BB + Sigma_j)^{-1} (mu_j - mu_B)
//   c'       = c d_j G_{mu_B, Sigma_BB + Sigma_j}(mu_j)
// `a_idx` lists kept quadratures in output order; out_modes = a_idx.size()/2.
inline Conditioned condition_kernel(const State& s, const std::vector<int>& a_idx, const std::vector<int>& b_idx,
                                    const Target& t) {
    const int na = static_cast<int>(a_idx.size());
    if (na % 2 != 0) throw InvalidModes("kept quadratures must come in (q,p) pairs");
    Conditioned out{State(na / 2, s.hbar()), {}};
    out.state.diag = s.diag;

    struct Pre {
        CMat K;         // Sigma_AB S^{-1}
        CMat Sinv;
        cplx lognorm;   // -log sqrt det(2 pi S)
        int out_cov;
    };
    std::map<std::pair<int, int>, Pre> pre;
    auto get = [&](int ic, int jc) -> const Pre& {
        auto key = std::make_pair(ic, jc);
        auto it = pre.find(key);
        if (it != pre.end()) return it->second;
        const CMat& c = s.cov(ic);
        const CMat S = select(c, b_idx, b_idx) + t.covs[jc];
        SymLDLT f(S);
        Pre p;
        p.Sinv = f.inverse();
        p.lognorm = -f.log_sqrt_det_2pi();
        if (na > 0) {
            const CMat sab = select(c, a_idx, b_idx);
            p.K = sab * p.Sinv;
            CMat ca = select(c, a_idx, a_idx) - p.K * sab.transpose();
            ca = 0.5 * (ca + ca.transpose()).eval();
            p.out_cov = out.state.add_cov(ca);
        } else {
            p.out_cov = out.state.add_cov(CMat(0, 0));
        }
        return pre.emplace(key, std::move(p)).first->second;
    };

    out.state.reserve(s.size() * t.lw.size());
    out.source.reserve(s.size() * t.lw.size());
    CVec mb(b_idx.size()), ma(na);
    for (std::size_t m = 0; m < s.size(); ++m) {
        const Peak& pk = s.peaks()[m];
        for (std::size_t i = 0; i < b_idx.size(); ++i) mb(i) = pk.mean(b_idx[i]);
        for (int i = 0; i < na; ++i) ma(i) = pk.mean(a_idx[i]);
        for (std::size_t j = 0; j < t.lw.size(); ++j) {
            const Pre& p = get(pk.cov, t.cov[j]);
            const CVec diff = t.means[j] - mb;
            const cplx quad = (diff.transpose() * p.Sinv * diff)(0, 0);
            const cplx lw = pk.lw + t.lw[j] + p.lognorm - 0.5 * quad;
            if (!std::isfinite(lw.real())) continue;
            CVec mean = na > 0 ? CVec(ma + p.K * diff) : CVec(0);
            out.state.add_peak_log(lw, std::move(mean), p.out_cov);
            out.source.emplace_back(static_cast<int>(m), static_cast<int>(j));
        }
    }
    return out;
}

// Complement of `b_idx` within 0..dim-1, in increasing order.
inline std::vector<int> complement(int dim, const std::vector<int>& b_idx) {
    std::vector<char> used(dim, 0);
    for (int i : b_idx) used[i] = 1;
    std::vector<int> a;
    for (int i = 0; i < dim; ++i)
        if (!used[i]) a.push_back(i);
    return a;
}

}  // namespace bosonic::detail
