#pragma once

#include <cmath>
#include <limits>
#include <unordered_map>
#include <vector>

#include "bosonic/channels.hpp"
#include "bosonic/measurement.hpp"
#include "bosonic/mixture.hpp"

namespace bosonic {

// Homodyne of one mode of ch(a (x) b), computed pair by pair so the product
// (|a| * |b| peaks) is never stored. Used where one round of a circuit would
// otherwise hold tens of millions of peaks that the measurement mostly discards.
class ProductHomodyne {
public:
    ProductHomodyne(const State& a, const State& b, const GaussianChannel& ch, const Homodyne& h)
        : a_(a), b_(b), hbar_(a.hbar()), modes_(a.num_modes() + b.num_modes()) {
        if (a.hbar() != b.hbar()) throw HbarMismatch("product of states with different hbar");
        if (h.modes.size() != 1) throw DimensionMismatch("single-mode homodyne expected");
        const int m = h.modes[0];
        if (m < 0 || m >= modes_) throw InvalidModes("measured mode out of range");
        if (ch.num_modes() != modes_) throw DimensionMismatch("channel does not act on the product");
        if (modes_ < 2) throw InvalidModes("product needs at least two modes");
        if (a.empty() || b.empty()) throw EmptyMixture("product of an empty mixture");
        ch_ = compose(ch, embed(rotation(-h.angle(0)).channel(), modes_, {m}));
        bq_ = 2 * m;
        for (int i = 0; i < 2 * modes_; ++i)
            if (i != 2 * m && i != 2 * m + 1) keep_.push_back(i);

        const int D = 2 * modes_, da = a.dim();
        const RMat xa = ch_.X.leftCols(da), xb = ch_.X.rightCols(b.dim());
        ua_.resize(D, static_cast<Eigen::Index>(a.size()));
        vb_.resize(D, static_cast<Eigen::Index>(b.size()));
        for (std::size_t i = 0; i < a.size(); ++i) ua_.col(i) = xa.cast<cplx>() * a.peaks()[i].mean;
        for (std::size_t j = 0; j < b.size(); ++j)
            vb_.col(j) = xb.cast<cplx>() * b.peaks()[j].mean + ch_.d.cast<cplx>();

        pools_.resize(a.covs().size() * b.covs().size());
        for (std::size_t ia = 0; ia < a.covs().size(); ++ia)
            for (std::size_t ib = 0; ib < b.covs().size(); ++ib) {
                CMat c = CMat::Zero(D, D);
                c.topLeftCorner(da, da) = a.cov(static_cast<int>(ia));
                c.bottomRightCorner(b.dim(), b.dim()) = b.cov(static_cast<int>(ib));
                c = ch_.X.cast<cplx>() * c * ch_.X.transpose().cast<cplx>() + ch_.Y.cast<cplx>();
                Pool& p = pools_[ia * b.covs().size() + ib];
                p.var = c(bq_, bq_);
                p.lognorm = -std::log(std::sqrt(2 * kPi * p.var));
                const CVec sab = select(CMat(c), keep_, std::vector<int>{bq_}).col(0);
                p.K = sab / p.var;
                CMat ca = select(CMat(c), keep_, keep_) - p.K * sab.transpose();
                p.cov = 0.5 * (ca + ca.transpose());
                p.inv = SymLDLT(p.cov).inverse();
                real_ = real_ && is_real(p.K, 0.0) && is_real(CMat(CMat::Constant(1, 1, p.var)), 0.0);
            }
        real_ = real_ && ua_.imag().cwiseAbs().maxCoeff() == 0.0 && vb_.imag().cwiseAbs().maxCoeff() == 0.0;
    }

    // Distribution of the outcome, duplicates merged.
    Mixture marginal(double rel_tol = 1e-13) const {
        double scale = 1.0;
        for (Eigen::Index i = 0; i < ua_.cols(); ++i) scale = std::max(scale, std::abs(ua_(bq_, i)));
        double sb = 0.0;
        for (Eigen::Index j = 0; j < vb_.cols(); ++j) sb = std::max(sb, std::abs(vb_(bq_, j)));
        const double q = rel_tol * (scale + sb);
        struct Key {
            std::size_t pool;
            long long re, im;
            bool operator==(const Key& o) const { return pool == o.pool && re == o.re && im == o.im; }
        };
        struct KeyHash {
            std::size_t operator()(const Key& k) const {
                return (k.pool * 1315423911u) ^ std::hash<long long>()(k.re) ^ (std::hash<long long>()(k.im) << 1);
            }
        };
        struct Acc {
            cplx mu;
            double ref;
            cplx sum;
        };
        std::unordered_map<Key, std::size_t, KeyHash> where;
        std::vector<Key> keys;
        std::vector<Acc> acc;
        const std::size_t nbc = b_.covs().size();
        for (std::size_t i = 0; i < a_.size(); ++i) {
            const Peak& pa = a_.peaks()[i];
            for (std::size_t j = 0; j < b_.size(); ++j) {
                const Peak& pb = b_.peaks()[j];
                const cplx lw = pa.lw + pb.lw;
                if (!std::isfinite(lw.real())) continue;
                const cplx mu = ua_(bq_, i) + vb_(bq_, j);
                const Key k{static_cast<std::size_t>(pa.cov) * nbc + pb.cov, std::llround(mu.real() / q),
                            std::llround(mu.imag() / q)};
                auto it = where.find(k);
                if (it == where.end()) {
                    where.emplace(k, acc.size());
                    keys.push_back(k);
                    acc.push_back({mu, lw.real(), std::exp(lw - lw.real())});
                    continue;
                }
                Acc& x = acc[it->second];
                if (lw.real() > x.ref) {
                    x.sum *= std::exp(x.ref - lw.real());
                    x.ref = lw.real();
                }
                x.sum += std::exp(lw - x.ref);
            }
        }
        Mixture out(1);
        std::vector<int> map(pools_.size(), -1);
        for (std::size_t k = 0; k < acc.size(); ++k) {
            if (acc[k].sum == cplx(0.0)) continue;
            int& slot = map[keys[k].pool];
            if (slot < 0) slot = out.add_cov(CMat::Constant(1, 1, pools_[keys[k].pool].var));
            CVec mu(1);
            mu(0) = acc[k].mu;
            out.add_peak_log(acc[k].ref + std::log(acc[k].sum), std::move(mu), slot);
        }
        return out;
    }

    // Post-measurement state of the other modes for outcome x. Pairs whose effective
    // magnitude falls below prune_tol times the largest are never materialized.
    ConditionalOutcome condition(double x, double prune_tol) const {
        if (prune_tol < 0) throw InvalidParameter("prune tolerance must be non-negative");
        const int na = static_cast<int>(keep_.size());
        CVec mean(na);
        const std::size_t nbc = b_.covs().size();
        auto pair = [&](std::size_t i, std::size_t j, cplx& lw, cplx& diff) -> const Pool& {
            const Peak& pa = a_.peaks()[i];
            const Peak& pb = b_.peaks()[j];
            const Pool& pool = pools_[static_cast<std::size_t>(pa.cov) * nbc + pb.cov];
            diff = x - (ua_(bq_, i) + vb_(bq_, j));
            lw = pa.lw + pb.lw + pool.lognorm - 0.5 * diff * diff / pool.var;
            return pool;
        };
        auto fill_mean = [&](std::size_t i, std::size_t j, const Pool& pool, cplx diff) {
            for (int k = 0; k < na; ++k) mean(k) = ua_(keep_[k], i) + vb_(keep_[k], j) + pool.K(k) * diff;
        };
        // with real means the effective magnitude is just Re lw
        auto magnitude = [&](std::size_t i, std::size_t j, const Pool& pool, cplx lw, cplx diff) {
            if (real_) return lw.real();
            fill_mean(i, j, pool, diff);
            return log_effective_magnitude(lw, mean, pool.inv);
        };

        double mx = -std::numeric_limits<double>::infinity();
        cplx lw, diff;
        for (std::size_t i = 0; i < a_.size(); ++i)
            for (std::size_t j = 0; j < b_.size(); ++j) {
                const Pool& pool = pair(i, j, lw, diff);
                if (std::isfinite(lw.real())) mx = std::max(mx, magnitude(i, j, pool, lw, diff));
            }
        if (!std::isfinite(mx)) throw ZeroProbabilityOutcome("outcome has zero probability");
        const double cut = prune_tol > 0 ? mx + std::log(prune_tol) : -std::numeric_limits<double>::infinity();

        State st(modes_ - 1, hbar_);
        std::vector<int> map(pools_.size(), -1);
        cplx kept = 0.0, dropped = 0.0;
        double abs_kept = 0.0;
        for (std::size_t i = 0; i < a_.size(); ++i)
            for (std::size_t j = 0; j < b_.size(); ++j) {
                const Pool& pool = pair(i, j, lw, diff);
                if (!std::isfinite(lw.real())) continue;
                const cplx w = std::exp(lw - mx);
                if (magnitude(i, j, pool, lw, diff) < cut) {
                    dropped += w;
                    continue;
                }
                kept += w;
                abs_kept += std::abs(w);
                fill_mean(i, j, pool, diff);
                const std::size_t pid = static_cast<std::size_t>(&pool - pools_.data());
                if (map[pid] < 0) map[pid] = st.add_cov(pool.cov);
                st.add_peak_log(lw, mean, map[pid]);
            }
        if (st.empty()) throw ZeroProbabilityOutcome("outcome has zero probability");
        ConditionalOutcome o;
        const cplx total = (kept + dropped) * std::exp(mx);
        o.probability = detail::checked_probability(total, (abs_kept + std::abs(dropped)) * std::exp(mx));
        if (!(o.probability > 0)) throw ZeroProbabilityOutcome("outcome has zero probability");
        st = merge_duplicates(st);
        st.diag.truncated_mass = a_.diag.truncated_mass + b_.diag.truncated_mass;
        st.diag.pruned_mass = a_.diag.pruned_mass + b_.diag.pruned_mass + std::abs(dropped / (kept + dropped));
        st.normalize();
        o.state = std::move(st);
        o.outcome = RVec::Constant(1, x);
        return o;
    }

    double sample(Rng& rng, OutcomeSampler how, long* iterations = nullptr) const {
        return sample_1d(marginal(), rng, how, iterations);
    }

private:
    struct Pool {
        cplx var, lognorm;
        CVec K;
        CMat cov, inv;
    };
    const State& a_;
    const State& b_;
    double hbar_;
    int modes_;
    GaussianChannel ch_;
    int bq_ = 0;
    std::vector<int> keep_;
    CMat ua_, vb_;
    std::vector<Pool> pools_;
    bool real_ = true;
};

}  // namespace bosonic
