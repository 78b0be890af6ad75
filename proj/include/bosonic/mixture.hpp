#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <functional>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "bosonic/linalg.hpp"

namespace bosonic {

// One term c * G_{mean, covs[cov]}. The weight is kept as a complex logarithm:
// peaks with large imaginary means carry weights far below the double range
// while their contribution on the real phase space is O(1).
struct Peak {
    cplx lw;
    CVec mean;
    int cov = 0;

    cplx weight() const { return std::exp(lw); }
};

inline cplx log_of(cplx w) {
    if (w == cplx(0.0)) return cplx(-std::numeric_limits<double>::infinity(), 0.0);
    return std::log(w);
}

// Linear combination of Gaussians on a dim-dimensional real space, covariances pooled.
class Mixture {
public:
    Mixture() = default;
    explicit Mixture(int dim) : dim_(dim) {}

    int dim() const { return dim_; }
    std::size_t size() const { return peaks_.size(); }
    bool empty() const { return peaks_.empty(); }

    const std::vector<Peak>& peaks() const { return peaks_; }
    std::vector<Peak>& peaks() { return peaks_; }
    const std::vector<CMat>& covs() const { return covs_; }
    const CMat& cov(int i) const { return covs_[i]; }
    const CMat& cov_of(const Peak& p) const { return covs_[p.cov]; }

    // Adds a covariance to the pool, reusing a bitwise-identical entry when present.
    int add_cov(const CMat& c) {
        if (c.rows() != dim_ || c.cols() != dim_) throw DimensionMismatch("covariance size does not match mixture dimension");
        const std::size_t h = hash_matrix(c);
        auto range = index_.equal_range(h);
        for (auto it = range.first; it != range.second; ++it)
            if (covs_[it->second] == c) return it->second;
        covs_.push_back(c);
        const int id = static_cast<int>(covs_.size()) - 1;
        index_.emplace(h, id);
        return id;
    }

    void add_peak_log(cplx lw, CVec mean, int cov) {
        if (mean.size() != dim_) throw DimensionMismatch("mean size does not match mixture dimension");
        if (cov < 0 || cov >= static_cast<int>(covs_.size())) throw InvalidState("peak references missing covariance");
        peaks_.push_back(Peak{lw, std::move(mean), cov});
    }
    void add_peak(cplx w, CVec mean, int cov) { add_peak_log(log_of(w), std::move(mean), cov); }

    void reserve(std::size_t n) { peaks_.reserve(n); }
    void clear_peaks() { peaks_.clear(); }

    // Sum of weights = integral over the whole space.
    cplx total_weight() const {
        if (peaks_.empty()) return 0.0;
        double m = -std::numeric_limits<double>::infinity();
        for (const auto& p : peaks_) m = std::max(m, p.lw.real());
        if (!std::isfinite(m)) return 0.0;
        return scaled_sum(m) * std::exp(m);
    }

    cplx log_total_weight() const {
        double m = -std::numeric_limits<double>::infinity();
        for (const auto& p : peaks_) m = std::max(m, p.lw.real());
        return m + std::log(scaled_sum(m));
    }

    void scale_log(cplx l) {
        for (auto& p : peaks_) p.lw += l;
    }

    // Divide by the total weight. Throws if the mixture integrates to ~0.
    void normalize() {
        if (peaks_.empty()) throw EmptyMixture("cannot normalize an empty mixture");
        const cplx l = log_total_weight();
        if (!std::isfinite(l.real()) || std::exp(l.real()) == 0.0) throw NumericalInconsistency("mixture has zero total weight");
        scale_log(-l);
    }

private:
    // sum of exp(lw - m), Neumaier-compensated: Fock and real-cat weights cancel from ~1e6 down to 1
    cplx scaled_sum(double m) const {
        double sr = 0, cr = 0, si = 0, ci = 0;
        auto add = [](double& sum, double& comp, double x) {
            const double t = sum + x;
            comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
            sum = t;
        };
        for (const auto& p : peaks_) {
            const cplx w = std::exp(p.lw - m);
            add(sr, cr, w.real());
            add(si, ci, w.imag());
        }
        return {sr + cr, si + ci};
    }

    static std::size_t hash_matrix(const CMat& c) {
        std::size_t h = 1469598103934665603ull;
        const auto* bytes = reinterpret_cast<const unsigned char*>(c.data());
        const std::size_t n = sizeof(cplx) * static_cast<std::size_t>(c.size());
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
        return h;
    }

    int dim_ = 0;
    std::vector<Peak> peaks_;
    std::vector<CMat> covs_;
    std::unordered_multimap<std::size_t, int> index_;
};

struct Diagnostics {
    double truncated_mass = 0.0;  // weight missing because a lattice/series was cut
    double pruned_mass = 0.0;     // |sum of dropped weights| accumulated by prune()
    std::vector<std::string> warnings;
};

// N-mode Gaussian-mixture Wigner function, quadratures ordered (q1,p1,...,qN,pN).
class State : public Mixture {
public:
    State() = default;
    State(int modes, double hbar) : Mixture(2 * modes), modes_(modes), hbar_(hbar) {
        if (modes < 0) throw InvalidModes("negative mode count");
        if (!(hbar > 0)) throw InvalidParameter("hbar must be positive");
    }

    int num_modes() const { return modes_; }
    double hbar() const { return hbar_; }

    Diagnostics diag;

private:
    int modes_ = 0;
    double hbar_ = 2.0;
};

// ---------------------------------------------------------------------------
// Single Gaussians

inline cplx log_gaussian(const CVec& mean, const CMat& cov, const CVec& point) {
    SymLDLT f(cov);
    const CVec d = point - mean;
    const cplx q = (d.transpose() * f.solve(d))(0, 0);
    return -0.5 * q - f.log_sqrt_det_2pi();
}

inline cplx eval_gaussian(const CVec& mean, const CMat& cov, const RVec& point) {
    if (mean.size() != point.size() || cov.rows() != point.size()) throw DimensionMismatch("eval_gaussian");
    return std::exp(log_gaussian(mean, cov, point.cast<cplx>()));
}

// Integral of G_{m1,c1} * G_{m2,c2} over R^n.
inline cplx gaussian_overlap_integral(const CVec& m1, const CMat& c1, const CVec& m2, const CMat& c2) {
    if (m1.size() != m2.size() || c1.rows() != c2.rows() || c1.rows() != m1.size()) throw DimensionMismatch("overlap");
    return std::exp(log_gaussian(m1, c1 + c2, m2));
}

// log of sup over real x of |c G_{mu,Sigma}(x)| without the determinant factor:
// log|c| + (1/2) b^T (A_r + A_i A_r^{-1} A_i) b where Sigma^{-1} = A_r + i A_i, b = Im mu.
// For real Sigma this is the inflation factor used by the rejection sampler.
inline double log_effective_magnitude(cplx lw, const CVec& mean, const CMat& inv_cov) {
    const RVec b = mean.imag();
    if (b.cwiseAbs().maxCoeff() == 0.0) return lw.real();
    const RMat ar = inv_cov.real(), ai = inv_cov.imag();
    double q;
    if (ai.cwiseAbs().maxCoeff() == 0.0)
        q = b.dot(ar * b);
    else
        q = b.dot(ar * b) + (ai * b).dot(ar.ldlt().solve(ai * b));
    return lw.real() + 0.5 * q;
}

// ---------------------------------------------------------------------------
// Fast repeated evaluation of a mixture at real points.

class MixtureEvaluator {
public:
    explicit MixtureEvaluator(const Mixture& m) : dim_(m.dim()) {
        const auto& covs = m.covs();
        inv_.reserve(covs.size());
        std::vector<cplx> lognorm(covs.size());
        for (std::size_t i = 0; i < covs.size(); ++i) {
            SymLDLT f(covs[i]);
            inv_.push_back(f.inverse());
            lognorm[i] = -f.log_sqrt_det_2pi();
        }
        const std::size_t n = m.size();
        lw_.resize(n);
        cov_.resize(n);
        means_.resize(n * dim_);
        pre_.resize(n);
        linear_.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            const Peak& p = m.peaks()[k];
            lw_[k] = p.lw + lognorm[p.cov];
            // a linear prefactor keeps the rounding of exp() proportional to the quadratic form
            // alone; tiny weights (large imaginary means) stay in log form
            linear_[k] = lw_[k].real() > -600.0;
            pre_[k] = linear_[k] ? std::exp(lw_[k]) : 0.0;
            cov_[k] = p.cov;
            for (int j = 0; j < dim_; ++j) means_[k * dim_ + j] = p.mean(j);
        }
        if (dim_ == 2) {
            inv2_.resize(inv_.size() * 3);
            for (std::size_t i = 0; i < inv_.size(); ++i) {
                inv2_[3 * i] = inv_[i](0, 0);
                inv2_[3 * i + 1] = inv_[i](0, 1) + inv_[i](1, 0);
                inv2_[3 * i + 2] = inv_[i](1, 1);
            }
        }
    }

    int dim() const { return dim_; }

    cplx operator()(const double* x) const {
        const std::size_t n = lw_.size();
        cplx s = 0.0;
        if (dim_ == 1) {
            for (std::size_t k = 0; k < n; ++k) {
                const cplx d = x[0] - means_[k];
                s += term(k, 0.5 * inv_[cov_[k]](0, 0) * d * d);
            }
        } else if (dim_ == 2) {
            for (std::size_t k = 0; k < n; ++k) {
                const cplx d0 = x[0] - means_[2 * k], d1 = x[1] - means_[2 * k + 1];
                const cplx* a = &inv2_[3 * cov_[k]];
                const cplx q = a[0] * d0 * d0 + a[1] * d0 * d1 + a[2] * d1 * d1;
                s += term(k, 0.5 * q);
            }
        } else {
            CVec d(dim_);
            for (std::size_t k = 0; k < n; ++k) {
                for (int j = 0; j < dim_; ++j) d(j) = x[j] - means_[k * dim_ + j];
                const cplx q = (d.transpose() * inv_[cov_[k]] * d)(0, 0);
                s += term(k, 0.5 * q);
            }
        }
        return s;
    }
    cplx operator()(const RVec& x) const {
        if (x.size() != dim_) throw DimensionMismatch("evaluation point has wrong dimension");
        return (*this)(x.data());
    }

private:
    cplx term(std::size_t k, cplx half_q) const {
        return linear_[k] ? pre_[k] * std::exp(-half_q) : std::exp(lw_[k] - half_q);
    }

    int dim_;
    std::vector<CMat> inv_;
    std::vector<cplx> pre_;
    std::vector<char> linear_;
    std::vector<cplx> inv2_;
    std::vector<cplx> lw_;
    std::vector<int> cov_;
    std::vector<cplx> means_;
};

inline cplx wigner(const State& s, const RVec& point) { return MixtureEvaluator(s)(point); }

// ---------------------------------------------------------------------------
// Structural operations

inline State tensor(const State& a, const State& b) {
    if (a.hbar() != b.hbar()) throw HbarMismatch("tensor of states with different hbar");
    State out(a.num_modes() + b.num_modes(), a.hbar());
    const int da = a.dim(), db = b.dim();
    std::vector<int> pair_index(a.covs().size() * b.covs().size(), -1);
    auto pooled = [&](int ia, int ib) {
        int& slot = pair_index[static_cast<std::size_t>(ia) * b.covs().size() + ib];
        if (slot < 0) {
            CMat c = CMat::Zero(da + db, da + db);
            c.topLeftCorner(da, da) = a.cov(ia);
            c.bottomRightCorner(db, db) = b.cov(ib);
            slot = out.add_cov(c);
        }
        return slot;
    };
    out.reserve(a.size() * b.size());
    for (const auto& pa : a.peaks()) {
        for (const auto& pb : b.peaks()) {
            CVec m(da + db);
            m << pa.mean, pb.mean;
            out.add_peak_log(pa.lw + pb.lw, std::move(m), pooled(pa.cov, pb.cov));
        }
    }
    out.diag.truncated_mass = a.diag.truncated_mass + b.diag.truncated_mass;
    out.diag.pruned_mass = a.diag.pruned_mass + b.diag.pruned_mass;
    return out;
}

inline void check_modes(const State& s, const std::vector<int>& modes, bool allow_empty = false) {
    if (modes.empty() && !allow_empty) throw InvalidModes("empty mode set");
    std::vector<int> sorted = modes;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw InvalidModes("repeated mode index");
    for (int m : modes)
        if (m < 0 || m >= s.num_modes()) throw InvalidModes("mode index " + std::to_string(m) + " out of range");
}

// Keep the listed modes (in the given order); weights are untouched apart from
// a renormalization that is a no-op for trace-preserving inputs.
inline State partial_trace(const State& s, const std::vector<int>& keep, bool renormalize = true) {
    check_modes(s, keep);
    const auto idx = quad_indices(keep);
    State out(static_cast<int>(keep.size()), s.hbar());
    std::vector<int> map(s.covs().size());
    for (std::size_t i = 0; i < s.covs().size(); ++i) map[i] = out.add_cov(select(s.cov(static_cast<int>(i)), idx, idx));
    out.reserve(s.size());
    for (const auto& p : s.peaks()) out.add_peak_log(p.lw, select(p.mean, idx), map[p.cov]);
    out.diag = s.diag;
    if (renormalize && !out.empty()) {
        const cplx before = s.total_weight();
        if (std::abs(before) > 0) out.scale_log(log_of(before) - out.log_total_weight());
    }
    return out;
}

// Removes peaks whose effective magnitude is below tol * max, then renormalizes.
inline State prune(const State& s, double tol) {
    if (tol < 0) throw InvalidParameter("prune tolerance must be non-negative");
    if (tol == 0.0 || s.empty()) return s;
    std::vector<CMat> inv;
    inv.reserve(s.covs().size());
    for (const auto& c : s.covs()) inv.push_back(SymLDLT(c).inverse());
    std::vector<double> mag(s.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < s.size(); ++k) {
        const auto& p = s.peaks()[k];
        mag[k] = log_effective_magnitude(p.lw, p.mean, inv[p.cov]);
        mx = std::max(mx, mag[k]);
    }
    const double cut = mx + std::log(tol);
    State out(s.num_modes(), s.hbar());
    std::vector<int> map(s.covs().size(), -1);
    cplx dropped = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        const auto& p = s.peaks()[k];
        if (mag[k] < cut || !std::isfinite(mag[k])) {
            if (std::isfinite(p.lw.real())) dropped += p.weight();
            continue;
        }
        if (map[p.cov] < 0) map[p.cov] = out.add_cov(s.cov(p.cov));
        out.add_peak_log(p.lw, p.mean, map[p.cov]);
    }
    if (out.empty()) throw EmptyMixture("all peaks dropped by prune");
    out.diag = s.diag;
    out.diag.pruned_mass += std::abs(dropped);
    out.normalize();
    return out;
}

// Sums the weights of peaks whose means agree to rel_tol (relative to the largest
// |mean| component) and share a covariance. Exact when rel_tol = 0.
inline Mixture empty_like(const Mixture& m) { return Mixture(m.dim()); }
inline State empty_like(const State& s) {
    State out(s.num_modes(), s.hbar());
    out.diag = s.diag;
    return out;
}

template <class M>
M merge_duplicates(const M& s, double rel_tol = 1e-13) {
    if (s.empty()) return s;
    double scale = 1.0;
    for (const auto& p : s.peaks()) scale = std::max(scale, p.mean.cwiseAbs().maxCoeff());
    const double q = rel_tol > 0 ? rel_tol * scale : 0.0;
    struct Key {
        int cov;
        std::vector<long long> v;
        bool operator==(const Key& o) const { return cov == o.cov && v == o.v; }
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const {
            std::size_t h = std::hash<int>()(k.cov);
            for (long long x : k.v) h = h * 1315423911u ^ std::hash<long long>()(x);
            return h;
        }
    };
    std::unordered_map<Key, int, KeyHash> where;
    M out = empty_like(s);
    std::vector<int> map(s.covs().size(), -1);
    std::vector<std::vector<cplx>> parts;
    for (const auto& p : s.peaks()) {
        Key key{p.cov, {}};
        key.v.reserve(2 * p.mean.size());
        for (Eigen::Index j = 0; j < p.mean.size(); ++j) {
            if (q > 0) {
                key.v.push_back(std::llround(p.mean(j).real() / q));
                key.v.push_back(std::llround(p.mean(j).imag() / q));
            } else {
                long long a, b;
                double re = p.mean(j).real(), im = p.mean(j).imag();
                std::memcpy(&a, &re, sizeof a);
                std::memcpy(&b, &im, sizeof b);
                key.v.push_back(a);
                key.v.push_back(b);
            }
        }
        auto it = where.find(key);
        if (it == where.end()) {
            if (map[p.cov] < 0) map[p.cov] = out.add_cov(s.cov(p.cov));
            out.add_peak_log(p.lw, p.mean, map[p.cov]);
            where.emplace(std::move(key), static_cast<int>(out.size()) - 1);
            parts.push_back({p.lw});
        } else {
            parts[it->second].push_back(p.lw);
        }
    }
    for (std::size_t k = 0; k < out.size(); ++k) {
        const auto& ls = parts[k];
        if (ls.size() == 1) continue;
        double m = -std::numeric_limits<double>::infinity();
        for (auto l : ls) m = std::max(m, l.real());
        cplx acc = 0.0;
        for (auto l : ls) acc += std::exp(l - m);
        out.peaks()[k].lw = m + log_of(acc);
    }
    // merged weights can cancel to exactly zero
    M clean = empty_like(s);
    std::vector<int> map2(out.covs().size(), -1);
    for (const auto& p : out.peaks()) {
        if (!std::isfinite(p.lw.real())) continue;
        if (map2[p.cov] < 0) map2[p.cov] = clean.add_cov(out.cov(p.cov));
        clean.add_peak_log(p.lw, p.mean, map2[p.cov]);
    }
    return clean;
}

// Re-express a state with every peak pointing at a compacted pool (drops unused covariances).
inline State compact(const State& s) {
    State out(s.num_modes(), s.hbar());
    std::vector<int> map(s.covs().size(), -1);
    out.reserve(s.size());
    for (const auto& p : s.peaks()) {
        if (map[p.cov] < 0) map[p.cov] = out.add_cov(s.cov(p.cov));
        out.add_peak_log(p.lw, p.mean, map[p.cov]);
    }
    out.diag = s.diag;
    return out;
}

struct PhysicalityReport {
    cplx total_weight;
    bool covariances_ok = true;  // symmetric with positive-definite real part
    double max_asymmetry = 0.0;
};

inline PhysicalityReport check_physicality(const State& s) {
    PhysicalityReport r;
    r.total_weight = s.total_weight();
    for (const auto& c : s.covs()) {
        r.max_asymmetry = std::max(r.max_asymmetry, (c - c.transpose()).cwiseAbs().maxCoeff());
        Eigen::SelfAdjointEigenSolver<RMat> es(0.5 * (c.real() + c.real().transpose()));
        if (es.eigenvalues().minCoeff() <= 0) r.covariances_ok = false;
    }
    if (r.max_asymmetry > 1e-10) r.covariances_ok = false;
    return r;
}

}  // namespace bosonic
