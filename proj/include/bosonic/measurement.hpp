#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <vector>

#include "bosonic/channels.hpp"
#include "bosonic/conditioning.hpp"
#include "bosonic/mixture.hpp"
#include "bosonic/special.hpp"

namespace bosonic {

using Rng = std::mt19937_64;

// Homodyne of the rotated quadrature x_phi = cos(phi) q + sin(phi) p on each listed mode.
// phi = 0 measures q, phi = pi/2 measures p.
struct Homodyne {
    std::vector<int> modes;
    std::vector<double> angles;  // empty means q on every mode

    static Homodyne q(int mode) { return {{mode}, {0.0}}; }
    static Homodyne p(int mode) { return {{mode}, {kPi / 2}}; }
    double angle(std::size_t i) const { return angles.empty() ? 0.0 : angles[i]; }
};

// Projection onto a Gaussian with covariance sigma (2k x 2k) centred at the outcome.
struct GeneralDyne {
    std::vector<int> modes;
    RMat sigma;

    static GeneralDyne heterodyne(int mode, double hbar) { return {{mode}, hbar / 2 * RMat::Identity(2, 2)}; }
};

// Measurement operator whose Wigner function (scaled so that p = integral of W_rho * W_op
// over the measured quadratures) is sum_j d_j G_{mu_j, Sigma_j}. Not trace normalized.
struct MixtureOperator {
    std::vector<int> modes;
    Mixture terms;

    // |psi><psi| for a k-mode state psi: weights pick up (2 pi hbar)^k.
    static MixtureOperator from_state(const State& s, std::vector<int> modes) {
        if (static_cast<int>(modes.size()) != s.num_modes()) throw DimensionMismatch("operator modes vs state modes");
        MixtureOperator op{std::move(modes), static_cast<const Mixture&>(s)};
        op.terms.scale_log(s.num_modes() * std::log(2 * kPi * s.hbar()));
        return op;
    }
    static MixtureOperator vacuum_projector(int mode, double hbar) {
        State v(1, hbar);
        v.add_peak(1.0, CVec::Zero(2), v.add_cov(hbar / 2 * CMat::Identity(2, 2)));
        return from_state(v, {mode});
    }
};

struct ConditionalOutcome {
    double probability = 0.0;  // density for continuous outcomes
    State state;               // normalized, on the unmeasured modes in increasing order
    std::vector<std::pair<int, int>> source;
    RVec outcome;
    long iterations = 0;       // rejection-sampler loop count when sampled
    std::vector<long> bins;    // lattice bins of binned records (gate teleportation, error correction)
};

// ---------------------------------------------------------------------------
// helpers

namespace detail {

inline std::vector<int> other_modes(int n, const std::vector<int>& measured) {
    std::vector<char> used(n, 0);
    for (int m : measured) used[m] = 1;
    std::vector<int> keep;
    for (int i = 0; i < n; ++i)
        if (!used[i]) keep.push_back(i);
    return keep;
}

inline State rotate_for_homodyne(const State& s, const Homodyne& h) {
    if (!h.angles.empty() && h.angles.size() != h.modes.size()) throw DimensionMismatch("one homodyne angle per mode");
    State r = s;
    for (std::size_t i = 0; i < h.modes.size(); ++i)
        if (h.angle(i) != 0.0) r = apply_symplectic(r, rotation(-h.angle(i)), h.modes[i]);
    return r;
}

// Real part of a probability, after checking the imaginary residue and sign.
inline double checked_probability(cplx p, double scale) {
    const double tol = 1e-9 * std::max(std::abs(p.real()), 1e-300) + 1e-12 * scale;
    if (std::abs(p.imag()) > std::max(tol, 1e-9 * scale))
        throw NumericalInconsistency("outcome probability has imaginary part " + std::to_string(p.imag()));
    if (p.real() < -1e-10 * scale) throw NumericalInconsistency("negative outcome probability " + std::to_string(p.real()));
    return p.real();
}

inline double abs_weight_sum(const Mixture& m) {
    double s = 0.0;
    for (const auto& p : m.peaks()) s += std::exp(p.lw.real());
    return s;
}

inline ConditionalOutcome finish(Conditioned&& c, RVec outcome) {
    ConditionalOutcome o;
    const cplx total = c.state.total_weight();
    const double p = checked_probability(total, abs_weight_sum(c.state));
    if (!(p > 0) || c.state.empty()) throw ZeroProbabilityOutcome("outcome has zero probability");
    o.probability = p;
    o.state = std::move(c.state);
    o.state.normalize();
    o.source = std::move(c.source);
    o.outcome = std::move(outcome);
    return o;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Marginals and probabilities

// Distribution of the homodyne outcomes as a mixture over k dims (one per measured mode).
inline Mixture homodyne_marginal(const State& s, const Homodyne& h) {
    check_modes(s, h.modes);
    const State r = detail::rotate_for_homodyne(s, h);
    std::vector<int> idx;
    for (int m : h.modes) idx.push_back(2 * m);
    Mixture out(static_cast<int>(idx.size()));
    std::vector<int> map(r.covs().size());
    for (std::size_t i = 0; i < r.covs().size(); ++i) map[i] = out.add_cov(select(r.cov(static_cast<int>(i)), idx, idx));
    out.reserve(r.size());
    for (const auto& p : r.peaks()) out.add_peak_log(p.lw, select(p.mean, idx), map[p.cov]);
    return out;
}

// Outcome distribution of a general-dyne measurement: sum_m c_m G_{mu_B, Sigma_B + Sigma_M}.
inline Mixture generaldyne_marginal(const State& s, const GeneralDyne& g) {
    check_modes(s, g.modes);
    const auto idx = quad_indices(g.modes);
    if (g.sigma.rows() != static_cast<int>(idx.size()) || g.sigma.cols() != static_cast<int>(idx.size()))
        throw DimensionMismatch("measurement covariance size");
    Mixture out(static_cast<int>(idx.size()));
    std::vector<int> map(s.covs().size());
    for (std::size_t i = 0; i < s.covs().size(); ++i)
        map[i] = out.add_cov(select(s.cov(static_cast<int>(i)), idx, idx) + g.sigma.cast<cplx>());
    out.reserve(s.size());
    for (const auto& p : s.peaks()) out.add_peak_log(p.lw, select(p.mean, idx), map[p.cov]);
    return out;
}

inline double density(const Mixture& m, const RVec& x) {
    return detail::checked_probability(MixtureEvaluator(m)(x), detail::abs_weight_sum(m) + 1e-300);
}

inline double generaldyne_prob(const State& s, const GeneralDyne& g, const RVec& r) {
    return density(generaldyne_marginal(s, g), r);
}

inline double homodyne_prob(const State& s, const Homodyne& h, const RVec& x) { return density(homodyne_marginal(s, h), x); }

// Integral of a 1-D mixture from -inf to x.
inline double marginal_cdf(const Mixture& m, double x) {
    if (m.dim() != 1) throw DimensionMismatch("marginal_cdf needs a one-dimensional mixture");
    cplx acc = 0.0;
    for (const auto& p : m.peaks()) acc += gaussian_term_cdf(p.lw, p.mean(0), m.cov_of(p)(0, 0), x);
    return acc.real();
}

inline double interval_probability(const Mixture& m, double a, double b) { return marginal_cdf(m, b) - marginal_cdf(m, a); }

// ---------------------------------------------------------------------------
// Conditioning

inline ConditionalOutcome condition_on_generaldyne(const State& s, const GeneralDyne& g, const RVec& r) {
    check_modes(s, g.modes);
    const auto b = quad_indices(g.modes);
    if (r.size() != static_cast<int>(b.size())) throw DimensionMismatch("outcome size");
    if (g.sigma.rows() != r.size()) throw DimensionMismatch("measurement covariance size");
    const auto a = quad_indices(detail::other_modes(s.num_modes(), g.modes));
    detail::Target t{{0.0}, {r.cast<cplx>()}, {0}, {g.sigma.cast<cplx>()}};
    return detail::finish(detail::condition_kernel(s, a, b, t), r);
}

// Ideal homodyne: the inverse collapses to the measured-quadrature block.
inline ConditionalOutcome condition_on_homodyne(const State& s, const Homodyne& h, const RVec& x) {
    check_modes(s, h.modes);
    if (x.size() != static_cast<int>(h.modes.size())) throw DimensionMismatch("one homodyne outcome per mode");
    const State r = detail::rotate_for_homodyne(s, h);
    std::vector<int> b;
    for (int m : h.modes) b.push_back(2 * m);
    const auto a = quad_indices(detail::other_modes(s.num_modes(), h.modes));
    const int k = static_cast<int>(b.size());
    detail::Target t{{0.0}, {x.cast<cplx>()}, {0}, {CMat::Zero(k, k)}};
    return detail::finish(detail::condition_kernel(r, a, b, t), x);
}

// Non-Gaussian measurement: every (peak, operator term) pair becomes an output peak.
inline ConditionalOutcome condition_on_operator(const State& s, const MixtureOperator& op) {
    check_modes(s, op.modes);
    const auto b = quad_indices(op.modes);
    if (op.terms.dim() != static_cast<int>(b.size())) throw DimensionMismatch("operator dimension");
    const auto a = quad_indices(detail::other_modes(s.num_modes(), op.modes));
    detail::Target t;
    for (const auto& p : op.terms.peaks()) {
        t.lw.push_back(p.lw);
        t.means.push_back(p.mean);
        t.cov.push_back(p.cov);
    }
    t.covs = op.terms.covs();
    return detail::finish(detail::condition_kernel(s, a, b, t), RVec());
}

// Outcome of the complementary operator 1 - op (e.g. a threshold click for op = |0><0|).
inline ConditionalOutcome condition_on_complement(const State& s, const MixtureOperator& op) {
    check_modes(s, op.modes);
    const auto b = quad_indices(op.modes);
    const auto keep = detail::other_modes(s.num_modes(), op.modes);
    const auto a = quad_indices(keep);
    detail::Target t;
    for (const auto& p : op.terms.peaks()) {
        t.lw.push_back(p.lw);
        t.means.push_back(p.mean);
        t.cov.push_back(p.cov);
    }
    t.covs = op.terms.covs();
    auto c = detail::condition_kernel(s, a, b, t);
    State rest = keep.empty() ? State(0, s.hbar()) : partial_trace(s, keep, false);
    if (keep.empty()) rest.add_peak_log(s.log_total_weight(), CVec(0), rest.add_cov(CMat(0, 0)));
    const int base = static_cast<int>(rest.size());
    std::vector<int> map(c.state.covs().size());
    for (std::size_t i = 0; i < map.size(); ++i) map[i] = rest.add_cov(c.state.cov(static_cast<int>(i)));
    for (const auto& p : c.state.peaks()) rest.add_peak_log(p.lw + cplx(0, kPi), p.mean, map[p.cov]);
    detail::Conditioned out{std::move(rest), {}};
    for (int i = 0; i < base; ++i) out.source.emplace_back(i, -1);
    for (const auto& sj : c.source) out.source.push_back(sj);
    return detail::finish(std::move(out), RVec());
}

inline double operator_probability(const State& s, const MixtureOperator& op) {
    check_modes(s, op.modes);
    const auto b = quad_indices(op.modes);
    detail::Target t;
    for (const auto& p : op.terms.peaks()) {
        t.lw.push_back(p.lw);
        t.means.push_back(p.mean);
        t.cov.push_back(p.cov);
    }
    t.covs = op.terms.covs();
    auto c = detail::condition_kernel(s, {}, b, t);
    return detail::checked_probability(c.state.total_weight(), detail::abs_weight_sum(c.state) + 1e-300);
}

// ---------------------------------------------------------------------------
// Rejection sampling of a mixture density with real covariances.
// Proposal g = sum over peaks outside M- of c~_m G_{Re mu_m, Sigma_m}, with
// c~_m = |c_m| exp(b^T Sigma^{-1} b / 2), b = Im mu_m; M- holds the negative real
// peaks with real means, which can only lower p. Hence g >= p everywhere.

struct SampleResult {
    RVec value;
    long iterations = 0;
};

class RejectionSampler {
public:
    explicit RejectionSampler(const Mixture& m, long max_iters = 1000000) : target_(m), eval_(m), max_iters_(max_iters) {
        if (m.empty()) throw EmptyMixture("nothing to sample");
        const int d = m.dim();
        for (const auto& c : m.covs()) {
            if (!is_real(c, 1e-12)) throw Unsupported("rejection sampling needs real covariances");
            const RMat cr = 0.5 * (c.real() + c.real().transpose());
            Eigen::LLT<RMat> llt(cr);
            if (llt.info() != Eigen::Success) throw SingularCovariance("covariance not positive definite in sampler");
            chol_.push_back(llt.matrixL());
            inv_.push_back(llt.solve(RMat::Identity(d, d)));
        }
        Mixture prop(d);
        std::vector<int> map(m.covs().size());
        for (std::size_t i = 0; i < map.size(); ++i) map[i] = prop.add_cov(m.cov(static_cast<int>(i)).real().cast<cplx>());
        std::vector<double> logw;
        for (const auto& p : m.peaks()) {
            const bool real_mean = p.mean.imag().cwiseAbs().maxCoeff() == 0.0;
            const double ph = std::remainder(p.lw.imag(), 2 * kPi);
            if (real_mean && std::abs(std::abs(ph) - kPi) < 1e-12) continue;  // M-
            const RVec b = p.mean.imag();
            const double lw = p.lw.real() + 0.5 * b.dot(inv_[p.cov] * b);
            logw.push_back(lw);
            prop.add_peak_log(lw, p.mean.real().cast<cplx>(), map[p.cov]);
            means_.push_back(p.mean.real());
            cov_.push_back(p.cov);
        }
        if (logw.empty()) throw SamplingStall("no positive peaks to build a proposal from");
        const double mx = *std::max_element(logw.begin(), logw.end());
        std::vector<double> w(logw.size());
        double tot = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) tot += (w[i] = std::exp(logw[i] - mx));
        pick_ = std::discrete_distribution<std::size_t>(w.begin(), w.end());
        const double ptot = std::abs(m.total_weight());
        proposal_mass_ = tot * std::exp(mx);
        expected_acceptance_ = ptot / proposal_mass_;
        proposal_ = std::make_unique<MixtureEvaluator>(prop);
    }

    // Expected fraction of accepted proposals (integral of p over integral of g).
    double expected_acceptance() const { return expected_acceptance_; }
    double proposal_density(const RVec& x) const { return (*proposal_)(x).real(); }
    double target_density(const RVec& x) const { return eval_(x).real(); }

    SampleResult sample(Rng& rng) {
        std::normal_distribution<double> gauss;
        std::uniform_real_distribution<double> unif;
        const int d = target_.dim();
        RVec z(d), x(d);
        for (long it = 1; it <= max_iters_; ++it) {
            const std::size_t k = pick_(rng);
            for (int j = 0; j < d; ++j) z(j) = gauss(rng);
            x = means_[k] + chol_[cov_[k]] * z;
            const double g = (*proposal_)(x.data()).real();
            const double u = unif(rng) * g;
            const double p = eval_(x.data()).real();
            if (u <= p) return {x, it};
        }
        throw SamplingStall("rejection sampler exceeded " + std::to_string(max_iters_) +
                            " iterations; expected acceptance " + std::to_string(expected_acceptance_));
    }

private:
    Mixture target_;
    MixtureEvaluator eval_;
    std::unique_ptr<MixtureEvaluator> proposal_;
    long max_iters_;
    std::vector<RMat> chol_, inv_;
    std::vector<RVec> means_;
    std::vector<int> cov_;
    std::discrete_distribution<std::size_t> pick_;
    double proposal_mass_ = 0.0;
    double expected_acceptance_ = 0.0;
};

// Inverse-CDF draw from a one-dimensional mixture with non-negative density.
// One uniform per sample, so nearby targets fed the same stream give nearby outcomes.
inline double inverse_cdf_sample(const Mixture& m, double u) {
    if (m.dim() != 1) throw DimensionMismatch("inverse_cdf_sample needs a one-dimensional mixture");
    if (m.empty()) throw EmptyMixture("nothing to sample");
    if (!(u > 0 && u < 1)) throw InvalidParameter("uniform variate must lie in (0,1)");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& p : m.peaks()) {
        const double sd = std::sqrt(m.cov_of(p)(0, 0).real());
        lo = std::min(lo, p.mean(0).real() - 40 * sd);
        hi = std::max(hi, p.mean(0).real() + 40 * sd);
    }
    const double total = m.total_weight().real();
    for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo) + std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (marginal_cdf(m, mid) < u * total ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

enum class OutcomeSampler { Rejection, InverseCdf };

// One draw from a one-dimensional outcome distribution.
inline double sample_1d(const Mixture& marg, Rng& rng, OutcomeSampler how, long* iterations = nullptr) {
    if (how == OutcomeSampler::InverseCdf) {
        std::uniform_real_distribution<double> unif;
        double u = 0.0;
        while (u == 0.0) u = unif(rng);
        if (iterations) *iterations = 1;
        return inverse_cdf_sample(marg, u);
    }
    RejectionSampler sampler(marg);
    const auto r = sampler.sample(rng);
    if (iterations) *iterations = r.iterations;
    return r.value(0);
}

// One homodyne outcome on a single mode.
inline double sample_homodyne_1d(const State& s, const Homodyne& h, Rng& rng, OutcomeSampler how, long* iterations = nullptr) {
    if (h.modes.size() != 1) throw DimensionMismatch("single-mode homodyne expected");
    return sample_1d(merge_duplicates(homodyne_marginal(s, h)), rng, how, iterations);
}

inline SampleResult sample_homodyne(const State& s, const Homodyne& h, Rng& rng) {
    RejectionSampler sampler(merge_duplicates(homodyne_marginal(s, h)));
    return sampler.sample(rng);
}

inline SampleResult sample_generaldyne(const State& s, const GeneralDyne& g, Rng& rng) {
    RejectionSampler sampler(generaldyne_marginal(s, g));
    return sampler.sample(rng);
}

inline ConditionalOutcome measure_homodyne(const State& s, const Homodyne& h, Rng& rng) {
    const auto smp = sample_homodyne(s, h, rng);
    auto out = condition_on_homodyne(s, h, smp.value);
    out.iterations = smp.iterations;
    return out;
}

inline ConditionalOutcome measure_generaldyne(const State& s, const GeneralDyne& g, Rng& rng) {
    const auto smp = sample_generaldyne(s, g, rng);
    auto out = condition_on_generaldyne(s, g, smp.value);
    out.iterations = smp.iterations;
    return out;
}

}  // namespace bosonic
