#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bosonic/channels.hpp"
#include "bosonic/measurement.hpp"
#include "bosonic/product.hpp"
#include "bosonic/states.hpp"

namespace bosonic {

// ---------------------------------------------------------------------------
// Squeezing units

// dB = -10 log10(e^{-2r})
inline double db_to_r(double db) { return db * std::log(10.0) / 20.0; }
inline double r_to_db(double r) { return 20.0 * r / std::log(10.0); }

// Per-peak squeezing of a Fock-damped lattice: each peak has variance (hbar/2) tanh(eps).
inline double gkp_epsilon_to_db(double eps) { return -10.0 * std::log10(std::tanh(eps)); }
inline double gkp_db_to_epsilon(double db) { return std::atanh(std::pow(10.0, -db / 10.0)); }

// ---------------------------------------------------------------------------
// Lattice binning

inline double gkp_spacing(double hbar) { return std::sqrt(kPi * hbar); }

inline long gkp_bin(double x, double hbar) { return std::lround(x / gkp_spacing(hbar)); }

// x mod sqrt(pi hbar), representative in (-w/2, w/2].
inline double centered_mod(double x, double hbar) {
    const double w = gkp_spacing(hbar);
    double r = x - w * std::floor(x / w);  // [0, w)
    if (r > w / 2) r -= w;
    return r;
}

// ---------------------------------------------------------------------------
// Measurement-based squeezing

enum class Quadrature { Q, P };

struct MbSqueezeParams {
    double target_r = 0.0;      // cos(theta) = e^{-target_r}
    double ancilla_r = 1.2;     // squeezing of the resource
    double eta_det = 1.0;       // efficiency of the ancilla homodyne
    Quadrature quadrature = Quadrature::Q;
    double ancilla_loss = 1.0;  // transmissivity applied to the resource right after preparation
    double arm_loss = 1.0;      // transmissivity on both outputs of the beam splitter

    double theta() const { return std::acos(std::exp(-target_r)); }
    void validate() const {
        if (!(target_r >= 0) || !std::isfinite(target_r)) throw InvalidParameter("target squeezing must be finite and >= 0");
        if (!std::isfinite(ancilla_r)) throw InvalidParameter("ancilla squeezing must be finite");
        for (double e : {eta_det, ancilla_loss, arm_loss})
            if (!(e > 0 && e <= 1)) throw InvalidParameter("efficiencies must lie in (0,1]");
    }
};

// f_x = g0 + g1 p_M, f_p = h0 + h1 p_M
struct LinearFeedforward {
    double g0 = 0.0, g1 = 0.0, h0 = 0.0, h1 = 0.0;

    static LinearFeedforward calibrated(const MbSqueezeParams& p) {
        return {0.0, 0.0, 0.0, std::tan(p.theta()) / std::sqrt(p.eta_det)};
    }
    static LinearFeedforward none() { return {}; }
};

namespace detail {

inline GaussianChannel diag_loss_on(int total_modes, int mode, double eta, double hbar) {
    return embed(loss(eta, hbar), total_modes, {mode});
}

inline RMat ancilla_cov(const MbSqueezeParams& p, double hbar) {
    RMat a(2, 2);
    a << p.ancilla_loss * std::exp(-2 * p.ancilla_r) + 1 - p.ancilla_loss, 0, 0,
        p.ancilla_loss * std::exp(2 * p.ancilla_r) + 1 - p.ancilla_loss;
    return hbar / 2 * a;
}

// q-squeezing protocol on (target, resource) as one linear map, resource traced at the end.
// The resource covariance enters only through the final coefficients: its anti-squeezed
// quadrature is huge and cancels against the feedforward.
inline GaussianChannel mb_q_channel(const MbSqueezeParams& p, const LinearFeedforward& ff, double hbar) {
    GaussianChannel j{RMat::Identity(4, 4), RMat::Zero(4, 4), RVec::Zero(4)};
    j = compose(j, beamsplitter(-p.theta()).channel());
    j = compose(j, GaussianChannel{std::sqrt(p.arm_loss) * RMat::Identity(4, 4),
                                   (1 - p.arm_loss) * hbar / 2 * RMat::Identity(4, 4), RVec::Zero(4)});
    j = compose(j, diag_loss_on(2, 1, p.eta_det, hbar));
    GaussianChannel f{RMat::Identity(4, 4), RMat::Zero(4, 4), RVec::Zero(4)};
    f.X(0, 3) = ff.g1;
    f.X(1, 3) = ff.h1;
    f.d(0) = ff.g0;
    f.d(1) = ff.h0;
    j = compose(j, f);
    const RMat B = j.X.topRightCorner(2, 2);
    RMat Y = j.Y.topLeftCorner(2, 2) + B * ancilla_cov(p, hbar) * B.transpose();
    return {j.X.topLeftCorner(2, 2), 0.5 * (Y + Y.transpose()), j.d.head(2)};
}

// P variant: quarter turn in, q protocol, quarter turn out.
inline GaussianChannel conj_quarter_turn(const GaussianChannel& c) {
    return compose(compose(rotation(kPi / 2).channel(), c), rotation(-kPi / 2).channel());
}

}  // namespace detail

// Outcome-averaged map of measurement-based squeezing, single mode.
inline GaussianChannel mb_squeeze_channel(const MbSqueezeParams& p, double hbar = 2.0,
                                          std::optional<LinearFeedforward> ff = std::nullopt) {
    p.validate();
    const GaussianChannel q = detail::mb_q_channel(p, ff.value_or(LinearFeedforward::calibrated(p)), hbar);
    return p.quadrature == Quadrature::Q ? q : detail::conj_quarter_turn(q);
}

inline State mb_squeeze_average(const State& s, const MbSqueezeParams& p, int mode,
                                std::optional<LinearFeedforward> ff = std::nullopt) {
    if (p.target_r == 0.0 && p.arm_loss == 1.0) return s;
    return apply_channel(s, mb_squeeze_channel(p, s.hbar(), ff), mode);
}

namespace detail {

// Target (rotated for P) and resource after the beam splitter and all losses;
// the resource is the last mode.
inline State mb_joint(const State& s, const MbSqueezeParams& p, int mode) {
    p.validate();
    check_modes(s, {mode});
    const double hbar = s.hbar();
    const int n = s.num_modes();
    State t = p.quadrature == Quadrature::Q ? s : apply_symplectic(s, rotation(kPi / 2), mode);
    State j = tensor(t, single_gaussian(CVec::Zero(2), ancilla_cov(p, hbar).cast<cplx>(), hbar));
    j = apply_symplectic(j, beamsplitter(-p.theta()), {mode, n});
    if (p.arm_loss < 1) {
        j = apply_channel(j, loss(p.arm_loss, hbar), mode);
        j = apply_channel(j, loss(p.arm_loss, hbar), n);
    }
    if (p.eta_det < 1) j = apply_channel(j, loss(p.eta_det, hbar), n);
    return j;
}

inline ConditionalOutcome mb_finish(ConditionalOutcome out, const MbSqueezeParams& p, int mode, const LinearFeedforward& ff) {
    const double pm = out.outcome(0);
    out.state = apply_channel(out.state, displacement_qp(ff.g0 + ff.g1 * pm, ff.h0 + ff.h1 * pm), mode);
    if (p.quadrature == Quadrature::P) out.state = apply_symplectic(out.state, rotation(-kPi / 2), mode);
    return out;
}

}  // namespace detail

// Single run with a given ancilla p outcome.
inline ConditionalOutcome mb_squeeze_single_shot(const State& s, const MbSqueezeParams& p, int mode, double p_m,
                                                 std::optional<LinearFeedforward> ff = std::nullopt) {
    const State j = detail::mb_joint(s, p, mode);
    RVec x(1);
    x << p_m;
    auto out = condition_on_homodyne(j, Homodyne::p(s.num_modes()), x);
    return detail::mb_finish(std::move(out), p, mode, ff.value_or(LinearFeedforward::calibrated(p)));
}

// Single run with the outcome drawn from its distribution.
inline ConditionalOutcome mb_squeeze_single_shot(const State& s, const MbSqueezeParams& p, int mode, Rng& rng,
                                                 std::optional<LinearFeedforward> ff = std::nullopt,
                                                 OutcomeSampler how = OutcomeSampler::Rejection) {
    const State j = detail::mb_joint(s, p, mode);
    const Homodyne h = Homodyne::p(s.num_modes());
    long iters = 0;
    RVec x(1);
    x << sample_homodyne_1d(j, h, rng, how, &iters);
    auto out = condition_on_homodyne(j, h, x);
    out.iterations = iters;
    return detail::mb_finish(std::move(out), p, mode, ff.value_or(LinearFeedforward::calibrated(p)));
}

// ---------------------------------------------------------------------------
// Gates built from squeezers

enum class GateFidelity { Ideal, MbAverage, MbSingleShot };

// How inline squeezers inside a gate are realized. `resource.target_r` and
// `resource.quadrature` are set per squeezer; `arm_loss` also applies after the
// gate's own beam splitters.
struct GateNoise {
    GateFidelity fidelity = GateFidelity::Ideal;
    MbSqueezeParams resource;
    OutcomeSampler sampler = OutcomeSampler::Rejection;
};

namespace detail {

// Accumulates a state together with the outcomes drawn along the way.
struct Run {
    State state;
    std::vector<double> records;
    double log_density = 0.0;
};

// S(r) = diag(e^{-r}, e^{r}) on one mode, realized according to `noise`.
inline void squeeze_step(Run& run, double r, int mode, const GateNoise& noise, Rng* rng) {
    if (noise.fidelity == GateFidelity::Ideal) {
        run.state = apply_symplectic(run.state, squeeze_symplectic(r), mode);
        return;
    }
    MbSqueezeParams p = noise.resource;
    p.target_r = std::abs(r);
    p.quadrature = r >= 0 ? Quadrature::Q : Quadrature::P;
    if (noise.fidelity == GateFidelity::MbAverage) {
        run.state = mb_squeeze_average(run.state, p, mode);
        return;
    }
    if (!rng) throw InvalidParameter("single-shot gates need a random source");
    auto out = mb_squeeze_single_shot(run.state, p, mode, *rng, std::nullopt, noise.sampler);
    run.records.push_back(out.outcome(0));
    run.log_density += std::log(out.probability);
    run.state = std::move(out.state);
}

inline void arm_loss_step(Run& run, const std::vector<int>& modes, const GateNoise& noise) {
    if (noise.fidelity == GateFidelity::Ideal || noise.resource.arm_loss == 1.0) return;
    for (int m : modes) run.state = apply_channel(run.state, loss(noise.resource.arm_loss, run.state.hbar()), m);
}

inline ConditionalOutcome to_outcome(Run&& run) {
    ConditionalOutcome o;
    o.state = std::move(run.state);
    o.probability = std::exp(run.log_density);
    o.outcome = Eigen::Map<const RVec>(run.records.data(), static_cast<Eigen::Index>(run.records.size()));
    return o;
}

inline void phase_step(Run& run, double s, int mode, const GateNoise& noise, Rng* rng) {
    if (s == 0.0) return;
    if (noise.fidelity == GateFidelity::Ideal) {
        run.state = apply_symplectic(run.state, phase_symplectic(s), mode);
        return;
    }
    const PhaseDecomposition d = phase_decomposition(s);
    run.state = apply_symplectic(run.state, rotation(-d.phi / 2), mode);
    squeeze_step(run, d.r, mode, noise, rng);
    run.state = apply_symplectic(run.state, rotation(d.phi / 2 + d.theta), mode);
}

// Outcome-averaged two-mode map of a CX (control 0, target 1) built from its
// decomposition; not available for single-shot squeezers.
inline GaussianChannel cx_channel(double s, const GateNoise& noise, double hbar) {
    if (noise.fidelity == GateFidelity::Ideal || s == 0.0)
        return s == 0.0 ? identity_channel(2) : cx_symplectic(s).channel();
    if (noise.fidelity == GateFidelity::MbSingleShot) throw Unsupported("single-shot gates have no fixed channel");
    const CxDecomposition d = cx_decomposition(s);
    const double eta = noise.resource.arm_loss;
    const GaussianChannel arms = compose(embed(loss(eta, hbar), 2, {0}), embed(loss(eta, hbar), 2, {1}));
    MbSqueezeParams pc = noise.resource, pt = noise.resource;
    pc.target_r = pt.target_r = std::abs(d.r);
    pc.quadrature = d.r >= 0 ? Quadrature::Q : Quadrature::P;
    pt.quadrature = d.r >= 0 ? Quadrature::P : Quadrature::Q;
    GaussianChannel c = d.bs_in.channel();
    c = compose(c, arms);
    c = compose(c, embed(mb_squeeze_channel(pc, hbar), 2, {0}));
    c = compose(c, embed(mb_squeeze_channel(pt, hbar), 2, {1}));
    c = compose(c, d.bs_out.channel());
    return compose(c, arms);
}

inline GaussianChannel cz_channel(double s, const GateNoise& noise, double hbar) {
    const GaussianChannel turn_in = embed(rotation(-kPi / 2).channel(), 2, {1});
    const GaussianChannel turn_out = embed(rotation(kPi / 2).channel(), 2, {1});
    return compose(compose(turn_in, cx_channel(s, noise, hbar)), turn_out);
}

inline void cx_step(Run& run, double s, int control, int target, const GateNoise& noise, Rng* rng) {
    if (s == 0.0) return;
    if (noise.fidelity != GateFidelity::MbSingleShot) {
        run.state = apply_channel(run.state, cx_channel(s, noise, run.state.hbar()), {control, target});
        return;
    }
    const CxDecomposition d = cx_decomposition(s);
    run.state = apply_symplectic(run.state, d.bs_in, {control, target});
    arm_loss_step(run, {control, target}, noise);
    squeeze_step(run, d.r, control, noise, rng);
    squeeze_step(run, -d.r, target, noise, rng);
    run.state = apply_symplectic(run.state, d.bs_out, {control, target});
    arm_loss_step(run, {control, target}, noise);
}

inline void cz_step(Run& run, double s, int a, int b, const GateNoise& noise, Rng* rng) {
    run.state = apply_symplectic(run.state, rotation(-kPi / 2), b);
    cx_step(run, s, a, b, noise, rng);
    run.state = apply_symplectic(run.state, rotation(kPi / 2), b);
}

}  // namespace detail

// P(s) = exp(i s q^2 / 2 hbar). Squeezer records (single-shot mode) land in `outcome`.
inline ConditionalOutcome phase_gate(const State& s, double strength, int mode, const GateNoise& noise = {},
                                     Rng* rng = nullptr) {
    check_modes(s, {mode});
    detail::Run run{s, {}, 0.0};
    detail::phase_step(run, strength, mode, noise, rng);
    return detail::to_outcome(std::move(run));
}

inline ConditionalOutcome cx_gate(const State& s, double strength, int control, int target, const GateNoise& noise = {},
                                  Rng* rng = nullptr) {
    check_modes(s, {control, target});
    detail::Run run{s, {}, 0.0};
    detail::cx_step(run, strength, control, target, noise, rng);
    return detail::to_outcome(std::move(run));
}

inline ConditionalOutcome cz_gate(const State& s, double strength, int a, int b, const GateNoise& noise = {},
                                  Rng* rng = nullptr) {
    check_modes(s, {a, b});
    detail::Run run{s, {}, 0.0};
    detail::cz_step(run, strength, a, b, noise, rng);
    return detail::to_outcome(std::move(run));
}

// ---------------------------------------------------------------------------
// Pauli readout by binned homodyne

enum class PauliAxis { X, Z, YMinus, YPlus };

struct PauliReadout {
    PauliAxis axis = PauliAxis::Z;
    double u_q = 1.0, u_p = 0.0;  // measured combination u_q q + u_p p
    int parity_offset = 0;

    static PauliReadout make(PauliAxis a) {
        switch (a) {
            case PauliAxis::X: return {a, 0.0, 1.0, 0};
            case PauliAxis::Z: return {a, 1.0, 0.0, 0};
            case PauliAxis::YMinus: return {a, 1.0, -1.0, 0};
            case PauliAxis::YPlus: return {a, 1.0, 1.0, 1};
        }
        throw InvalidParameter("unknown Pauli axis");
    }
    // logical bit for a (rescaled) outcome
    int bit(double x, double hbar) const {
        const long n = gkp_bin(x, hbar) + parity_offset;
        return static_cast<int>(((n % 2) + 2) % 2);
    }
};

inline const char* to_string(PauliAxis a) {
    switch (a) {
        case PauliAxis::X: return "X";
        case PauliAxis::Z: return "Z";
        case PauliAxis::YMinus: return "Y_MINUS";
        case PauliAxis::YPlus: return "Y_PLUS";
    }
    return "?";
}

// Distribution of u_q q + u_p p on one mode.
inline Mixture readout_marginal(const State& s, const PauliReadout& r, int mode = 0) {
    check_modes(s, {mode});
    CVec u = CVec::Zero(s.dim());
    u(2 * mode) = r.u_q;
    u(2 * mode + 1) = r.u_p;
    Mixture m(1);
    std::vector<int> map(s.covs().size());
    for (std::size_t i = 0; i < s.covs().size(); ++i) {
        CMat v(1, 1);
        v(0, 0) = (u.transpose() * s.cov(static_cast<int>(i)) * u)(0, 0);
        map[i] = m.add_cov(v);
    }
    m.reserve(s.size());
    for (const auto& p : s.peaks()) {
        CVec mu(1);
        mu(0) = (u.transpose() * p.mean)(0, 0);
        m.add_peak_log(p.lw, mu, map[p.cov]);
    }
    return merge_duplicates(m);
}

struct ReadoutResult {
    double p0 = 0.0;
    double covered_mass = 0.0;  // total weight inside the summed bins
};

// P(logical 0): marginal mass over bins of even (n + offset), with per-peak
// error-function sums. Each peak contributes the bins inside Re mu +- k sigma,
// widened until the covered mass reaches 1 - 1e-10.
inline ReadoutResult pauli_readout_detail(const State& s, const PauliReadout& r, int mode = 0) {
    const Mixture m = readout_marginal(s, r, mode);
    const double w = gkp_spacing(s.hbar());
    const cplx total = m.total_weight();
    ReadoutResult res;
    for (double k = 12.0; k <= 48.0; k *= 2) {
        cplx even = 0.0, all = 0.0;
        for (const auto& p : m.peaks()) {
            const cplx mu = p.mean(0), v = m.cov_of(p)(0, 0);
            const double sd = std::sqrt(v.real());
            const long lo = static_cast<long>(std::floor((mu.real() - k * sd) / w + 0.5));
            const long hi = static_cast<long>(std::ceil((mu.real() + k * sd) / w - 0.5));
            cplx prev = gaussian_term_cdf(p.lw, mu, v, (lo - 0.5) * w);
            const cplx first = prev;
            for (long n = lo; n <= hi; ++n) {
                const cplx next = gaussian_term_cdf(p.lw, mu, v, (n + 0.5) * w);
                if ((((n + r.parity_offset) % 2) + 2) % 2 == 0) even += next - prev;
                prev = next;
            }
            all += prev - first;
        }
        res.p0 = (even / total).real();
        res.covered_mass = (all / total).real();
        if (res.covered_mass >= 1 - 1e-10) break;
    }
    res.p0 = std::clamp(res.p0, 0.0, 1.0);
    return res;
}

inline double pauli_readout_probability(const State& s, const PauliReadout& r, int mode = 0) {
    return pauli_readout_detail(s, r, mode).p0;
}
inline double pauli_readout_probability(const State& s, PauliAxis a, int mode = 0) {
    return pauli_readout_probability(s, PauliReadout::make(a), mode);
}

// ---------------------------------------------------------------------------
// Shared tail for circuits that end in a homodyne of one mode

struct CircuitOptions {
    double prune_tol = 1e-12;
    OutcomeSampler sampler = OutcomeSampler::Rejection;
};

namespace detail {

inline State tidy(const State& s, double prune_tol) {
    State t = merge_duplicates(s);
    return prune_tol > 0 ? prune(t, prune_tol) : t;
}

inline double draw(const State& s, const Homodyne& h, Rng& rng, const CircuitOptions& o, long* iters) {
    return sample_homodyne_1d(s, h, rng, o.sampler, iters);
}

inline ConditionalOutcome condition_1d(const State& s, const Homodyne& h, double x, const CircuitOptions& o) {
    RVec v(1);
    v << x;
    auto out = condition_on_homodyne(s, h, v);
    out.state = tidy(out.state, o.prune_tol);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// T gate by teleportation with a GKP magic state

struct TgateParams {
    double magic_epsilon = 0.1;
    int cutoff = 0;  // 0: gkp_cutoff_for(magic_epsilon)
    Representation representation = Representation::Real;
    GateNoise cz_noise;     // realization of the CZ
    GateNoise phase_noise;  // realization of the corrective phase gate
    CircuitOptions options;
};

inline State magic_state(const TgateParams& t, double hbar) {
    const Bloch b = magic_bloch();
    const int cut = t.cutoff > 0 ? t.cutoff : gkp_cutoff_for(t.magic_epsilon, 1e-10, hbar);
    return gkp(GkpParams{b.theta, b.phi, t.magic_epsilon, cut, t.representation}, hbar);
}

// Data (mode 0) and rotated magic ancilla (mode 1) after the CZ.
inline ConditionalOutcome tgate_prepare(const State& data, const TgateParams& t, Rng* rng = nullptr) {
    if (data.num_modes() != 1) throw InvalidModes("T gate acts on a single-mode state");
    State anc = apply_symplectic(magic_state(t, data.hbar()), rotation(kPi / 2), 0);
    detail::Run run{tensor(data, anc), {}, 0.0};
    detail::cz_step(run, 1.0, 0, 1, t.cz_noise, rng);
    run.state = detail::tidy(run.state, t.options.prune_tol);
    return detail::to_outcome(std::move(run));
}

namespace detail {

inline void tgate_feedforward(ConditionalOutcome& out, double p0, const TgateParams& t, bool feedforward, Rng* rng) {
    const long n = gkp_bin(p0, out.state.hbar());
    out.bins = {n};
    if (feedforward && (n % 2 != 0)) {
        auto g = phase_gate(out.state, 1.0, 0, t.phase_noise, rng);
        out.state = std::move(g.state);
        RVec rec(out.outcome.size() + g.outcome.size());
        rec << out.outcome, g.outcome;
        out.outcome = rec;
    }
}

}  // namespace detail

// p homodyne of the ancilla with outcome p0, then P(1) on odd bins (if requested).
inline ConditionalOutcome tgate_finish(const State& joint, double p0, const TgateParams& t, bool feedforward = true,
                                       Rng* rng = nullptr) {
    auto out = detail::condition_1d(joint, Homodyne::p(1), p0, t.options);
    detail::tgate_feedforward(out, p0, t, feedforward, rng);
    return out;
}

// Same circuit; with an averaged or ideal CZ the data-magic product is never formed.
inline ConditionalOutcome tgate_teleport(const State& data, const TgateParams& t, Rng& rng) {
    if (t.cz_noise.fidelity == GateFidelity::MbSingleShot) {
        auto prep = tgate_prepare(data, t, &rng);
        long iters = 0;
        const double p0 = detail::draw(prep.state, Homodyne::p(1), rng, t.options, &iters);
        auto out = tgate_finish(prep.state, p0, t, true, &rng);
        RVec rec(prep.outcome.size() + out.outcome.size());
        rec << prep.outcome, out.outcome;
        out.outcome = rec;
        out.iterations = iters;
        return out;
    }
    if (data.num_modes() != 1) throw InvalidModes("T gate acts on a single-mode state");
    const State anc = apply_symplectic(magic_state(t, data.hbar()), rotation(kPi / 2), 0);
    const ProductHomodyne ph(data, anc, detail::cz_channel(1.0, t.cz_noise, data.hbar()), Homodyne::p(1));
    long iters = 0;
    const double p0 = ph.sample(rng, t.options.sampler, &iters);
    auto out = ph.condition(p0, t.options.prune_tol);
    out.iterations = iters;
    detail::tgate_feedforward(out, p0, t, true, &rng);
    return out;
}

// ---------------------------------------------------------------------------
// Steane-type error correction with GKP ancillae

struct EcParams {
    double ancilla_epsilon = 0.1;
    int cutoff = 0;  // 0: gkp_cutoff_for(ancilla_epsilon)
    Representation representation = Representation::Real;
    GateNoise noise;  // realization of the two SUM gates
    CircuitOptions options;
};

// q round then p round. Records: [q0, p0] plus any squeezer outcomes.
inline ConditionalOutcome gkp_error_correct(const State& data, const EcParams& e, Rng& rng,
                                            std::optional<std::pair<double, double>> given = std::nullopt) {
    if (data.num_modes() != 1) throw InvalidModes("error correction acts on a single-mode state");
    const double hbar = data.hbar();
    const int cut = e.cutoff > 0 ? e.cutoff : gkp_cutoff_for(e.ancilla_epsilon, 1e-10, hbar);
    const GkpParams base{0.0, 0.0, e.ancilla_epsilon, cut, e.representation};
    GkpParams plus = base;
    plus.theta = kPi / 2;
    std::vector<double> records;
    std::vector<long> bins;

    // q syndrome: SUM data -> |+>, read the ancilla q
    ConditionalOutcome r1;
    double q0;
    if (e.noise.fidelity == GateFidelity::MbSingleShot) {
        detail::Run run{tensor(data, gkp(plus, hbar)), {}, 0.0};
        detail::cx_step(run, 1.0, 0, 1, e.noise, &rng);
        run.state = detail::tidy(run.state, e.options.prune_tol);
        q0 = given ? given->first : detail::draw(run.state, Homodyne::q(1), rng, e.options, nullptr);
        r1 = detail::condition_1d(run.state, Homodyne::q(1), q0, e.options);
        records.insert(records.end(), run.records.begin(), run.records.end());
    } else {
        const State anc = gkp(plus, hbar);
        const ProductHomodyne ph(data, anc, detail::cx_channel(1.0, e.noise, hbar), Homodyne::q(1));
        q0 = given ? given->first : ph.sample(rng, e.options.sampler);
        r1 = ph.condition(q0, e.options.prune_tol);
    }
    const State st = apply_channel(r1.state, displacement_qp(-centered_mod(q0, hbar), 0.0), 0);
    records.push_back(q0);
    bins.push_back(gkp_bin(q0, hbar));

    // p syndrome: inverse SUM |0> -> data, read the ancilla p
    ConditionalOutcome r2;
    double p0;
    if (e.noise.fidelity == GateFidelity::MbSingleShot) {
        detail::Run run2{tensor(st, gkp(base, hbar)), {}, 0.0};
        detail::cx_step(run2, -1.0, 1, 0, e.noise, &rng);
        run2.state = detail::tidy(run2.state, e.options.prune_tol);
        p0 = given ? given->second : detail::draw(run2.state, Homodyne::p(1), rng, e.options, nullptr);
        r2 = detail::condition_1d(run2.state, Homodyne::p(1), p0, e.options);
        records.insert(records.end(), run2.records.begin(), run2.records.end());
    } else {
        const State anc = gkp(base, hbar);
        const GaussianChannel ch = embed(detail::cx_channel(-1.0, e.noise, hbar), 2, {1, 0});
        const ProductHomodyne ph(st, anc, ch, Homodyne::p(1));
        p0 = given ? given->second : ph.sample(rng, e.options.sampler);
        r2 = ph.condition(p0, e.options.prune_tol);
    }
    State fin = apply_channel(r2.state, displacement_qp(0.0, -centered_mod(p0, hbar)), 0);
    records.push_back(p0);
    bins.push_back(gkp_bin(p0, hbar));

    ConditionalOutcome out;
    out.probability = r1.probability * r2.probability;
    out.state = std::move(fin);
    out.outcome = Eigen::Map<const RVec>(records.data(), static_cast<Eigen::Index>(records.size()));
    out.bins = std::move(bins);
    return out;
}

// ---------------------------------------------------------------------------
// Teleportation of a GKP state into a momentum-squeezed mode

struct ClusterParams {
    double squeeze_db = 10.0;  // ancilla and squeezer resources
    double loss_eta = 1.0;     // after every preparation and on both arms of every beam splitter
    double det_eta = 0.99;     // all homodyne detectors
    GateFidelity cz_fidelity = GateFidelity::MbAverage;
    CircuitOptions options;

    GateNoise noise() const {
        GateNoise n;
        n.fidelity = cz_fidelity;
        n.resource.ancilla_r = db_to_r(squeeze_db);
        n.resource.eta_det = det_eta;
        n.resource.ancilla_loss = loss_eta;
        n.resource.arm_loss = loss_eta;
        n.sampler = options.sampler;
        return n;
    }
};

// GKP (mode 0) and lossy p-squeezed ancilla (mode 1) after the CZ and the detector loss on mode 0.
inline ConditionalOutcome cluster_prepare(const State& gkp_state, const ClusterParams& c, Rng* rng = nullptr) {
    if (gkp_state.num_modes() != 1) throw InvalidModes("teleportation input must be single-mode");
    if (!(c.loss_eta > 0 && c.loss_eta <= 1) || !(c.det_eta > 0 && c.det_eta <= 1))
        throw InvalidParameter("efficiencies must lie in (0,1]");
    const double hbar = gkp_state.hbar();
    detail::Run run{tensor(gkp_state, squeezed(-db_to_r(c.squeeze_db), 0.0, hbar)), {}, 0.0};
    if (c.loss_eta < 1)
        for (int m : {0, 1}) run.state = apply_channel(run.state, loss(c.loss_eta, hbar), m);
    detail::cz_step(run, 1.0, 0, 1, c.noise(), rng);
    if (c.det_eta < 1) run.state = apply_channel(run.state, loss(c.det_eta, hbar), 0);
    run.state = detail::tidy(run.state, c.options.prune_tol);
    return detail::to_outcome(std::move(run));
}

inline ConditionalOutcome cluster_finish(const State& joint, double p0, const ClusterParams& c) {
    auto out = detail::condition_1d(joint, Homodyne::p(0), p0, c.options);
    out.state = apply_channel(out.state, displacement_qp(-p0, 0.0), 0);
    return out;
}

inline ConditionalOutcome cluster_teleport(const State& gkp_state, const ClusterParams& c, Rng& rng) {
    if (c.cz_fidelity == GateFidelity::MbSingleShot) {
        auto prep = cluster_prepare(gkp_state, c, &rng);
        long iters = 0;
        const double p0 = detail::draw(prep.state, Homodyne::p(0), rng, c.options, &iters);
        auto out = cluster_finish(prep.state, p0, c);
        RVec rec(prep.outcome.size() + 1);
        rec << prep.outcome, p0;
        out.outcome = rec;
        out.iterations = iters;
        return out;
    }
    if (gkp_state.num_modes() != 1) throw InvalidModes("teleportation input must be single-mode");
    if (!(c.loss_eta > 0 && c.loss_eta <= 1) || !(c.det_eta > 0 && c.det_eta <= 1))
        throw InvalidParameter("efficiencies must lie in (0,1]");
    const double hbar = gkp_state.hbar();
    State a = gkp_state, b = squeezed(-db_to_r(c.squeeze_db), 0.0, hbar);
    if (c.loss_eta < 1) {
        a = apply_channel(a, loss(c.loss_eta, hbar), 0);
        b = apply_channel(b, loss(c.loss_eta, hbar), 0);
    }
    const GaussianChannel ch = compose(detail::cz_channel(1.0, c.noise(), hbar), embed(loss(c.det_eta, hbar), 2, {0}));
    const ProductHomodyne ph(a, b, ch, Homodyne::p(0));
    long iters = 0;
    const double p0 = ph.sample(rng, c.options.sampler, &iters);
    auto out = ph.condition(p0, c.options.prune_tol);
    out.state = apply_channel(out.state, displacement_qp(-p0, 0.0), 0);
    out.iterations = iters;
    return out;
}

}  // namespace bosonic
