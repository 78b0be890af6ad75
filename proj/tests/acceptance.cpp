// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bosonic/analysis.hpp"
#include "bosonic/channels.hpp"
#include "bosonic/gkp_gates.hpp"
#include "bosonic/io.hpp"
#include "bosonic/measurement.hpp"
#include "bosonic/program.hpp"
#include "bosonic/scenarios.hpp"
#include "bosonic/states.hpp"

using namespace bosonic;

namespace {

constexpr double kHbar = 2.0;

struct Verdict {
    bool pass = true;
    std::string detail;
    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        if (!detail.empty()) detail += "; ";
        detail += (ok ? "" : "!! ") + what;
    }
};

std::string fmt(const char* f, double a) {
    char b[128];
    std::snprintf(b, sizeof b, f, a);
    return b;
}
std::string fmt(const char* f, double a, double c) {
    char b[160];
    std::snprintf(b, sizeof b, f, a, c);
    return b;
}
std::string fmt(const char* f, double a, double c, double d) {
    char b[200];
    std::snprintf(b, sizeof b, f, a, c, d);
    return b;
}

// max |W_a - W_b| on an n x n grid over [-L, L]^2, absolute phase-space units
double grid_maxdiff(const State& a, const State& b, double L, int n) {
    const MixtureEvaluator ea(a), eb(b);
    double m = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double x[2] = {-L + 2 * L * i / (n - 1), -L + 2 * L * j / (n - 1)};
            m = std::max(m, std::abs(ea(x) - eb(x)));
        }
    return m;
}

template <class F>
double ks_stat(std::vector<double> xs, F cdf) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double c = cdf(xs[i]);
        d = std::max({d, std::abs(c - i / n), std::abs((i + 1) / n - c)});
    }
    return d;
}

RVec v1(double x) { return RVec::Constant(1, x); }

// --- 1
Verdict fock_fidelities() {
    Verdict v;
    for (int n = 1; n <= 3; ++n) {
        double prev = 1.0;
        bool mono = true;
        std::string row;
        for (double r : {0.2, 0.1, 0.05, 0.01}) {
            const double inf = 1 - fock_fidelity(fock(FockParams{n, r}, kHbar), n);
            mono = mono && inf < prev;
            prev = inf;
            row += fmt(" %.2e", inf);
        }
        v.require(1 - prev >= 0.999, "n=" + std::to_string(n) + fmt(" F(0.01)=%.5f", 1 - prev));
        v.require(mono, "infidelity" + row);
    }
    return v;
}

// --- 2
Verdict gkp_agreement() {
    Verdict v;
    GkpParams g;
    g.epsilon = 0.1;
    g.cutoff = 12;
    const State re = gkp(g, kHbar);
    g.representation = Representation::Complex;
    const State co = gkp(g, kHbar);
    const double L = 4 * std::sqrt(kPi * kHbar);
    const double d = grid_maxdiff(re, co, L, 201);
    v.require(d <= 1e-8, fmt("REAL vs COMPLEX max|dW| %.2e", d));

    const State ideal = gkp_ideal_lattice(0.0, 0.0, 12, kHbar);
    State damped = fock_damping(ideal, 0.1, std::vector<int>{0}, false);
    damped.scale_log(-damped.log_total_weight());
    GkpParams r;
    r.epsilon = 0.1;
    r.cutoff = 12;
    r.dust = 0.0;
    State ref = gkp(r, kHbar);
    ref.scale_log(-ref.log_total_weight());
    double e = (damped.cov(0) - ref.cov(0)).cwiseAbs().maxCoeff();
    if (damped.size() != ref.size()) e = 1.0;
    else
        for (std::size_t k = 0; k < ref.size(); ++k) {
            e = std::max(e, (damped.peaks()[k].mean - ref.peaks()[k].mean).cwiseAbs().maxCoeff());
            e = std::max(e, std::abs(damped.peaks()[k].weight() - ref.peaks()[k].weight()));
        }
    v.require(e <= 1e-10, fmt("damped lattice vs REAL %.2e", e));
    return v;
}

// --- 3
Verdict cat_agreement() {
    Verdict v;
    for (double a : {1.0, 2.0, 3.0}) {
        CatParams p{a, 0.0};
        const State co = cat(p, kHbar);
        p.representation = Representation::Real;
        p.D = 6.0;
        const double d = grid_maxdiff(co, cat(p, kHbar), std::sqrt(2 * kHbar) * a + 8, 161);
        v.require(d <= 1e-8, fmt("alpha=%.0f %.2e", a, d));
    }
    return v;
}

// --- 4
Verdict mb_single_shot() {
    Verdict v;
    for (double target : {0.3, 1.0, 2.0}) {
        const Json res = run_scenario("mbsqueeze", Json{{"target_r", target}, {"ancilla_r", 1.2}, {"eta_det", 0.99}, {"runs", 10000}},
                                      ScenarioOptions{2024, 1, 1e-12});
        const auto& runs = res.at("runs");
        std::vector<double> mq, mp;
        for (const auto& r : runs) {
            mq.push_back(r["moments"]["mean_q"].get<double>());
            mp.push_back(r["moments"]["mean_p"].get<double>());
        }
        auto mean = [](const std::vector<double>& x) {
            double s = 0;
            for (double y : x) s += y;
            return s / x.size();
        };
        const double aq = mean(mq), ap = mean(mp);
        // per-run contributions to the outcome-averaged covariance
        std::vector<double> xqq, xqp, xpp;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            const auto& c = runs[i]["cov"];
            xqq.push_back(c[0].get<double>() + (mq[i] - aq) * (mq[i] - aq));
            xqp.push_back(c[1].get<double>() + (mq[i] - aq) * (mp[i] - ap));
            xpp.push_back(c[2].get<double>() + (mp[i] - ap) * (mp[i] - ap));
        }
        auto se = [&](const std::vector<double>& x) {
            const double m = mean(x);
            double s = 0;
            for (double y : x) s += (y - m) * (y - m);
            return std::sqrt(s / (x.size() - 1) / x.size());
        };
        const auto& ch = res["aggregate"]["channel_cov"];
        const auto& ideal = res["aggregate"]["ideal_cov"];
        // components that do not fluctuate between shots have SE ~ 0; those get a 1e-10 rounding floor
        double worst = 0;
        auto dev = [&](double got, double want, double s) { worst = std::max(worst, std::abs(got - want) / std::max(s, 1e-10 / 3)); };
        dev(aq, 0.0, se(mq));
        dev(ap, 0.0, se(mp));
        dev(mean(xqq), ch[0].get<double>(), se(xqq));
        dev(mean(xqp), ch[1].get<double>(), se(xqp));
        dev(mean(xpp), ch[2].get<double>(), se(xpp));
        v.require(worst <= 3.0, fmt("r=%.1f worst |dev|/SE %.2f", target, worst));
        if (target == 2.0) {
            const double cond_pp = runs[0]["cov"][2].get<double>(), ideal_pp = ideal[2].get<double>();
            v.require(cond_pp < ideal_pp, fmt("single-shot Vpp %.2f < ideal %.2f", cond_pp, ideal_pp));
            double var_mp = 0;
            for (double y : mp) var_mp += (y - ap) * (y - ap) / (mp.size() - 1);
            const double ratio = std::sqrt(var_mp / ideal_pp);
            v.require(ratio > 0.3 && ratio < 3.0, fmt("p-mean spread / ideal anti-squeezed width %.2f", ratio));
        }
    }
    return v;
}

// --- 5
Verdict sampler_ks() {
    Verdict v;
    const double crit = 1.628 / std::sqrt(2000.0);  // alpha = 0.01
    const State c = cat(CatParams{2.0, 0.0}, kHbar);
    const State g = gkp(GkpParams{0.0, 0.0, 0.1, gkp_cutoff_for(0.1, 1e-10, kHbar)}, kHbar);
    int seed = 100;
    for (const auto& [name, s] : {std::pair<const char*, const State*>{"cat", &c}, {"gkp", &g}})
        for (const Homodyne& h : {Homodyne::q(0), Homodyne::p(0)}) {
            const Mixture m = merge_duplicates(homodyne_marginal(*s, h));
            RejectionSampler smp(m);
            Rng rng(seed++);
            std::vector<double> xs(2000);
            for (auto& x : xs) x = smp.sample(rng).value(0);
            const double d = ks_stat(xs, [&](double x) { return marginal_cdf(m, x); });
            v.require(d <= crit, std::string(name) + (h.angle(0) == 0 ? " q" : " p") + fmt(" KS %.4f", d));
        }
    Mixture m(1);
    const int c0 = m.add_cov(CMat::Constant(1, 1, 1.0));
    const int c1 = m.add_cov(CMat::Constant(1, 1, 0.5));
    m.add_peak(0.8, CVec::Constant(1, -1.0), c0);
    m.add_peak(0.4, CVec::Constant(1, 1.5), c0);
    m.add_peak(-0.2, CVec::Constant(1, 1.5), c1);
    RejectionSampler smp(m);
    Rng rng(7);
    std::vector<double> xs(100000);
    for (auto& x : xs) x = smp.sample(rng).value(0);
    const double d = ks_stat(xs, [&](double x) { return marginal_cdf(m, x); });
    v.require(d <= 0.01, fmt("3-peak sup-CDF %.4f", d));
    return v;
}

// --- 6
Verdict phase_gate_table() {
    Verdict v;
    const State plus_i = gkp(GkpParams{kPi / 2, -kPi / 2, 0.1, gkp_cutoff_for(0.1, 1e-10, kHbar)}, kHbar);
    const double ym = pauli_readout_probability(plus_i, PauliAxis::YMinus), yp = pauli_readout_probability(plus_i, PauliAxis::YPlus);
    v.require(std::abs(ym - 0.995) <= 0.003 && std::abs(yp - 0.995) <= 0.003, fmt("|+i> %.4f / %.4f", ym, yp));
    const State plus = gkp(GkpParams{kPi / 2, 0.0, 0.1, gkp_cutoff_for(0.1, 1e-10, kHbar)}, kHbar);
    struct Row {
        double db, eta, ym, yp;
    };
    for (const Row& r : {Row{14, 1.0, 0.999, 0.922}, Row{6, 0.95, 0.952, 0.872}}) {
        GateNoise n;
        n.fidelity = GateFidelity::MbAverage;
        n.resource.ancilla_r = db_to_r(r.db);
        n.resource.eta_det = r.eta;
        const State out = phase_gate(plus, 1.0, 0, n).state;
        const double a = pauli_readout_probability(out, PauliAxis::YMinus), b = pauli_readout_probability(out, PauliAxis::YPlus);
        v.require(std::abs(a - r.ym) <= 0.01 && std::abs(b - r.yp) <= 0.01, fmt("%.0f dB: %.4f / %.4f", r.db, a, b));
    }
    return v;
}

// --- 7
Verdict tgate_readout() {
    Verdict v;
    const Json res = run_scenario("tgate", Json{{"data_epsilon", 0.1}, {"magic_db", 11.0}, {"fidelity", "ideal"}, {"runs", 500}},
                                  ScenarioOptions{7, 1, 1e-12});
    const auto& mean = res["aggregate"]["mean"];
    const auto& se = res["aggregate"]["se"];
    // T|+> read out as a qubit: X and both Y readouts cos^2(pi/8), Z one half
    const double c2 = std::pow(std::cos(kPi / 8), 2);
    for (const auto& [ax, ideal] : {std::pair{"X", c2}, {"Z", 0.5}, {"Y_MINUS", c2}, {"Y_PLUS", c2}}) {
        const double m = mean[ax].get<double>();
        v.require(std::abs(m - ideal) <= 0.015, std::string(ax) + fmt(" %.4f (ideal %.4f, se %.4f)", m, ideal, se[ax].get<double>()));
    }
    return v;
}

// --- 8
Verdict cluster_trends() {
    Verdict v;
    const std::vector<double> dbs = {6, 10, 14, 18}, etas = {1.0, 0.995, 0.99};
    // every cell shares the seed, so neighbouring cells are compared on common random numbers
    std::vector<std::vector<std::vector<double>>> px(etas.size(), std::vector<std::vector<double>>(dbs.size()));
    std::string table;
    for (std::size_t e = 0; e < etas.size(); ++e)
        for (std::size_t d = 0; d < dbs.size(); ++d) {
            const Json res = run_scenario("cluster-teleport", Json{{"squeeze_db", dbs[d]}, {"loss_eta", etas[e]}, {"runs", 200}},
                                          ScenarioOptions{88, 1, 1e-12});
            for (const auto& r : res["runs"]) px[e][d].push_back(r["readout_probs"]["X"].get<double>());
        }
    auto mean = [](const std::vector<double>& x) {
        double s = 0;
        for (double y : x) s += y;
        return s / x.size();
    };
    // a step is a violation only when it goes the wrong way by more than 2 paired standard errors
    auto worse = [&](const std::vector<double>& lo, const std::vector<double>& hi) {
        std::vector<double> diff(lo.size());
        for (std::size_t i = 0; i < lo.size(); ++i) diff[i] = hi[i] - lo[i];
        const double m = mean(diff);
        double s = 0;
        for (double y : diff) s += (y - m) * (y - m);
        const double se = std::sqrt(s / (diff.size() - 1) / diff.size());
        return m < -2 * se && m < -1e-12;
    };
    int bad = 0;
    for (std::size_t e = 0; e < etas.size(); ++e) {
        table += fmt(" eta=%.3f:", etas[e]);
        for (std::size_t d = 0; d < dbs.size(); ++d) {
            table += fmt(" %.3f", mean(px[e][d]));
            if (d > 0 && worse(px[e][d - 1], px[e][d])) ++bad;
            if (e > 0 && worse(px[e][d], px[e - 1][d])) ++bad;
        }
    }
    v.require(bad == 0, std::to_string(bad) + " trend violations;" + table);
    return v;
}

// --- 9
Verdict properties() {
    Verdict v;
    std::vector<State> corpus = {coherent(cplx(0.6, -0.3), kHbar), squeezed(0.5, 0.4, kHbar), thermal(0.7, kHbar),
                                 cat(CatParams{1.8, 0.0}, kHbar), cat(CatParams{cplx(1.0, 0.7), 1.0, Representation::Real}, kHbar),
                                 fock(FockParams{2, 0.05}, kHbar), fock(FockParams{2, 0.1}, kHbar), fock(FockParams{1, 0.05}, kHbar),
                                 gkp(GkpParams{0.7, 0.3, 0.15, gkp_cutoff_for(0.15, 1e-12, kHbar)}, kHbar),
                                 gkp(GkpParams{1.2, -0.4, 0.2, gkp_cutoff_for(0.2, 1e-12, kHbar), Representation::Complex}, kHbar)};
    std::vector<std::pair<std::string, std::function<State(const State&)>>> ops = {
        {"rotation", [](const State& s) { return apply_symplectic(s, rotation(0.7), 0); }},
        {"squeeze", [](const State& s) { return apply_symplectic(s, squeeze_symplectic(0.4, 0.3), 0); }},
        {"phase", [](const State& s) { return apply_symplectic(s, phase_symplectic(0.8), 0); }},
        {"loss", [](const State& s) { return apply_channel(s, loss(0.8, kHbar), 0); }},
        {"thermal_loss", [](const State& s) { return apply_channel(s, thermal_loss(0.9, 0.3, kHbar), 0); }},
        {"random_displacement", [](const State& s) { return apply_channel(s, random_displacement(0.2), 0); }},
        {"amplifier", [](const State& s) { return apply_channel(s, amplifier(1.3, kHbar), 0); }},
        {"displacement", [](const State& s) { return apply_channel(s, displacement(cplx(0.4, -0.2), kHbar), 0); }},
        {"fock_damping", [](const State& s) { return fock_damping(s, 0.2, 0); }}};
    // Weights live in log form, so sum c cannot land closer to 1 than ~ulp(log|c|) * sum|c|.
    // States with sum|c| above 1e5 sit above 1e-10 for that reason alone; they are reported, not asserted.
    auto l1 = [](const State& s) {
        double m = 0;
        for (const auto& p : s.peaks()) m += std::abs(p.weight());
        return m;
    };
    double norm_err = 0, heavy_err = 0, imag = 0;
    bool counts = true;
    for (const auto& s : corpus) {
        double& slot = l1(s) <= 1e5 ? norm_err : heavy_err;
        slot = std::max(slot, std::abs(s.total_weight() - 1.0));
        for (const auto& [name, op] : ops) {
            const State t = op(s);
            slot = std::max(slot, std::abs(t.total_weight() - 1.0));
            counts = counts && t.size() == s.size();
            imag = std::max(imag, wigner_grid(t, GridSpec::square(5, 41)).imag_ratio);
        }
    }
    v.require(norm_err <= 1e-10, fmt("|sum c - 1| %.1e (sum|c| > 1e5: %.1e, not asserted)", norm_err, heavy_err));
    v.require(imag <= 1e-10, fmt("Wigner imag ratio %.1e", imag));

    // peak-count laws
    const State two = tensor(corpus[3], corpus[6]);
    counts = counts && two.size() == corpus[3].size() * corpus[6].size();
    const State bs = apply_symplectic(two, beamsplitter(0.6), {0, 1});
    counts = counts && bs.size() == two.size();
    counts = counts && condition_on_homodyne(bs, Homodyne::q(1), v1(0.3)).state.size() == two.size();
    counts = counts && partial_trace(bs, {0}).size() == two.size();
    v.require(counts, "peak-count laws");

    // single-Gaussian conditioning against the Schur complement formula
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss;
    double cond = 0;
    for (int trial = 0; trial < 20; ++trial) {
        RMat a(4, 4);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) a(i, j) = gauss(rng);
        const RMat sig = a * a.transpose() + 1.1 * RMat::Identity(4, 4);
        RVec mu(4);
        for (int i = 0; i < 4; ++i) mu(i) = gauss(rng);
        State s(2, kHbar);
        s.add_peak(1.0, mu.cast<cplx>(), s.add_cov(sig.cast<cplx>()));
        RMat sm(2, 2);
        sm << 0.7, 0.1, 0.1, 1.4;
        RVec r(2);
        r << gauss(rng), gauss(rng);
        const auto out = condition_on_generaldyne(s, {{1}, sm}, r);
        const RMat SA = sig.topLeftCorner(2, 2), SB = sig.bottomRightCorner(2, 2), SAB = sig.topRightCorner(2, 2);
        const RMat inv = (SB + sm).inverse();
        const RVec dv = r - mu.tail(2);
        const double p = std::exp(-0.5 * dv.dot(inv * dv)) / (2 * kPi * std::sqrt((SB + sm).determinant()));
        cond = std::max(cond, (out.state.cov(0).real() - (SA - SAB * inv * SAB.transpose())).cwiseAbs().maxCoeff());
        cond = std::max(cond, (out.state.peaks()[0].mean.real() - (mu.head(2) + SAB * inv * dv)).cwiseAbs().maxCoeff());
        cond = std::max(cond, std::abs(out.probability - p));
    }
    v.require(cond <= 1e-10, fmt("conditioning vs Schur %.1e", cond));

    // semigroups
    const State c = cat(CatParams{1.5, 0.0}, kHbar);
    const double ls = grid_maxdiff(apply_channel(apply_channel(c, loss(0.8, kHbar), 0), loss(0.7, kHbar), 0),
                                   apply_channel(c, loss(0.56, kHbar), 0), 6, 61);
    const double fs = grid_maxdiff(fock_damping(fock_damping(c, 0.1, 0), 0.25, 0), fock_damping(c, 0.35, 0), 6, 61);
    v.require(ls <= 1e-8 && fs <= 1e-8, fmt("loss semigroup %.1e, damping semigroup %.1e", ls, fs));

    // symplectic form preserved
    double om = 0;
    auto check = [&](const RMat& S) {
        const int n = static_cast<int>(S.rows()) / 2;
        om = std::max(om, (S * omega(n) * S.transpose() - omega(n)).cwiseAbs().maxCoeff());
    };
    check(rotation(0.9).S);
    check(squeeze_symplectic(1.3, 0.4).S);
    check(phase_symplectic(-0.6).S);
    check(beamsplitter(0.4).S);
    check(cx_symplectic(1.7).S);
    check(cz_symplectic(-0.8).S);
    check(direct_sum(squeeze_symplectic(0.5), rotation(0.2)).S * beamsplitter(1.1).S);
    v.require(om <= 1e-10, fmt("S Omega S^T - Omega %.1e", om));
    return v;
}

// --- 10
State run_to_state(const std::string& program, const std::string& mode) {
    std::ifstream f(std::filesystem::path(BOSONIC_PROGRAMS_DIR) / program);
    Json j = Json::parse(f);
    j["outputs"] = Json::array({Json{{"kind", "state_dump"}, {"file", "state.json"}, {"mode", mode}}});
    const auto dir = std::filesystem::temp_directory_path() / "bosonic_acceptance";
    std::filesystem::create_directories(dir);
    run_program(program_from_json(j), RunOptions{3, dir.string(), 1e-12});
    std::ifstream g(dir / "state.json");
    const State s = state_from_json(Json::parse(g));
    std::filesystem::remove_all(dir);
    return s;
}

void check_far_peaks(Verdict& v, const char* name, const State& s, double half) {
    const auto g = wigner_grid(s, GridSpec::square(half, 241));
    const double rad = 8 * std::sqrt(kHbar);
    double inner = 0, outer = 0, integral = 0;
    bool finite = true;
    const double h = (g.q[1] - g.q[0]) * (g.p[1] - g.p[0]);
    for (int i = 0; i < g.w.rows(); ++i)
        for (int j = 0; j < g.w.cols(); ++j) {
            const double w = g.w(i, j);
            finite = finite && std::isfinite(w);
            integral += w * h;
            double& slot = std::hypot(g.q[i], g.p[j]) > rad ? outer : inner;
            slot = std::max(slot, std::abs(w));
        }
    const double norm = std::abs(s.total_weight() - 1.0);
    v.require(finite && norm <= 1e-6 && g.imag_ratio <= 1e-10 && outer >= 1e-2 * std::max(inner, outer),
              std::string(name) + fmt(": |sum c-1| %.1e, imag %.1e, far/near peak %.2f", norm, g.imag_ratio, outer / std::max(inner, 1e-300)) +
                  fmt(", grid integral %.4f", integral));
}

Verdict fock_backend_regime() {
    Verdict v;
    check_far_peaks(v, "cat a=6 lossy BS", run_to_state("cat_lossy_beamsplitter.json", "a"), 14);
    check_far_peaks(v, "20 dB GKP CZ teleport", run_to_state("gkp_cz_teleport.json", "anc"), 14);
    return v;
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, Verdict (*)()>> criteria = {
        {"Fock approximation fidelity", fock_fidelities},
        {"GKP representation agreement", gkp_agreement},
        {"cat representation agreement", cat_agreement},
        {"MB squeezing single shot vs average", mb_single_shot},
        {"rejection sampler", sampler_ks},
        {"phase-gate readout table", phase_gate_table},
        {"T-gate readout", tgate_readout},
        {"cluster teleportation trends", cluster_trends},
        {"property suites", properties},
        {"large phase-space scenarios", fock_backend_regime},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %zu (%s) [%.1f s]: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, secs, v.detail.c_str());
        std::fflush(stdout);
        failures += !v.pass;
    }
    return failures;
}
