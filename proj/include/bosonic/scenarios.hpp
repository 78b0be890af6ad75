#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "bosonic/gkp_gates.hpp"
#include "bosonic/io.hpp"
#include "bosonic/program.hpp"

namespace bosonic {

// Built-in Monte-Carlo scenarios. Result document:
//   {"scenario", "params", "runs": [{"homodyne_records", "readout_probs", ...}],
//    "aggregate": {"mean": {...}, "std": {...}, "se": {...}}}
// Array-valued sweep parameters produce {"scenario", "params", "sweep": [<result>, ...]}.

struct ScenarioOptions {
    std::uint64_t seed = 0;
    int threads = 1;
    double prune_tol = 1e-12;
};

// Run i draws from its own stream, so results do not depend on the thread count and
// runs with the same index share random numbers across sweep points.
inline Rng run_rng(std::uint64_t seed, std::size_t run) {
    std::seed_seq s{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(run), static_cast<std::uint32_t>(static_cast<std::uint64_t>(run) >> 32)};
    return Rng(s);
}

inline std::vector<Json> parallel_runs(std::size_t n, int threads, const std::function<Json(std::size_t)>& body) {
    std::vector<Json> out(n);
    const int t = std::max(1, std::min<int>(threads, static_cast<int>(n)));
    if (t == 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = body(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex m;
    std::vector<std::thread> pool;
    for (int k = 0; k < t; ++k)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    out[i] = body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> g(m);
                    if (!err) err = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
    return out;
}

// mean / sample std / standard error of every numeric key of runs[*][field]
inline Json aggregate_runs(const std::vector<Json>& runs, const char* field = "readout_probs") {
    std::map<std::string, std::vector<double>> vals;
    for (const auto& r : runs)
        if (r.contains(field))
            for (auto kv = r.at(field).begin(); kv != r.at(field).end(); ++kv)
                if (kv.value().is_number()) vals[kv.key()].push_back(kv.value().get<double>());
    Json mean = Json::object(), sd = Json::object(), se = Json::object();
    for (const auto& [k, v] : vals) {
        double m = 0;
        for (double x : v) m += x;
        m /= v.size();
        double s2 = 0;
        for (double x : v) s2 += (x - m) * (x - m);
        const double s = v.size() > 1 ? std::sqrt(s2 / (v.size() - 1)) : 0.0;
        mean[k] = m;
        sd[k] = s;
        se[k] = s / std::sqrt(static_cast<double>(v.size()));
    }
    return {{"mean", mean}, {"std", sd}, {"se", se}};
}

namespace detail {

inline Json readouts(const State& s, std::initializer_list<PauliAxis> axes) {
    Json r = Json::object();
    for (auto a : axes) r[to_string(a)] = pauli_readout_probability(s, a);
    return r;
}

inline std::vector<double> to_vector(const RVec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline void check_scenario_params(const Json& p, const std::map<std::string, Json>& defaults, const std::string& name) {
    if (!p.is_object()) throw SchemaError("scenario params: expected an object");
    for (auto kv = p.begin(); kv != p.end(); ++kv) {
        if (!defaults.count(kv.key())) throw SchemaError("scenario " + name + ": unknown parameter '" + kv.key() + "'");
        const Json& d = defaults.at(kv.key());
        const Json& v = kv.value();
        const bool ok = d.is_string() ? v.is_string() : (v.is_number() || (v.is_array() && !v.empty() &&
                                                                           std::all_of(v.begin(), v.end(), [](const Json& x) { return x.is_number(); })));
        if (!ok) throw SchemaError("scenario " + name + ".params." + kv.key() + ": wrong type");
    }
}

inline Json merged(const Json& p, const std::map<std::string, Json>& defaults) {
    Json out = Json::object();
    for (const auto& [k, v] : defaults) out[k] = p.contains(k) ? p.at(k) : v;
    return out;
}

inline OutcomeSampler sampler_from(const Json& p) {
    const std::string s = p.at("sampler").get<std::string>();
    if (s == "rejection") return OutcomeSampler::Rejection;
    if (s == "inverse_cdf") return OutcomeSampler::InverseCdf;
    throw InvalidParameter("sampler must be \"rejection\" or \"inverse_cdf\"");
}

// Expands array-valued keys (in `sweepable`) into a cartesian product, row-major in key order.
inline std::vector<Json> expand(const Json& p, const std::vector<std::string>& sweepable) {
    std::vector<Json> pts{p};
    for (const auto& k : sweepable) {
        if (!p.at(k).is_array()) continue;
        std::vector<Json> next;
        for (const auto& base : pts)
            for (const auto& v : p.at(k)) {
                Json q = base;
                q[k] = v;
                next.push_back(std::move(q));
            }
        pts = std::move(next);
    }
    for (const auto& q : pts)
        for (auto kv = q.begin(); kv != q.end(); ++kv)
            if (kv.value().is_array()) throw SchemaError("parameter '" + kv.key() + "' cannot be swept");
    return pts;
}

inline int runs_of(const Json& p) {
    const double r = p.at("runs").get<double>();
    if (!(r >= 1) || r != std::floor(r)) throw InvalidParameter("runs must be a positive integer");
    return static_cast<int>(r);
}

// --- individual scenarios: one parameter point each

inline Json scenario_mbsqueeze(const Json& p, const ScenarioOptions& o) {
    MbSqueezeParams m;
    m.target_r = p.at("target_r").get<double>();
    m.ancilla_r = p.at("ancilla_r").get<double>();
    m.eta_det = p.at("eta_det").get<double>();
    m.quadrature = p.at("quadrature").get<std::string>() == "p" ? Quadrature::P : Quadrature::Q;
    m.validate();
    const double hbar = p.at("hbar").get<double>();
    const State vac = vacuum(1, hbar);
    const auto sampler = sampler_from(p);
    auto runs = parallel_runs(runs_of(p), o.threads, [&](std::size_t i) {
        Rng rng = run_rng(o.seed, i);
        const auto out = mb_squeeze_single_shot(vac, m, 0, rng, std::nullopt, sampler);
        const auto& pk = out.state.peaks()[0];
        const CMat& c = out.state.cov_of(pk);
        return Json{{"homodyne_records", to_vector(out.outcome)},
                    {"readout_probs", Json::object()},
                    {"moments", {{"mean_q", pk.mean(0).real()}, {"mean_p", pk.mean(1).real()}}},
                    {"cov", {c(0, 0).real(), c(0, 1).real(), c(1, 1).real()}}};
    });
    Json agg = aggregate_runs(runs, "moments");
    // outcome-averaged covariance: E[cov] + Cov(mean)
    const double n = static_cast<double>(runs.size());
    double mq = 0, mp = 0, cqq = 0, cqp = 0, cpp = 0;
    for (const auto& r : runs) {
        mq += r["moments"]["mean_q"].get<double>() / n;
        mp += r["moments"]["mean_p"].get<double>() / n;
    }
    for (const auto& r : runs) {
        const double dq = r["moments"]["mean_q"].get<double>() - mq, dp = r["moments"]["mean_p"].get<double>() - mp;
        cqq += (r["cov"][0].get<double>() + dq * dq) / n;
        cqp += (r["cov"][1].get<double>() + dq * dp) / n;
        cpp += (r["cov"][2].get<double>() + dp * dp) / n;
    }
    const GaussianChannel ch = mb_squeeze_channel(m, hbar);
    const RMat pred = ch.X * (hbar / 2 * RMat::Identity(2, 2)) * ch.X.transpose() + ch.Y;
    const SymplecticOp ideal = squeeze_symplectic(m.quadrature == Quadrature::Q ? m.target_r : -m.target_r);
    const RMat ideal_cov = ideal.S * (hbar / 2 * RMat::Identity(2, 2)) * ideal.S.transpose();
    agg["sample_cov"] = {cqq, cqp, cpp};
    agg["channel_cov"] = {pred(0, 0), pred(0, 1), pred(1, 1)};
    agg["ideal_cov"] = {ideal_cov(0, 0), ideal_cov(0, 1), ideal_cov(1, 1)};
    return {{"params", p}, {"runs", runs}, {"aggregate", agg}};
}

inline GateNoise gate_noise_from(const Json& p) {
    GateNoise n;
    const std::string f = p.at("fidelity").get<std::string>();
    if (f == "ideal") n.fidelity = GateFidelity::Ideal;
    else if (f == "average") n.fidelity = GateFidelity::MbAverage;
    else if (f == "single_shot") n.fidelity = GateFidelity::MbSingleShot;
    else throw InvalidParameter("fidelity must be \"ideal\", \"average\" or \"single_shot\"");
    n.resource.ancilla_r = db_to_r(p.at("squeeze_db").get<double>());
    n.resource.eta_det = p.at("eta_det").get<double>();
    n.resource.ancilla_loss = n.resource.arm_loss = p.at("loss").get<double>();
    n.sampler = sampler_from(p);
    return n;
}

inline Json scenario_pgate(const Json& p, const ScenarioOptions& o) {
    const double hbar = p.at("hbar").get<double>(), eps = p.at("epsilon").get<double>();
    const State in = gkp(GkpParams{kPi / 2, 0.0, eps, gkp_cutoff_for(eps, 1e-10, hbar)}, hbar);
    const GateNoise noise = gate_noise_from(p);
    const std::size_t n = noise.fidelity == GateFidelity::MbSingleShot ? runs_of(p) : 1;
    auto runs = parallel_runs(n, o.threads, [&](std::size_t i) {
        Rng rng = run_rng(o.seed, i);
        const auto out = phase_gate(in, 1.0, 0, noise, &rng);
        return Json{{"homodyne_records", to_vector(out.outcome)},
                    {"readout_probs", readouts(out.state, {PauliAxis::X, PauliAxis::Z, PauliAxis::YMinus, PauliAxis::YPlus})}};
    });
    return {{"params", p}, {"runs", runs}, {"aggregate", aggregate_runs(runs)}};
}

inline Json scenario_tgate(const Json& p, const ScenarioOptions& o) {
    const double hbar = p.at("hbar").get<double>(), eps = p.at("data_epsilon").get<double>();
    const State in = gkp(GkpParams{kPi / 2, 0.0, eps, gkp_cutoff_for(eps, 1e-10, hbar)}, hbar);
    TgateParams t;
    t.magic_epsilon = gkp_db_to_epsilon(p.at("magic_db").get<double>());
    t.cz_noise = t.phase_noise = gate_noise_from(p);
    t.options.prune_tol = o.prune_tol;
    t.options.sampler = t.cz_noise.sampler;
    auto runs = parallel_runs(runs_of(p), o.threads, [&](std::size_t i) {
        Rng rng = run_rng(o.seed, i);
        const auto out = tgate_teleport(in, t, rng);
        return Json{{"homodyne_records", to_vector(out.outcome)},
                    {"bins", out.bins},
                    {"readout_probs", readouts(out.state, {PauliAxis::X, PauliAxis::Z, PauliAxis::YMinus, PauliAxis::YPlus})}};
    });
    return {{"params", p}, {"runs", runs}, {"aggregate", aggregate_runs(runs)}};
}

inline Json scenario_cluster(const Json& p, const ScenarioOptions& o) {
    const double hbar = p.at("hbar").get<double>(), eps = p.at("epsilon").get<double>();
    const State in = gkp(GkpParams{0.0, 0.0, eps, gkp_cutoff_for(eps, 1e-10, hbar)}, hbar);
    ClusterParams c;
    c.squeeze_db = p.at("squeeze_db").get<double>();
    c.loss_eta = p.at("loss_eta").get<double>();
    c.det_eta = p.at("det_eta").get<double>();
    c.options.prune_tol = o.prune_tol;
    c.options.sampler = sampler_from(p);
    auto runs = parallel_runs(runs_of(p), o.threads, [&](std::size_t i) {
        Rng rng = run_rng(o.seed, i);
        const auto out = cluster_teleport(in, c, rng);
        return Json{{"homodyne_records", to_vector(out.outcome)},
                    {"readout_probs", readouts(out.state, {PauliAxis::X, PauliAxis::Z})}};
    });
    return {{"params", p}, {"runs", runs}, {"aggregate", aggregate_runs(runs)}};
}

inline Json scenario_ec(const Json& p, const ScenarioOptions& o) {
    const double hbar = p.at("hbar").get<double>(), eps = p.at("data_epsilon").get<double>();
    const double w = gkp_spacing(hbar);
    State in = gkp(GkpParams{0.0, 0.0, eps, gkp_cutoff_for(eps, 1e-10, hbar)}, hbar);
    in = apply_channel(in, displacement_qp(p.at("shift_q").get<double>() * w, p.at("shift_p").get<double>() * w), 0);
    EcParams e;
    e.ancilla_epsilon = p.at("ancilla_epsilon").get<double>();
    e.noise = gate_noise_from(p);
    e.options.prune_tol = o.prune_tol;
    e.options.sampler = e.noise.sampler;
    const Json before = readouts(in, {PauliAxis::Z, PauliAxis::X});
    auto runs = parallel_runs(runs_of(p), o.threads, [&](std::size_t i) {
        Rng rng = run_rng(o.seed, i);
        const auto out = gkp_error_correct(in, e, rng);
        return Json{{"homodyne_records", to_vector(out.outcome)},
                    {"bins", out.bins},
                    {"readout_probs", readouts(out.state, {PauliAxis::Z, PauliAxis::X})}};
    });
    Json agg = aggregate_runs(runs);
    agg["before"] = before;
    return {{"params", p}, {"runs", runs}, {"aggregate", agg}};
}

struct ScenarioDef {
    std::map<std::string, Json> defaults;
    std::vector<std::string> sweepable;
    Json (*run)(const Json&, const ScenarioOptions&);
};

inline const std::map<std::string, ScenarioDef>& scenario_table() {
    const double r12 = r_to_db(1.2);
    static const std::map<std::string, ScenarioDef> t = {
        {"mbsqueeze",
         {{{"hbar", 2.0}, {"target_r", Json::array({0.3, 1.0, 2.0})}, {"ancilla_r", 1.2}, {"eta_det", 0.99},
           {"quadrature", "q"}, {"runs", 1000}, {"sampler", "rejection"}},
          {"target_r", "ancilla_r", "eta_det"},
          &scenario_mbsqueeze}},
        {"pgate",
         {{{"hbar", 2.0}, {"epsilon", 0.1}, {"fidelity", "average"}, {"squeeze_db", 14.0}, {"eta_det", 1.0}, {"loss", 1.0},
           {"runs", 100}, {"sampler", "rejection"}},
          {"squeeze_db", "eta_det", "epsilon"},
          &scenario_pgate}},
        {"tgate",
         {{{"hbar", 2.0}, {"data_epsilon", 0.1}, {"magic_db", 11.0}, {"fidelity", "ideal"}, {"squeeze_db", 12.0},
           {"eta_det", 0.99}, {"loss", 1.0}, {"runs", 500}, {"sampler", "rejection"}},
          {"magic_db", "loss"},
          &scenario_tgate}},
        {"cluster-teleport",
         {{{"hbar", 2.0}, {"epsilon", 0.1}, {"squeeze_db", 10.0}, {"loss_eta", 1.0}, {"det_eta", 0.99}, {"runs", 200},
           {"sampler", "inverse_cdf"}},
          {"squeeze_db", "loss_eta", "det_eta"},
          &scenario_cluster}},
        {"gkp-ec",
         {{{"hbar", 2.0}, {"data_epsilon", 0.1}, {"ancilla_epsilon", 0.1}, {"shift_q", 0.0}, {"shift_p", 0.0},
           {"fidelity", "ideal"}, {"squeeze_db", r12}, {"eta_det", 1.0}, {"loss", 1.0}, {"runs", 20},
           {"sampler", "rejection"}},
          {"shift_q", "shift_p", "ancilla_epsilon"},
          &scenario_ec}},
    };
    return t;
}

}  // namespace detail

inline std::vector<std::string> scenario_names() {
    std::vector<std::string> n;
    for (const auto& [k, v] : detail::scenario_table()) n.push_back(k);
    return n;
}

inline Json run_scenario(const std::string& name, const Json& params, const ScenarioOptions& o) {
    const auto& t = detail::scenario_table();
    auto it = t.find(name);
    if (it == t.end()) throw SchemaError("unknown scenario '" + name + "'");
    detail::check_scenario_params(params, it->second.defaults, name);
    const Json full = detail::merged(params, it->second.defaults);
    const auto points = detail::expand(full, it->second.sweepable);
    if (points.size() == 1) {
        Json r = it->second.run(points[0], o);
        r["scenario"] = name;
        return r;
    }
    Json sweep = Json::array();
    for (const auto& pt : points) sweep.push_back(it->second.run(pt, o));
    return {{"scenario", name}, {"params", full}, {"sweep", sweep}};
}

}  // namespace bosonic
