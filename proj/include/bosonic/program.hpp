#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bosonic/analysis.hpp"
#include "bosonic/gkp_gates.hpp"
#include "bosonic/io.hpp"
#include "bosonic/states.hpp"

namespace bosonic {

// Runtime failure inside a program, tagged with the failing op.
struct StepError : Error {
    StepError(int step, const std::string& what) : Error("step " + std::to_string(step) + ": " + what), step(step) {}
    int step;
};

// ---------------------------------------------------------------------------
// Program document

struct ModeSpec {
    std::string name;
    std::string constructor;
    Json params = Json::object();
};

struct OpSpec {
    std::string kind;  // channel | symplectic | measure | feedforward | scenario-step
    std::string name;
    std::vector<std::string> modes;
    Json params = Json::object();
    std::string bind;  // name under which the op's records are stored (optional)
};

struct OutputSpec {
    std::string kind;  // wigner | marginal | samples | readout | state_dump
    std::string file;  // relative to the output directory; unused for readout
    Json params = Json::object();
};

struct CircuitProgram {
    double hbar = 2.0;
    std::vector<ModeSpec> modes;
    std::vector<OpSpec> ops;
    std::vector<OutputSpec> outputs;
};

namespace detail {

// Allowed parameter keys and their types: n number, i integer, s string, o object, a array.
struct Signature {
    int arity;
    std::map<std::string, char> keys;
};

inline const std::map<std::string, Signature>& signatures() {
    static const std::map<std::string, Signature> table = {
        {"init:vacuum", {1, {}}},
        {"init:coherent", {1, {{"alpha_re", 'n'}, {"alpha_im", 'n'}}}},
        {"init:squeezed", {1, {{"r", 'n'}, {"db", 'n'}, {"phi", 'n'}}}},
        {"init:displaced_squeezed", {1, {{"alpha_re", 'n'}, {"alpha_im", 'n'}, {"r", 'n'}, {"phi", 'n'}}}},
        {"init:thermal", {1, {{"nbar", 'n'}}}},
        {"init:gkp",
         {1,
          {{"theta", 'n'}, {"phi", 'n'}, {"epsilon", 'n'}, {"db", 'n'}, {"cutoff", 'i'}, {"representation", 's'}}}},
        {"init:magic", {1, {{"epsilon", 'n'}, {"db", 'n'}, {"cutoff", 'i'}, {"representation", 's'}}}},
        {"init:cat", {1, {{"alpha_re", 'n'}, {"alpha_im", 'n'}, {"k", 'n'}, {"representation", 's'}, {"D", 'n'}}}},
        {"init:fock", {1, {{"n", 'i'}, {"r", 'n'}}}},
        {"init:comb",
         {1, {{"N", 'i'}, {"d", 'n'}, {"r", 'n'}, {"logical", 'i'}, {"representation", 's'}, {"D", 'n'}}}},

        {"symplectic:rotation", {1, {{"theta", 'n'}}}},
        {"symplectic:squeeze", {1, {{"r", 'n'}, {"db", 'n'}, {"phi", 'n'}}}},
        {"symplectic:beamsplitter", {2, {{"theta", 'n'}}}},
        {"symplectic:phase", {1, {{"s", 'n'}}}},
        {"symplectic:cx", {2, {{"s", 'n'}}}},
        {"symplectic:cz", {2, {{"s", 'n'}}}},

        {"channel:loss", {1, {{"eta", 'n'}}}},
        {"channel:thermal_loss", {1, {{"eta", 'n'}, {"nbar", 'n'}}}},
        {"channel:random_displacement", {1, {{"sigma2", 'n'}}}},
        {"channel:amplifier", {1, {{"kappa", 'n'}}}},
        {"channel:displacement", {1, {{"q", 'n'}, {"p", 'n'}}}},
        {"channel:fock_damping", {1, {{"epsilon", 'n'}}}},

        {"measure:homodyne", {1, {{"angle", 'n'}, {"outcome", 'n'}}}},
        {"measure:heterodyne", {1, {{"outcome_q", 'n'}, {"outcome_p", 'n'}}}},

        {"feedforward:linear", {1, {{"from", 's'}, {"index", 'i'}, {"g0", 'n'}, {"g1", 'n'}, {"h0", 'n'}, {"h1", 'n'}}}},
        {"feedforward:tgate_binned", {1, {{"from", 's'}, {"index", 'i'}}}},
        {"feedforward:gkp_mod_displace", {1, {{"from", 's'}, {"index", 'i'}, {"quadrature", 's'}}}},

        {"scenario-step:mb_squeeze",
         {1,
          {{"target_r", 'n'}, {"ancilla_r", 'n'}, {"ancilla_db", 'n'}, {"eta_det", 'n'}, {"ancilla_loss", 'n'},
           {"arm_loss", 'n'}, {"quadrature", 's'}, {"fidelity", 's'}}}},
        {"scenario-step:phase_gate",
         {1, {{"s", 'n'}, {"fidelity", 's'}, {"squeeze_db", 'n'}, {"eta_det", 'n'}, {"loss", 'n'}}}},
        {"scenario-step:cx", {2, {{"s", 'n'}, {"fidelity", 's'}, {"squeeze_db", 'n'}, {"eta_det", 'n'}, {"loss", 'n'}}}},
        {"scenario-step:cz", {2, {{"s", 'n'}, {"fidelity", 's'}, {"squeeze_db", 'n'}, {"eta_det", 'n'}, {"loss", 'n'}}}},
        {"scenario-step:tgate",
         {1,
          {{"magic_epsilon", 'n'}, {"magic_db", 'n'}, {"fidelity", 's'}, {"squeeze_db", 'n'}, {"eta_det", 'n'},
           {"loss", 'n'}}}},
        {"scenario-step:gkp_ec",
         {1,
          {{"ancilla_epsilon", 'n'}, {"ancilla_db", 'n'}, {"fidelity", 's'}, {"squeeze_db", 'n'}, {"eta_det", 'n'},
           {"loss", 'n'}}}},
        {"scenario-step:cluster_teleport", {1, {{"squeeze_db", 'n'}, {"loss_eta", 'n'}, {"det_eta", 'n'}}}},

        {"output:wigner", {1, {{"mode", 's'}, {"grid", 'o'}}}},
        {"output:marginal", {1, {{"mode", 's'}, {"angle", 'n'}, {"xmin", 'n'}, {"xmax", 'n'}, {"n", 'i'}}}},
        {"output:samples", {1, {{"mode", 's'}, {"angle", 'n'}, {"count", 'i'}}}},
        {"output:readout", {1, {{"mode", 's'}, {"axes", 'a'}}}},
        {"output:state_dump", {0, {{"mode", 's'}}}},
    };
    return table;
}

inline bool has_type(const Json& v, char t) {
    switch (t) {
        case 'n': return v.is_number();
        case 'i': return v.is_number_integer();
        case 's': return v.is_string();
        case 'o': return v.is_object();
        case 'a': return v.is_array();
    }
    return false;
}

inline const char* type_name(char t) {
    switch (t) {
        case 'n': return "a number";
        case 'i': return "an integer";
        case 's': return "a string";
        case 'o': return "an object";
        case 'a': return "an array";
    }
    return "?";
}

inline const Signature& check_params(const std::string& key, const Json& params, const std::string& where) {
    const auto& t = signatures();
    auto it = t.find(key);
    if (it == t.end()) throw SchemaError(where + ": unknown " + key.substr(0, key.find(':')) + " '" + key.substr(key.find(':') + 1) + "'");
    if (!params.is_object()) throw SchemaError(where + ".params: expected an object");
    for (auto kv = params.begin(); kv != params.end(); ++kv) {
        auto s = it->second.keys.find(kv.key());
        if (s == it->second.keys.end()) throw SchemaError(where + ".params." + kv.key() + ": unknown parameter");
        if (!has_type(kv.value(), s->second))
            throw SchemaError(where + ".params." + kv.key() + ": expected " + type_name(s->second));
    }
    return it->second;
}

inline std::string get_string(const Json& j, const char* key, const std::string& where, bool required = true) {
    if (!j.contains(key)) {
        if (required) throw SchemaError(where + ": missing field '" + key + "'");
        return {};
    }
    if (!j.at(key).is_string()) throw SchemaError(where + "." + key + ": expected a string");
    return j.at(key).get<std::string>();
}

inline std::vector<std::string> get_modes(const Json& j, const std::string& where) {
    std::vector<std::string> out;
    if (!j.contains("modes")) return out;
    const Json& m = j.at("modes");
    if (!m.is_array()) throw SchemaError(where + ".modes: expected an array of mode names");
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!m[i].is_string()) throw SchemaError(where + ".modes[" + std::to_string(i) + "]: expected a mode name");
        out.push_back(m[i].get<std::string>());
    }
    return out;
}

inline void check_object_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw SchemaError(where + ": expected an object");
    for (auto kv = j.begin(); kv != j.end(); ++kv)
        if (!allowed.count(kv.key())) throw SchemaError(where + "." + kv.key() + ": unknown field");
}

// Checks references: declared modes, no reuse after measurement, bindings defined before use.
inline void validate(const CircuitProgram& p) {
    if (!(p.hbar > 0)) throw SchemaError("hbar: must be positive");
    if (p.modes.empty()) throw SchemaError("modes: at least one mode is required");
    std::set<std::string> live, measured, bound;
    for (std::size_t i = 0; i < p.modes.size(); ++i) {
        const std::string w = "modes[" + std::to_string(i) + "]";
        if (p.modes[i].name.empty()) throw SchemaError(w + ".name: must be non-empty");
        if (!live.insert(p.modes[i].name).second) throw SchemaError(w + ".name: duplicate mode '" + p.modes[i].name + "'");
        check_params("init:" + p.modes[i].constructor, p.modes[i].params, w + ".init");
    }
    for (std::size_t i = 0; i < p.ops.size(); ++i) {
        const OpSpec& op = p.ops[i];
        const std::string w = "ops[" + std::to_string(i) + "]";
        const Signature& sig = check_params(op.kind + ":" + op.name, op.params, w);
        if (static_cast<int>(op.modes.size()) != sig.arity)
            throw SchemaError(w + ".modes: '" + op.name + "' acts on " + std::to_string(sig.arity) + " mode(s)");
        std::set<std::string> seen;
        for (const auto& m : op.modes) {
            if (measured.count(m)) throw SchemaError(w + ".modes: mode '" + m + "' was already measured");
            if (!live.count(m)) throw SchemaError(w + ".modes: unknown mode '" + m + "'");
            if (!seen.insert(m).second) throw SchemaError(w + ".modes: mode '" + m + "' listed twice");
        }
        if (op.kind == "feedforward") {
            if (!op.params.contains("from")) throw SchemaError(w + ".params.from: feedforward needs a bound record");
            if (!bound.count(op.params.at("from").get<std::string>()))
                throw SchemaError(w + ".params.from: '" + op.params.at("from").get<std::string>() + "' is not bound by an earlier op");
            if (op.name == "gkp_mod_displace" && op.params.contains("quadrature")) {
                const auto q = op.params.at("quadrature").get<std::string>();
                if (q != "q" && q != "p") throw SchemaError(w + ".params.quadrature: expected \"q\" or \"p\"");
            }
        }
        if (op.kind == "measure") {
            measured.insert(op.modes[0]);
            live.erase(op.modes[0]);
        }
        if (!op.bind.empty() && !bound.insert(op.bind).second) throw SchemaError(w + ".bind: name '" + op.bind + "' bound twice");
    }
    if (live.empty()) throw SchemaError("ops: every mode is measured; nothing left to output");
    for (std::size_t i = 0; i < p.outputs.size(); ++i) {
        const OutputSpec& o = p.outputs[i];
        const std::string w = "outputs[" + std::to_string(i) + "]";
        check_params("output:" + o.kind, o.params, w);
        if (o.kind != "readout" && o.file.empty()) throw SchemaError(w + ".file: required for " + o.kind);
        if (o.file.find("..") != std::string::npos || (!o.file.empty() && o.file.front() == '/'))
            throw SchemaError(w + ".file: must be a plain path inside the output directory");
    }
}

}  // namespace detail

inline CircuitProgram program_from_json(const Json& j) {
    using namespace detail;
    check_object_keys(j, {"hbar", "modes", "ops", "outputs"}, "program");
    CircuitProgram p;
    if (j.contains("hbar")) {
        if (!j.at("hbar").is_number()) throw SchemaError("hbar: expected a number");
        p.hbar = j.at("hbar").get<double>();
    }
    if (!j.contains("modes") || !j.at("modes").is_array()) throw SchemaError("modes: expected an array");
    for (std::size_t i = 0; i < j.at("modes").size(); ++i) {
        const Json& m = j.at("modes")[i];
        const std::string w = "modes[" + std::to_string(i) + "]";
        check_object_keys(m, {"name", "init"}, w);
        ModeSpec s;
        s.name = get_string(m, "name", w);
        if (!m.contains("init")) throw SchemaError(w + ": missing field 'init'");
        check_object_keys(m.at("init"), {"constructor", "params"}, w + ".init");
        s.constructor = get_string(m.at("init"), "constructor", w + ".init");
        if (m.at("init").contains("params")) s.params = m.at("init").at("params");
        p.modes.push_back(std::move(s));
    }
    if (j.contains("ops")) {
        if (!j.at("ops").is_array()) throw SchemaError("ops: expected an array");
        for (std::size_t i = 0; i < j.at("ops").size(); ++i) {
            const Json& o = j.at("ops")[i];
            const std::string w = "ops[" + std::to_string(i) + "]";
            check_object_keys(o, {"kind", "name", "modes", "params", "bind"}, w);
            OpSpec s;
            s.kind = get_string(o, "kind", w);
            s.name = get_string(o, "name", w);
            s.modes = get_modes(o, w);
            if (o.contains("params")) s.params = o.at("params");
            s.bind = get_string(o, "bind", w, false);
            p.ops.push_back(std::move(s));
        }
    }
    if (j.contains("outputs")) {
        if (!j.at("outputs").is_array()) throw SchemaError("outputs: expected an array");
        for (std::size_t i = 0; i < j.at("outputs").size(); ++i) {
            const Json& o = j.at("outputs")[i];
            const std::string w = "outputs[" + std::to_string(i) + "]";
            check_object_keys(o, {"kind", "file", "params", "mode"}, w);
            OutputSpec s;
            s.kind = get_string(o, "kind", w);
            s.file = get_string(o, "file", w, false);
            if (o.contains("params")) s.params = o.at("params");
            if (o.contains("mode")) {
                if (!o.at("mode").is_string()) throw SchemaError(w + ".mode: expected a mode name");
                s.params["mode"] = o.at("mode");
            }
            p.outputs.push_back(std::move(s));
        }
    }
    validate(p);
    std::set<std::string> live;
    for (const auto& m : p.modes) live.insert(m.name);
    for (const auto& op : p.ops)
        if (op.kind == "measure") live.erase(op.modes[0]);
    for (std::size_t i = 0; i < p.outputs.size(); ++i) {
        const auto& o = p.outputs[i];
        if (!o.params.contains("mode")) {
            if (o.kind != "state_dump" && live.size() != 1)
                throw SchemaError("outputs[" + std::to_string(i) + "].mode: required when more than one mode is live");
            continue;
        }
        const auto m = o.params.at("mode").get<std::string>();
        if (!live.count(m)) throw SchemaError("outputs[" + std::to_string(i) + "].mode: '" + m + "' is not live at the end");
    }
    return p;
}

inline Json program_to_json(const CircuitProgram& p) {
    Json modes = Json::array();
    for (const auto& m : p.modes) modes.push_back({{"name", m.name}, {"init", {{"constructor", m.constructor}, {"params", m.params}}}});
    Json ops = Json::array();
    for (const auto& o : p.ops) {
        Json j = {{"kind", o.kind}, {"name", o.name}, {"modes", o.modes}, {"params", o.params}};
        if (!o.bind.empty()) j["bind"] = o.bind;
        ops.push_back(std::move(j));
    }
    Json outs = Json::array();
    for (const auto& o : p.outputs) {
        Json j = {{"kind", o.kind}, {"params", o.params}};
        if (!o.file.empty()) j["file"] = o.file;
        outs.push_back(std::move(j));
    }
    return {{"hbar", p.hbar}, {"modes", modes}, {"ops", ops}, {"outputs", outs}};
}

// Parses text, reporting JSON syntax errors by line and column.
inline CircuitProgram parse_program(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw SchemaError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": invalid JSON");
    }
    return program_from_json(j);
}

inline CircuitProgram load_program(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw SchemaError("cannot read program file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_program(ss.str());
}

// ---------------------------------------------------------------------------
// Execution

struct RunOptions {
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    double prune_tol = 1e-12;
};

namespace detail {

inline double num(const Json& p, const char* k, double def) { return p.contains(k) ? p.at(k).get<double>() : def; }
inline int integer(const Json& p, const char* k, int def) { return p.contains(k) ? p.at(k).get<int>() : def; }
inline std::string str(const Json& p, const char* k, const std::string& def) {
    return p.contains(k) ? p.at(k).get<std::string>() : def;
}

inline Representation representation(const Json& p, Representation def) {
    const std::string r = str(p, "representation", def == Representation::Real ? "real" : "complex");
    if (r == "real") return Representation::Real;
    if (r == "complex") return Representation::Complex;
    throw InvalidParameter("representation must be \"real\" or \"complex\"");
}

inline double epsilon_from(const Json& p, const char* eps_key, const char* db_key, double def) {
    if (p.contains(eps_key) && p.contains(db_key)) throw InvalidParameter(std::string("give either ") + eps_key + " or " + db_key);
    if (p.contains(db_key)) return gkp_db_to_epsilon(p.at(db_key).get<double>());
    return num(p, eps_key, def);
}

inline double squeeze_from(const Json& p, double def) {
    if (p.contains("r") && p.contains("db")) throw InvalidParameter("give either r or db");
    if (p.contains("db")) return db_to_r(p.at("db").get<double>());
    return num(p, "r", def);
}

inline State construct(const ModeSpec& m, double hbar) {
    const Json& p = m.params;
    const std::string& c = m.constructor;
    if (c == "vacuum") return vacuum(1, hbar);
    if (c == "coherent") return coherent(cplx(num(p, "alpha_re", 0), num(p, "alpha_im", 0)), hbar);
    if (c == "squeezed") return squeezed(squeeze_from(p, 0), num(p, "phi", 0), hbar);
    if (c == "displaced_squeezed")
        return displaced_squeezed(cplx(num(p, "alpha_re", 0), num(p, "alpha_im", 0)), num(p, "r", 0), num(p, "phi", 0), hbar);
    if (c == "thermal") return thermal(num(p, "nbar", 0), hbar);
    if (c == "gkp" || c == "magic") {
        GkpParams g;
        g.epsilon = epsilon_from(p, "epsilon", "db", 0.1);
        if (c == "magic") {
            const Bloch b = magic_bloch();
            g.theta = b.theta;
            g.phi = b.phi;
        } else {
            g.theta = num(p, "theta", 0);
            g.phi = num(p, "phi", 0);
        }
        g.cutoff = integer(p, "cutoff", 0);
        if (g.cutoff <= 0) g.cutoff = gkp_cutoff_for(g.epsilon, 1e-10, hbar);
        g.representation = representation(p, Representation::Real);
        return gkp(g, hbar);
    }
    if (c == "cat") {
        CatParams k;
        k.alpha = cplx(num(p, "alpha_re", 2.0), num(p, "alpha_im", 0));
        k.k = num(p, "k", 0);
        k.representation = representation(p, Representation::Complex);
        k.D = num(p, "D", 6.0);
        return cat(k, hbar);
    }
    if (c == "fock") return fock(FockParams{integer(p, "n", 1), num(p, "r", 0.05)}, hbar);
    if (c == "comb") {
        CombParams k;
        k.N = integer(p, "N", k.N);
        k.d = num(p, "d", k.d);
        k.r = num(p, "r", k.r);
        k.logical = integer(p, "logical", 0);
        k.representation = representation(p, Representation::Complex);
        k.D = num(p, "D", 6.0);
        return comb(k, hbar);
    }
    throw InvalidParameter("unknown constructor " + c);
}

inline GateFidelity fidelity_from(const Json& p, GateFidelity def) {
    if (!p.contains("fidelity")) return def;
    const std::string f = p.at("fidelity").get<std::string>();
    if (f == "ideal") return GateFidelity::Ideal;
    if (f == "average") return GateFidelity::MbAverage;
    if (f == "single_shot") return GateFidelity::MbSingleShot;
    throw InvalidParameter("fidelity must be \"ideal\", \"average\" or \"single_shot\"");
}

// squeeze_db, eta_det and loss shared by gate-level steps
inline GateNoise noise_from(const Json& p) {
    GateNoise n;
    n.fidelity = fidelity_from(p, GateFidelity::Ideal);
    n.resource.ancilla_r = db_to_r(num(p, "squeeze_db", r_to_db(1.2)));
    n.resource.eta_det = num(p, "eta_det", 1.0);
    n.resource.ancilla_loss = n.resource.arm_loss = num(p, "loss", 1.0);
    return n;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidParameter("cannot write " + path);
    f << text;
}

}  // namespace detail

// Runs the program, writes file outputs into opts.out_dir and returns a summary
// document (records of every bound op, readouts, list of written files).
inline Json run_program(const CircuitProgram& prog, const RunOptions& opts) {
    using namespace detail;
    validate(prog);
    Rng rng(opts.seed);
    std::vector<std::string> live;
    State st;
    for (std::size_t i = 0; i < prog.modes.size(); ++i) {
        State m;
        try {
            m = construct(prog.modes[i], prog.hbar);
        } catch (const Error& e) {
            throw StepError(-1, "modes[" + std::to_string(i) + "]: " + e.what());
        }
        st = i == 0 ? m : tensor(st, m);
        live.push_back(prog.modes[i].name);
    }
    auto index_of = [&](const std::string& n) {
        return static_cast<int>(std::find(live.begin(), live.end(), n) - live.begin());
    };
    std::map<std::string, std::vector<double>> records;
    Json summary = {{"records", Json::object()}, {"readouts", Json::array()}, {"files", Json::array()}};

    for (std::size_t k = 0; k < prog.ops.size(); ++k) {
        const OpSpec& op = prog.ops[k];
        const Json& p = op.params;
        std::vector<int> idx;
        for (const auto& m : op.modes) idx.push_back(index_of(m));
        std::vector<double> rec;
        try {
            if (op.kind == "symplectic") {
                SymplecticOp s;
                if (op.name == "rotation") s = rotation(num(p, "theta", 0));
                else if (op.name == "squeeze") s = squeeze_symplectic(squeeze_from(p, 0), num(p, "phi", 0));
                else if (op.name == "beamsplitter") s = beamsplitter(num(p, "theta", kPi / 4));
                else if (op.name == "phase") s = phase_symplectic(num(p, "s", 1));
                else if (op.name == "cx") s = cx_symplectic(num(p, "s", 1));
                else s = cz_symplectic(num(p, "s", 1));
                st = apply_symplectic(st, s, idx);
            } else if (op.kind == "channel") {
                const double h = st.hbar();
                if (op.name == "fock_damping") {
                    st = fock_damping(st, num(p, "epsilon", 0.1), idx);
                } else {
                    GaussianChannel c;
                    if (op.name == "loss") c = loss(num(p, "eta", 1), h);
                    else if (op.name == "thermal_loss") c = thermal_loss(num(p, "eta", 1), num(p, "nbar", 0), h);
                    else if (op.name == "random_displacement") c = random_displacement(num(p, "sigma2", 0));
                    else if (op.name == "amplifier") c = amplifier(num(p, "kappa", 1), h);
                    else c = displacement_qp(num(p, "q", 0), num(p, "p", 0));
                    st = apply_channel(st, c, idx);
                }
            } else if (op.kind == "measure") {
                ConditionalOutcome out;
                if (op.name == "homodyne") {
                    const Homodyne h{{idx[0]}, {num(p, "angle", 0)}};
                    if (p.contains("outcome")) out = condition_on_homodyne(st, h, RVec::Constant(1, p.at("outcome").get<double>()));
                    else out = measure_homodyne(st, h, rng);
                } else {
                    const GeneralDyne g = GeneralDyne::heterodyne(idx[0], st.hbar());
                    if (p.contains("outcome_q") || p.contains("outcome_p")) {
                        RVec x(2);
                        x << num(p, "outcome_q", 0), num(p, "outcome_p", 0);
                        out = condition_on_generaldyne(st, g, x);
                    } else {
                        out = measure_generaldyne(st, g, rng);
                    }
                }
                if (opts.prune_tol > 0) out.state = prune(merge_duplicates(out.state), opts.prune_tol);
                st = std::move(out.state);
                rec.assign(out.outcome.data(), out.outcome.data() + out.outcome.size());
                live.erase(live.begin() + idx[0]);
            } else if (op.kind == "feedforward") {
                const auto& r = records.at(p.at("from").get<std::string>());
                const int at = integer(p, "index", 0);
                if (at < 0 || at >= static_cast<int>(r.size())) throw InvalidParameter("record index out of range");
                const double x = r[at];
                if (op.name == "linear") {
                    st = apply_channel(st, displacement_qp(num(p, "g0", 0) + num(p, "g1", 0) * x, num(p, "h0", 0) + num(p, "h1", 0) * x),
                                       idx);
                } else if (op.name == "tgate_binned") {
                    if (gkp_bin(x, st.hbar()) % 2 != 0) st = apply_symplectic(st, phase_symplectic(1.0), idx);
                } else {
                    const double d = -centered_mod(x, st.hbar());
                    const bool q = str(p, "quadrature", "q") == "q";
                    st = apply_channel(st, displacement_qp(q ? d : 0.0, q ? 0.0 : d), idx);
                }
            } else {  // scenario-step
                ConditionalOutcome out;
                if (op.name == "mb_squeeze") {
                    MbSqueezeParams m;
                    m.target_r = num(p, "target_r", 0.5);
                    m.ancilla_r = p.contains("ancilla_db") ? db_to_r(p.at("ancilla_db").get<double>()) : num(p, "ancilla_r", 1.2);
                    m.eta_det = num(p, "eta_det", 1);
                    m.ancilla_loss = num(p, "ancilla_loss", 1);
                    m.arm_loss = num(p, "arm_loss", 1);
                    m.quadrature = str(p, "quadrature", "q") == "p" ? Quadrature::P : Quadrature::Q;
                    const auto f = fidelity_from(p, GateFidelity::MbAverage);
                    if (f == GateFidelity::MbSingleShot) {
                        out = mb_squeeze_single_shot(st, m, idx[0], rng);
                    } else {
                        out.state = f == GateFidelity::Ideal
                                        ? apply_symplectic(st, squeeze_symplectic(m.quadrature == Quadrature::Q ? m.target_r : -m.target_r), idx[0])
                                        : mb_squeeze_average(st, m, idx[0]);
                    }
                } else if (op.name == "phase_gate") {
                    out = phase_gate(st, num(p, "s", 1), idx[0], noise_from(p), &rng);
                } else if (op.name == "cx") {
                    out = cx_gate(st, num(p, "s", 1), idx[0], idx[1], noise_from(p), &rng);
                } else if (op.name == "cz") {
                    out = cz_gate(st, num(p, "s", 1), idx[0], idx[1], noise_from(p), &rng);
                } else {
                    if (st.num_modes() != 1) throw InvalidModes(op.name + " needs the program to hold a single live mode");
                    if (op.name == "tgate") {
                        TgateParams t;
                        t.magic_epsilon = epsilon_from(p, "magic_epsilon", "magic_db", 0.1);
                        t.cz_noise = t.phase_noise = noise_from(p);
                        t.options.prune_tol = opts.prune_tol;
                        out = tgate_teleport(st, t, rng);
                    } else if (op.name == "gkp_ec") {
                        EcParams e;
                        e.ancilla_epsilon = epsilon_from(p, "ancilla_epsilon", "ancilla_db", 0.1);
                        e.noise = noise_from(p);
                        e.options.prune_tol = opts.prune_tol;
                        out = gkp_error_correct(st, e, rng);
                    } else {
                        ClusterParams c;
                        c.squeeze_db = num(p, "squeeze_db", 10);
                        c.loss_eta = num(p, "loss_eta", 1);
                        c.det_eta = num(p, "det_eta", 0.99);
                        c.options.prune_tol = opts.prune_tol;
                        out = cluster_teleport(st, c, rng);
                    }
                }
                st = std::move(out.state);
                rec.assign(out.outcome.data(), out.outcome.data() + out.outcome.size());
            }
        } catch (const std::out_of_range& e) {
            throw StepError(static_cast<int>(k), op.name + ": " + e.what());
        } catch (const Error& e) {
            throw StepError(static_cast<int>(k), op.name + ": " + e.what());
        }
        if (!op.bind.empty()) {
            records[op.bind] = rec;
            summary["records"][op.bind] = rec;
        }
    }

    std::filesystem::create_directories(opts.out_dir);
    for (std::size_t k = 0; k < prog.outputs.size(); ++k) {
        const OutputSpec& o = prog.outputs[k];
        const Json& p = o.params;
        const int step = static_cast<int>(prog.ops.size() + k);
        try {
            State one = st;
            if (o.kind != "state_dump" && st.num_modes() > 1) one = partial_trace(st, {index_of(p.at("mode").get<std::string>())});
            else if (o.kind == "state_dump" && p.contains("mode")) one = partial_trace(st, {index_of(p.at("mode").get<std::string>())});
            const std::string path = (std::filesystem::path(opts.out_dir) / o.file).string();
            if (!o.file.empty()) std::filesystem::create_directories(std::filesystem::path(path).parent_path());
            if (o.kind == "wigner") {
                GridSpec g;
                if (p.contains("grid")) {
                    const Json& gj = p.at("grid");
                    check_object_keys(gj, {"qmin", "qmax", "nq", "pmin", "pmax", "np"}, "outputs[" + std::to_string(k) + "].params.grid");
                    g = {num(gj, "qmin", g.qmin), num(gj, "qmax", g.qmax), integer(gj, "nq", g.nq),
                         num(gj, "pmin", g.pmin), num(gj, "pmax", g.pmax), integer(gj, "np", g.np)};
                }
                write_wigner_csv(wigner_grid(one, g), path);
            } else if (o.kind == "marginal") {
                const double u = std::sqrt(one.hbar());
                const auto xs = linspace(num(p, "xmin", -6) * u, num(p, "xmax", 6) * u, integer(p, "n", 241));
                const Mixture m = merge_duplicates(homodyne_marginal(one, Homodyne{{0}, {num(p, "angle", 0)}}));
                write_marginal_csv(xs, marginal_on(m, xs), path);
            } else if (o.kind == "samples") {
                const int n = integer(p, "count", 1000);
                if (n < 1) throw InvalidParameter("sample count must be positive");
                RejectionSampler smp(merge_duplicates(homodyne_marginal(one, Homodyne{{0}, {num(p, "angle", 0)}})));
                std::ostringstream f;
                f << "x\n" << std::setprecision(17);
                for (int i = 0; i < n; ++i) f << smp.sample(rng).value(0) << '\n';
                write_text(path, f.str());
            } else if (o.kind == "readout") {
                Json r = Json::object();
                const Json axes = p.contains("axes") ? p.at("axes") : Json::array({"X", "Z", "Y_MINUS", "Y_PLUS"});
                for (const auto& a : axes) {
                    const std::string n = a.is_string() ? a.get<std::string>() : "";
                    PauliAxis ax;
                    if (n == "X") ax = PauliAxis::X;
                    else if (n == "Z") ax = PauliAxis::Z;
                    else if (n == "Y_MINUS") ax = PauliAxis::YMinus;
                    else if (n == "Y_PLUS") ax = PauliAxis::YPlus;
                    else throw SchemaError("outputs[" + std::to_string(k) + "].params.axes: unknown axis");
                    r[n] = pauli_readout_probability(one, ax);
                }
                summary["readouts"].push_back({{"mode", p.contains("mode") ? p.at("mode") : Json(live[0])}, {"p0", r}});
            } else {
                write_text(path, state_to_json(one).dump(1) + "\n");
            }
            if (!o.file.empty()) summary["files"].push_back(o.file);
        } catch (const Error& e) {
            throw StepError(step, "output " + o.kind + ": " + e.what());
        }
    }
    summary["live_modes"] = live;
    return summary;
}

}  // namespace bosonic
