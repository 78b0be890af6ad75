#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "bosonic/errors.hpp"
#include "bosonic/mixture.hpp"

namespace bosonic {

using Json = nlohmann::json;

// State document:
//   {"hbar": h, "num_modes": N,
//    "covs": [{"re": [[...]], "im": [[...]]}, ...],
//    "peaks": [{"log_w": [re, im], "mean_re": [...], "mean_im": [...], "cov": k}, ...],
//    "diagnostics": {"truncated_mass": x, "pruned_mass": y}}
// Doubles are written with round-trip precision, so load(dump(s)) == s bit for bit.

namespace detail {

inline Json matrix_to_json(const RMat& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json r = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(std::move(r));
    }
    return rows;
}

inline Json vector_to_json(const RVec& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline const Json& field(const Json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw SchemaError(where + ": missing field '" + key + "'");
    return j.at(key);
}

inline double number(const Json& j, const std::string& where) {
    if (!j.is_number()) throw SchemaError(where + ": expected a number");
    return j.get<double>();
}

inline RVec json_to_vector(const Json& j, int n, const std::string& where) {
    if (!j.is_array() || static_cast<int>(j.size()) != n)
        throw SchemaError(where + ": expected an array of " + std::to_string(n) + " numbers");
    RVec v(n);
    for (int i = 0; i < n; ++i) v(i) = number(j[i], where + "[" + std::to_string(i) + "]");
    return v;
}

inline RMat json_to_matrix(const Json& j, int n, const std::string& where) {
    if (!j.is_array() || static_cast<int>(j.size()) != n)
        throw SchemaError(where + ": expected " + std::to_string(n) + " rows");
    RMat m(n, n);
    for (int i = 0; i < n; ++i) m.row(i) = json_to_vector(j[i], n, where + "[" + std::to_string(i) + "]").transpose();
    return m;
}

}  // namespace detail

inline Json state_to_json(const State& s) {
    Json covs = Json::array();
    for (const auto& c : s.covs())
        covs.push_back({{"re", detail::matrix_to_json(c.real())}, {"im", detail::matrix_to_json(c.imag())}});
    Json peaks = Json::array();
    for (const auto& p : s.peaks())
        peaks.push_back({{"log_w", {p.lw.real(), p.lw.imag()}},
                         {"mean_re", detail::vector_to_json(p.mean.real())},
                         {"mean_im", detail::vector_to_json(p.mean.imag())},
                         {"cov", p.cov}});
    return {{"hbar", s.hbar()},
            {"num_modes", s.num_modes()},
            {"covs", std::move(covs)},
            {"peaks", std::move(peaks)},
            {"diagnostics", {{"truncated_mass", s.diag.truncated_mass}, {"pruned_mass", s.diag.pruned_mass}}}};
}

inline State state_from_json(const Json& j) {
    using detail::field;
    const double hbar = detail::number(field(j, "hbar", "state"), "state.hbar");
    const Json& nm = field(j, "num_modes", "state");
    if (!nm.is_number_integer() || nm.get<int>() < 0) throw SchemaError("state.num_modes: expected a non-negative integer");
    State s(nm.get<int>(), hbar);
    const int d = s.dim();
    const Json& covs = field(j, "covs", "state");
    if (!covs.is_array()) throw SchemaError("state.covs: expected an array");
    for (std::size_t k = 0; k < covs.size(); ++k) {
        const std::string w = "state.covs[" + std::to_string(k) + "]";
        CMat c(d, d);
        c.real() = detail::json_to_matrix(field(covs[k], "re", w), d, w + ".re");
        c.imag() = detail::json_to_matrix(field(covs[k], "im", w), d, w + ".im");
        // the pool dedups identical entries; keep indices stable by refusing duplicates
        if (s.add_cov(c) != static_cast<int>(k)) throw SchemaError(w + ": duplicate covariance");
    }
    const Json& peaks = field(j, "peaks", "state");
    if (!peaks.is_array()) throw SchemaError("state.peaks: expected an array");
    s.reserve(peaks.size());
    for (std::size_t k = 0; k < peaks.size(); ++k) {
        const std::string w = "state.peaks[" + std::to_string(k) + "]";
        const RVec lw = detail::json_to_vector(field(peaks[k], "log_w", w), 2, w + ".log_w");
        CVec mean(d);
        mean.real() = detail::json_to_vector(field(peaks[k], "mean_re", w), d, w + ".mean_re");
        mean.imag() = detail::json_to_vector(field(peaks[k], "mean_im", w), d, w + ".mean_im");
        const Json& c = field(peaks[k], "cov", w);
        if (!c.is_number_integer() || c.get<int>() < 0 || c.get<std::size_t>() >= covs.size())
            throw SchemaError(w + ".cov: not an index into covs");
        s.add_peak_log(cplx(lw(0), lw(1)), std::move(mean), c.get<int>());
    }
    if (j.contains("diagnostics")) {
        const Json& dg = j.at("diagnostics");
        if (dg.contains("truncated_mass")) s.diag.truncated_mass = detail::number(dg.at("truncated_mass"), "state.diagnostics");
        if (dg.contains("pruned_mass")) s.diag.pruned_mass = detail::number(dg.at("pruned_mass"), "state.diagnostics");
    }
    return s;
}

}  // namespace bosonic
