// bosonic: run circuit programs and built-in scenarios.
//   bosonic run PROGRAM.json       execute a program, write its outputs and summary.json
//   bosonic check PROGRAM.json     validate and print the normalized program
//   bosonic scenario NAME          Monte-Carlo scenario, result JSON written to OUT_DIR/NAME.json
//   bosonic list                   scenario names with their default parameters
// Exit codes: 0 ok, 2 malformed input, 3 simulation error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bosonic/program.hpp"
#include "bosonic/scenarios.hpp"

using namespace bosonic;

namespace {

void write_json(const std::filesystem::path& path, const Json& j) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw SchemaError("cannot write " + path.string());
    f << j.dump(1) << '\n';
}

// "key=value" where value is JSON (number, string, array); bare words are strings
void apply_set(Json& params, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw SchemaError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
    Json v;
    try {
        v = Json::parse(val);
    } catch (const nlohmann::json::parse_error&) {
        v = val;
    }
    params[key] = v;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian-mixture simulator for continuous-variable circuits"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    std::string out_dir = ".";
    int threads = 1;
    double prune_tol = 1e-12;
    app.add_option("--seed", seed, "base random seed")->envname("BOSONIC_SEED");
    app.add_option("--out-dir", out_dir, "directory for output files")->envname("BOSONIC_OUT_DIR");
    app.add_option("--threads", threads, "worker threads for Monte-Carlo batches")
        ->envname("BOSONIC_THREADS")
        ->check(CLI::PositiveNumber);
    app.add_option("--prune-tol", prune_tol, "relative magnitude below which peaks are dropped")
        ->envname("BOSONIC_PRUNE_TOL")
        ->check(CLI::NonNegativeNumber);

    std::string program_path;
    auto* run = app.add_subcommand("run", "execute a circuit program");
    run->add_option("program", program_path, "program JSON")->required();

    std::string check_path;
    auto* check = app.add_subcommand("check", "validate a program and print it normalized");
    check->add_option("program", check_path, "program JSON")->required();

    std::string scenario, params_arg, output;
    std::vector<std::string> sets;
    auto* sc = app.add_subcommand("scenario", "run a built-in scenario");
    sc->add_option("name", scenario, "scenario name")->required();
    sc->add_option("--params", params_arg, "JSON object or path to a JSON file");
    sc->add_option("--set", sets, "override one parameter, key=value");
    sc->add_option("--output", output, "result file (default OUT_DIR/NAME.json)");

    auto* list = app.add_subcommand("list", "list scenarios and defaults");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*run) {
            RunOptions o{seed, out_dir, prune_tol};
            const Json summary = run_program(load_program(program_path), o);
            write_json(std::filesystem::path(out_dir) / "summary.json", summary);
            std::cout << summary.dump(1) << '\n';
        } else if (*check) {
            std::cout << program_to_json(load_program(check_path)).dump(1) << '\n';
        } else if (*sc) {
            Json params = Json::object();
            if (!params_arg.empty()) {
                std::string text = params_arg;
                if (std::filesystem::exists(params_arg)) {
                    std::ifstream f(params_arg);
                    text.assign(std::istreambuf_iterator<char>(f), {});
                }
                try {
                    params = Json::parse(text);
                } catch (const nlohmann::json::parse_error& e) {
                    throw SchemaError(std::string("--params: ") + e.what());
                }
            }
            for (const auto& s : sets) apply_set(params, s);
            const Json result = run_scenario(scenario, params, ScenarioOptions{seed, threads, prune_tol});
            const std::filesystem::path path = output.empty() ? std::filesystem::path(out_dir) / (scenario + ".json") : std::filesystem::path(output);
            write_json(path, result);
            const Json& agg = result.contains("aggregate") ? result.at("aggregate") : Json();
            if (!agg.is_null()) std::cout << agg.dump(1) << '\n';
            else
                for (const auto& pt : result.at("sweep")) std::cout << pt.at("aggregate").at("mean").dump() << '\n';
        } else if (*list) {
            for (const auto& n : scenario_names()) {
                Json d = Json::object();
                for (const auto& [k, v] : detail::scenario_table().at(n).defaults) d[k] = v;
                std::cout << n << ' ' << d.dump() << '\n';
            }
        }
    } catch (const SchemaError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
