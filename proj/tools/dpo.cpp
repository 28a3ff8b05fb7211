// Command line front end. Every verb takes the same options:
//   --config <file.json>  overrides baked-in defaults
//   --seed <n>            overrides the config seed
//   --out <file>          write results there (stdout otherwise)
//   --format csv|json
// Writing to a file also writes <out>.manifest.json with the resolved
// configuration, seed, version and wall time, enough to reproduce the run.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure,
// 4 file IO error.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "dpo/dpo.hpp"

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw dpo::IoError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw dpo::IoError("write to '" + path + "' failed");
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw dpo::IoError("cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynamic portfolio choice with derivatives"};
    app.require_subcommand(1);

    std::string verb;
    std::string config_path;
    std::string out_path;
    std::string format = "csv";
    std::uint64_t seed = 0;
    bool seed_set = false;

    const struct {
        const char* name;
        const char* desc;
    } verbs[] = {
        {"price", "price one instrument and report its sensitivities"},
        {"simulate", "simulate market paths and report terminal states"},
        {"pamc", "run the policy-approximation recursion (indirect or direct)"},
        {"sweep-moneyness", "portfolio weights per candidate option across strikes"},
        {"sweep-maturity", "portfolio weights per candidate option across maturities"},
        {"vega-profile", "price and variance sensitivity of a candidate across strikes"},
        {"verify-prop1", "check two-sparse optimality of l1-minimal replication"},
        {"compare-methods", "closed form vs both recursion variants across gammas"},
    };
    for (const auto& v : verbs) {
        CLI::App* sub = app.add_subcommand(v.name, v.desc);
        sub->add_option("--config", config_path, "JSON configuration file");
        sub->add_option("--out", out_path, "output file (stdout if omitted)");
        sub->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
        sub->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
            seed_set = true;
        });
        sub->callback([&verb, name = std::string(v.name)] { verb = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 2;
    }

    try {
        dpo::ExperimentConfig cfg;
        if (!config_path.empty()) {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(read_file(config_path));
            } catch (const nlohmann::json::parse_error& e) {
                throw dpo::ConfigError("config file '" + config_path +
                                       "' is not valid JSON: " + e.what());
            }
            cfg = dpo::parse_config(j);
        }
        if (seed_set) cfg.seed = seed;

        const auto t0 = std::chrono::steady_clock::now();
        const dpo::Verb v = dpo::verb_from_string(verb);
        const dpo::RunResult res = dpo::run(v, cfg);
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        const std::string payload = format == "json" ? res.json_text() : res.csv();
        if (out_path.empty()) {
            std::cout << payload;
        } else {
            write_file(out_path, payload);
            const nlohmann::json manifest =
                dpo::make_manifest(v, cfg, res, out_path, format, wall);
            write_file(out_path + ".manifest.json", manifest.dump(2) + "\n");
        }
        return 0;
    } catch (const dpo::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const dpo::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const dpo::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
