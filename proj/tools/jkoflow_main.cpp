#include <cstdint>
#include <exception>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "jkoflow/config.hpp"
#include "jkoflow/experiments.hpp"

// Exit codes: 0 success, 1 acceptance failure (only with --check),
// 2 usage or configuration error, 3 internal error mid-run.
int main(int argc, char** argv) {
    CLI::App app{"jkoflow: implicit-bias experiments for JKO-discretized gradient flows"};
    app.failure_message(CLI::FailureMessage::help);

    std::string experiment;
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool check = false;

    std::string names;
    for (const auto& n : jkoflow::experiment_names()) names += (names.empty() ? "" : ", ") + n;
    app.add_option("experiment", experiment, "one of: " + names)->required();
    app.add_option("--config", config_path, "key = value config file");
    app.add_option("--seed", seed, "RNG seed override");
    app.add_option("--out", out_dir, "output directory (default jkoflow-out/<experiment>)");
    app.add_flag("--check", check, "exit 1 when any acceptance criterion fails");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints help or the parse error
        return e.get_exit_code() == 0 ? 0 : 2;
    }
    seed_set = app.count("--seed") > 0;

    try {
        bool known = false;
        for (const auto& n : jkoflow::experiment_names()) known = known || n == experiment;
        if (!known) throw jkoflow::ConfigError("unknown experiment: " + experiment);

        std::map<std::string, std::string> kv;
        if (!config_path.empty()) kv = jkoflow::parse_config_file(config_path);
        if (seed_set) kv["seed"] = std::to_string(seed);
        if (out_dir.empty()) out_dir = "jkoflow-out/" + experiment;

        jkoflow::Params params(kv);
        const jkoflow::ExperimentReport rep = jkoflow::run_experiment(experiment, params, out_dir);

        for (const auto& c : rep.criteria) std::cout << jkoflow::criterion_line(c) << "\n";
        if (rep.criteria.empty())
            std::cout << "# no acceptance criteria for " << experiment << "\n";
        std::cout << "# wrote " << rep.files.size() << " files to " << out_dir << "\n";

        if (check && !rep.all_pass()) return 1;
        return 0;
    } catch (const jkoflow::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
