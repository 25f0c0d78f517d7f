#include <chrono>
#include <exception>
#include <iostream>
#include <map>
#include <string>

#include "jkoflow/experiments.hpp"

// Runs every experiment at default parameters and prints one PASS/FAIL line
// per acceptance criterion. Exit 0 only if all criteria pass.
int main(int argc, char** argv) {
    const std::string out_root = argc > 1 ? argv[1] : "acceptance-out";
    int failures = 0;
    for (const auto& name : jkoflow::experiment_names()) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            jkoflow::Params params{std::map<std::string, std::string>{}};
            const jkoflow::ExperimentReport rep =
                jkoflow::run_experiment(name, params, out_root + "/" + name);
            const double dt =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::cout << "# " << name << " (" << dt << " s)\n";
            if (rep.criteria.empty()) std::cout << "# no acceptance criteria\n";
            for (const auto& c : rep.criteria) {
                std::cout << jkoflow::criterion_line(c) << "\n";
                if (!c.pass) ++failures;
            }
        } catch (const std::exception& e) {
            std::cout << "FAIL " << name << ".completed error: " << e.what() << "\n";
            ++failures;
        }
        std::cout.flush();
    }
    if (failures) {
        std::cout << failures << " criterion failure(s)\n";
        return 1;
    }
    std::cout << "all acceptance criteria passed\n";
    return 0;
}
