#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "fdia/app/commands.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfigError = 2, kNumericalError = 3 };

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"False data injection attack simulation, LSTM denoising-autoencoder correction and reporting"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("-c,--config", config_path, "JSON run configuration");
    app.add_option("--set", overrides, "Override a config value, e.g. --set train.epochs=5 (repeatable)")
        ->take_all()
        ->allow_extra_args(false);

    auto* simulate = app.add_subcommand("simulate", "Solve the hourly trajectory and build the windowed dataset");
    auto* train = app.add_subcommand("train", "Train the denoising autoencoder on the dataset");
    auto* evaluate = app.add_subcommand("evaluate", "Evaluate the trained model on the test windows");
    auto* demo = app.add_subcommand("attack-demo", "Attack one test window and show the correction");
    auto* stream = app.add_subcommand("correct-stream", "Correct JSON-lines states from stdin to stdout");
    auto* show = app.add_subcommand("show-config", "Print the effective configuration");
    for (auto* sub : {simulate, train, evaluate, demo, stream, show}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        const auto cfg = fdia::app::load_config(config_path, overrides);
        if (*simulate) fdia::app::cmd_simulate(cfg, std::cerr);
        else if (*train) fdia::app::cmd_train(cfg, std::cerr);
        else if (*evaluate) fdia::app::cmd_evaluate(cfg, std::cerr);
        else if (*demo) fdia::app::cmd_attack_demo(cfg, std::cerr);
        else if (*stream) fdia::app::cmd_correct_stream(cfg, std::cin, std::cout);
        else if (*show) std::cout << fdia::app::to_json(cfg).dump(2) << '\n';
        return kOk;
    } catch (const fdia::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumericalError;
    } catch (const fdia::ConvergenceError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumericalError;
    } catch (const fdia::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << '\n';
        return kFailure;
    }
}
