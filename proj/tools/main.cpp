// meterfl: federated load-forecasting experiment harness.
//
// Subcommands:
//   run   --manifest <path>   one experiment, outputs to the manifest's output_dir
//   sweep --manifest <path>   client-count and learning-rate matrices from one manifest
//   check                     built-in gradient and invariant checks
//
// Exit codes: 0 success, 1 config error, 2 data error, 3 training/check error.

#include <exception>
#include <functional>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "meterfl/errors.hpp"
#include "meterfl/harness.hpp"
#include "meterfl/manifest.hpp"
#include "meterfl/selfcheck.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitTraining = 3;

int run_guarded(const char* what, const std::function<int()>& body) {
    try {
        return body();
    } catch (const meterfl::ConfigError& e) {
        std::cerr << what << ": config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const meterfl::DataError& e) {
        std::cerr << what << ": data error: " << e.what() << "\n";
        return kExitData;
    } catch (const meterfl::TrainingError& e) {
        std::cerr << what << ": training error: " << e.what() << "\n";
        return kExitTraining;
    } catch (const std::exception& e) {
        std::cerr << what << ": error: " << e.what() << "\n";
        return kExitTraining;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Personalized federated learning for smart-meter load forecasting"};
    app.require_subcommand(1);

    std::string run_manifest_path;
    CLI::App* cmd_run = app.add_subcommand("run", "Run one experiment from a manifest");
    cmd_run->add_option("--manifest", run_manifest_path, "Manifest file")->required();

    std::string sweep_manifest_path;
    CLI::App* cmd_sweep =
        app.add_subcommand("sweep", "Run the client-count and learning-rate matrices");
    cmd_sweep->add_option("--manifest", sweep_manifest_path, "Manifest file")->required();

    CLI::App* cmd_check = app.add_subcommand("check", "Run built-in invariant checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    if (cmd_run->parsed()) {
        return run_guarded("run", [&] {
            const meterfl::RunManifest manifest = meterfl::load_manifest(run_manifest_path);
            meterfl::run_single(manifest, std::cout);
            return kExitOk;
        });
    }
    if (cmd_sweep->parsed()) {
        return run_guarded("sweep", [&] {
            const meterfl::RunManifest manifest = meterfl::load_manifest(sweep_manifest_path);
            meterfl::run_sweep(manifest, std::cout);
            return kExitOk;
        });
    }
    if (cmd_check->parsed()) {
        return run_guarded("check", [&] {
            return meterfl::run_self_checks(std::cout) ? kExitOk : kExitTraining;
        });
    }
    return kExitConfig;
}
