// Command line front end: each verb runs one pipeline stage against a run
// directory derived from the configuration (or the pinned --run-id).

#include <cstdio>
#include <fstream>
#include <string>

#include <CLI11.hpp>

#include "vaa/pipeline.hpp"

namespace {

vaa::RunConfig load_config(const std::string& path) {
    if (path.empty()) return {};
    std::ifstream in(path, std::ios::binary);
    if (!in) throw vaa::config_error("cannot open config file: " + path);
    auto j = vaa::ojson::parse(in, nullptr, false);
    if (j.is_discarded()) throw vaa::config_error("config file is not valid JSON: " + path);
    return vaa::run_config_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"discover, steer, and measure an evaluative activation axis"};
    app.fallthrough();
    app.require_subcommand(1);

    std::string config_path, run_id, data_dir, output_dir;
    std::uint64_t seed = 0;
    bool resume = false;
    app.add_option("--config", config_path, "JSON run configuration file");
    app.add_option("--run-id", run_id, "pin the run directory name");
    auto* seed_opt = app.add_option("--seed", seed, "override the configured random seed");
    app.add_flag("--resume", resume, "continue partially written record streams");
    app.add_option("--data-dir", data_dir, "stimulus bundle directory (defaults to the build-time path)");
    app.add_option("--output-dir", output_dir, "root directory for run artifacts");

    app.add_subcommand("capture", "record last-token activations for the calibration tasks");
    app.add_subcommand("axis", "extract per-layer axes and select the steering layer");
    app.add_subcommand("range", "scan for the usable steering coefficient interval");
    app.add_subcommand("sweep", "run steered trials over the coefficient grid");
    app.add_subcommand("judge", "score structured trials with the configured judge endpoints");
    app.add_subcommand("stats", "fit effect models and write stats.csv");
    app.add_subcommand("report", "emit plotting tables under report/");
    app.add_subcommand("all", "run every stage in order");

    CLI11_PARSE(app, argc, argv);

    try {
        vaa::RunConfig cfg = load_config(config_path);
        if (!run_id.empty()) cfg.run_id = run_id;
        if (seed_opt->count() > 0) cfg.seed = seed;
        if (!data_dir.empty()) cfg.data_dir = data_dir;
        if (!output_dir.empty()) cfg.output_dir = output_dir;

        vaa::PipelineRunner runner(std::move(cfg));
        const std::string stage = app.get_subcommands().front()->get_name();
        runner.run(stage, resume);
        std::fprintf(stderr, "artifacts: %s\n", runner.paths().root.string().c_str());
        return 0;
    } catch (const vaa::config_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const vaa::ordering_error& e) {
        std::fprintf(stderr, "ordering error: %s\n", e.what());
        return 3;
    } catch (const vaa::transport_error& e) {
        std::fprintf(stderr, "transport error: %s\n", e.what());
        return 5;
    } catch (const vaa::error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
