#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "vaa/pipeline.hpp"

namespace fs = std::filesystem;
using namespace vaa;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("vaa-pipeline-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Planted synthetic model probed to give balanced support labels, planted
// layer selection, and a successful monotone range scan at this seed.
RunConfig base_config(const fs::path& out_dir) {
    RunConfig cfg;
    cfg.model_id = "synthetic-planted";
    cfg.backend = "synthetic";
    cfg.synthetic.d = 12;
    cfg.synthetic.L = 5;
    cfg.synthetic.seed = 11;
    cfg.synthetic.embed_scale = 0.5;
    cfg.synthetic.planted_layer = 2;
    cfg.synthetic.axis_strength = 6.0;
    cfg.synthetic.planted_axis.assign(12, 0.0);
    cfg.synthetic.planted_axis[3] = 1.0;
    cfg.synthetic.option_weights = standard_option_weights();
    cfg.tasks = {"value_binary", "alphabetical_order", "stance_taking"};
    cfg.seed = 11;
    cfg.stimulus_limit = 24;
    cfg.enforce_screening = false;
    cfg.output_dir = out_dir.string();
    cfg.reasoning_judge.model_id = "reasoning-judge";
    cfg.stance_judge.model_id = "stance-judge";
    return cfg;
}

// Deterministic stand-ins for the judge endpoints, keyed on the prompt hash.
JudgeTransports scripted_judges() {
    JudgeTransports t;
    t.reasoning = [](const std::string& prompt) {
        std::uint64_t h = fnv1a64(prompt);
        ojson j;
        j["factual_correctness_score"] = static_cast<int>(h % 3) - 1;
        j["logical_consistency_score"] = static_cast<int>((h >> 8) % 3) - 1;
        j["reasoning_structure_score"] = static_cast<int>((h >> 16) % 3) - 1;
        j["factual_correctness_rationale"] = "scripted";
        j["logical_consistency_rationale"] = "scripted";
        j["reasoning_structure_rationale"] = "scripted";
        return j.dump();
    };
    t.stance = [](const std::string& prompt) {
        std::uint64_t h = fnv1a64(prompt);
        ojson j;
        j["stance_score"] = static_cast<int>(h % 7) + 1;
        j["evaluation_rationale"] = "scripted";
        return j.dump();
    };
    return t;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::vector<ojson> jsonl_records(const fs::path& p) {
    std::vector<ojson> records;
    for_each_jsonl(p, [&](const ojson& j) { records.push_back(j); });
    return records;
}

std::vector<std::string> csv_lines(const fs::path& p) {
    std::vector<std::string> lines;
    std::istringstream in(slurp(p));
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

void run_through_sweep(PipelineRunner& runner) {
    runner.run("capture");
    runner.run("axis");
    runner.run("range");
    runner.run("sweep");
}

}  // namespace

TEST_CASE("full pipeline completes every stage and reruns byte-identically") {
    fs::path dir_a = fresh_dir("e2e-a");
    RunConfig cfg = base_config(dir_a);
    PipelineRunner runner(cfg, scripted_judges());
    runner.run("all");
    const RunPaths& paths = runner.paths();

    PipelineManifest manifest = PipelineManifest::load_or_create(paths, cfg);
    for (const auto& stage : pipeline_stages()) CHECK(manifest.complete(stage));

    // capture: two calibration tasks, 24 stimuli each, every layer recorded
    ojson capture = manifest.stage_details("capture");
    CHECK(capture.at("records").get<int>() == 48);
    CHECK(capture.at("new_records").get<int>() == 48);
    CHECK(capture.at("layers").get<int>() == 5);
    CHECK(jsonl_records(paths.activations).size() == 48);

    // axis: the planted layer wins and its loading recovers the planted axis
    ojson axis = manifest.stage_details("axis");
    CHECK(axis.at("selected_layer").get<int>() == 2);
    auto axes = jsonl_records(paths.axes);
    CHECK(axes.size() == 5);
    int selected_count = 0;
    for (const auto& j : axes) {
        if (!j.at("selected").get<bool>()) continue;
        ++selected_count;
        CHECK(j.at("layer_index").get<int>() == 2);
        auto loading = j.at("loading").get<std::vector<double>>();
        REQUIRE(loading.size() == 12);
        CHECK(std::abs(loading[3]) > 0.9);
        CHECK(j.at("orientation_r").get<double>() > 0.0);
    }
    CHECK(selected_count == 1);

    // range: a straddling interval and the 11-point grid derived from it
    ojson range = manifest.stage_details("range");
    CHECK(range.at("range").at("a_min").get<double>() < 0.0);
    CHECK(range.at("range").at("a_max").get<double>() > 0.0);
    CHECK(range.at("grid").at("raw").size() == 11);

    // sweep: 3 tasks x 24 stimuli x 11 coefficients, all durable
    ojson sweep = manifest.stage_details("sweep");
    CHECK(sweep.at("planned").get<int>() == 792);
    CHECK(sweep.at("durable_records").get<int>() == 792);
    auto trials = jsonl_records(paths.trials);
    REQUIRE(trials.size() == 792);
    std::set<std::string> trial_ids;
    std::map<std::string, int> per_task;
    for (const auto& j : trials) {
        trial_ids.insert(j.at("trial_id").get<std::string>());
        std::string task = j.at("task_id").get<std::string>();
        per_task[task] += 1;
        CHECK_FALSE(j.at("failed").get<bool>());
        CHECK(j.at("layer_index").get<int>() == 2);
        if (task == "value_binary") {
            CHECK(j.contains("expected_response"));
            CHECK_FALSE(j.contains("alignment_pressure"));
        } else if (task == "alphabetical_order") {
            CHECK(j.contains("alignment_pressure"));
            CHECK(j.at("parse_ok").get<bool>());
        } else {
            CHECK_FALSE(j.contains("alignment_pressure"));
            CHECK(j.at("parse_ok").get<bool>());
        }
    }
    CHECK(trial_ids.size() == 792);
    CHECK(per_task["value_binary"] == 264);
    CHECK(per_task["alphabetical_order"] == 264);
    CHECK(per_task["stance_taking"] == 264);

    // judge: reasoning verdicts for the objective task, two stance channels
    ojson judge = manifest.stage_details("judge");
    CHECK(judge.at("unjudged").get<int>() == 0);
    auto verdicts = jsonl_records(paths.verdicts);
    REQUIRE(verdicts.size() == 792);
    std::map<std::string, int> by_mode;
    for (const auto& j : verdicts) {
        by_mode[j.at("mode").get<std::string>()] += 1;
        CHECK(j.at("judged").get<bool>());
        CHECK(j.contains("cache_key"));
    }
    CHECK(by_mode["reasoning_eval"] == 264);
    CHECK(by_mode["stance_final"] == 264);
    CHECK(by_mode["stance_reasoning"] == 264);

    // stats: fixed header, one row per fitted predictor
    auto stats = csv_lines(paths.stats_csv);
    REQUIRE(stats.size() >= 2);
    CHECK(stats[0] == "model,task,predictor,b,se,z,ci_lo,ci_hi,p,n,clusters");
    bool saw_expected = false, saw_correct = false, saw_pattern = false;
    bool saw_final_stance = false, saw_reasoning_stance = false;
    for (std::size_t i = 1; i < stats.size(); ++i) {
        const std::string& row = stats[i];
        CHECK(row.rfind("synthetic-planted,", 0) == 0);
        if (row.find("value_binary,alpha (expected_response)") != std::string::npos) {
            saw_expected = true;
            std::istringstream cells(row);
            std::string cell;
            for (int c = 0; c <= 3; ++c) std::getline(cells, cell, ',');
            CHECK(std::stod(cell) > 0.0);  // steering raises support for the positive option
        }
        if (row.find("alphabetical_order,alpha_aligned (correct)") != std::string::npos) saw_correct = true;
        if (row.find("vs Sound Reasoning]") != std::string::npos) saw_pattern = true;
        if (row.find("alpha (final_stance)") != std::string::npos) saw_final_stance = true;
        if (row.find("alpha (reasoning_stance)") != std::string::npos) saw_reasoning_stance = true;
    }
    CHECK(saw_expected);
    CHECK(saw_correct);
    CHECK(saw_pattern);
    CHECK(saw_final_stance);
    CHECK(saw_reasoning_stance);

    // report: the full figure bundle, with the coefficient table a byte copy
    for (const char* name : {"response_curves.csv", "layer_profile.csv", "accuracy_curves.csv",
                             "pattern_distribution.csv", "stance_curves.csv", "coefficients.csv",
                             "pc_scatter.csv"}) {
        fs::path f = paths.report_dir / name;
        REQUIRE(fs::exists(f));
        CHECK(csv_lines(f).size() >= 2);
    }
    CHECK(slurp(paths.report_dir / "coefficients.csv") == slurp(paths.stats_csv));

    // a second run elsewhere reproduces every artifact byte for byte
    fs::path dir_b = fresh_dir("e2e-b");
    RunConfig cfg_b = base_config(dir_b);
    PipelineRunner runner_b(cfg_b, scripted_judges());
    runner_b.run("all");
    const RunPaths& paths_b = runner_b.paths();
    CHECK(paths_b.root.filename() == paths.root.filename());
    CHECK(slurp(paths_b.activations) == slurp(paths.activations));
    CHECK(slurp(paths_b.axes) == slurp(paths.axes));
    CHECK(slurp(paths_b.trials) == slurp(paths.trials));
    CHECK(slurp(paths_b.verdicts) == slurp(paths.verdicts));
    CHECK(slurp(paths_b.stats_csv) == slurp(paths.stats_csv));

    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("stages refuse to run before their inputs exist") {
    fs::path dir = fresh_dir("ordering");
    RunConfig cfg = base_config(dir);

    CHECK_THROWS_AS(PipelineRunner(cfg, scripted_judges()).run("axis"), ordering_error);
    CHECK_THROWS_AS(PipelineRunner(cfg, scripted_judges()).run("sweep"), ordering_error);
    CHECK_THROWS_AS(PipelineRunner(cfg, scripted_judges()).run("judge"), ordering_error);
    CHECK_THROWS_AS(PipelineRunner(cfg, scripted_judges()).run("frobnicate"), config_error);
    fs::remove_all(dir);
}

TEST_CASE("completed stages are skipped on rerun without touching artifacts") {
    fs::path dir = fresh_dir("skip");
    RunConfig cfg = base_config(dir);
    PipelineRunner runner(cfg, scripted_judges());
    runner.run("capture");
    std::string before = slurp(runner.paths().activations);

    runner.run("capture");
    CHECK(slurp(runner.paths().activations) == before);
    PipelineManifest manifest = PipelineManifest::load_or_create(runner.paths(), cfg);
    CHECK(manifest.complete("capture"));
    fs::remove_all(dir);
}

TEST_CASE("a capped sweep pauses, refuses unflagged continuation, and resumes losslessly") {
    fs::path capped_dir = fresh_dir("capped");
    RunConfig capped_cfg = base_config(capped_dir);
    capped_cfg.sweep_record_cap = 100;
    PipelineRunner capped(capped_cfg, scripted_judges());
    run_through_sweep(capped);

    PipelineManifest manifest = PipelineManifest::load_or_create(capped.paths(), capped_cfg);
    CHECK_FALSE(manifest.complete("sweep"));
    ojson details = manifest.stage_details("sweep");
    CHECK(details.at("planned").get<int>() == 792);
    CHECK(details.at("durable_records").get<int>() == 100);
    CHECK(jsonl_records(capped.paths().trials).size() == 100);

    // partial output without --resume is an error, not an overwrite
    RunConfig resumed_cfg = base_config(capped_dir);
    PipelineRunner blocked(resumed_cfg, scripted_judges());
    try {
        blocked.run("sweep");
        FAIL("expected config_error for unflagged partial output");
    } catch (const config_error& e) {
        CHECK(std::string(e.what()).find("--resume") != std::string::npos);
    }

    PipelineRunner resumed(resumed_cfg, scripted_judges());
    resumed.run("sweep", /*resume=*/true);
    PipelineManifest after = PipelineManifest::load_or_create(resumed.paths(), resumed_cfg);
    CHECK(after.complete("sweep"));
    CHECK(jsonl_records(resumed.paths().trials).size() == 792);

    // the record cap is an operational knob: same run id, same records
    fs::path full_dir = fresh_dir("uncapped");
    RunConfig full_cfg = base_config(full_dir);
    PipelineRunner full(full_cfg, scripted_judges());
    run_through_sweep(full);
    CHECK(full.paths().root.filename() == capped.paths().root.filename());
    CHECK(slurp(full.paths().trials) == slurp(resumed.paths().trials));

    fs::remove_all(capped_dir);
    fs::remove_all(full_dir);
}

TEST_CASE("a run directory rejects a changed configuration") {
    fs::path dir = fresh_dir("fingerprint");
    RunConfig cfg = base_config(dir);
    cfg.run_id = "run-pinned";
    PipelineRunner(cfg, scripted_judges()).run("capture");

    RunConfig changed = cfg;
    changed.synthetic.axis_strength = 7.0;
    PipelineRunner clashing(changed, scripted_judges());
    try {
        clashing.run("capture");
        FAIL("expected config_error for a mismatched run directory");
    } catch (const config_error& e) {
        CHECK(std::string(e.what()).find("was created with a different configuration") !=
              std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("the screening gate blocks sweeping an objective task the model fails") {
    fs::path dir = fresh_dir("screening");
    RunConfig cfg = base_config(dir);
    cfg.enforce_screening = true;  // synthetic word ordering accuracy sits near chance
    PipelineRunner runner(cfg, scripted_judges());
    runner.run("capture");
    runner.run("axis");
    runner.run("range");
    try {
        runner.run("sweep");
        FAIL("expected data_error from the screening gate");
    } catch (const data_error& e) {
        CHECK(std::string(e.what()).find("screening gate failed for alphabetical_order") !=
              std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("judge transport failures abort the judge stage") {
    fs::path dir = fresh_dir("transport");
    JudgeTransports down;
    down.reasoning = [](const std::string&) -> std::string { throw transport_error("endpoint down"); };
    down.stance = [](const std::string&) -> std::string { throw transport_error("endpoint down"); };
    PipelineRunner runner(base_config(dir), down);
    run_through_sweep(runner);
    CHECK_THROWS_AS(runner.run("judge"), transport_error);
    fs::remove_all(dir);
}

TEST_CASE("a judge that never yields valid scores leaves trials unjudged but keeps the run going") {
    fs::path dir = fresh_dir("unjudged");
    JudgeTransports noisy;
    noisy.reasoning = [](const std::string&) { return std::string("no usable payload"); };
    noisy.stance = [](const std::string&) { return std::string("no usable payload"); };
    RunConfig cfg = base_config(dir);
    PipelineRunner runner(cfg, noisy);
    run_through_sweep(runner);
    runner.run("judge");

    PipelineManifest manifest = PipelineManifest::load_or_create(runner.paths(), cfg);
    CHECK(manifest.complete("judge"));
    CHECK(manifest.stage_details("judge").at("unjudged").get<int>() == 792);
    for (const auto& j : jsonl_records(runner.paths().verdicts)) CHECK_FALSE(j.at("judged").get<bool>());

    // stats still runs on the scalar and correctness channels
    runner.run("stats");
    auto stats = csv_lines(runner.paths().stats_csv);
    REQUIRE(stats.size() >= 2);
    bool saw_stance_row = false;
    for (const auto& row : stats)
        if (row.find("final_stance") != std::string::npos) saw_stance_row = true;
    CHECK_FALSE(saw_stance_row);
    fs::remove_all(dir);
}
