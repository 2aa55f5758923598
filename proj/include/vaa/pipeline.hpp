#pragma once
// Pipeline orchestration: staged runs (capture, axis, range, sweep, judge,
// stats, report) over a durable per-run directory. Stages are idempotent;
// partial record streams resume by content-addressed id.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vaa/axes.hpp"
#include "vaa/backend.hpp"
#include "vaa/common.hpp"
#include "vaa/core.hpp"
#include "vaa/jsonl.hpp"
#include "vaa/judge.hpp"
#include "vaa/stats.hpp"
#include "vaa/steering.hpp"
#include "vaa/synthetic.hpp"
#include "vaa/tasks.hpp"

namespace vaa {

inline const std::vector<std::string>& pipeline_stages() {
    static const std::vector<std::string> stages = {"capture", "axis", "range", "sweep",
                                                    "judge",   "stats", "report"};
    return stages;
}

struct RunPaths {
    std::filesystem::path root;
    std::filesystem::path manifest;
    std::filesystem::path activations;
    std::filesystem::path axes;
    std::filesystem::path trials;
    std::filesystem::path verdicts;
    std::filesystem::path stats_csv;
    std::filesystem::path report_dir;
};

// Identity of a run's scientific content. Operational knobs that cannot
// change what gets computed (where artifacts live, how many records one
// invocation writes before stopping) are excluded, so a capped sweep can be
// resumed in the same directory and reruns elsewhere stay comparable.
inline std::string config_fingerprint(const RunConfig& cfg) {
    ojson j = to_json(cfg);
    j.erase("run_id");
    j.erase("output_dir");
    j.erase("sweep_record_cap");
    return content_id(j.dump());
}

inline std::string derive_run_id(const RunConfig& cfg) {
    if (!cfg.run_id.empty()) return cfg.run_id;
    return "run-" + config_fingerprint(cfg).substr(0, 12);
}

inline RunPaths run_paths(const RunConfig& cfg) {
    RunPaths p;
    p.root = std::filesystem::path(cfg.output_dir) / derive_run_id(cfg);
    p.manifest = p.root / "manifest.json";
    p.activations = p.root / "activations.jsonl";
    p.axes = p.root / "axes.jsonl";
    p.trials = p.root / "trials.jsonl";
    p.verdicts = p.root / "verdicts.jsonl";
    p.stats_csv = p.root / "stats.csv";
    p.report_dir = p.root / "report";
    return p;
}

// Stage ledger persisted as manifest.json. A stage flips to complete only
// after its records are durably written; saves go through a temp file.
class PipelineManifest {
  public:
    static PipelineManifest load_or_create(const RunPaths& paths, const RunConfig& cfg) {
        PipelineManifest m;
        m.path_ = paths.manifest;
        std::string config_hash = config_fingerprint(cfg);
        if (std::filesystem::exists(paths.manifest)) {
            std::ifstream in(paths.manifest, std::ios::binary);
            m.j_ = ojson::parse(in, nullptr, false);
            if (m.j_.is_discarded()) throw data_error("corrupt manifest: " + paths.manifest.string());
            if (m.j_.value("config_hash", "") != config_hash)
                throw config_error("run directory " + paths.root.string() +
                                   " was created with a different configuration");
            return m;
        }
        m.j_["run_id"] = derive_run_id(cfg);
        m.j_["model_id"] = cfg.model_id;
        m.j_["backend"] = cfg.backend;
        m.j_["config_hash"] = config_hash;
        m.j_["seed"] = cfg.seed;
        m.j_["config"] = to_json(cfg);
        m.j_["stages"] = ojson::object();
        return m;
    }

    bool complete(const std::string& stage) const {
        const auto& stages = j_.at("stages");
        return stages.contains(stage) && stages.at(stage).value("complete", false);
    }

    void mark_complete(const std::string& stage, ojson details) {
        details["complete"] = true;
        j_["stages"][stage] = std::move(details);
        save();
    }

    void record_partial(const std::string& stage, ojson details) {
        details["complete"] = false;
        j_["stages"][stage] = std::move(details);
        save();
    }

    ojson stage_details(const std::string& stage) const {
        const auto& stages = j_.at("stages");
        if (!stages.contains(stage)) throw ordering_error("stage '" + stage + "' has not run");
        return stages.at(stage);
    }

    const ojson& json() const { return j_; }

    void save() const {
        std::filesystem::create_directories(path_.parent_path());
        std::filesystem::path tmp = path_;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
            out << j_.dump(2) << '\n';
            if (!out) throw data_error("cannot write manifest: " + path_.string());
        }
        std::filesystem::rename(tmp, path_);
    }

  private:
    std::filesystem::path path_;
    ojson j_;
};

namespace detail {

inline void require_stage(const PipelineManifest& m, const std::string& needed, const std::string& for_stage) {
    if (!m.complete(needed))
        throw ordering_error("stage '" + for_stage + "' requires completed stage '" + needed + "'");
}

// Option tokens captured alongside activations; their logit gap defines the
// record's decision value.
inline std::vector<OptionToken> capture_options(const TaskSpec& task) {
    if (task.response_mode == ResponseMode::option_tokens || task.response_mode == ResponseMode::logit_pair)
        return task.option_tokens;
    if (task.response_mode == ResponseMode::rating_0_9) {
        std::vector<OptionToken> opts;
        for (int k = 0; k <= 9; ++k) {
            int polarity = k == 9 ? +1 : (k == 0 ? -1 : 0);
            opts.push_back({std::to_string(k), polarity});
        }
        return opts;
    }
    return {};
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) {
        std::filesystem::create_directories(path.parent_path());
        out_.open(path, std::ios::trunc | std::ios::binary);
        if (!out_) throw data_error("cannot write " + path.string());
        row(header);
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << csv_escape(cells[i]);
        }
        out_ << '\n';
    }

  private:
    std::ofstream out_;
};

}  // namespace detail

// Judge transports injectable for tests; null transports are built from the
// configured endpoints on first use.
struct JudgeTransports {
    JudgeTransport reasoning;
    JudgeTransport stance;
};

class PipelineRunner {
  public:
    explicit PipelineRunner(RunConfig cfg, JudgeTransports transports = {})
        : cfg_(std::move(cfg)), transports_(std::move(transports)) {
        validate(cfg_);
        if (cfg_.tasks.empty())
            cfg_.tasks = {"value_binary",       "value_continuous", "sentiment_binary",
                          "sentiment_continuous", "subjective_preference", "alphabetical_order",
                          "factual_judgment",   "stance_taking"};
        if (cfg_.backend == "synthetic") {
            backend_ = std::make_unique<SyntheticBackend>(cfg_.synthetic, cfg_.model_id);
        } else {
            throw config_error("unknown backend '" + cfg_.backend +
                               "'; the bundled deterministic backend is 'synthetic'");
        }
        paths_ = run_paths(cfg_);
    }

    const RunPaths& paths() const { return paths_; }
    const RunConfig& config() const { return cfg_; }
    Backend& backend() { return *backend_; }

    void run(const std::string& stage, bool resume = false) {
        PipelineManifest manifest = PipelineManifest::load_or_create(paths_, cfg_);
        if (stage == "all") {
            for (const auto& s : pipeline_stages()) run_one(manifest, s, resume);
            return;
        }
        bool known = false;
        for (const auto& s : pipeline_stages()) known = known || s == stage;
        if (!known) throw config_error("unknown stage '" + stage + "'");
        run_one(manifest, stage, resume);
    }

  private:
    void run_one(PipelineManifest& manifest, const std::string& stage, bool resume) {
        if (manifest.complete(stage)) {
            std::fprintf(stderr, "[%s] already complete, skipping\n", stage.c_str());
            return;
        }
        std::fprintf(stderr, "[%s] running\n", stage.c_str());
        if (stage == "capture") stage_capture(manifest, resume);
        else if (stage == "axis") stage_axis(manifest);
        else if (stage == "range") stage_range(manifest);
        else if (stage == "sweep") stage_sweep(manifest, resume);
        else if (stage == "judge") stage_judge(manifest);
        else if (stage == "stats") stage_stats(manifest);
        else if (stage == "report") stage_report(manifest);
    }

    std::vector<Stimulus> task_stimuli(const TaskSpec& task) const {
        return load_task_stimuli(task, cfg_.data_dir, cfg_.seed,
                                 static_cast<std::size_t>(cfg_.stimulus_limit));
    }

    DecodeParams decode_params() const {
        DecodeParams dp;
        dp.temperature = cfg_.decode_temperature;
        dp.max_new_tokens = cfg_.max_new_tokens;
        dp.seed = cfg_.seed;
        return dp;
    }

    static void forbid_unflagged_partial(const std::filesystem::path& file, bool resume,
                                         const std::string& stage) {
        if (resume) return;
        if (std::filesystem::exists(file) && std::filesystem::file_size(file) > 0)
            throw config_error("partial " + stage + " output exists at " + file.string() +
                               "; pass --resume to continue it");
    }

    // ---- capture ----

    void stage_capture(PipelineManifest& manifest, bool resume) {
        if (cfg_.calibration_tasks.size() != 2)
            throw config_error("exactly two calibration tasks (binary and continuous formats) required");
        forbid_unflagged_partial(paths_.activations, resume, "capture");
        std::set<std::string> existing;
        for_each_jsonl(paths_.activations,
                       [&](const ojson& j) { existing.insert(j.at("id").get<std::string>()); });
        JsonlWriter sink(paths_.activations);
        std::vector<int> layers;
        for (int l = 0; l < backend_->info().num_layers; ++l) layers.push_back(l);

        std::size_t written = 0, total = 0;
        for (const auto& task_id : cfg_.calibration_tasks) {
            TaskSpec task = make_task(task_id);
            auto options = detail::capture_options(task);
            for (const auto& s : task_stimuli(task)) {
                ++total;
                ojson ident;
                ident["kind"] = "activation";
                ident["model_id"] = cfg_.model_id;
                ident["task_id"] = task.task_id;
                ident["stimulus_id"] = s.id;
                std::string id = content_id(ident.dump());
                if (existing.count(id)) continue;
                ActivationRecord rec =
                    backend_->capture_last_token_states(render_prompt(task, s, false), layers, options);
                rec.id = id;
                rec.stimulus_id = s.id;
                rec.task_id = task.task_id;
                sink.write(to_json(rec));
                ++written;
            }
        }
        ojson details;
        details["records"] = total;
        details["new_records"] = written;
        details["layers"] = layers.size();
        manifest.mark_complete("capture", std::move(details));
    }

    // ---- shared artifact loading ----

    std::map<std::string, std::vector<ActivationRecord>> load_activations_by_task() const {
        std::map<std::string, std::vector<ActivationRecord>> by_task;
        for_each_jsonl(paths_.activations, [&](const ojson& j) {
            ActivationRecord r = activation_from_json(j);
            by_task[r.task_id].push_back(std::move(r));
        });
        for (auto& [_, records] : by_task)
            std::sort(records.begin(), records.end(),
                      [](const ActivationRecord& a, const ActivationRecord& b) {
                          return a.stimulus_id < b.stimulus_id;
                      });
        return by_task;
    }

    SteeringAxis load_selected_axis() const {
        std::optional<SteeringAxis> selected;
        for_each_jsonl(paths_.axes, [&](const ojson& j) {
            if (j.value("selected", false)) selected = axis_from_json(j);
        });
        if (!selected) throw data_error("no selected axis in " + paths_.axes.string());
        return *selected;
    }

    // ---- axis ----

    void stage_axis(PipelineManifest& manifest) {
        detail::require_stage(manifest, "capture", "axis");
        auto by_task = load_activations_by_task();
        const std::string& binary_id = cfg_.calibration_tasks[0];
        const std::string& continuous_id = cfg_.calibration_tasks[1];
        if (!by_task.count(binary_id) || !by_task.count(continuous_id))
            throw data_error("activation records missing a calibration task");
        const auto& binary = by_task[binary_id];
        const auto& continuous = by_task[continuous_id];

        auto labels = support_labels_from_decisions(binary);
        LayerProfile profile = layer_similarity_profile(binary, continuous, labels, cfg_.model_id);
        int selected = select_layer(profile);

        JsonlWriter sink(paths_.axes, /*truncate=*/true);
        std::string selected_axis_id;
        for (const auto& [layer, entry] : profile) {
            SteeringAxis axis = extract_axis(binary, layer, labels, cfg_.model_id);
            ojson j = to_json(axis);
            j["selected"] = layer == selected;
            j["similarity"] = entry.similarity;
            if (layer == selected) selected_axis_id = axis.axis_id;
            sink.write(j);
        }

        ojson profile_json = ojson::object();
        for (const auto& [layer, entry] : profile) {
            ojson e;
            e["similarity"] = entry.similarity;
            if (entry.projection_decision_r_a) e["projection_decision_r_binary"] = *entry.projection_decision_r_a;
            if (entry.projection_decision_r_b)
                e["projection_decision_r_continuous"] = *entry.projection_decision_r_b;
            profile_json[std::to_string(layer)] = std::move(e);
        }
        ojson details;
        details["selected_layer"] = selected;
        details["selected_axis_id"] = selected_axis_id;
        details["layer_profile"] = std::move(profile_json);
        manifest.mark_complete("axis", std::move(details));
    }

    // ---- range ----

    void stage_range(PipelineManifest& manifest) {
        detail::require_stage(manifest, "axis", "range");
        SteeringAxis axis = load_selected_axis();

        std::vector<CalibrationTask> calibration;
        std::vector<std::string> norm_prompts;
        for (const auto& task_id : cfg_.calibration_tasks) {
            CalibrationTask c;
            c.task = make_task(task_id);
            c.stimuli = task_stimuli(c.task);
            if (task_id == cfg_.calibration_tasks[0])
                for (const auto& s : c.stimuli) norm_prompts.push_back(render_prompt(c.task, s, false));
            calibration.push_back(std::move(c));
        }

        double norm = mean_activation_norm(*backend_, axis.layer_index, norm_prompts);
        ScanParams params;
        params.step = cfg_.scan_step_fraction * norm;
        params.max_steps = cfg_.scan_max_steps;
        params.tolerance = cfg_.monotonicity_tolerance;
        EffectiveRange range = find_effective_range(*backend_, axis, calibration, params);
        AlphaGrid grid = build_alpha_grid(range);

        ojson details;
        details["range"] = to_json(range);
        details["grid"] = to_json(grid);
        details["mean_activation_norm"] = norm;
        manifest.mark_complete("range", std::move(details));
    }

    // ---- sweep ----

    void stage_sweep(PipelineManifest& manifest, bool resume) {
        detail::require_stage(manifest, "range", "sweep");
        forbid_unflagged_partial(paths_.trials, resume, "sweep");
        SteeringAxis axis = load_selected_axis();
        ojson range_details = manifest.stage_details("range");
        AlphaGrid grid = grid_from_json(range_details.at("grid"));

        std::set<std::string> existing;
        for_each_jsonl(paths_.trials,
                       [&](const ojson& j) { existing.insert(j.at("trial_id").get<std::string>()); });

        SweepParams params;
        params.grid = grid;
        params.decode = decode_params();
        params.seed = cfg_.seed;

        JsonlWriter sink(paths_.trials);
        std::size_t planned = 0, written = 0;
        std::size_t cap = static_cast<std::size_t>(cfg_.sweep_record_cap);
        ojson per_task = ojson::object();
        bool capped = false;
        for (const auto& task_id : cfg_.tasks) {
            TaskSpec task = make_task(task_id);
            auto stimuli = task_stimuli(task);
            planned += stimuli.size() * grid.raw.size();

            if (cfg_.enforce_screening && task.objective &&
                task.response_mode == ResponseMode::structured_think_answer) {
                ScreeningResult sr = screening_accuracy(*backend_, task, stimuli, decode_params());
                double threshold = screening_threshold(task, cfg_);
                if (sr.accuracy < threshold)
                    throw data_error("screening gate failed for " + task.task_id + ": baseline accuracy " +
                                     fmt_double(sr.accuracy) + " below " + fmt_double(threshold));
            }

            if (cap > 0 && written >= cap) capped = true;
            if (capped) continue;
            params.record_cap = cap > 0 ? cap - written : 0;
            auto produced = run_intervention_sweep(*backend_, axis, task, stimuli, params, &sink, existing);
            written += produced.size();
            per_task[task_id] = produced.size();
        }

        std::size_t durable = 0;
        for_each_jsonl(paths_.trials, [&](const ojson&) { ++durable; });
        ojson details;
        details["planned"] = planned;
        details["new_records"] = written;
        details["durable_records"] = durable;
        details["per_task_new"] = std::move(per_task);
        if (durable >= planned) {
            manifest.mark_complete("sweep", std::move(details));
        } else {
            manifest.record_partial("sweep", std::move(details));
            std::fprintf(stderr, "[sweep] stopped at %zu of %zu records (record cap); rerun with --resume\n",
                         durable, planned);
        }
    }

    // ---- judge ----

    struct JudgeItem {
        std::string cache_key;
        std::string mode;  // reasoning_eval | stance_final | stance_reasoning
        TrialRecord trial;
        Stimulus stimulus;
        TaskSpec task;
    };

    // The question shown to the reasoning judge. Pair-ordering tasks embed
    // the words in the question line; other tasks ask the stimulus text.
    static std::string judge_question(const TaskSpec& task, const Stimulus& s, bool order_flip) {
        if (task.paradigm == Paradigm::alphabetical_order) {
            std::string prompt = render_prompt(task, s, order_flip);
            std::string line = prompt.substr(0, prompt.find('\n'));
            while (!line.empty() && line.back() == ' ') line.pop_back();
            return line;
        }
        return s.text;
    }

    void stage_judge(PipelineManifest& manifest) {
        detail::require_stage(manifest, "sweep", "judge");
        std::vector<TrialRecord> trials;
        for_each_jsonl(paths_.trials, [&](const ojson& j) { trials.push_back(trial_from_json(j)); });

        std::map<std::string, TaskSpec> tasks;
        std::map<std::string, std::map<std::string, Stimulus>> stimuli_by_task;
        for (const auto& task_id : cfg_.tasks) {
            TaskSpec task = make_task(task_id);
            for (auto& s : task_stimuli(task)) stimuli_by_task[task_id][s.id] = std::move(s);
            tasks[task_id] = std::move(task);
        }

        VerdictStore store(paths_.verdicts.string());
        std::vector<JudgeItem> work;
        std::size_t skipped_cached = 0;
        for (const auto& t : trials) {
            if (t.failed || !t.parse_ok) continue;
            auto task_it = tasks.find(t.task_id);
            if (task_it == tasks.end()) continue;
            const TaskSpec& task = task_it->second;
            if (task.response_mode != ResponseMode::structured_think_answer) continue;
            const Stimulus& s = stimuli_by_task.at(t.task_id).at(t.stimulus_id);

            auto enqueue = [&](const std::string& mode, const std::string& judge_model) {
                std::string key = VerdictStore::key(t.trial_id, judge_model, mode);
                if (store.has(key)) {
                    ++skipped_cached;
                    return;
                }
                JudgeItem item;
                item.cache_key = key;
                item.mode = mode;
                item.trial = t;
                item.stimulus = s;
                item.task = task;
                work.push_back(std::move(item));
            };
            if (task.objective) enqueue("reasoning_eval", cfg_.reasoning_judge.model_id);
            else if (task.paradigm == Paradigm::stance_taking) {
                enqueue("stance_final", cfg_.stance_judge.model_id);
                enqueue("stance_reasoning", cfg_.stance_judge.model_id);
            }
        }

        JudgeTransport reasoning = transports_.reasoning;
        JudgeTransport stance = transports_.stance;
        bool needs_reasoning = false, needs_stance = false;
        for (const auto& w : work) {
            if (w.mode == "reasoning_eval") needs_reasoning = true;
            else needs_stance = true;
        }
        if (needs_reasoning && !reasoning) {
            if (cfg_.reasoning_judge.base_url.empty())
                throw config_error("reasoning judge endpoint not configured");
            reasoning = HttpJudgeClient(cfg_.reasoning_judge).transport();
        }
        if (needs_stance && !stance) {
            if (cfg_.stance_judge.base_url.empty())
                throw config_error("stance judge endpoint not configured");
            stance = HttpJudgeClient(cfg_.stance_judge).transport();
        }

        TokenBucket reasoning_bucket(cfg_.reasoning_judge.requests_per_second);
        TokenBucket stance_bucket(cfg_.stance_judge.requests_per_second);
        int workers = std::max(cfg_.reasoning_judge.concurrency, cfg_.stance_judge.concurrency);

        std::atomic<std::size_t> unjudged{0};
        parallel_for(work.size(), workers, [&](std::size_t i) {
            const JudgeItem& w = work[i];
            if (w.mode == "reasoning_eval") {
                reasoning_bucket.acquire();
                ReasoningScore score = judge_reasoning(
                    w.trial.trial_id, judge_question(w.task, w.stimulus, w.trial.order_flip),
                    expected_truthful_answer(w.task, w.stimulus), w.trial.parsed_think.value_or(""),
                    w.trial.parsed_answer.value_or(""), reasoning, cfg_.reasoning_judge.model_id,
                    cfg_.reasoning_judge.max_attempts);
                if (!score.judged) unjudged.fetch_add(1);
                store.put(w.cache_key, to_json(score));
            } else {
                stance_bucket.acquire();
                StanceMode mode =
                    w.mode == "stance_final" ? StanceMode::final_answer : StanceMode::reasoning;
                std::string text = mode == StanceMode::final_answer ? w.trial.parsed_answer.value_or("")
                                                                    : w.trial.parsed_think.value_or("");
                StanceVerdict v = judge_stance(w.trial.trial_id, w.stimulus.text, text, mode, stance,
                                               cfg_.stance_judge.model_id, cfg_.stance_judge.max_attempts);
                if (!v.judged) unjudged.fetch_add(1);
                store.put(w.cache_key, to_json(v));
            }
        });

        ojson details;
        details["verdicts"] = store.size();
        details["new_verdicts"] = work.size();
        details["cached_hits"] = skipped_cached;
        details["unjudged"] = unjudged.load();
        manifest.mark_complete("judge", std::move(details));
    }

    // ---- stats ----

    struct StatsRow {
        std::string task;
        std::string predictor;
        CoefficientStats c;
        std::size_t n = 0;
        std::size_t clusters = 0;
    };

    void stage_stats(PipelineManifest& manifest) {
        detail::require_stage(manifest, "sweep", "stats");
        std::vector<TrialRecord> trials;
        for_each_jsonl(paths_.trials, [&](const ojson& j) { trials.push_back(trial_from_json(j)); });
        std::map<std::string, std::vector<TrialRecord>> by_task;
        for (auto& t : trials)
            if (!t.failed) by_task[t.task_id].push_back(t);

        std::vector<StatsRow> rows;
        std::vector<std::string> warnings;
        auto push_fit = [&](const std::string& task, const std::string& predictor,
                            const RegressionResult& r, const std::string& key) {
            StatsRow row;
            row.task = task;
            row.predictor = predictor;
            row.c = r.coefficients.at(key);
            row.n = r.n;
            row.clusters = r.clusters;
            rows.push_back(std::move(row));
            for (const auto& w : r.warnings) warnings.push_back(task + ": " + w);
        };

        // scalar-response tasks: expected response or logit difference vs alpha
        for (const auto& task_id : cfg_.tasks) {
            auto it = by_task.find(task_id);
            if (it == by_task.end()) continue;
            std::vector<double> y, x;
            std::vector<std::string> cluster;
            bool logit_task = false;
            for (const auto& t : it->second) {
                if (t.expected_response) y.push_back(*t.expected_response);
                else if (t.logit_difference) {
                    y.push_back(*t.logit_difference);
                    logit_task = true;
                } else
                    continue;
                x.push_back(t.normalized_coefficient);
                cluster.push_back(t.stimulus_id);
            }
            if (y.size() < 3) continue;
            try {
                RegressionResult r = linear_fixed_intercepts(y, x, cluster);
                push_fit(task_id, logit_task ? "alpha (logit_difference)" : "alpha (expected_response)", r,
                         "slope");
            } catch (const error& e) {
                warnings.push_back(task_id + ": " + e.what());
            }
        }

        // objective structured tasks: correctness vs truth-aligned coefficient
        for (const auto& task_id : cfg_.tasks) {
            TaskSpec task = make_task(task_id);
            if (!task.objective || task.response_mode != ResponseMode::structured_think_answer) continue;
            auto it = by_task.find(task_id);
            if (it == by_task.end()) continue;
            std::map<std::string, Stimulus> stimuli;
            for (auto& s : task_stimuli(task)) stimuli[s.id] = std::move(s);
            std::vector<double> y, x;
            std::vector<std::string> cluster;
            for (const auto& t : it->second) {
                if (!t.parse_ok || !t.alignment_pressure) continue;
                const Stimulus& s = stimuli.at(t.stimulus_id);
                std::string expected = normalize_answer(expected_truthful_answer(task, s));
                y.push_back(normalize_answer(t.parsed_answer.value_or("")) == expected ? 1.0 : 0.0);
                x.push_back(*t.alignment_pressure);
                cluster.push_back(t.stimulus_id);
            }
            if (y.size() < 3) continue;
            try {
                RegressionResult r = logistic_regression(y, x, cluster);
                push_fit(task_id, "alpha_aligned (correct)", r, "slope");
            } catch (const error& e) {
                warnings.push_back(task_id + ": " + e.what());
            }
        }

        // reasoning patterns vs truth-aligned coefficient (Mixed cells excluded)
        if (std::filesystem::exists(paths_.verdicts)) {
            std::map<std::string, ReasoningScore> reasoning;
            std::map<std::string, StanceVerdict> stance_final, stance_reasoning;
            for_each_jsonl(paths_.verdicts, [&](const ojson& j) {
                std::string mode = j.value("mode", "");
                if (mode == "reasoning_eval") {
                    ReasoningScore r = reasoning_score_from_json(j);
                    if (r.judged) reasoning[r.trial_id] = std::move(r);
                } else if (mode == "stance_final" || mode == "stance_reasoning") {
                    StanceVerdict v = stance_verdict_from_json(j);
                    if (!v.judged) return;
                    (mode == "stance_final" ? stance_final : stance_reasoning)[v.trial_id] = std::move(v);
                }
            });

            for (const auto& task_id : cfg_.tasks) {
                auto it = by_task.find(task_id);
                if (it == by_task.end()) continue;
                std::vector<std::string> category, cluster;
                std::vector<double> x;
                for (const auto& t : it->second) {
                    auto rv = reasoning.find(t.trial_id);
                    if (rv == reasoning.end() || !t.alignment_pressure) continue;
                    const std::string& pattern = rv->second.pattern;
                    if (pattern == "Mixed" || pattern == "Mixed/Other") continue;
                    category.push_back(pattern);
                    x.push_back(*t.alignment_pressure);
                    cluster.push_back(t.stimulus_id);
                }
                if (category.size() < 6) continue;
                try {
                    MultinomialResult mr = multinomial_logistic(
                        category, x, "Sound Reasoning",
                        {"Sound Reasoning", "Coherent Hallucination", "Contradictory Reasoning",
                         "Incoherent Hallucination", "Cherry-picking", "Ambiguous Logic"});
                    for (const auto& [cat, rr] : mr.by_category)
                        push_fit(task_id, "alpha_aligned [" + cat + " vs Sound Reasoning]", rr, "slope");
                    for (const auto& w : mr.warnings) warnings.push_back(task_id + ": " + w);
                } catch (const error& e) {
                    warnings.push_back(task_id + " patterns: " + e.what());
                }
            }

            // stance scores vs alpha
            auto stance_fit = [&](const std::map<std::string, StanceVerdict>& verdicts,
                                  const std::string& label) {
                std::vector<double> y, x;
                std::vector<std::string> cluster;
                for (const auto& [task_id, ts] : by_task) {
                    if (make_task(task_id).paradigm != Paradigm::stance_taking) continue;
                    for (const auto& t : ts) {
                        auto it = verdicts.find(t.trial_id);
                        if (it == verdicts.end()) continue;
                        y.push_back(static_cast<double>(it->second.score));
                        x.push_back(t.normalized_coefficient);
                        cluster.push_back(t.stimulus_id);
                    }
                }
                if (y.size() < 3) return;
                try {
                    RegressionResult r = linear_fixed_intercepts(y, x, cluster);
                    push_fit("stance_taking", label, r, "slope");
                } catch (const error& e) {
                    warnings.push_back(std::string("stance_taking: ") + e.what());
                }
            };
            stance_fit(stance_final, "alpha (final_stance)");
            stance_fit(stance_reasoning, "alpha (reasoning_stance)");
        }

        detail::CsvWriter csv(paths_.stats_csv,
                              {"model", "task", "predictor", "b", "se", "z", "ci_lo", "ci_hi", "p", "n",
                               "clusters"});
        for (const auto& r : rows)
            csv.row({cfg_.model_id, r.task, r.predictor, fmt_double(r.c.b), fmt_double(r.c.se),
                     fmt_double(r.c.z), fmt_double(r.c.ci_lo), fmt_double(r.c.ci_hi), fmt_double(r.c.p),
                     std::to_string(r.n), std::to_string(r.clusters)});

        ojson details;
        details["rows"] = rows.size();
        details["warnings"] = warnings;
        manifest.mark_complete("stats", std::move(details));
    }

    // ---- report ----

    void stage_report(PipelineManifest& manifest) {
        detail::require_stage(manifest, "stats", "report");
        std::filesystem::create_directories(paths_.report_dir);

        std::vector<TrialRecord> trials;
        for_each_jsonl(paths_.trials, [&](const ojson& j) { trials.push_back(trial_from_json(j)); });
        if (trials.empty()) throw data_error("empty run: no trials to report");

        // response curves: mean scalar response per task x alpha
        {
            std::map<std::pair<std::string, double>, std::pair<double, std::size_t>> agg;
            for (const auto& t : trials) {
                if (t.failed) continue;
                double v;
                if (t.expected_response) v = *t.expected_response;
                else if (t.logit_difference) v = *t.logit_difference;
                else
                    continue;
                auto& slot = agg[{t.task_id, t.normalized_coefficient}];
                slot.first += v;
                slot.second += 1;
            }
            detail::CsvWriter csv(paths_.report_dir / "response_curves.csv",
                                  {"model", "task", "layer", "alpha", "mean_response", "n"});
            for (const auto& [key, sum_n] : agg)
                csv.row({cfg_.model_id, key.first, std::to_string(trials.front().layer_index),
                         fmt_double(key.second), fmt_double(sum_n.first / static_cast<double>(sum_n.second)),
                         std::to_string(sum_n.second)});
        }

        // layer profile from the axis stage
        {
            ojson axis_details = manifest.stage_details("axis");
            detail::CsvWriter csv(paths_.report_dir / "layer_profile.csv",
                                  {"model", "layer", "similarity", "projection_decision_r_binary",
                                   "projection_decision_r_continuous", "selected"});
            int selected = axis_details.at("selected_layer").get<int>();
            std::map<int, ojson> ordered;
            for (const auto& [k, v] : axis_details.at("layer_profile").items())
                ordered[std::stoi(k)] = v;
            for (const auto& [layer, e] : ordered)
                csv.row({cfg_.model_id, std::to_string(layer), fmt_double(e.at("similarity").get<double>()),
                         e.contains("projection_decision_r_binary")
                             ? fmt_double(e.at("projection_decision_r_binary").get<double>())
                             : "",
                         e.contains("projection_decision_r_continuous")
                             ? fmt_double(e.at("projection_decision_r_continuous").get<double>())
                             : "",
                         layer == selected ? "1" : "0"});
        }

        // accuracy and pattern distributions over truth-aligned coefficients
        std::map<std::string, ReasoningScore> reasoning;
        std::map<std::string, StanceVerdict> stance_final, stance_reasoning;
        if (std::filesystem::exists(paths_.verdicts))
            for_each_jsonl(paths_.verdicts, [&](const ojson& j) {
                std::string mode = j.value("mode", "");
                if (mode == "reasoning_eval") {
                    ReasoningScore r = reasoning_score_from_json(j);
                    if (r.judged) reasoning[r.trial_id] = std::move(r);
                } else if (mode == "stance_final" || mode == "stance_reasoning") {
                    StanceVerdict v = stance_verdict_from_json(j);
                    if (!v.judged) return;
                    (mode == "stance_final" ? stance_final : stance_reasoning)[v.trial_id] = std::move(v);
                }
            });

        {
            std::map<std::pair<std::string, double>, std::pair<std::size_t, std::size_t>> acc;
            std::map<std::string, std::map<std::string, Stimulus>> stimuli_cache;
            for (const auto& t : trials) {
                if (t.failed || !t.parse_ok || !t.alignment_pressure) continue;
                TaskSpec task = make_task(t.task_id);
                if (!task.objective || task.response_mode != ResponseMode::structured_think_answer) continue;
                auto& stim_map = stimuli_cache[t.task_id];
                if (stim_map.empty())
                    for (auto& s : task_stimuli(task)) stim_map[s.id] = std::move(s);
                std::string expected = normalize_answer(expected_truthful_answer(task, stim_map.at(t.stimulus_id)));
                auto& slot = acc[{t.task_id, *t.alignment_pressure}];
                if (normalize_answer(t.parsed_answer.value_or("")) == expected) ++slot.first;
                ++slot.second;
            }
            detail::CsvWriter csv(paths_.report_dir / "accuracy_curves.csv",
                                  {"model", "task", "alpha_aligned", "accuracy", "n"});
            for (const auto& [key, hit_n] : acc)
                csv.row({cfg_.model_id, key.first, fmt_double(key.second),
                         fmt_double(static_cast<double>(hit_n.first) / static_cast<double>(hit_n.second)),
                         std::to_string(hit_n.second)});
        }

        {
            std::map<std::pair<std::string, double>, std::map<std::string, std::size_t>> dist;
            for (const auto& t : trials) {
                auto rv = reasoning.find(t.trial_id);
                if (rv == reasoning.end() || !t.alignment_pressure) continue;
                dist[{t.task_id, *t.alignment_pressure}][rv->second.pattern] += 1;
            }
            detail::CsvWriter csv(paths_.report_dir / "pattern_distribution.csv",
                                  {"model", "task", "alpha_aligned", "pattern", "proportion", "count"});
            for (const auto& [key, patterns] : dist) {
                std::size_t total = 0;
                for (const auto& [_, c] : patterns) total += c;
                for (const auto& [pattern, c] : patterns)
                    csv.row({cfg_.model_id, key.first, fmt_double(key.second), pattern,
                             fmt_double(static_cast<double>(c) / static_cast<double>(total)),
                             std::to_string(c)});
            }
        }

        {
            std::map<double, std::pair<double, std::size_t>> final_curve, reasoning_curve;
            for (const auto& t : trials) {
                auto fi = stance_final.find(t.trial_id);
                if (fi != stance_final.end()) {
                    auto& slot = final_curve[t.normalized_coefficient];
                    slot.first += fi->second.score;
                    slot.second += 1;
                }
                auto ri = stance_reasoning.find(t.trial_id);
                if (ri != stance_reasoning.end()) {
                    auto& slot = reasoning_curve[t.normalized_coefficient];
                    slot.first += ri->second.score;
                    slot.second += 1;
                }
            }
            detail::CsvWriter csv(paths_.report_dir / "stance_curves.csv",
                                  {"model", "task", "alpha", "channel", "mean_stance", "n"});
            for (const auto& [alpha, sum_n] : final_curve)
                csv.row({cfg_.model_id, "stance_taking", fmt_double(alpha), "final",
                         fmt_double(sum_n.first / static_cast<double>(sum_n.second)),
                         std::to_string(sum_n.second)});
            for (const auto& [alpha, sum_n] : reasoning_curve)
                csv.row({cfg_.model_id, "stance_taking", fmt_double(alpha), "reasoning",
                         fmt_double(sum_n.first / static_cast<double>(sum_n.second)),
                         std::to_string(sum_n.second)});
        }

        // coefficient table (copy of stats.csv for the figure bundle)
        {
            std::ifstream in(paths_.stats_csv, std::ios::binary);
            if (!in) throw data_error("stats.csv missing");
            std::ofstream out(paths_.report_dir / "coefficients.csv", std::ios::trunc | std::ios::binary);
            out << in.rdbuf();
        }

        // top-two component scatter of the binary calibration activations
        {
            auto by_task = load_activations_by_task();
            const auto& binary = by_task.at(cfg_.calibration_tasks[0]);
            int selected = manifest.stage_details("axis").at("selected_layer").get<int>();
            PrincipalPlane plane = principal_plane(binary, selected);
            detail::CsvWriter csv(paths_.report_dir / "pc_scatter.csv",
                                  {"model", "layer", "stimulus_id", "pc1", "pc2", "decision_value",
                                   "evr1", "evr2"});
            for (std::size_t i = 0; i < binary.size(); ++i)
                csv.row({cfg_.model_id, std::to_string(selected), binary[i].stimulus_id,
                         fmt_double(plane.pc1[i]), fmt_double(plane.pc2.empty() ? 0.0 : plane.pc2[i]),
                         fmt_double(binary[i].decision_value), fmt_double(plane.evr1),
                         fmt_double(plane.evr2)});
        }

        ojson details;
        details["files"] = ojson::array({"response_curves.csv", "layer_profile.csv", "accuracy_curves.csv",
                                         "pattern_distribution.csv", "stance_curves.csv",
                                         "coefficients.csv", "pc_scatter.csv"});
        manifest.mark_complete("report", std::move(details));
    }

    RunConfig cfg_;
    JudgeTransports transports_;
    std::unique_ptr<Backend> backend_;
    RunPaths paths_;
};

}  // namespace vaa
