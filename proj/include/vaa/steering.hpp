#pragma once
// Intervention machinery: effective-range discovery on calibration tasks,
// the 11-point coefficient grid with its piecewise normalization, alignment
// pressure, and the sweep runner that emits trial records.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vaa/axes.hpp"
#include "vaa/backend.hpp"
#include "vaa/common.hpp"
#include "vaa/core.hpp"
#include "vaa/jsonl.hpp"
#include "vaa/tasks.hpp"

namespace vaa {

struct EffectiveRange {
    int layer_index = 0;
    double a_min = 0.0;  // < 0
    double a_max = 0.0;  // > 0
    double scan_step = 0.0;
    double tolerance = 1e-4;
};

inline void validate(const EffectiveRange& r) {
    if (!(r.a_min < 0.0) || !(r.a_max > 0.0)) throw config_error("effective range must straddle 0");
    if (!(r.scan_step > 0.0)) throw config_error("scan step must be positive");
}

inline ojson to_json(const EffectiveRange& r) {
    ojson j;
    j["layer_index"] = r.layer_index;
    j["a_min"] = r.a_min;
    j["a_max"] = r.a_max;
    j["scan_step"] = r.scan_step;
    j["tolerance"] = r.tolerance;
    return j;
}

inline EffectiveRange range_from_json(const ojson& j) {
    EffectiveRange r;
    r.layer_index = j.at("layer_index").get<int>();
    r.a_min = j.at("a_min").get<double>();
    r.a_max = j.at("a_max").get<double>();
    r.scan_step = j.at("scan_step").get<double>();
    r.tolerance = j.at("tolerance").get<double>();
    return r;
}

// Eleven raw coefficients: five equal subdivisions of each sub-interval plus
// zero. Normalized values land on the fixed ticks -1.0..1.0 in 0.2 steps.
struct AlphaGrid {
    std::vector<double> raw;
    std::vector<double> normalized;
};

inline AlphaGrid build_alpha_grid(const EffectiveRange& range) {
    validate(range);
    AlphaGrid g;
    for (int i = 5; i >= 1; --i) {
        g.raw.push_back(static_cast<double>(i) / 5.0 * range.a_min);
        g.normalized.push_back(-static_cast<double>(i) / 5.0);
    }
    for (int j = 0; j <= 5; ++j) {
        g.raw.push_back(static_cast<double>(j) / 5.0 * range.a_max);
        g.normalized.push_back(static_cast<double>(j) / 5.0);
    }
    return g;
}

// Piecewise-linear about 0: the negative sub-interval maps onto [-1,0], the
// positive onto [0,1]. Grid points resolve by table lookup so the round trip
// is exact; off-grid values fall back to arithmetic.
inline double normalize_coefficient(const AlphaGrid& grid, const EffectiveRange& range, double raw) {
    for (std::size_t k = 0; k < grid.raw.size(); ++k)
        if (grid.raw[k] == raw) return grid.normalized[k];
    return raw <= 0.0 ? -raw / range.a_min : raw / range.a_max;
}

inline double denormalize_coefficient(const AlphaGrid& grid, const EffectiveRange& range, double normalized) {
    for (std::size_t k = 0; k < grid.normalized.size(); ++k)
        if (grid.normalized[k] == normalized) return grid.raw[k];
    return normalized <= 0.0 ? -normalized * range.a_min : normalized * range.a_max;
}

inline ojson to_json(const AlphaGrid& g) {
    ojson j;
    j["raw"] = g.raw;
    j["normalized"] = g.normalized;
    return j;
}

inline AlphaGrid grid_from_json(const ojson& j) {
    AlphaGrid g;
    g.raw = j.at("raw").get<std::vector<double>>();
    g.normalized = j.at("normalized").get<std::vector<double>>();
    return g;
}

// Truth-aligned coefficient: positive pushes toward the correct answer.
inline double alignment_pressure(double alpha, bool truth_label) {
    return alpha * (truth_label ? 1.0 : -1.0);
}

// ---- range discovery ----

struct ScanCurve {
    std::vector<double> coefficients;
    std::vector<double> responses;  // mean expected response per coefficient
};

class range_discovery_error : public error {
public:
    range_discovery_error(const std::string& msg, std::map<std::string, ScanCurve> curves)
        : error(msg), scanned_curves(std::move(curves)) {}
    std::map<std::string, ScanCurve> scanned_curves;
};

struct CalibrationTask {
    TaskSpec task;
    std::vector<Stimulus> stimuli;
};

struct ScanParams {
    double step = 1.0;  // absolute coefficient units
    int max_steps = 8;  // scan covers [-max_steps*step, +max_steps*step]
    double tolerance = 1e-4;
};

// Mean last-token activation norm at a layer, the unit for scan steps.
inline double mean_activation_norm(Backend& backend, int layer, const std::vector<std::string>& prompts) {
    if (prompts.empty()) throw data_error("no prompts for norm estimate");
    double total = 0.0;
    for (const auto& p : prompts) {
        ActivationRecord rec = backend.capture_last_token_states(p, {layer});
        const auto& v = rec.layer_states.at(layer);
        double sq = 0.0;
        for (double x : v) sq += x * x;
        total += std::sqrt(sq);
    }
    return total / static_cast<double>(prompts.size());
}

namespace detail {

// Expected response of one option/rating trial under the currently installed
// hook. Structured tasks have no expected response and are rejected.
inline double expected_response_for(Backend& backend, const TaskSpec& task, const Stimulus& s) {
    std::string prompt = render_prompt(task, s, false);
    if (task.response_mode == ResponseMode::option_tokens) {
        std::vector<std::string> texts;
        for (const auto& o : task.option_tokens) texts.push_back(o.text);
        OptionScores sc = backend.score_option_tokens(prompt, texts);
        return expected_response_binary(sc.probs, task.option_tokens);
    }
    if (task.response_mode == ResponseMode::rating_0_9) {
        OptionScores sc = backend.score_option_tokens(prompt, rating_tokens());
        return expected_response_continuous(sc).value;
    }
    throw config_error("task " + task.task_id + " has no scalar expected response");
}

// Strictly increasing within tolerance: no adjacent drop beyond eps and a net
// rise above eps over the span. Flat curves fail; saturating tails pass.
inline bool strictly_monotone(const std::vector<double>& y, std::size_t i, std::size_t j, double eps) {
    for (std::size_t k = i; k < j; ++k)
        if (y[k + 1] - y[k] < -eps) return false;
    return y[j] - y[i] > eps;
}

}  // namespace detail

// Scans coefficients symmetrically about 0 and returns the largest contiguous
// interval containing 0 on which every calibration task's mean expected
// response rises strictly monotonically (within tolerance). Failure carries
// the scanned curves for inspection.
inline EffectiveRange find_effective_range(Backend& backend, const SteeringAxis& axis,
                                           const std::vector<CalibrationTask>& calibration,
                                           const ScanParams& params) {
    if (calibration.empty()) throw config_error("no calibration tasks");
    if (!(params.step > 0.0)) throw config_error("scan step must be positive");
    if (params.max_steps < 1) throw config_error("scan needs at least one step each side");

    std::vector<double> coefficients;
    for (int k = -params.max_steps; k <= params.max_steps; ++k)
        coefficients.push_back(static_cast<double>(k) * params.step);
    std::size_t zero_index = static_cast<std::size_t>(params.max_steps);

    std::map<std::string, ScanCurve> curves;
    for (const auto& c : calibration) {
        if (c.stimuli.empty()) throw data_error("calibration task " + c.task.task_id + " has no stimuli");
        ScanCurve curve;
        curve.coefficients = coefficients;
        for (double a : coefficients) {
            std::optional<ScopedHook> hold;
            if (a != 0.0)
                hold.emplace(backend, SteeringHook{axis.layer_index, axis.loading, a});
            double sum = 0.0;
            for (const auto& s : c.stimuli) sum += detail::expected_response_for(backend, c.task, s);
            curve.responses.push_back(sum / static_cast<double>(c.stimuli.size()));
        }
        curves[c.task.task_id] = std::move(curve);
    }

    std::size_t best_i = 0, best_j = 0;
    bool found = false;
    for (std::size_t i = 0; i < zero_index; ++i) {
        for (std::size_t j = zero_index + 1; j < coefficients.size(); ++j) {
            bool ok = true;
            for (const auto& [_, curve] : curves)
                if (!detail::strictly_monotone(curve.responses, i, j, params.tolerance)) {
                    ok = false;
                    break;
                }
            if (ok && (!found || j - i > best_j - best_i)) {
                best_i = i;
                best_j = j;
                found = true;
            }
        }
    }
    if (!found)
        throw range_discovery_error("no monotone interval containing 0 found in scan", curves);

    EffectiveRange r;
    r.layer_index = axis.layer_index;
    r.a_min = coefficients[best_i];
    r.a_max = coefficients[best_j];
    r.scan_step = params.step;
    r.tolerance = params.tolerance;
    return r;
}

// ---- intervention sweep ----

struct SweepParams {
    AlphaGrid grid;
    DecodeParams decode;
    std::uint64_t seed = 0;
    std::size_t record_cap = 0;       // stop after this many new records (0 = unlimited)
    double abort_failure_rate = 0.10;  // of the planned trial count
    double mass_floor = 0.5;
};

// One trial per stimulus x grid point, streamed to the sink as produced.
// Zero-coefficient trials run with no hook installed. Trials whose ids appear
// in `existing` are skipped, which makes reruns resumable; backend failures
// mark the trial failed and the sweep aborts once failures exceed the
// configured share of the plan. Preference pairs alternate rendered option
// order across stimuli.
inline std::vector<TrialRecord> run_intervention_sweep(Backend& backend, const SteeringAxis& axis,
                                                       const TaskSpec& task,
                                                       const std::vector<Stimulus>& stimuli,
                                                       const SweepParams& params,
                                                       JsonlWriter* sink = nullptr,
                                                       const std::set<std::string>& existing = {}) {
    validate(task);
    if (stimuli.empty()) throw data_error("sweep has no stimuli");
    if (params.grid.raw.size() != params.grid.normalized.size() || params.grid.raw.empty())
        throw config_error("malformed coefficient grid");

    const std::string model_id = backend.info().model_id;
    std::size_t planned = stimuli.size() * params.grid.raw.size();
    std::size_t max_failures =
        static_cast<std::size_t>(params.abort_failure_rate * static_cast<double>(planned));
    std::size_t failures = 0;
    std::size_t written = 0;
    std::vector<TrialRecord> out;
    auto vocab = answer_vocabulary(task);
    bool pair_task = task.paradigm == Paradigm::subjective_preference &&
                     task.response_mode == ResponseMode::logit_pair;

    for (std::size_t si = 0; si < stimuli.size(); ++si) {
        const Stimulus& s = stimuli[si];
        bool flip = pair_task && si % 2 == 1;
        for (std::size_t k = 0; k < params.grid.raw.size(); ++k) {
            TrialRecord t;
            t.stimulus_id = s.id;
            t.task_id = task.task_id;
            t.layer_index = axis.layer_index;
            t.raw_coefficient = params.grid.raw[k];
            t.normalized_coefficient = params.grid.normalized[k];
            t.order_flip = flip;
            if (task.objective && s.truth_label.has_value())
                t.alignment_pressure = alignment_pressure(t.normalized_coefficient, *s.truth_label);
            t.trial_id = trial_identity_id(model_id, t, params.seed);
            if (existing.count(t.trial_id)) continue;
            if (params.record_cap > 0 && written >= params.record_cap) return out;

            try {
                std::string prompt = render_prompt(task, s, flip);
                std::optional<ScopedHook> hold;
                if (t.raw_coefficient != 0.0)
                    hold.emplace(backend, SteeringHook{axis.layer_index, axis.loading, t.raw_coefficient});

                if (task.response_mode == ResponseMode::option_tokens) {
                    std::vector<std::string> texts;
                    for (const auto& o : task.option_tokens) texts.push_back(o.text);
                    OptionScores sc = backend.score_option_tokens(prompt, texts);
                    t.expected_response = expected_response_binary(sc.probs, task.option_tokens);
                    t.low_confidence = sc.candidate_mass < params.mass_floor;
                } else if (task.response_mode == ResponseMode::rating_0_9) {
                    OptionScores sc = backend.score_option_tokens(prompt, rating_tokens());
                    ContinuousResponse cr = expected_response_continuous(sc, params.mass_floor);
                    t.expected_response = cr.value;
                    t.low_confidence = cr.low_confidence;
                } else if (task.response_mode == ResponseMode::logit_pair) {
                    auto options = resolve_options(task, s, flip);
                    const OptionToken& pos = options[0].polarity > 0 ? options[0] : options[1];
                    const OptionToken& neg = options[0].polarity > 0 ? options[1] : options[0];
                    OptionScores sc = backend.score_option_tokens(prompt, {options[0].text, options[1].text});
                    t.logit_difference = logit_difference(sc.logits, pos.text, neg.text);
                } else {
                    DecodeParams dp = params.decode;
                    dp.seed = params.seed;
                    GenerationResult g = backend.generate(prompt, dp);
                    t.raw_output = g.text;
                    ParsedOutput parsed = parse_think_answer(g.text, vocab);
                    t.parse_ok = parsed.parse_ok;
                    if (parsed.parse_ok) {
                        t.parsed_think = parsed.think;
                        t.parsed_answer = parsed.answer_raw;
                    }
                }
            } catch (const error&) {
                t.failed = true;
                ++failures;
            }

            validate(t, s.truth_label);
            if (sink) sink->write(to_json(t));
            ++written;
            out.push_back(std::move(t));
            if (failures > max_failures)
                throw data_error("sweep aborted: " + std::to_string(failures) + " of " +
                                 std::to_string(planned) + " trials failed");
        }
    }
    return out;
}

}  // namespace vaa
