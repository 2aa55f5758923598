#pragma once
// Domain types shared by every module, plus their canonical JSON forms.
//
// Canonical serialization rules: JSON objects with writer-declared key order
// (nlohmann::ordered_json), optional fields omitted when absent, doubles in
// shortest round-trip form. Record ids hash these canonical bytes.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vaa/common.hpp"

namespace vaa {

using ojson = nlohmann::ordered_json;

enum class Paradigm {
    value_binary,
    value_continuous,
    sentiment_binary,
    sentiment_continuous,
    subjective_preference,
    single_letter_order,
    math_expression,
    alphabetical_order,
    factual_judgment,
    stance_taking,
};

enum class ResponseMode {
    option_tokens,
    rating_0_9,
    logit_pair,
    structured_think_answer,
};

inline const char* to_string(Paradigm p) {
    switch (p) {
        case Paradigm::value_binary: return "value_binary";
        case Paradigm::value_continuous: return "value_continuous";
        case Paradigm::sentiment_binary: return "sentiment_binary";
        case Paradigm::sentiment_continuous: return "sentiment_continuous";
        case Paradigm::subjective_preference: return "subjective_preference";
        case Paradigm::single_letter_order: return "single_letter_order";
        case Paradigm::math_expression: return "math_expression";
        case Paradigm::alphabetical_order: return "alphabetical_order";
        case Paradigm::factual_judgment: return "factual_judgment";
        case Paradigm::stance_taking: return "stance_taking";
    }
    throw config_error("unknown paradigm value");
}

inline Paradigm parse_paradigm(const std::string& s) {
    static const std::map<std::string, Paradigm> table = {
        {"value_binary", Paradigm::value_binary},
        {"value_continuous", Paradigm::value_continuous},
        {"sentiment_binary", Paradigm::sentiment_binary},
        {"sentiment_continuous", Paradigm::sentiment_continuous},
        {"subjective_preference", Paradigm::subjective_preference},
        {"single_letter_order", Paradigm::single_letter_order},
        {"math_expression", Paradigm::math_expression},
        {"alphabetical_order", Paradigm::alphabetical_order},
        {"factual_judgment", Paradigm::factual_judgment},
        {"stance_taking", Paradigm::stance_taking},
    };
    auto it = table.find(s);
    if (it == table.end()) throw config_error("unknown paradigm: " + s);
    return it->second;
}

inline const char* to_string(ResponseMode m) {
    switch (m) {
        case ResponseMode::option_tokens: return "option_tokens";
        case ResponseMode::rating_0_9: return "rating_0_9";
        case ResponseMode::logit_pair: return "logit_pair";
        case ResponseMode::structured_think_answer: return "structured_think_answer";
    }
    throw config_error("unknown response mode value");
}

inline ResponseMode parse_response_mode(const std::string& s) {
    if (s == "option_tokens") return ResponseMode::option_tokens;
    if (s == "rating_0_9") return ResponseMode::rating_0_9;
    if (s == "logit_pair") return ResponseMode::logit_pair;
    if (s == "structured_think_answer") return ResponseMode::structured_think_answer;
    throw config_error("unknown response mode: " + s);
}

// One prompt-fillable item: a statement, headline, question, word pair or
// expression. Text is stored verbatim; rendering never mutates it.
struct Stimulus {
    std::string id;
    std::string task_id;
    std::string text;
    std::optional<bool> truth_label;  // present only for objective tasks
    std::optional<std::string> topic;
    std::map<std::string, std::string> metadata;
};

inline ojson to_json(const Stimulus& s) {
    ojson j;
    j["id"] = s.id;
    j["task_id"] = s.task_id;
    j["text"] = s.text;
    if (s.truth_label) j["truth_label"] = *s.truth_label;
    if (s.topic) j["topic"] = *s.topic;
    if (!s.metadata.empty()) j["metadata"] = s.metadata;
    return j;
}

inline Stimulus stimulus_from_json(const ojson& j) {
    Stimulus s;
    s.id = j.at("id").get<std::string>();
    s.task_id = j.at("task_id").get<std::string>();
    s.text = j.at("text").get<std::string>();
    if (j.contains("truth_label")) s.truth_label = j["truth_label"].get<bool>();
    if (j.contains("topic")) s.topic = j["topic"].get<std::string>();
    if (j.contains("metadata")) s.metadata = j["metadata"].get<std::map<std::string, std::string>>();
    return s;
}

// Answer string with its polarity: +1 support-like, -1 oppose-like.
struct OptionToken {
    std::string text;
    int polarity = +1;
};

struct TaskSpec {
    std::string task_id;
    Paradigm paradigm = Paradigm::value_binary;
    ResponseMode response_mode = ResponseMode::option_tokens;
    std::vector<OptionToken> option_tokens;
    bool objective = false;
    std::string prompt_template_id;
};

inline bool paradigm_is_objective(Paradigm p) {
    return p == Paradigm::single_letter_order || p == Paradigm::math_expression ||
           p == Paradigm::alphabetical_order || p == Paradigm::factual_judgment;
}

inline void validate(const TaskSpec& t) {
    bool needs_options = t.response_mode == ResponseMode::option_tokens ||
                         t.response_mode == ResponseMode::logit_pair;
    if (needs_options != !t.option_tokens.empty())
        throw config_error("task " + t.task_id + ": option_tokens must be non-empty exactly for option/logit response modes");
    if (t.objective != paradigm_is_objective(t.paradigm))
        throw config_error("task " + t.task_id + ": objective flag inconsistent with paradigm");
}

inline ojson to_json(const TaskSpec& t) {
    ojson j;
    j["task_id"] = t.task_id;
    j["paradigm"] = to_string(t.paradigm);
    j["response_mode"] = to_string(t.response_mode);
    ojson opts = ojson::array();
    for (const auto& o : t.option_tokens) opts.push_back({{"text", o.text}, {"polarity", o.polarity}});
    j["option_tokens"] = std::move(opts);
    j["objective"] = t.objective;
    j["prompt_template_id"] = t.prompt_template_id;
    return j;
}

inline TaskSpec task_spec_from_json(const ojson& j) {
    TaskSpec t;
    t.task_id = j.at("task_id").get<std::string>();
    t.paradigm = parse_paradigm(j.at("paradigm").get<std::string>());
    t.response_mode = parse_response_mode(j.at("response_mode").get<std::string>());
    for (const auto& o : j.at("option_tokens"))
        t.option_tokens.push_back({o.at("text").get<std::string>(), o.at("polarity").get<int>()});
    t.objective = j.at("objective").get<bool>();
    t.prompt_template_id = j.at("prompt_template_id").get<std::string>();
    return t;
}

// One steered generation or scoring event. Exactly one of expected_response /
// logit_difference / parsed_answer is populated, matching the response mode.
struct TrialRecord {
    std::string trial_id;  // content-addressed from the defining inputs below
    std::string stimulus_id;
    std::string task_id;
    int layer_index = 0;
    double raw_coefficient = 0.0;         // a, in backend activation units
    double normalized_coefficient = 0.0;  // alpha in [-1, 1]
    std::optional<double> alignment_pressure;  // alpha * D_truth, objective tasks only
    std::string raw_output;
    std::optional<double> expected_response;
    std::optional<double> logit_difference;
    std::optional<std::string> parsed_think;
    std::optional<std::string> parsed_answer;
    bool parse_ok = true;
    std::optional<std::string> reasoning_score_id;
    bool order_flip = false;  // rendered option order for pair tasks
    bool failed = false;      // backend failure; excluded from stats
    bool low_confidence = false;  // candidate-token mass below the floor
};

// The trial id covers everything that determines the trial's outcome and
// nothing that is itself an outcome, so resumed sweeps can skip finished work.
inline std::string trial_identity_id(const std::string& model_id, const TrialRecord& t, std::uint64_t seed) {
    ojson j;
    j["model_id"] = model_id;
    j["task_id"] = t.task_id;
    j["stimulus_id"] = t.stimulus_id;
    j["layer_index"] = t.layer_index;
    j["raw_coefficient"] = t.raw_coefficient;
    j["normalized_coefficient"] = t.normalized_coefficient;
    j["order_flip"] = t.order_flip;
    j["seed"] = seed;
    return content_id(j.dump());
}

inline ojson to_json(const TrialRecord& t) {
    ojson j;
    j["trial_id"] = t.trial_id;
    j["stimulus_id"] = t.stimulus_id;
    j["task_id"] = t.task_id;
    j["layer_index"] = t.layer_index;
    j["raw_coefficient"] = t.raw_coefficient;
    j["normalized_coefficient"] = t.normalized_coefficient;
    if (t.alignment_pressure) j["alignment_pressure"] = *t.alignment_pressure;
    j["raw_output"] = t.raw_output;
    if (t.expected_response) j["expected_response"] = *t.expected_response;
    if (t.logit_difference) j["logit_difference"] = *t.logit_difference;
    if (t.parsed_think) j["parsed_think"] = *t.parsed_think;
    if (t.parsed_answer) j["parsed_answer"] = *t.parsed_answer;
    j["parse_ok"] = t.parse_ok;
    if (t.reasoning_score_id) j["reasoning_score_id"] = *t.reasoning_score_id;
    j["order_flip"] = t.order_flip;
    j["failed"] = t.failed;
    j["low_confidence"] = t.low_confidence;
    return j;
}

inline TrialRecord trial_from_json(const ojson& j) {
    TrialRecord t;
    t.trial_id = j.at("trial_id").get<std::string>();
    t.stimulus_id = j.at("stimulus_id").get<std::string>();
    t.task_id = j.at("task_id").get<std::string>();
    t.layer_index = j.at("layer_index").get<int>();
    t.raw_coefficient = j.at("raw_coefficient").get<double>();
    t.normalized_coefficient = j.at("normalized_coefficient").get<double>();
    if (j.contains("alignment_pressure")) t.alignment_pressure = j["alignment_pressure"].get<double>();
    t.raw_output = j.at("raw_output").get<std::string>();
    if (j.contains("expected_response")) t.expected_response = j["expected_response"].get<double>();
    if (j.contains("logit_difference")) t.logit_difference = j["logit_difference"].get<double>();
    if (j.contains("parsed_think")) t.parsed_think = j["parsed_think"].get<std::string>();
    if (j.contains("parsed_answer")) t.parsed_answer = j["parsed_answer"].get<std::string>();
    t.parse_ok = j.at("parse_ok").get<bool>();
    if (j.contains("reasoning_score_id")) t.reasoning_score_id = j["reasoning_score_id"].get<std::string>();
    t.order_flip = j.value("order_flip", false);
    t.failed = j.value("failed", false);
    t.low_confidence = j.value("low_confidence", false);
    return t;
}

// Checks the cross-field rules that the type system can't carry.
inline void validate(const TrialRecord& t, const std::optional<bool>& truth_label) {
    if (t.alignment_pressure) {
        if (!truth_label)
            throw data_error("trial " + t.trial_id + ": alignment_pressure present without a truth label");
        double expect = *truth_label ? t.normalized_coefficient : -t.normalized_coefficient;
        if (*t.alignment_pressure != expect)
            throw data_error("trial " + t.trial_id + ": alignment_pressure != alpha * D_truth");
    }
    if (t.failed) return;     // failed trials carry no scored response
    if (!t.parse_ok) return;  // neither do structured trials that did not parse
    int populated = int(t.expected_response.has_value()) + int(t.logit_difference.has_value()) +
                    int(t.parsed_answer.has_value());
    if (populated != 1)
        throw data_error("trial " + t.trial_id + ": exactly one scored-response field must be populated");
}

// Synthetic backend knobs. The backend is fully deterministic in (seed, these).
struct SyntheticParams {
    int d = 16;
    int L = 6;
    std::uint64_t seed = 1;
    double embed_scale = 1.0;    // per-layer embedding noise scale
    int planted_layer = -1;      // -1 disables the planted axis
    double axis_strength = 0.0;  // valence signal injected along the planted axis
    std::vector<double> planted_axis;  // unit direction; empty draws a seeded one
    std::vector<double> readout;       // decision readout w; empty follows the planted axis
    double readout_gain = 1.0;
    double decision_bias = 0.0;
    int context_window = 4096;  // prompt budget in backend tokens (words)
    double candidate_mass = 1.0;  // full-vocab mass reported on scored candidates
    std::map<std::string, double> option_weights;  // answer word -> logit weight
    std::vector<std::pair<std::string, double>> statement_bias;  // substring -> valence bias
};

inline ojson to_json(const SyntheticParams& p) {
    ojson j;
    j["d"] = p.d;
    j["L"] = p.L;
    j["seed"] = p.seed;
    j["embed_scale"] = p.embed_scale;
    j["planted_layer"] = p.planted_layer;
    j["axis_strength"] = p.axis_strength;
    j["planted_axis"] = p.planted_axis;
    j["readout"] = p.readout;
    j["readout_gain"] = p.readout_gain;
    j["decision_bias"] = p.decision_bias;
    j["context_window"] = p.context_window;
    j["candidate_mass"] = p.candidate_mass;
    j["option_weights"] = p.option_weights;
    ojson bias = ojson::array();
    for (const auto& [needle, b] : p.statement_bias) bias.push_back({{"contains", needle}, {"bias", b}});
    j["statement_bias"] = std::move(bias);
    return j;
}

inline SyntheticParams synthetic_params_from_json(const ojson& j) {
    SyntheticParams p;
    p.d = j.value("d", p.d);
    p.L = j.value("L", p.L);
    p.seed = j.value("seed", p.seed);
    p.embed_scale = j.value("embed_scale", p.embed_scale);
    p.planted_layer = j.value("planted_layer", p.planted_layer);
    p.axis_strength = j.value("axis_strength", p.axis_strength);
    if (j.contains("planted_axis")) p.planted_axis = j["planted_axis"].get<std::vector<double>>();
    if (j.contains("readout")) p.readout = j["readout"].get<std::vector<double>>();
    p.readout_gain = j.value("readout_gain", p.readout_gain);
    p.decision_bias = j.value("decision_bias", p.decision_bias);
    p.context_window = j.value("context_window", p.context_window);
    p.candidate_mass = j.value("candidate_mass", p.candidate_mass);
    if (j.contains("option_weights"))
        p.option_weights = j["option_weights"].get<std::map<std::string, double>>();
    if (j.contains("statement_bias"))
        for (const auto& e : j["statement_bias"])
            p.statement_bias.emplace_back(e.at("contains").get<std::string>(), e.at("bias").get<double>());
    return p;
}

// One judge endpoint. Credentials come from the named environment variable,
// never from the config file itself.
struct JudgeEndpoint {
    std::string base_url;  // empty disables the judge stage for this judge
    std::string path = "/v1/chat/completions";
    std::string model_id;
    std::string api_key_env;
    double temperature = 0.5;
    int max_attempts = 3;  // hard ceiling on upstream calls per verdict
    int concurrency = 1;
    double requests_per_second = 0.0;  // 0 = unthrottled
};

inline ojson to_json(const JudgeEndpoint& e) {
    ojson j;
    j["base_url"] = e.base_url;
    j["path"] = e.path;
    j["model_id"] = e.model_id;
    j["api_key_env"] = e.api_key_env;
    j["temperature"] = e.temperature;
    j["max_attempts"] = e.max_attempts;
    j["concurrency"] = e.concurrency;
    j["requests_per_second"] = e.requests_per_second;
    return j;
}

inline JudgeEndpoint judge_endpoint_from_json(const ojson& j) {
    JudgeEndpoint e;
    e.base_url = j.value("base_url", e.base_url);
    e.path = j.value("path", e.path);
    e.model_id = j.value("model_id", e.model_id);
    e.api_key_env = j.value("api_key_env", e.api_key_env);
    e.temperature = j.value("temperature", e.temperature);
    e.max_attempts = j.value("max_attempts", e.max_attempts);
    e.concurrency = j.value("concurrency", e.concurrency);
    e.requests_per_second = j.value("requests_per_second", e.requests_per_second);
    return e;
}

struct RunConfig {
    std::string model_id = "synthetic";
    std::string backend = "synthetic";
    SyntheticParams synthetic;
    std::vector<std::string> tasks;  // task ids swept after calibration
    std::vector<std::string> calibration_tasks = {"value_binary", "value_continuous"};
    std::string layer_policy = "argmax_similarity";
    double scan_step_fraction = 0.5;  // in units of mean activation norm at the layer
    int scan_max_steps = 8;
    double monotonicity_tolerance = 1e-4;
    double decode_temperature = 0.2;  // 0 means greedy
    int max_new_tokens = 128;
    std::uint64_t seed = 0;
    JudgeEndpoint reasoning_judge{.base_url = "", .model_id = "deepseek-r1", .api_key_env = "VAA_REASONING_JUDGE_KEY"};
    JudgeEndpoint stance_judge{.base_url = "", .model_id = "qwen3-30b", .api_key_env = "VAA_STANCE_JUDGE_KEY"};
    std::string output_dir = "runs";
    std::string data_dir;  // bundled stimuli location; empty uses the build-time default
    std::string run_id;    // empty derives one from the config hash
    double screen_alphabetical_min = 0.80;
    double screen_factual_min = 0.60;
    bool enforce_screening = true;
    int stimulus_limit = 0;        // 0 = use every stimulus
    int sweep_record_cap = 0;      // 0 = unlimited; caps new records per sweep invocation
};

inline void validate(const RunConfig& c) {
    if (c.decode_temperature < 0) throw config_error("decode temperature must be >= 0");
    if (c.scan_step_fraction <= 0) throw config_error("scan step fraction must be > 0");
    if (c.scan_max_steps < 1) throw config_error("scan max steps must be >= 1");
    if (c.monotonicity_tolerance < 0) throw config_error("monotonicity tolerance must be >= 0");
}

inline ojson to_json(const RunConfig& c) {
    ojson j;
    j["model_id"] = c.model_id;
    j["backend"] = c.backend;
    j["synthetic"] = to_json(c.synthetic);
    j["tasks"] = c.tasks;
    j["calibration_tasks"] = c.calibration_tasks;
    j["layer_policy"] = c.layer_policy;
    j["scan"] = {{"step_fraction", c.scan_step_fraction},
                 {"max_steps", c.scan_max_steps},
                 {"tolerance", c.monotonicity_tolerance}};
    j["decode"] = {{"temperature", c.decode_temperature}, {"max_new_tokens", c.max_new_tokens}};
    j["seed"] = c.seed;
    j["judges"] = {{"reasoning", to_json(c.reasoning_judge)}, {"stance", to_json(c.stance_judge)}};
    j["output_dir"] = c.output_dir;
    j["data_dir"] = c.data_dir;
    j["run_id"] = c.run_id;
    j["screening"] = {{"alphabetical_min", c.screen_alphabetical_min},
                      {"factual_min", c.screen_factual_min},
                      {"enforce", c.enforce_screening}};
    j["stimulus_limit"] = c.stimulus_limit;
    j["sweep_record_cap"] = c.sweep_record_cap;
    return j;
}

inline RunConfig run_config_from_json(const ojson& j) {
    RunConfig c;
    c.model_id = j.value("model_id", c.model_id);
    c.backend = j.value("backend", c.backend);
    if (j.contains("synthetic")) c.synthetic = synthetic_params_from_json(j["synthetic"]);
    if (j.contains("tasks")) c.tasks = j["tasks"].get<std::vector<std::string>>();
    if (j.contains("calibration_tasks"))
        c.calibration_tasks = j["calibration_tasks"].get<std::vector<std::string>>();
    c.layer_policy = j.value("layer_policy", c.layer_policy);
    if (j.contains("scan")) {
        const auto& s = j["scan"];
        c.scan_step_fraction = s.value("step_fraction", c.scan_step_fraction);
        c.scan_max_steps = s.value("max_steps", c.scan_max_steps);
        c.monotonicity_tolerance = s.value("tolerance", c.monotonicity_tolerance);
    }
    if (j.contains("decode")) {
        const auto& d = j["decode"];
        c.decode_temperature = d.value("temperature", c.decode_temperature);
        c.max_new_tokens = d.value("max_new_tokens", c.max_new_tokens);
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("judges")) {
        const auto& g = j["judges"];
        if (g.contains("reasoning")) c.reasoning_judge = judge_endpoint_from_json(g["reasoning"]);
        if (g.contains("stance")) c.stance_judge = judge_endpoint_from_json(g["stance"]);
    }
    c.output_dir = j.value("output_dir", c.output_dir);
    c.data_dir = j.value("data_dir", c.data_dir);
    c.run_id = j.value("run_id", c.run_id);
    if (j.contains("screening")) {
        const auto& s = j["screening"];
        c.screen_alphabetical_min = s.value("alphabetical_min", c.screen_alphabetical_min);
        c.screen_factual_min = s.value("factual_min", c.screen_factual_min);
        c.enforce_screening = s.value("enforce", c.enforce_screening);
    }
    c.stimulus_limit = j.value("stimulus_limit", c.stimulus_limit);
    c.sweep_record_cap = j.value("sweep_record_cap", c.sweep_record_cap);
    validate(c);
    return c;
}

}  // namespace vaa
