#pragma once
// Abstract contract for a causal language model as this toolkit needs it:
// per-layer last-token state capture, candidate-answer scoring, and text
// generation with an additive steering hook installed at one layer.
//
// Hook semantics: the hook adds a*V to the layer's hidden state at every
// token position on every forward pass, prompt encoding and each decode step
// alike. Downstream layers see the shifted stream. V is stored unit-length;
// the coefficient carries all magnitude, which keeps effective ranges
// comparable across layers.

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vaa/common.hpp"
#include "vaa/core.hpp"

namespace vaa {

struct BackendInfo {
    std::string model_id;
    int num_layers = 0;  // L
    int hidden_dim = 0;  // d
    bool chat_template_available = false;
};

struct SteeringHook {
    int layer_index = 0;
    std::vector<double> direction;  // V, unit norm within 1e-6
    double coefficient = 0.0;       // a
};

inline void validate(const SteeringHook& h, const BackendInfo& info) {
    if (h.layer_index < 0 || h.layer_index >= info.num_layers)
        throw config_error("hook layer out of range: " + std::to_string(h.layer_index));
    if (static_cast<int>(h.direction.size()) != info.hidden_dim)
        throw config_error("hook direction length != hidden dim");
    double n2 = 0.0;
    for (double v : h.direction) n2 += v * v;
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-6)
        throw config_error("hook direction must be unit length");
}

// Per-stimulus capture: one d-vector per requested layer at the last prompt
// token, after the layer's block, plus the option logits and the signed
// decision value when the capture was made in a task context.
struct ActivationRecord {
    std::string id;
    std::string stimulus_id;
    std::string task_id;
    std::map<int, std::vector<double>> layer_states;
    std::map<std::string, double> option_logits;
    double decision_value = 0.0;
};

inline ojson to_json(const ActivationRecord& r) {
    ojson j;
    j["id"] = r.id;
    j["stimulus_id"] = r.stimulus_id;
    j["task_id"] = r.task_id;
    ojson layers = ojson::object();
    for (const auto& [l, v] : r.layer_states) layers[std::to_string(l)] = v;
    j["layer_states"] = std::move(layers);
    j["option_logits"] = r.option_logits;
    j["decision_value"] = r.decision_value;
    return j;
}

inline ActivationRecord activation_from_json(const ojson& j) {
    ActivationRecord r;
    r.id = j.at("id").get<std::string>();
    r.stimulus_id = j.at("stimulus_id").get<std::string>();
    r.task_id = j.at("task_id").get<std::string>();
    for (const auto& [k, v] : j.at("layer_states").items())
        r.layer_states[std::stoi(k)] = v.get<std::vector<double>>();
    r.option_logits = j.at("option_logits").get<std::map<std::string, double>>();
    r.decision_value = j.at("decision_value").get<double>();
    return r;
}

struct DecodeParams {
    double temperature = 0.2;  // 0 = greedy
    int max_new_tokens = 128;
    std::uint64_t seed = 0;
};

struct GenerationResult {
    std::string text;
    bool truncated = false;  // hit max_new_tokens; not an error
};

struct OptionScores {
    std::map<std::string, double> probs;   // softmax over the options' first-token logits
    std::map<std::string, double> logits;  // the raw first-token logits
    double candidate_mass = 1.0;  // full-vocab probability mass on the candidates
};

// Softmax restricted to the given logits; numerically stable, sums to 1.
inline std::map<std::string, double> restricted_softmax(const std::map<std::string, double>& logits) {
    if (logits.empty()) throw config_error("softmax over empty option set");
    double mx = logits.begin()->second;
    for (const auto& [_, v] : logits) mx = std::max(mx, v);
    double z = 0.0;
    std::map<std::string, double> p;
    for (const auto& [k, v] : logits) {
        double e = std::exp(v - mx);
        p[k] = e;
        z += e;
    }
    for (auto& [_, v] : p) v /= z;
    return p;
}

class Backend {
  public:
    virtual ~Backend() = default;

    virtual BackendInfo info() const = 0;

    // Single hook slot. Instances are single-threaded for mutation; capture,
    // scoring and generation all respect the installed hook.
    virtual void install_hook(const SteeringHook& hook) = 0;
    virtual void clear_hook() = 0;
    virtual std::optional<SteeringHook> current_hook() const = 0;

    // options may be empty when no task context applies (no logits recorded).
    virtual ActivationRecord capture_last_token_states(const std::string& prompt,
                                                       const std::vector<int>& layers,
                                                       const std::vector<OptionToken>& options = {}) = 0;

    virtual OptionScores score_option_tokens(const std::string& prompt,
                                             const std::vector<std::string>& options) = 0;

    virtual GenerationResult generate(const std::string& prompt, const DecodeParams& params) = 0;

    // First token of a string under this backend's tokenizer; used to detect
    // option collisions before scoring.
    virtual std::string first_token(const std::string& text) const = 0;
};

// RAII hook installation so error paths cannot leave a hook behind.
class ScopedHook {
  public:
    ScopedHook(Backend& b, const std::optional<SteeringHook>& hook) : backend_(b), installed_(hook.has_value()) {
        if (hook) backend_.install_hook(*hook);
    }
    ~ScopedHook() {
        if (installed_) backend_.clear_hook();
    }
    ScopedHook(const ScopedHook&) = delete;
    ScopedHook& operator=(const ScopedHook&) = delete;

  private:
    Backend& backend_;
    bool installed_;
};

inline GenerationResult generate_with_intervention(Backend& backend, const std::string& prompt,
                                                   const std::optional<SteeringHook>& hook,
                                                   const DecodeParams& params) {
    ScopedHook guard(backend, hook);
    return backend.generate(prompt, params);
}

}  // namespace vaa
