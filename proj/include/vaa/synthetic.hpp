#pragma once
// Deterministic synthetic language model used as the analytic oracle for the
// axis and steering machinery. Everything derives from hashes of the prompt
// text, so captures are bit-reproducible and no weights are needed.
//
// Forward model, in residual-stream terms:
//   block l adds   embed_scale * e(prompt)                       (every layer)
//                + axis_strength * valence(prompt) * u           (l == planted_layer)
//   hook at l_h adds a * V right after block l_h, persisting downstream.
// So with no planted axis and no hook, h^l = (l+1) * embed_scale * e(prompt).
//
// valence(prompt) sums a hash lexicon over the prompt's words plus any
// configured substring biases. Shared statement words give the binary and
// continuous renderings of one stimulus the same valence up to a constant
// per-template offset, which mean-centering removes; that is what makes the
// planted axis recoverable from both formats at the planted layer.
//
// The decision score is s = readout_gain * <h^{L-1}, w> + decision_bias; an
// option's first-token logit is weight(option) * s, with weights taken from
// the config map or, failing that, from the word lexicon. A hook therefore
// shifts an option logit by exactly weight * readout_gain * a * <V, w>.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "vaa/backend.hpp"
#include "vaa/common.hpp"
#include "vaa/core.hpp"

namespace vaa {

class SyntheticBackend : public Backend {
  public:
    explicit SyntheticBackend(const SyntheticParams& params, std::string model_id = "synthetic")
        : p_(params), model_id_(std::move(model_id)) {
        if (p_.d < 1 || p_.L < 1) throw config_error("synthetic backend needs d >= 1 and L >= 1");
        if (p_.planted_layer >= p_.L) throw config_error("planted layer out of range");
        if (!p_.planted_axis.empty() && static_cast<int>(p_.planted_axis.size()) != p_.d)
            throw config_error("planted axis length != d");
        if (!p_.readout.empty() && static_cast<int>(p_.readout.size()) != p_.d)
            throw config_error("readout length != d");
        axis_ = p_.planted_axis.empty() ? seeded_unit("planted-axis") : unit(p_.planted_axis);
        if (!p_.readout.empty()) {
            readout_ = p_.readout;  // used as given; an all-zero readout is a legal degenerate model
        } else if (p_.planted_layer >= 0) {
            readout_ = axis_;
        } else {
            readout_ = seeded_unit("readout");
        }
    }

    BackendInfo info() const override {
        return {model_id_, p_.L, p_.d, true};
    }

    void install_hook(const SteeringHook& hook) override {
        validate(hook, info());
        hook_ = hook;
    }
    void clear_hook() override { hook_.reset(); }
    std::optional<SteeringHook> current_hook() const override { return hook_; }

    ActivationRecord capture_last_token_states(const std::string& prompt, const std::vector<int>& layers,
                                               const std::vector<OptionToken>& options = {}) override {
        if (prompt.empty()) throw config_error("capture of empty prompt");
        check_context(prompt);
        ActivationRecord rec;
        for (int l : layers) {
            if (l < 0 || l >= p_.L) throw config_error("capture layer out of range: " + std::to_string(l));
            rec.layer_states[l] = layer_state(prompt, l);
        }
        if (!options.empty()) {
            double s = decision_score(prompt);
            for (const auto& o : options) rec.option_logits[o.text] = option_weight(o.text) * s;
            const OptionToken* pos = nullptr;
            const OptionToken* neg = nullptr;
            for (const auto& o : options) {
                if (o.polarity > 0 && !pos) pos = &o;
                if (o.polarity < 0 && !neg) neg = &o;
            }
            if (pos && neg) rec.decision_value = rec.option_logits[pos->text] - rec.option_logits[neg->text];
        }
        return rec;
    }

    OptionScores score_option_tokens(const std::string& prompt, const std::vector<std::string>& options) override {
        if (options.empty()) throw config_error("no options to score");
        check_context(prompt);
        for (std::size_t i = 0; i < options.size(); ++i)
            for (std::size_t k = i + 1; k < options.size(); ++k)
                if (first_token(options[i]) == first_token(options[k]))
                    throw config_error("option first-token collision: '" + options[i] + "' vs '" + options[k] + "'");
        double s = decision_score(prompt);
        OptionScores out;
        for (const auto& o : options) out.logits[o] = option_weight(o) * s;
        out.probs = restricted_softmax(out.logits);
        out.candidate_mass = p_.candidate_mass;
        return out;
    }

    GenerationResult generate(const std::string& prompt, const DecodeParams& params) override {
        check_context(prompt);
        double s = decision_score(prompt);
        if (params.temperature > 0.0) {
            // Seeded by the prompt and decode seed only, never by the hook, so
            // a zero-coefficient hook reproduces the baseline sample exactly.
            auto g = rng("decode", prompt + "#" + std::to_string(params.seed));
            std::normal_distribution<double> n(0.0, 1.0);
            s += n(g) * params.temperature;
        }
        GenerationResult res;
        res.text = compose_output(prompt, s);
        auto words = split_words(res.text);
        if (static_cast<int>(words.size()) > params.max_new_tokens) {
            std::string cut;
            for (int i = 0; i < params.max_new_tokens; ++i) {
                if (i) cut += ' ';
                cut += words[static_cast<std::size_t>(i)];
            }
            res.text = cut;
            res.truncated = true;
        }
        return res;
    }

    std::string first_token(const std::string& text) const override {
        auto words = split_words(text);
        return words.empty() ? std::string() : words.front();
    }

    // Exposed for tests and calibration: the latent per-prompt support level
    // and the resulting decision score (hook included).
    double valence_of(const std::string& prompt) const {
        double v = 0.0;
        for (const auto& w : split_words(prompt)) v += lexicon(w);
        for (const auto& [needle, bias] : p_.statement_bias)
            if (prompt.find(needle) != std::string::npos) v += bias;
        return v;
    }

    double decision_score(const std::string& prompt) const {
        auto h = layer_state(prompt, p_.L - 1);
        double s = p_.decision_bias;
        for (int i = 0; i < p_.d; ++i) s += p_.readout_gain * h[static_cast<std::size_t>(i)] * readout_[static_cast<std::size_t>(i)];
        return s;
    }

    const std::vector<double>& planted_axis() const { return axis_; }
    const std::vector<double>& readout_vector() const { return readout_; }

  private:
    std::vector<double> layer_state(const std::string& prompt, int layer) const {
        std::vector<double> e = embed(prompt);
        std::vector<double> h(static_cast<std::size_t>(p_.d), 0.0);
        double g = (layer + 1) * p_.embed_scale;
        for (int i = 0; i < p_.d; ++i) h[static_cast<std::size_t>(i)] = g * e[static_cast<std::size_t>(i)];
        if (p_.planted_layer >= 0 && layer >= p_.planted_layer) {
            double v = p_.axis_strength * valence_of(prompt);
            for (int i = 0; i < p_.d; ++i) h[static_cast<std::size_t>(i)] += v * axis_[static_cast<std::size_t>(i)];
        }
        if (hook_ && layer >= hook_->layer_index) {
            for (int i = 0; i < p_.d; ++i)
                h[static_cast<std::size_t>(i)] += hook_->coefficient * hook_->direction[static_cast<std::size_t>(i)];
        }
        return h;
    }

    std::vector<double> embed(const std::string& prompt) const {
        auto g = rng("embed", wrap_chat(prompt));
        std::normal_distribution<double> n(0.0, 1.0);
        std::vector<double> e(static_cast<std::size_t>(p_.d));
        for (auto& x : e) x = n(g);
        return e;
    }

    double lexicon(const std::string& word) const {
        auto g = rng("lexicon", word);
        std::normal_distribution<double> n(0.0, 1.0);
        return n(g);
    }

    double option_weight(const std::string& option) const {
        auto it = p_.option_weights.find(option);
        if (it != p_.option_weights.end()) return it->second;
        // Unconfigured answer words get a stable pseudo-random weight in (-1, 1).
        return std::tanh(lexicon("option::" + option));
    }

    std::string compose_output(const std::string& prompt, double s) const {
        // The prompt's own format instruction ("answer": "X/Y") tells us which
        // vocabulary the caller expects; a slash-free hint means a free-text
        // conclusion is wanted.
        std::string pos_word, neg_word;
        bool answer_first = false;
        bool structured = false;
        auto apos = prompt.find("\"answer\":");
        auto tpos = prompt.find("\"think\":");
        if (apos != std::string::npos && tpos != std::string::npos) {
            structured = true;
            answer_first = apos < tpos;
            auto q0 = prompt.find('"', apos + 9);
            if (q0 != std::string::npos) {
                auto q1 = prompt.find('"', q0 + 1);
                if (q1 != std::string::npos) {
                    std::string hint = prompt.substr(q0 + 1, q1 - q0 - 1);
                    auto slash = hint.find('/');
                    if (slash != std::string::npos) {
                        pos_word = hint.substr(0, slash);
                        neg_word = hint.substr(slash + 1);
                    }
                }
            }
        }
        bool support = s > 0.0;
        std::string answer;
        if (!pos_word.empty() && !neg_word.empty()) {
            answer = support ? pos_word : neg_word;
        } else {
            answer = support ? "I support this statement." : "I oppose this statement.";
        }
        char think[160];
        std::snprintf(think, sizeof think,
                      "Weighing the statement, the internal support score is %.3f, which %s the claim.", s,
                      support ? "favors" : "speaks against");
        if (!structured) return answer;
        ojson obj;
        if (answer_first) {
            obj["answer"] = answer;
            obj["think"] = think;
        } else {
            obj["think"] = think;
            obj["answer"] = answer;
        }
        return obj.dump();
    }

    void check_context(const std::string& prompt) const {
        if (static_cast<int>(split_words(wrap_chat(prompt)).size()) > p_.context_window)
            throw context_overflow_error("prompt exceeds the synthetic context window");
    }

    std::string wrap_chat(const std::string& prompt) const {
        return "<|user|>\n" + prompt + "\n<|assistant|>\n";
    }

    std::mt19937_64 rng(std::string_view tag, std::string_view payload) const {
        std::uint64_t h = fnv1a64(payload) ^ (fnv1a64(tag) * 0x9e3779b97f4a7c15ull) ^ p_.seed;
        return std::mt19937_64(h);
    }

    static std::vector<double> unit(std::vector<double> v) {
        double n2 = 0.0;
        for (double x : v) n2 += x * x;
        double n = std::sqrt(n2);
        if (n == 0.0) throw config_error("cannot normalize a zero vector");
        for (double& x : v) x /= n;
        return v;
    }

    std::vector<double> seeded_unit(std::string_view tag) const {
        auto g = rng(tag, model_id_);
        std::normal_distribution<double> n(0.0, 1.0);
        std::vector<double> v(static_cast<std::size_t>(p_.d));
        for (auto& x : v) x = n(g);
        return unit(std::move(v));
    }

    SyntheticParams p_;
    std::string model_id_;
    std::vector<double> axis_;
    std::vector<double> readout_;
    std::optional<SteeringHook> hook_;
};

// Option-weight presets matching the bundled task vocabularies: support-like
// words positive, oppose-like negative, digits spaced linearly so the expected
// rating moves monotonically with the decision score.
inline std::map<std::string, double> standard_option_weights() {
    std::map<std::string, double> w = {
        {"A", +0.5}, {"B", -0.5}, {"M", +0.5}, {"N", -0.5},
        {"right", +0.5}, {"wrong", -0.5}, {"Yes", +0.5}, {"No", -0.5},
        {"Positive", +0.5}, {"Negative", -0.5},
    };
    for (int k = 0; k <= 9; ++k) w[std::to_string(k)] = (k - 4.5) / 9.0;
    return w;
}

// Adds +/- weights for valenced word pairs (positive member first).
inline void add_pair_weights(std::map<std::string, double>& weights,
                             const std::vector<std::pair<std::string, std::string>>& pairs,
                             double magnitude = 0.5) {
    for (const auto& [pos, neg] : pairs) {
        weights[pos] = magnitude;
        weights[neg] = -magnitude;
    }
}

}  // namespace vaa
