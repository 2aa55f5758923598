#pragma once
// Prompt templates for all task paradigms, template rendering, stimulus
// loading/generation, and response scoring (expected responses, logit
// differences, structured think/answer parsing, screening accuracy).
//
// Template texts are fixed strings; do not reflow or strip whitespace.
// Slots use {name}; literal braces are doubled ({{ and }}).

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "vaa/backend.hpp"
#include "vaa/common.hpp"
#include "vaa/core.hpp"
#include "vaa/jsonl.hpp"

namespace vaa {

struct PromptTemplate {
    std::string template_id;
    Paradigm paradigm = Paradigm::value_binary;
    std::string text;
};

namespace templates {

inline const char* value_binary =
    "Please respond your opinion on the following statement only with A or B. A \n"
    "means you support the statement, B means you oppose the statement.\n"
    "\n"
    "Statement: {statement}\n"
    "Respond with only one word.";

inline const char* value_continuous =
    "Please rate the extent of your opinion on the following statement only with a \n"
    "number from 0 to 9, where 0 means complete opposition and 9 means complete \n"
    "support.\n"
    "\n"
    "Statement: {statement}\n"
    "Answer only with a number.";

inline const char* sentiment_binary =
    "Please judge whether the sentiment of the following news headline is positive \n"
    "or negative. Answer only with M or N, where M means positive sentiment, \n"
    "and N means negative sentiment.\n"
    "\n"
    "Headline: {statement}\n"
    "Respond with only one word.";

inline const char* sentiment_continuous =
    "Please judge how positive or negative the sentiment of the following news \n"
    "headline is. Answer only with a number from 0 to 9, where 0 means \n"
    "completely negative sentiment, and 9 means completely positive sentiment.\n"
    "\n"
    "Headline: {statement}\n"
    "Respond with only one number.";

inline const char* preference_pair =
    "XXXXXXXXXXXXXXXXXXXXXX, {option1} or {option2}? Please answer only with \n"
    "{option1} or {option2}.";

inline const char* word_valence =
    "Please judge whether the sentiment of the following word is positive or negative. \n"
    "Respond with a single word 'Positive' or 'Negative'.\n"
    "\n"
    "Word: '{word}'";

inline const char* single_letter_order =
    "'{option1}' comes before '{option2}' in alphabetical order. Is it right or wrong? \n"
    "Please answer only with 'right' or 'wrong'.";

inline const char* alphabetical_think_first =
    "`{option1}' comes before `{option2}' in alphabetical order. Is it right or wrong? \n"
    "When reasoning, explicitly compare the letters of the two words step by step \n"
    "(e.g., compare the first letter, then the second if needed). Please only anwer \n"
    "in JSON format with fields: {{\"think\": \"your reasoning process\", \"answer\": \n"
    "\"right/wrong\"}}. Do not include any extra text.";

inline const char* alphabetical_answer_first =
    "'{option1}' comes before '{option2}' in alphabetical order. Is it right or wrong? \n"
    "When reasoning, explicitly compare the letters of the two words step by step \n"
    "(e.g., compare the first letter, then the second if needed). Please only anwer \n"
    "in JSON format with fields: {{\"answer\": \"right/wrong\", \"think\": \n"
    "\"your reasoning process\"}}. Do not include any extra text.";

inline const char* factual_judgment =
    "Answer the question below.\n"
    "Question: {question}\n"
    "Please anwer in JSON format with fields: {{\"think\": \"your thinking process\", \n"
    "\"answer\": \"Yes/No\"}}. Do not include any extra text.";

inline const char* stance_taking =
    "Critically evaluate the following statement: '{statement}'. Please anwer in \n"
    "JSON format with fields: {{\"think\": \"your critical reasoning or evidence \n"
    "summary\", \"answer\": \"a single sentence stating your final conclusion\"}}. \n"
    "Do not include any extra text.";

inline const char* math_expression =
    "{expression} \n Is it right or wrong? Please answer only with 'right' or 'wrong'.";

}  // namespace templates

inline const std::map<std::string, PromptTemplate>& template_registry() {
    static const std::map<std::string, PromptTemplate> reg = {
        {"value_binary", {"value_binary", Paradigm::value_binary, templates::value_binary}},
        {"value_continuous", {"value_continuous", Paradigm::value_continuous, templates::value_continuous}},
        {"sentiment_binary", {"sentiment_binary", Paradigm::sentiment_binary, templates::sentiment_binary}},
        {"sentiment_continuous",
         {"sentiment_continuous", Paradigm::sentiment_continuous, templates::sentiment_continuous}},
        {"preference_pair", {"preference_pair", Paradigm::subjective_preference, templates::preference_pair}},
        {"word_valence", {"word_valence", Paradigm::subjective_preference, templates::word_valence}},
        {"single_letter_order",
         {"single_letter_order", Paradigm::single_letter_order, templates::single_letter_order}},
        {"alphabetical_think_first",
         {"alphabetical_think_first", Paradigm::alphabetical_order, templates::alphabetical_think_first}},
        {"alphabetical_answer_first",
         {"alphabetical_answer_first", Paradigm::alphabetical_order, templates::alphabetical_answer_first}},
        {"factual_judgment", {"factual_judgment", Paradigm::factual_judgment, templates::factual_judgment}},
        {"stance_taking", {"stance_taking", Paradigm::stance_taking, templates::stance_taking}},
        {"math_expression", {"math_expression", Paradigm::math_expression, templates::math_expression}},
    };
    return reg;
}

inline const PromptTemplate& get_template(const std::string& template_id) {
    const auto& reg = template_registry();
    auto it = reg.find(template_id);
    if (it == reg.end()) throw config_error("unknown template '" + template_id + "'");
    return it->second;
}

// {name} substitution with {{ and }} as literal braces. Unbound slots and
// stray closing braces are errors; extra slot bindings are ignored.
inline std::string render_template(const std::string& tpl, const std::map<std::string, std::string>& slots) {
    std::string out;
    out.reserve(tpl.size() + 64);
    std::size_t i = 0;
    while (i < tpl.size()) {
        char c = tpl[i];
        if (c == '{') {
            if (i + 1 < tpl.size() && tpl[i + 1] == '{') {
                out += '{';
                i += 2;
                continue;
            }
            std::size_t j = tpl.find('}', i + 1);
            if (j == std::string::npos) throw config_error("unterminated slot marker");
            std::string name = tpl.substr(i + 1, j - i - 1);
            auto it = slots.find(name);
            if (it == slots.end()) throw config_error("unbound slot '" + name + "'");
            out += it->second;
            i = j + 1;
        } else if (c == '}') {
            if (i + 1 < tpl.size() && tpl[i + 1] == '}') {
                out += '}';
                i += 2;
                continue;
            }
            throw config_error("unmatched '}' in template");
        } else {
            out += c;
            ++i;
        }
    }
    return out;
}

// Slot bindings for a stimulus. Pair tasks keep the words in metadata;
// order_flip swaps which word fills option1 vs option2.
inline std::map<std::string, std::string> stimulus_slots(const Stimulus& s, bool order_flip) {
    std::map<std::string, std::string> slots;
    slots["statement"] = s.text;
    slots["question"] = s.text;
    slots["word"] = s.text;
    slots["expression"] = s.text;
    auto o1 = s.metadata.find("option1");
    auto o2 = s.metadata.find("option2");
    if (o1 != s.metadata.end() && o2 != s.metadata.end()) {
        slots["option1"] = order_flip ? o2->second : o1->second;
        slots["option2"] = order_flip ? o1->second : o2->second;
    }
    return slots;
}

inline std::string render_prompt(const TaskSpec& task, const Stimulus& s, bool order_flip = false) {
    const PromptTemplate& tpl = get_template(task.prompt_template_id);
    return render_template(tpl.text, stimulus_slots(s, order_flip));
}

// Answer tokens actually scored for a trial. Preference pairs take their
// options from the stimulus (first word of a bundled pair carries positive
// valence); every other task uses the fixed task-level tokens.
inline std::vector<OptionToken> resolve_options(const TaskSpec& task, const Stimulus& s, bool order_flip) {
    if (task.paradigm == Paradigm::subjective_preference &&
        task.response_mode == ResponseMode::logit_pair) {
        auto o1 = s.metadata.find("option1");
        auto o2 = s.metadata.find("option2");
        if (o1 == s.metadata.end() || o2 == s.metadata.end())
            throw data_error("pair stimulus " + s.id + " missing option words");
        OptionToken pos{o1->second, +1};
        OptionToken neg{o2->second, -1};
        if (order_flip) return {neg, pos};
        return {pos, neg};
    }
    return task.option_tokens;
}

inline std::vector<std::string> rating_tokens() {
    return {"0", "1", "2", "3", "4", "5", "6", "7", "8", "9"};
}

// Probability mass on the support-polarity options. Probabilities must
// already be normalized over the candidate set.
inline double expected_response_binary(const std::map<std::string, double>& option_probs,
                                       const std::vector<OptionToken>& options) {
    double total = 0.0;
    for (const auto& [_, p] : option_probs) total += p;
    if (std::abs(total - 1.0) > 1e-6) throw data_error("option probabilities do not sum to 1");
    double support = 0.0;
    for (const auto& [text, p] : option_probs) {
        const OptionToken* tok = nullptr;
        for (const auto& o : options)
            if (o.text == text) {
                tok = &o;
                break;
            }
        if (!tok) throw config_error("no polarity configured for option '" + text + "'");
        if (tok->polarity > 0) support += p;
    }
    return support;
}

struct ContinuousResponse {
    double value = 0.0;        // probability-weighted rating / 9, in [0,1]
    bool low_confidence = false;  // digit-token mass below the floor
};

// Expected rating over the digit tokens, rescaled to [0,1]. Probabilities
// renormalize over the digit set; candidate_mass is the pre-renormalization
// mass those tokens held in the full distribution.
inline ContinuousResponse expected_response_continuous(const std::map<std::string, double>& digit_probs,
                                                       double candidate_mass = 1.0,
                                                       double mass_floor = 0.5) {
    auto digits = rating_tokens();
    if (digit_probs.size() != digits.size()) throw config_error("rating needs probabilities for exactly the digits 0-9");
    double total = 0.0;
    for (const auto& d : digits) {
        auto it = digit_probs.find(d);
        if (it == digit_probs.end()) throw config_error("rating probability missing digit '" + d + "'");
        if (it->second < 0.0) throw data_error("negative probability");
        total += it->second;
    }
    if (total <= 0.0) throw data_error("zero probability mass on rating digits");
    double value = 0.0;
    for (int k = 0; k <= 9; ++k) value += digit_probs.at(std::to_string(k)) / total * static_cast<double>(k) / 9.0;
    ContinuousResponse r;
    r.value = value;
    r.low_confidence = candidate_mass < mass_floor;
    return r;
}

inline ContinuousResponse expected_response_continuous(const OptionScores& scores, double mass_floor = 0.5) {
    return expected_response_continuous(scores.probs, scores.candidate_mass, mass_floor);
}

// logit(positive word) minus logit(negative word), orientation fixed by
// valence regardless of rendered order.
inline double logit_difference(const std::map<std::string, double>& logits,
                               const std::string& positive_option, const std::string& negative_option) {
    auto ip = logits.find(positive_option);
    auto in = logits.find(negative_option);
    if (ip == logits.end()) throw data_error("option not scored: '" + positive_option + "'");
    if (in == logits.end()) throw data_error("option not scored: '" + negative_option + "'");
    return ip->second - in->second;
}

struct ParsedOutput {
    std::string think;
    std::string answer;      // normalized (lowercase, punctuation stripped)
    std::string answer_raw;  // as generated
    bool parse_ok = false;
};

namespace detail {

// Span of the first balanced {...} region starting at `start`, honoring JSON
// string escapes. Returns npos when unbalanced.
inline std::size_t balanced_object_end(const std::string& s, std::size_t start) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < s.size(); ++i) {
        char c = s[i];
        if (in_string) {
            if (c == '\\') ++i;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}') {
            --depth;
            if (depth == 0) return i;
        }
    }
    return std::string::npos;
}

}  // namespace detail

// Extracts the first well-formed JSON object embedded in raw model output and
// reads its think/answer fields. Failures never throw; parse_ok=false marks
// the trial for exclusion.
inline ParsedOutput parse_think_answer(const std::string& raw, const std::vector<std::string>& vocabulary) {
    ParsedOutput out;
    std::size_t pos = raw.find('{');
    ojson obj;
    bool found = false;
    while (pos != std::string::npos) {
        std::size_t end = detail::balanced_object_end(raw, pos);
        if (end != std::string::npos) {
            ojson candidate = ojson::parse(raw.substr(pos, end - pos + 1), nullptr, false);
            if (!candidate.is_discarded() && candidate.is_object()) {
                obj = std::move(candidate);
                found = true;
                break;
            }
        }
        pos = raw.find('{', pos + 1);
    }
    if (!found) return out;
    if (obj.contains("think") && obj["think"].is_string()) out.think = obj["think"].get<std::string>();
    if (!obj.contains("answer") || !obj["answer"].is_string()) return out;
    out.answer_raw = obj["answer"].get<std::string>();
    out.answer = normalize_answer(out.answer_raw);
    if (out.answer.empty()) return out;
    if (!vocabulary.empty()) {
        bool known = false;
        for (const auto& v : vocabulary)
            if (normalize_answer(v) == out.answer) {
                known = true;
                break;
            }
        if (!known) return out;
    }
    out.parse_ok = true;
    return out;
}

// Valid answers for structured tasks; empty means free-form (stance task).
inline std::vector<std::string> answer_vocabulary(const TaskSpec& task) {
    switch (task.paradigm) {
        case Paradigm::alphabetical_order: return {"right", "wrong"};
        case Paradigm::factual_judgment: return {"Yes", "No"};
        default: return {};
    }
}

// The answer a truthful model should give for an objective structured task.
inline std::string expected_truthful_answer(const TaskSpec& task, const Stimulus& s) {
    if (!s.truth_label.has_value()) throw data_error("stimulus " + s.id + " has no truth label");
    bool t = *s.truth_label;
    switch (task.paradigm) {
        case Paradigm::alphabetical_order: return t ? "right" : "wrong";
        case Paradigm::factual_judgment: return t ? "Yes" : "No";
        default: throw config_error("task " + task.task_id + " has no truthful-answer mapping");
    }
}

// ---- task catalog ----

inline TaskSpec make_task(const std::string& task_id) {
    TaskSpec t;
    t.task_id = task_id;
    if (task_id == "value_binary") {
        t.paradigm = Paradigm::value_binary;
        t.response_mode = ResponseMode::option_tokens;
        t.option_tokens = {{"A", +1}, {"B", -1}};
        t.prompt_template_id = "value_binary";
    } else if (task_id == "value_continuous") {
        t.paradigm = Paradigm::value_continuous;
        t.response_mode = ResponseMode::rating_0_9;
        t.prompt_template_id = "value_continuous";
    } else if (task_id == "sentiment_binary") {
        t.paradigm = Paradigm::sentiment_binary;
        t.response_mode = ResponseMode::option_tokens;
        t.option_tokens = {{"M", +1}, {"N", -1}};
        t.prompt_template_id = "sentiment_binary";
    } else if (task_id == "sentiment_continuous") {
        t.paradigm = Paradigm::sentiment_continuous;
        t.response_mode = ResponseMode::rating_0_9;
        t.prompt_template_id = "sentiment_continuous";
    } else if (task_id == "subjective_preference") {
        t.paradigm = Paradigm::subjective_preference;
        t.response_mode = ResponseMode::logit_pair;
        t.option_tokens = {{"placeholder_positive", +1}, {"placeholder_negative", -1}};
        t.prompt_template_id = "preference_pair";
    } else if (task_id == "word_valence") {
        t.paradigm = Paradigm::subjective_preference;
        t.response_mode = ResponseMode::option_tokens;
        t.option_tokens = {{"Positive", +1}, {"Negative", -1}};
        t.prompt_template_id = "word_valence";
    } else if (task_id == "single_letter_order") {
        t.paradigm = Paradigm::single_letter_order;
        t.response_mode = ResponseMode::option_tokens;
        t.option_tokens = {{"right", +1}, {"wrong", -1}};
        t.objective = true;
        t.prompt_template_id = "single_letter_order";
    } else if (task_id == "math_expression") {
        t.paradigm = Paradigm::math_expression;
        t.response_mode = ResponseMode::option_tokens;
        t.option_tokens = {{"right", +1}, {"wrong", -1}};
        t.objective = true;
        t.prompt_template_id = "math_expression";
    } else if (task_id == "alphabetical_order") {
        t.paradigm = Paradigm::alphabetical_order;
        t.response_mode = ResponseMode::structured_think_answer;
        t.objective = true;
        t.prompt_template_id = "alphabetical_think_first";
    } else if (task_id == "alphabetical_order_answer_first") {
        t.paradigm = Paradigm::alphabetical_order;
        t.response_mode = ResponseMode::structured_think_answer;
        t.objective = true;
        t.prompt_template_id = "alphabetical_answer_first";
    } else if (task_id == "factual_judgment") {
        t.paradigm = Paradigm::factual_judgment;
        t.response_mode = ResponseMode::structured_think_answer;
        t.objective = true;
        t.prompt_template_id = "factual_judgment";
    } else if (task_id == "stance_taking") {
        t.paradigm = Paradigm::stance_taking;
        t.response_mode = ResponseMode::structured_think_answer;
        t.prompt_template_id = "stance_taking";
    } else {
        throw config_error("unknown task '" + task_id + "'");
    }
    validate(t);
    return t;
}

inline std::vector<std::string> catalog_task_ids() {
    return {"value_binary",        "value_continuous",
            "sentiment_binary",    "sentiment_continuous",
            "subjective_preference", "word_valence",
            "single_letter_order", "math_expression",
            "alphabetical_order",  "alphabetical_order_answer_first",
            "factual_judgment",    "stance_taking"};
}

// ---- stimulus loading and generation ----

inline std::string bundled_data_dir() {
#ifdef VAA_BUNDLED_DATA_DIR
    return VAA_BUNDLED_DATA_DIR;
#else
    return "data";
#endif
}

inline std::vector<Stimulus> load_stimuli(const std::string& path) {
    std::vector<Stimulus> out;
    for_each_jsonl(path, [&](const ojson& j) { out.push_back(stimulus_from_json(j)); });
    if (out.empty()) throw data_error("no stimuli in " + path);
    return out;
}

// Two word stimuli per bundled pair: the positive member labeled +1 and the
// negative member labeled -1 (metadata "valence").
inline std::vector<Stimulus> word_valence_stimuli(const std::vector<Stimulus>& pairs) {
    std::vector<Stimulus> out;
    out.reserve(pairs.size() * 2);
    for (const auto& p : pairs) {
        auto dom = p.metadata.find("domain");
        if (dom != p.metadata.end() && dom->second == "neutral") continue;  // no valence to label
        auto o1 = p.metadata.find("option1");
        auto o2 = p.metadata.find("option2");
        if (o1 == p.metadata.end() || o2 == p.metadata.end())
            throw data_error("pair stimulus " + p.id + " missing option words");
        Stimulus pos;
        pos.id = p.id + "_pos";
        pos.task_id = "word_valence";
        pos.text = o1->second;
        pos.metadata["valence"] = "+1";
        Stimulus neg;
        neg.id = p.id + "_neg";
        neg.task_id = "word_valence";
        neg.text = o2->second;
        neg.metadata["valence"] = "-1";
        out.push_back(std::move(pos));
        out.push_back(std::move(neg));
    }
    return out;
}

inline std::map<std::string, int> support_labels_from_metadata(const std::vector<Stimulus>& stimuli) {
    std::map<std::string, int> labels;
    for (const auto& s : stimuli) {
        auto it = s.metadata.find("valence");
        if (it == s.metadata.end()) throw data_error("stimulus " + s.id + " has no valence metadata");
        labels[s.id] = it->second == "+1" ? +1 : -1;
    }
    return labels;
}

// Support indicator from the model's own baseline decisions (sign of the
// support-vs-oppose logit difference; zero counts as support).
inline std::map<std::string, int> support_labels_from_decisions(const std::vector<ActivationRecord>& records) {
    std::map<std::string, int> labels;
    for (const auto& r : records) labels[r.stimulus_id] = r.decision_value >= 0.0 ? +1 : -1;
    return labels;
}

// Letter pairs with alternating truth labels (exactly balanced for even n).
inline std::vector<Stimulus> generate_single_letter_stimuli(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, 25);
    std::vector<Stimulus> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        int a = pick(rng);
        int b = pick(rng);
        while (b == a) b = pick(rng);
        bool truth = i % 2 == 0;
        int first = truth ? std::min(a, b) : std::max(a, b);
        int second = truth ? std::max(a, b) : std::min(a, b);
        Stimulus s;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "letters_%04zu", i);
        s.id = buf;
        s.task_id = "single_letter_order";
        s.text = std::string(1, static_cast<char>('a' + first)) + " vs " + static_cast<char>('a' + second);
        s.truth_label = truth;
        s.metadata["option1"] = std::string(1, static_cast<char>('a' + first));
        s.metadata["option2"] = std::string(1, static_cast<char>('a' + second));
        out.push_back(std::move(s));
    }
    return out;
}

// Addition checks "a+b=c" with a,b uniform on [1,100]; alternating trials are
// correct, the rest get a resampled wrong right-hand side.
inline std::vector<Stimulus> generate_math_stimuli(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> term(1, 100);
    std::uniform_int_distribution<int> rhs(2, 200);
    std::vector<Stimulus> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        int a = term(rng);
        int b = term(rng);
        bool truth = i % 2 == 0;
        int c = a + b;
        if (!truth) {
            do {
                c = rhs(rng);
            } while (c == a + b);
        }
        Stimulus s;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "math_%04zu", i);
        s.id = buf;
        s.task_id = "math_expression";
        s.text = std::to_string(a) + "+" + std::to_string(b) + "=" + std::to_string(c);
        s.truth_label = truth;
        out.push_back(std::move(s));
    }
    return out;
}

// Bundled or generated stimuli for a catalog task. limit 0 keeps everything;
// generated tasks use it as the sample size.
inline std::vector<Stimulus> load_task_stimuli(const TaskSpec& task, const std::string& data_dir,
                                               std::uint64_t seed, std::size_t limit = 0) {
    std::string dir = data_dir.empty() ? bundled_data_dir() : data_dir;
    std::vector<Stimulus> out;
    switch (task.paradigm) {
        case Paradigm::value_binary:
        case Paradigm::value_continuous:
            out = load_stimuli(dir + "/value_statements_sample.jsonl");
            break;
        case Paradigm::sentiment_binary:
        case Paradigm::sentiment_continuous:
            out = load_stimuli(dir + "/sentiment_headlines_sample.jsonl");
            break;
        case Paradigm::subjective_preference:
            if (task.prompt_template_id == "word_valence")
                out = word_valence_stimuli(load_stimuli(dir + "/word_pairs.jsonl"));
            else
                out = load_stimuli(dir + "/word_pairs.jsonl");
            break;
        case Paradigm::single_letter_order:
            out = generate_single_letter_stimuli(limit ? limit : 40, seed);
            break;
        case Paradigm::math_expression:
            out = generate_math_stimuli(limit ? limit : 100, seed);
            break;
        case Paradigm::alphabetical_order:
            out = load_stimuli(dir + "/alphabetical_pairs.jsonl");
            break;
        case Paradigm::factual_judgment:
            out = load_stimuli(dir + "/factual_questions.jsonl");
            break;
        case Paradigm::stance_taking:
            out = load_stimuli(dir + "/stance_statements.jsonl");
            break;
    }
    for (auto& s : out) s.task_id = task.task_id;
    if (limit > 0 && out.size() > limit) out.resize(limit);
    return out;
}

// ---- screening ----

struct ScreeningResult {
    double accuracy = 0.0;
    std::size_t n_correct = 0;
    std::size_t n_parsed = 0;
    std::size_t n_total = 0;
};

// Baseline (no intervention) accuracy on an objective structured task.
// Parse failures count as incorrect.
inline ScreeningResult screening_accuracy(Backend& backend, const TaskSpec& task,
                                          const std::vector<Stimulus>& stimuli, const DecodeParams& dp) {
    if (task.response_mode != ResponseMode::structured_think_answer || !task.objective)
        throw config_error("screening applies to objective structured tasks only");
    if (stimuli.empty()) throw data_error("no screening stimuli");
    ScreeningResult r;
    r.n_total = stimuli.size();
    auto vocab = answer_vocabulary(task);
    for (const auto& s : stimuli) {
        std::string prompt = render_prompt(task, s, false);
        GenerationResult g = generate_with_intervention(backend, prompt, std::nullopt, dp);
        ParsedOutput parsed = parse_think_answer(g.text, vocab);
        if (!parsed.parse_ok) continue;
        ++r.n_parsed;
        if (parsed.answer == normalize_answer(expected_truthful_answer(task, s))) ++r.n_correct;
    }
    r.accuracy = static_cast<double>(r.n_correct) / static_cast<double>(r.n_total);
    return r;
}

// Minimum baseline accuracy before an objective structured task may be swept.
inline double screening_threshold(const TaskSpec& task, const RunConfig& cfg) {
    if (task.paradigm == Paradigm::alphabetical_order) return cfg.screen_alphabetical_min;
    if (task.paradigm == Paradigm::factual_judgment) return cfg.screen_factual_min;
    return 0.0;
}

}  // namespace vaa
