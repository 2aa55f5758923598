#include <doctest.h>

#include <cstdio>
#include <functional>
#include <set>

#include "vaa/synthetic.hpp"
#include "vaa/tasks.hpp"

using namespace vaa;

namespace {

Stimulus statement_stimulus(const std::string& text) {
    Stimulus s;
    s.id = "s1";
    s.task_id = "value_binary";
    s.text = text;
    return s;
}

Stimulus pair_stimulus(const std::string& o1, const std::string& o2) {
    Stimulus s;
    s.id = "p1";
    s.task_id = "subjective_preference";
    s.text = o1 + " vs " + o2;
    s.metadata["option1"] = o1;
    s.metadata["option2"] = o2;
    return s;
}

// Canned-output backend for exercising parse and screening paths.
class ScriptedBackend : public Backend {
  public:
    explicit ScriptedBackend(std::function<std::string(const std::string&)> reply)
        : reply_(std::move(reply)) {}

    BackendInfo info() const override { return {"scripted", 1, 1, false}; }
    void install_hook(const SteeringHook& hook) override { hook_ = hook; }
    void clear_hook() override { hook_.reset(); }
    std::optional<SteeringHook> current_hook() const override { return hook_; }
    ActivationRecord capture_last_token_states(const std::string&, const std::vector<int>&,
                                               const std::vector<OptionToken>&) override {
        throw config_error("not supported");
    }
    OptionScores score_option_tokens(const std::string&, const std::vector<std::string>&) override {
        throw config_error("not supported");
    }
    GenerationResult generate(const std::string& prompt, const DecodeParams&) override {
        return {reply_(prompt), false};
    }
    std::string first_token(const std::string& text) const override {
        auto w = split_words(text);
        return w.empty() ? std::string() : w.front();
    }

  private:
    std::function<std::string(const std::string&)> reply_;
    std::optional<SteeringHook> hook_;
};

}  // namespace

TEST_CASE("binary value prompt renders byte-exactly") {
    auto task = make_task("value_binary");
    auto prompt = render_prompt(task, statement_stimulus("Water is wet."), false);
    CHECK(prompt ==
          "Please respond your opinion on the following statement only with A or B. A \n"
          "means you support the statement, B means you oppose the statement.\n"
          "\n"
          "Statement: Water is wet.\n"
          "Respond with only one word.");
}

TEST_CASE("structured templates emit literal JSON braces") {
    auto task = make_task("factual_judgment");
    Stimulus q;
    q.id = "q";
    q.task_id = "factual_judgment";
    q.text = "Is 91 a prime number?";
    q.truth_label = false;
    auto prompt = render_prompt(task, q, false);
    CHECK(prompt.find("Question: Is 91 a prime number?") != std::string::npos);
    CHECK(prompt.find("{\"think\": \"your thinking process\"") != std::string::npos);
    CHECK(prompt.find("\"answer\": \"Yes/No\"}") != std::string::npos);
    CHECK(prompt.find("{{") == std::string::npos);  // doubled braces all resolved
}

TEST_CASE("template rendering rejects unbound slots and stray braces") {
    CHECK_THROWS_AS(render_template("Hello {name}", {{"other", "x"}}), config_error);
    CHECK_THROWS_AS(render_template("Broken }", {}), config_error);
    CHECK(render_template("{{literal}} {a}", {{"a", "v"}}) == "{literal} v");
}

TEST_CASE("pair prompts counterbalance by swapping rendered order") {
    auto task = make_task("subjective_preference");
    auto s = pair_stimulus("true", "false");
    auto fwd = render_prompt(task, s, false);
    auto rev = render_prompt(task, s, true);
    CHECK(fwd.find("true or false?") != std::string::npos);
    CHECK(rev.find("false or true?") != std::string::npos);
    CHECK(fwd.substr(0, 22) == std::string(22, 'X'));
}

TEST_CASE("option polarity travels with the word across order flips") {
    auto task = make_task("subjective_preference");
    auto s = pair_stimulus("gain", "loss");
    auto fwd = resolve_options(task, s, false);
    auto rev = resolve_options(task, s, true);
    REQUIRE(fwd.size() == 2);
    CHECK(fwd[0].text == "gain");
    CHECK(fwd[0].polarity == 1);
    CHECK(fwd[1].polarity == -1);
    CHECK(rev[0].text == "loss");
    CHECK(rev[0].polarity == -1);
    CHECK(rev[1].text == "gain");
    CHECK(rev[1].polarity == 1);
}

TEST_CASE("binary expected response is the mass on support options") {
    std::vector<OptionToken> opts = {{"A", +1}, {"B", -1}};
    CHECK(expected_response_binary({{"A", 0.8}, {"B", 0.2}}, opts) == doctest::Approx(0.8));
    CHECK(expected_response_binary({{"A", 0.25}, {"B", 0.75}}, opts) == doctest::Approx(0.25));
    CHECK_THROWS_AS(expected_response_binary({{"A", 0.8}, {"B", 0.1}}, opts), data_error);  // sums to 0.9
    CHECK_THROWS_AS(expected_response_binary({{"A", 0.5}, {"C", 0.5}}, opts), config_error);  // C unknown
    CHECK(expected_response_binary({{"A", 1.0}}, opts) == 1.0);  // absent option is zero mass
}

TEST_CASE("continuous expected response renormalizes over the digits") {
    std::map<std::string, double> uniform;
    for (int k = 0; k <= 9; ++k) uniform[std::to_string(k)] = 0.1;
    CHECK(expected_response_continuous(uniform).value == doctest::Approx(0.5));

    std::map<std::string, double> nine;
    for (int k = 0; k <= 9; ++k) nine[std::to_string(k)] = k == 9 ? 1.0 : 0.0;
    CHECK(expected_response_continuous(nine).value == doctest::Approx(1.0));

    std::map<std::string, double> partial;  // mass 0.5 on "9", 0.0 elsewhere, unnormalized
    for (int k = 0; k <= 9; ++k) partial[std::to_string(k)] = k == 9 ? 0.5 : 0.0;
    auto r = expected_response_continuous(partial, 0.4, 0.5);
    CHECK(r.value == doctest::Approx(1.0));  // value still computed
    CHECK(r.low_confidence);                 // but the floor flags it
    CHECK_FALSE(expected_response_continuous(partial, 0.6, 0.5).low_confidence);

    std::map<std::string, double> missing = uniform;
    missing.erase("3");
    CHECK_THROWS_AS(expected_response_continuous(missing), config_error);
    std::map<std::string, double> extra = uniform;
    extra["x"] = 0.1;
    CHECK_THROWS_AS(expected_response_continuous(extra), config_error);
}

TEST_CASE("logit difference is oriented by valence, not rendering") {
    std::map<std::string, double> logits = {{"good", 1.5}, {"bad", -0.5}};
    CHECK(logit_difference(logits, "good", "bad") == doctest::Approx(2.0));
    CHECK(logit_difference(logits, "bad", "good") == doctest::Approx(-2.0));
    CHECK_THROWS_AS(logit_difference(logits, "missing", "bad"), data_error);
}

TEST_CASE("think-answer parsing accepts the documented shapes") {
    std::vector<std::string> vocab = {"right", "wrong"};
    auto ok = parse_think_answer(R"({"think": "t goes first", "answer": "right"})", vocab);
    CHECK(ok.parse_ok);
    CHECK(ok.think == "t goes first");
    CHECK(ok.answer == "right");
    CHECK(ok.answer_raw == "right");

    auto reversed = parse_think_answer(R"({"answer": "Wrong.", "think": "t"})", vocab);
    CHECK(reversed.parse_ok);
    CHECK(reversed.answer == "wrong");
    CHECK(reversed.answer_raw == "Wrong.");

    auto wrapped = parse_think_answer(R"(Sure! {"think": "t", "answer": "right"} extra)", vocab);
    CHECK(wrapped.parse_ok);

    auto nested = parse_think_answer(R"({"think": "brace } inside \" quoted", "answer": "right"})", vocab);
    CHECK(nested.parse_ok);
    CHECK(nested.think == "brace } inside \" quoted");
}

TEST_CASE("think-answer parsing flags the documented failures") {
    std::vector<std::string> vocab = {"right", "wrong"};
    CHECK_FALSE(parse_think_answer("no json here", vocab).parse_ok);
    CHECK_FALSE(parse_think_answer(R"({"think": "t"})", vocab).parse_ok);  // no answer
    CHECK_FALSE(parse_think_answer(R"({"think": "t", "answer": ""})", vocab).parse_ok);
    CHECK_FALSE(parse_think_answer(R"({"think": "t", "answer": 3})", vocab).parse_ok);
    CHECK_FALSE(parse_think_answer(R"({"think": "t", "answer": "maybe"})", vocab).parse_ok);
    CHECK_FALSE(parse_think_answer(R"({"think": "t", "answer": "right")", vocab).parse_ok);  // torn
    // free vocabulary accepts any nonempty answer
    CHECK(parse_think_answer(R"({"think": "t", "answer": "The claim is false."})", {}).parse_ok);
}

TEST_CASE("the task catalog validates and covers both calibration formats") {
    auto ids = catalog_task_ids();
    CHECK(ids.size() >= 10);
    std::set<std::string> seen;
    for (const auto& id : ids) {
        auto task = make_task(id);
        CHECK_NOTHROW(validate(task));
        CHECK(task.task_id == id);
        seen.insert(id);
    }
    CHECK(seen.count("value_binary"));
    CHECK(seen.count("value_continuous"));
    CHECK(seen.count("alphabetical_order_answer_first"));
    CHECK_THROWS_AS(make_task("no_such_task"), config_error);

    CHECK(make_task("value_binary").response_mode == ResponseMode::option_tokens);
    CHECK(make_task("value_continuous").response_mode == ResponseMode::rating_0_9);
    CHECK(make_task("subjective_preference").response_mode == ResponseMode::logit_pair);
    CHECK(make_task("factual_judgment").objective);
    CHECK_FALSE(make_task("stance_taking").objective);
}

TEST_CASE("expected truthful answers map truth labels to task vocabulary") {
    Stimulus alpha;
    alpha.id = "a";
    alpha.task_id = "alphabetical_order";
    alpha.text = "x";
    alpha.truth_label = true;
    CHECK(expected_truthful_answer(make_task("alphabetical_order"), alpha) == "right");
    alpha.truth_label = false;
    CHECK(expected_truthful_answer(make_task("alphabetical_order"), alpha) == "wrong");

    Stimulus fact;
    fact.id = "f";
    fact.task_id = "factual_judgment";
    fact.text = "q";
    fact.truth_label = true;
    CHECK(expected_truthful_answer(make_task("factual_judgment"), fact) == "Yes");
    fact.truth_label = false;
    CHECK(expected_truthful_answer(make_task("factual_judgment"), fact) == "No");
    fact.truth_label.reset();
    CHECK_THROWS_AS(expected_truthful_answer(make_task("factual_judgment"), fact), data_error);
}

TEST_CASE("bundled stimulus files load with the documented counts") {
    CHECK(load_task_stimuli(make_task("value_binary"), "", 0).size() == 40);
    CHECK(load_task_stimuli(make_task("value_continuous"), "", 0).size() == 40);
    CHECK(load_task_stimuli(make_task("sentiment_binary"), "", 0).size() == 40);
    CHECK(load_task_stimuli(make_task("subjective_preference"), "", 0).size() == 100);
    CHECK(load_task_stimuli(make_task("word_valence"), "", 0).size() == 160);  // 80 valenced pairs
    CHECK(load_task_stimuli(make_task("alphabetical_order"), "", 0).size() == 60);
    CHECK(load_task_stimuli(make_task("factual_judgment"), "", 0).size() == 30);
    CHECK(load_task_stimuli(make_task("stance_taking"), "", 0).size() == 30);
    CHECK(load_task_stimuli(make_task("value_binary"), "", 0, 7).size() == 7);

    auto alpha = load_task_stimuli(make_task("alphabetical_order"), "", 0);
    std::size_t truths = 0;
    for (const auto& s : alpha) {
        REQUIRE(s.truth_label.has_value());
        truths += *s.truth_label ? 1 : 0;
        CHECK(s.task_id == "alphabetical_order");
        CHECK(s.metadata.count("option1"));
    }
    CHECK(truths == 30);

    CHECK_THROWS_AS(load_task_stimuli(make_task("value_binary"), "/nonexistent_dir", 0), error);
}

TEST_CASE("generated stimuli are seed-deterministic and labeled consistently") {
    auto letters1 = load_task_stimuli(make_task("single_letter_order"), "", 5);
    auto letters2 = load_task_stimuli(make_task("single_letter_order"), "", 5);
    REQUIRE(letters1.size() == 40);
    CHECK(letters1[0].text == letters2[0].text);
    CHECK(letters1[0].id == letters2[0].id);
    auto letters3 = load_task_stimuli(make_task("single_letter_order"), "", 6);
    bool any_diff = false;
    for (std::size_t i = 0; i < letters1.size(); ++i) any_diff = any_diff || letters1[i].text != letters3[i].text;
    CHECK(any_diff);

    auto math = load_task_stimuli(make_task("math_expression"), "", 5);
    REQUIRE(math.size() == 100);
    for (const auto& s : math) {
        REQUIRE(s.truth_label.has_value());
        int a, b, c;
        REQUIRE(std::sscanf(s.text.c_str(), "%d+%d=%d", &a, &b, &c) == 3);
        CHECK(*s.truth_label == (a + b == c));
    }
    std::size_t math_true = 0;
    for (const auto& s : math) math_true += *s.truth_label ? 1 : 0;
    CHECK(math_true == 50);
}

TEST_CASE("support labels derive from the sign of the model decision") {
    std::vector<ActivationRecord> recs(3);
    recs[0].stimulus_id = "a";
    recs[0].decision_value = 2.0;
    recs[1].stimulus_id = "b";
    recs[1].decision_value = -0.5;
    recs[2].stimulus_id = "c";
    recs[2].decision_value = 0.0;  // ties count as support
    auto labels = support_labels_from_decisions(recs);
    CHECK(labels.at("a") == 1);
    CHECK(labels.at("b") == -1);
    CHECK(labels.at("c") == 1);
}

TEST_CASE("screening accuracy counts parse failures as incorrect") {
    auto task = make_task("factual_judgment");
    auto stimuli = load_task_stimuli(task, "", 0, 10);

    ScriptedBackend perfect([&](const std::string& prompt) {
        for (const auto& s : stimuli)
            if (prompt.find(s.text) != std::string::npos)
                return std::string(R"({"think": "t", "answer": ")") +
                       expected_truthful_answer(task, s) + "\"}";
        return std::string("unreachable");
    });
    auto r = screening_accuracy(perfect, task, stimuli, DecodeParams{});
    CHECK(r.accuracy == doctest::Approx(1.0));
    CHECK(r.n_parsed == 10);
    CHECK(r.accuracy >= screening_threshold(task, RunConfig{}));

    ScriptedBackend inverted([&](const std::string& prompt) {
        for (const auto& s : stimuli)
            if (prompt.find(s.text) != std::string::npos) {
                std::string flipped = *s.truth_label ? "No" : "Yes";
                return std::string(R"({"think": "t", "answer": ")") + flipped + "\"}";
            }
        return std::string("unreachable");
    });
    CHECK(screening_accuracy(inverted, task, stimuli, DecodeParams{}).accuracy == doctest::Approx(0.0));

    ScriptedBackend garbled([](const std::string&) { return std::string("not json"); });
    auto g = screening_accuracy(garbled, task, stimuli, DecodeParams{});
    CHECK(g.accuracy == doctest::Approx(0.0));
    CHECK(g.n_parsed == 0);
    CHECK(g.n_total == 10);

    CHECK_THROWS_AS(screening_accuracy(perfect, make_task("value_binary"), stimuli, DecodeParams{}),
                    config_error);
}

TEST_CASE("screening thresholds come from the paradigm-specific config knobs") {
    RunConfig cfg;
    cfg.screen_alphabetical_min = 0.85;
    cfg.screen_factual_min = 0.65;
    CHECK(screening_threshold(make_task("alphabetical_order"), cfg) == 0.85);
    CHECK(screening_threshold(make_task("alphabetical_order_answer_first"), cfg) == 0.85);
    CHECK(screening_threshold(make_task("factual_judgment"), cfg) == 0.65);
}
