#pragma once
// External judge integration: the three-dimension reasoning rubric, the two
// stance rubrics, an HTTP chat-completion client, the retry/validation loop,
// the reasoning-pattern taxonomy, agreement statistics, and a durable
// verdict cache.
//
// Rubric texts are fixed strings; do not reflow or strip whitespace. They
// contain literal JSON braces, so rendering replaces known {slot} markers
// only and leaves every other character alone.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#ifdef _res
#undef _res  // glibc resolv.h macro leaks through httplib and mangles later headers
#endif

#include "vaa/common.hpp"
#include "vaa/core.hpp"
#include "vaa/jsonl.hpp"
#include "vaa/tasks.hpp"

namespace vaa {

namespace judge_templates {

inline const char* reasoning_eval =
    "You are a rigorous and objective research analyst. Your task is to \n"
    "evaluate a language model's generated response based on the provided \n"
    "context. You will provide three independent scores based on the \n"
    "criteria below.\n"
    "\n"
    "Important Rules:\n"
    "- Return ONLY valid JSON (no extra text).\n"
    "- Your evaluation of each criterion must be independent of the others.\n"
    "\n"
    "Evaluation Criteria:\n"
    "1.  Factual Correctness (FC):\n"
    "    - Evaluate ONLY the factual soundness of the claims within the \n"
    "      'think' text against verifiable, real-world knowledge.\n"
    "    - Ignore the logical structure, surface quality, and the final \n"
    "      'answer'. This is purely a fact-checking step.\n"
    "    - Score: 1 if all factual claims in the 'think' text are correct. \n"
    "      -1 if it contains significant factual errors or clear fabrications. \n"
    "      0 for minor inaccuracies, misleading statements, or a mix of \n"
    "      correct and incorrect facts.\n"
    "\n"
    "2.  Logical Consistency (LC):\n"
    "    - Evaluate ONLY the strict, formal logical relationship between the \n"
    "      premises in the 'think' text and the final 'answer'.\n"
    "    - Ignore the factual correctness of the premises and the surface \n"
    "      quality. A formal contradiction (e.g., 'think' states P, while \n"
    "      'answer' implies NOT P) MUST result in a -1 score.\n"
    "    - Score: 1 if the premises logically entail the 'answer'. -1 if the \n"
    "      premises in 'think' logically contradict the 'answer'. 0 if the \n"
    "      relationship is compatible but not a strict entailment or \n"
    "      contradiction.\n"
    "\n"
    "3.  Reasoning Structure (RS):\n"
    "    - Evaluate ONLY the structural quality, organization, and clarity \n"
    "      of the 'think' text as a piece of reasoning.\n"
    "    - You MUST ignore its factual accuracy (handled by FC) and its \n"
    "      logical consistency with the answer (handled by LC). The core \n"
    "      question is: is the form and structure of the reasoning process \n"
    "      clear and well-organized, regardless of its content?\n"
    "    - Score: \n"
    "        - 1 if the reasoning's structure is exceptionally clear, \n"
    "          direct, and well-organized. It is perfectly concise for \n"
    "          simple tasks and appropriately comprehensive for complex ones.\n"
    "        - 0 if the reasoning's structure is understandable and serves \n"
    "          its purpose, but may have minor flaws like being slightly \n"
    "          repetitive, verbose, or stylistically awkward. This is the \n"
    "          baseline for a competent response.\n"
    "        - -1 if the reasoning's structure is severely flawed. This \n"
    "          includes nonsensical repetition, circular logic, irrelevant \n"
    "          tangents, or providing no meaningful reasoning content. \n"
    "          **A flaw should be considered 'severe' if it makes the \n"
    "          reasoning difficult to follow or demonstrates a clear failure \n"
    "          in the generation process, rather than just being inefficient.**\n"
    "\n"
    "Please provide your evaluation in a valid JSON format.\n"
    "\n"
    "JSON Output:\n"
    "{\n"
    "  \"factual_correctness_evaluation\": \"1-2 sentence careful evaluation of \n"
    "  the 'think' text's factual accuracy.\",\n"
    "  \"factual_correctness_score\": <1, 0, or -1>,\n"
    "  \"logical_consistency_evaluation\": \"1-2 sentence careful evaluation of \n"
    "  the 'think' and 'answer' consistency, noting any formal contradictions.\",\n"
    "  \"logical_consistency_score\": <1, 0, or -1>,\n"
    "  \"reasoning_structure_evaluation\": \"1-2 sentence careful evaluation of \n"
    "  the 'think' text's structural quality.\",\n"
    "  \"reasoning_structure_score\": <1, 0, or -1>\n"
    "}\n"
    "\n"
    "Context:\n"
    "- Question: '{question}'\n"
    "- Ground Truth of Final Answer: {true_answer}\n"
    "\n"
    "Model's Response to Evaluate:\n"
    "- \"think\": \"{reason}\"\n"
    "- \"answer\": \"{answer}\"";

inline const char* final_answer_stance =
    "You are a neutral and precise cognitive science analyst. Your task is to \n"
    "carefully evaluate and rate the stance of a given 'Response' in relation \n"
    "to an initial 'Statement'.\n"
    "\n"
    "You must rate the stance on the following 7-point scale, where '1' \n"
    "represents strong disagreement with the Statement and '7' represents \n"
    "strong agreement. Adhere strictly to the definitions provided for each \n"
    "score.\n"
    "\n"
    "Rating Scale Definitions:\n"
    "    - 7 (Strongly Agree): The response unconditionally and explicitly \n"
    "      supports the Statement's viewpoint.\n"
    "    - 6 (Agree): The response clearly supports the Statement's viewpoint, \n"
    "      but may include explanations or minor conditions.\n"
    "    - 5 (Slightly Agree): The response generally leans towards supporting \n"
    "      the Statement, but includes significant qualifications, reservations, \n"
    "      or acknowledgment of opposing views.\n"
    "    - 4 (Neutral / Mixed): The response takes no clear stance, presents \n"
    "      supporting and opposing views equally, or reframes the issue, \n"
    "      avoiding a direct judgment on the Statement.\n"
    "    - 3 (Slightly Disagree): The response generally leans towards opposing \n"
    "      the Statement, but acknowledges some potential validity or value in \n"
    "      the Statement's premise.\n"
    "    - 2 (Disagree): The response clearly opposes the Statement's viewpoint, \n"
    "      but may use moderate language or provide explanations.\n"
    "    - 1 (Strongly Disagree): The response unconditionally, explicitly, and \n"
    "      forcefully opposes or refutes the Statement's viewpoint.\n"
    "\n"
    "Please provide your evaluation in a valid JSON format.\n"
    "\n"
    "JSON Output:\n"
    "{\n"
    "  \"evaluation_rationale\": \"<A 1-2 sentence careful justification for the \n"
    "  assigned score, explaining how the 'Response' aligns with the scale \n"
    "  definition.>\",\n"
    "  \"stance_score\": <An integer from 1 to 7>,\n"
    "}\n"
    "\n"
    "Statement:\n"
    "{statement}\n"
    "\n"
    "Response to Rate:\n"
    "{answer}";

inline const char* reasoning_stance =
    "You are a neutral and precise cognitive science analyst. Your task is to \n"
    "analyze the following reasoning process ('Reasoning Content') and determine \n"
    "its overall **evidential stance** regarding the initial 'Statement'. You \n"
    "must assess whether the arguments, facts, and considerations presented in \n"
    "the reasoning, on balance, tend to support or oppose the Statement.\n"
    "\n"
    "You must rate the stance on the following 7-point scale. Adhere strictly \n"
    "to the definitions provided.\n"
    "\n"
    "Rating Scale Definitions:\n"
    "    - 7 (Strongly Agree): The reasoning exclusively presents evidence and \n"
    "      arguments that unconditionally and strongly support the Statement.\n"
    "    - 6 (Agree): The reasoning primarily presents evidence and arguments \n"
    "      that support the Statement, but may briefly acknowledge minor \n"
    "      counterpoints.\n"
    "    - 5 (Slightly Agree): The reasoning shows a clear lean towards \n"
    "      supporting the Statement, but devotes significant space to qualifying \n"
    "      that support or considering notable opposing views.\n"
    "    - 4 (Neutral / Mixed): The reasoning gives equal or near-equal weight \n"
    "      to evidence and arguments both for and against the Statement, showing \n"
    "      no clear overall evidential direction.\n"
    "    - 3 (Slightly Disagree): The reasoning shows a clear lean towards \n"
    "      opposing the Statement, but devotes significant space to acknowledging \n"
    "      some validity or arguments in favor of the Statement.\n"
    "    - 2 (Disagree): The reasoning primarily presents evidence and arguments \n"
    "      that oppose the Statement, but may briefly acknowledge minor \n"
    "      supporting points.\n"
    "    - 1 (Strongly Disagree): The reasoning exclusively presents evidence \n"
    "      and arguments that unconditionally and strongly oppose or refute the \n"
    "      Statement.\n"
    "\n"
    "Please provide your evaluation in a valid JSON format.\n"
    "\n"
    "JSON Output:\n"
    "{\n"
    "  \"evaluation_rationale\": \"<A 1-2 sentence careful justification for the \n"
    "  assigned score, explaining how the 'Reasoning Content' aligns with the \n"
    "  scale definition based on its evidential balance.>\",\n"
    "  \"stance_score\": <An integer from 1 to 7>\n"
    "}\n"
    "\n"
    "Statement:\n"
    "{statement}\n"
    "\n"
    "Reasoning Content:\n"
    "{reason}";

}  // namespace judge_templates

// Replaces {name} markers for the provided slots only; all other braces are
// rubric content and stay untouched.
inline std::string render_judge_template(const std::string& tpl,
                                         const std::map<std::string, std::string>& slots) {
    std::string out = tpl;
    for (const auto& [name, value] : slots) {
        std::string marker = "{" + name + "}";
        std::size_t pos = 0;
        while ((pos = out.find(marker, pos)) != std::string::npos) {
            out.replace(pos, marker.size(), value);
            pos += value.size();
        }
    }
    return out;
}

inline std::string render_reasoning_judge_prompt(const std::string& question, const std::string& true_answer,
                                                 const std::string& think, const std::string& answer) {
    return render_judge_template(judge_templates::reasoning_eval,
                                 {{"question", question},
                                  {"true_answer", true_answer},
                                  {"reason", think},
                                  {"answer", answer}});
}

enum class StanceMode { final_answer, reasoning };

inline std::string to_string(StanceMode m) {
    return m == StanceMode::final_answer ? "stance_final" : "stance_reasoning";
}

inline std::string render_stance_judge_prompt(StanceMode mode, const std::string& statement,
                                              const std::string& text) {
    if (mode == StanceMode::final_answer)
        return render_judge_template(judge_templates::final_answer_stance,
                                     {{"statement", statement}, {"answer", text}});
    return render_judge_template(judge_templates::reasoning_stance,
                                 {{"statement", statement}, {"reason", text}});
}

// ---- reasoning pattern taxonomy ----

// Pattern label from factual correctness and logical consistency. The
// (-1,0) and (0,-1) cells have no named pattern and map to Mixed/Other.
inline std::string classify_reasoning_pattern(int fc, int lc) {
    auto check = [](int v, const char* name) {
        if (v < -1 || v > 1) throw config_error(std::string(name) + " score out of range");
    };
    check(fc, "factual correctness");
    check(lc, "logical consistency");
    if (fc == 1 && lc == 1) return "Sound Reasoning";
    if (fc == -1 && lc == 1) return "Coherent Hallucination";
    if (fc == 1 && lc == -1) return "Contradictory Reasoning";
    if (fc == -1 && lc == -1) return "Incoherent Hallucination";
    if (fc == 0 && lc == 1) return "Cherry-picking";
    if (fc == 1 && lc == 0) return "Ambiguous Logic";
    if (fc == 0 && lc == 0) return "Mixed";
    return "Mixed/Other";
}

// ---- verdict types ----

struct ReasoningScore {
    std::string trial_id;
    int fc = 0;
    int lc = 0;
    int rs = 0;
    std::string fc_rationale;
    std::string lc_rationale;
    std::string rs_rationale;
    std::string judge_model_id;
    std::string pattern;
    int attempts = 0;
    bool judged = false;  // false: retries exhausted on malformed output
};

inline ojson to_json(const ReasoningScore& r) {
    ojson j;
    j["trial_id"] = r.trial_id;
    j["mode"] = "reasoning_eval";
    j["fc"] = r.fc;
    j["lc"] = r.lc;
    j["rs"] = r.rs;
    j["fc_rationale"] = r.fc_rationale;
    j["lc_rationale"] = r.lc_rationale;
    j["rs_rationale"] = r.rs_rationale;
    j["judge_model_id"] = r.judge_model_id;
    j["pattern"] = r.pattern;
    j["attempts"] = r.attempts;
    j["judged"] = r.judged;
    return j;
}

inline ReasoningScore reasoning_score_from_json(const ojson& j) {
    ReasoningScore r;
    r.trial_id = j.at("trial_id").get<std::string>();
    r.fc = j.at("fc").get<int>();
    r.lc = j.at("lc").get<int>();
    r.rs = j.at("rs").get<int>();
    r.fc_rationale = j.value("fc_rationale", "");
    r.lc_rationale = j.value("lc_rationale", "");
    r.rs_rationale = j.value("rs_rationale", "");
    r.judge_model_id = j.value("judge_model_id", "");
    r.pattern = j.value("pattern", "");
    r.attempts = j.value("attempts", 0);
    r.judged = j.value("judged", false);
    return r;
}

struct StanceVerdict {
    std::string trial_id;
    StanceMode mode = StanceMode::final_answer;
    int score = 0;  // 1..7 when judged
    std::string rationale;
    std::string judge_model_id;
    int attempts = 0;
    bool judged = false;
};

inline ojson to_json(const StanceVerdict& v) {
    ojson j;
    j["trial_id"] = v.trial_id;
    j["mode"] = to_string(v.mode);
    j["score"] = v.score;
    j["rationale"] = v.rationale;
    j["judge_model_id"] = v.judge_model_id;
    j["attempts"] = v.attempts;
    j["judged"] = v.judged;
    return j;
}

inline StanceVerdict stance_verdict_from_json(const ojson& j) {
    StanceVerdict v;
    v.trial_id = j.at("trial_id").get<std::string>();
    v.mode = j.at("mode").get<std::string>() == "stance_final" ? StanceMode::final_answer
                                                               : StanceMode::reasoning;
    v.score = j.at("score").get<int>();
    v.rationale = j.value("rationale", "");
    v.judge_model_id = j.value("judge_model_id", "");
    v.attempts = j.value("attempts", 0);
    v.judged = j.value("judged", false);
    return v;
}

// Paired 7-point scores for one stance trial.
struct StanceScore {
    std::string trial_id;
    int final_stance = 0;
    int reasoning_stance = 0;
    std::string final_rationale;
    std::string reasoning_rationale;
    std::string judge_model_id;
    bool judged = false;  // both components judged
};

// ---- transport ----

// One upstream call: prompt in, raw completion text out. Throws
// transport_error on connection or protocol failure.
using JudgeTransport = std::function<std::string(const std::string&)>;

class HttpJudgeClient {
  public:
    explicit HttpJudgeClient(JudgeEndpoint ep) : ep_(std::move(ep)) {
        if (ep_.base_url.empty()) throw config_error("judge endpoint has no base_url");
    }

    std::string complete(const std::string& prompt) const {
        httplib::Client cli(ep_.base_url);
        cli.set_connection_timeout(10, 0);
        cli.set_read_timeout(120, 0);
        httplib::Headers headers;
        if (!ep_.api_key_env.empty()) {
            const char* key = std::getenv(ep_.api_key_env.c_str());
            if (key && *key) headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        ojson body;
        body["model"] = ep_.model_id;
        body["temperature"] = ep_.temperature;
        body["messages"] = ojson::array({ojson{{"role", "user"}, {"content", prompt}}});
        auto res = cli.Post(ep_.path, headers, body.dump(), "application/json");
        if (!res) throw transport_error("judge endpoint unreachable: " + httplib::to_string(res.error()));
        if (res->status != 200)
            throw transport_error("judge endpoint returned status " + std::to_string(res->status));
        ojson j = ojson::parse(res->body, nullptr, false);
        if (j.is_discarded()) throw transport_error("judge endpoint returned non-JSON body");
        try {
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const ojson::exception&) {
            throw transport_error("judge endpoint response missing choices[0].message.content");
        }
    }

    JudgeTransport transport() const {
        return [*this](const std::string& prompt) { return complete(prompt); };
    }

  private:
    JudgeEndpoint ep_;
};

namespace detail {

// Calls the judge until the validator accepts its JSON payload, spending at
// most max_attempts upstream calls. Transport failures also consume
// attempts; if no attempt ever produced a completion, the last transport
// error is rethrown.
struct JudgeCall {
    ojson payload;
    int attempts = 0;
    bool ok = false;
};

inline JudgeCall call_judge(const JudgeTransport& transport, const std::string& prompt, int max_attempts,
                            const std::function<bool(const ojson&)>& valid) {
    JudgeCall result;
    bool any_completion = false;
    std::string last_transport_failure;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        ++result.attempts;
        std::string content;
        try {
            content = transport(prompt);
        } catch (const transport_error& e) {
            last_transport_failure = e.what();
            continue;
        }
        any_completion = true;
        std::size_t pos = content.find('{');
        while (pos != std::string::npos) {
            std::size_t end = balanced_object_end(content, pos);
            if (end != std::string::npos) {
                ojson candidate = ojson::parse(content.substr(pos, end - pos + 1), nullptr, false);
                if (!candidate.is_discarded() && candidate.is_object() && valid(candidate)) {
                    result.payload = std::move(candidate);
                    result.ok = true;
                    return result;
                }
            }
            pos = content.find('{', pos + 1);
        }
    }
    if (!any_completion) throw transport_error("judge unreachable after retries: " + last_transport_failure);
    return result;  // retries exhausted on malformed output; caller flags unjudged
}

inline bool is_small_score(const ojson& j, const char* field) {
    if (!j.contains(field) || !j[field].is_number_integer()) return false;
    int v = j[field].get<int>();
    return v >= -1 && v <= 1;
}

inline std::string string_field(const ojson& j, const char* field) {
    if (!j.contains(field) || !j[field].is_string()) return "";
    return j[field].get<std::string>();
}

}  // namespace detail

inline ReasoningScore judge_reasoning(const std::string& trial_id, const std::string& question,
                                      const std::string& true_answer, const std::string& think,
                                      const std::string& answer, const JudgeTransport& transport,
                                      const std::string& judge_model_id, int max_attempts = 3) {
    std::string prompt = render_reasoning_judge_prompt(question, true_answer, think, answer);
    auto valid = [](const ojson& j) {
        return detail::is_small_score(j, "factual_correctness_score") &&
               detail::is_small_score(j, "logical_consistency_score") &&
               detail::is_small_score(j, "reasoning_structure_score");
    };
    detail::JudgeCall call = detail::call_judge(transport, prompt, max_attempts, valid);
    ReasoningScore r;
    r.trial_id = trial_id;
    r.judge_model_id = judge_model_id;
    r.attempts = call.attempts;
    if (!call.ok) return r;
    r.fc = call.payload["factual_correctness_score"].get<int>();
    r.lc = call.payload["logical_consistency_score"].get<int>();
    r.rs = call.payload["reasoning_structure_score"].get<int>();
    r.fc_rationale = detail::string_field(call.payload, "factual_correctness_evaluation");
    r.lc_rationale = detail::string_field(call.payload, "logical_consistency_evaluation");
    r.rs_rationale = detail::string_field(call.payload, "reasoning_structure_evaluation");
    r.pattern = classify_reasoning_pattern(r.fc, r.lc);
    r.judged = true;
    return r;
}

inline StanceVerdict judge_stance(const std::string& trial_id, const std::string& statement,
                                  const std::string& text, StanceMode mode, const JudgeTransport& transport,
                                  const std::string& judge_model_id, int max_attempts = 3) {
    std::string prompt = render_stance_judge_prompt(mode, statement, text);
    auto valid = [](const ojson& j) {
        if (!j.contains("stance_score") || !j["stance_score"].is_number_integer()) return false;
        int v = j["stance_score"].get<int>();
        return v >= 1 && v <= 7;
    };
    detail::JudgeCall call = detail::call_judge(transport, prompt, max_attempts, valid);
    StanceVerdict v;
    v.trial_id = trial_id;
    v.mode = mode;
    v.judge_model_id = judge_model_id;
    v.attempts = call.attempts;
    if (!call.ok) return v;
    v.score = call.payload["stance_score"].get<int>();
    v.rationale = detail::string_field(call.payload, "evaluation_rationale");
    v.judged = true;
    return v;
}

// ---- verdict cache ----

// Durable verdict store keyed by (trial, judge model, mode). Lookups hit the
// in-memory map loaded from the backing file, so judging is idempotent:
// cached verdicts never cost an upstream call. Single writer; put() is
// serialized.
class VerdictStore {
  public:
    explicit VerdictStore(const std::string& path) : path_(path) {
        if (std::filesystem::exists(path)) {
            for_each_jsonl(path, [&](const ojson& j) {
                cache_[j.at("cache_key").get<std::string>()] = j;
            });
        }
    }

    static std::string key(const std::string& trial_id, const std::string& judge_model_id,
                           const std::string& mode) {
        return trial_id + "|" + judge_model_id + "|" + mode;
    }

    bool has(const std::string& k) const {
        std::lock_guard<std::mutex> lock(m_);
        return cache_.count(k) > 0;
    }

    std::optional<ojson> get(const std::string& k) const {
        std::lock_guard<std::mutex> lock(m_);
        auto it = cache_.find(k);
        if (it == cache_.end()) return std::nullopt;
        return it->second;
    }

    void put(const std::string& k, ojson verdict) {
        std::lock_guard<std::mutex> lock(m_);
        if (cache_.count(k)) return;
        verdict["cache_key"] = k;
        if (!writer_) writer_ = std::make_unique<JsonlWriter>(path_);
        writer_->write(verdict);
        cache_[k] = std::move(verdict);
    }

    std::size_t size() const {
        std::lock_guard<std::mutex> lock(m_);
        return cache_.size();
    }

    std::vector<ojson> all() const {
        std::lock_guard<std::mutex> lock(m_);
        std::vector<ojson> out;
        out.reserve(cache_.size());
        for (const auto& [_, v] : cache_) out.push_back(v);
        return out;
    }

  private:
    std::string path_;
    mutable std::mutex m_;
    std::map<std::string, ojson> cache_;
    std::unique_ptr<JsonlWriter> writer_;
};

// ---- rate limiting ----

class TokenBucket {
  public:
    explicit TokenBucket(double per_second) : per_second_(per_second) {}

    void acquire() {
        if (per_second_ <= 0.0) return;
        std::chrono::steady_clock::time_point when;
        {
            std::lock_guard<std::mutex> lock(m_);
            auto now = std::chrono::steady_clock::now();
            if (next_ < now) next_ = now;
            when = next_;
            next_ += std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                std::chrono::duration<double>(1.0 / per_second_));
        }
        std::this_thread::sleep_until(when);
    }

  private:
    double per_second_;
    std::mutex m_;
    std::chrono::steady_clock::time_point next_{};
};

// Runs fn(i) for i in [0, n) on `workers` threads. The first exception wins
// and is rethrown after all workers drain.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex err_m;
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_m);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    int count = std::min<int>(workers, static_cast<int>(n));
    pool.reserve(static_cast<std::size_t>(count));
    for (int w = 0; w < count; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---- agreement statistics ----

// Quadratic-weighted Cohen's kappa over paired integer scores. Undefined
// (zero expected disagreement) inputs, e.g. two constant sequences, raise.
inline double kappa_quadratic(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw data_error("kappa: length mismatch");
    if (a.size() < 2) throw data_error("kappa: need at least 2 pairs");
    int lo = a[0], hi = a[0];
    for (int v : a) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (int v : b) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    int k = hi - lo + 1;
    double n = static_cast<double>(a.size());
    std::vector<std::vector<double>> observed(static_cast<std::size_t>(k),
                                              std::vector<double>(static_cast<std::size_t>(k), 0.0));
    std::vector<double> row(static_cast<std::size_t>(k), 0.0), col(static_cast<std::size_t>(k), 0.0);
    for (std::size_t t = 0; t < a.size(); ++t) {
        std::size_t i = static_cast<std::size_t>(a[t] - lo);
        std::size_t j = static_cast<std::size_t>(b[t] - lo);
        observed[i][j] += 1.0;
        row[i] += 1.0;
        col[j] += 1.0;
    }
    double disagree_obs = 0.0, disagree_exp = 0.0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            double w = static_cast<double>((i - j) * (i - j));
            disagree_obs += w * observed[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            disagree_exp += w * row[static_cast<std::size_t>(i)] * col[static_cast<std::size_t>(j)] / n;
        }
    if (disagree_exp == 0.0) throw data_error("kappa undefined: no expected disagreement");
    return 1.0 - disagree_obs / disagree_exp;
}

// Two-way random-effects single-rater ICC(2,1) for two raters.
inline double icc_two_way(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw data_error("icc: length mismatch");
    std::size_t n = a.size();
    if (n < 2) throw data_error("icc: need at least 2 subjects");
    const double k = 2.0;
    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i) grand += a[i] + b[i];
    grand /= (k * static_cast<double>(n));
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_a += a[i];
        mean_b += b[i];
    }
    mean_a /= static_cast<double>(n);
    mean_b /= static_cast<double>(n);
    double ss_rows = 0.0, ss_cols = 0.0, ss_err = 0.0;
    ss_cols = static_cast<double>(n) * ((mean_a - grand) * (mean_a - grand) + (mean_b - grand) * (mean_b - grand));
    for (std::size_t i = 0; i < n; ++i) {
        double row_mean = (a[i] + b[i]) / 2.0;
        ss_rows += k * (row_mean - grand) * (row_mean - grand);
        ss_err += (a[i] - row_mean - mean_a + grand) * (a[i] - row_mean - mean_a + grand) +
                  (b[i] - row_mean - mean_b + grand) * (b[i] - row_mean - mean_b + grand);
    }
    double msr = ss_rows / static_cast<double>(n - 1);
    double msc = ss_cols / (k - 1.0);
    double mse = ss_err / (static_cast<double>(n - 1) * (k - 1.0));
    double denom = msr + (k - 1.0) * mse + k / static_cast<double>(n) * (msc - mse);
    if (denom == 0.0) throw data_error("icc undefined: zero variance");
    return (msr - mse) / denom;
}

inline double agreement_stats(const std::vector<int>& a, const std::vector<int>& b, const std::string& kind) {
    if (kind == "kappa_quadratic") return kappa_quadratic(a, b);
    if (kind == "icc") {
        std::vector<double> da(a.begin(), a.end()), db(b.begin(), b.end());
        return icc_two_way(da, db);
    }
    throw config_error("unknown agreement statistic '" + kind + "'");
}

}  // namespace vaa
