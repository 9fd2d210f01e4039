#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "curling/dt_policy.hpp"
#include "curling/trainer.hpp"

namespace curling::llm {

class CredentialError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};
class LLMError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};
class PromptBudgetError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

enum class Mode { mock, live };

struct LLMSettings {
    Mode mode = Mode::mock;
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model = "gpt-4o";
    double temperature = 0.2;
    int max_retries = 3;  // total attempts per coder/critic request
    int timeout_seconds = 120;
    std::string credential_env = "CURLING_LLM_API_KEY";
    std::string fixture_dir = "fixtures";
    std::string scenario = "three_iterations";

    void validate() const;
};

struct Exchange {
    std::string role;  // coder or critic
    std::string prompt;
    std::string response;
};

class LLMClient {
   public:
    // Live mode reads the credential from settings.credential_env and throws
    // CredentialError if it is unset.
    explicit LLMClient(LLMSettings settings);

    std::string complete(const std::string& role, const std::string& prompt);

    const LLMSettings& settings() const { return settings_; }
    int calls() const { return static_cast<int>(transcript_.size()); }
    const std::vector<Exchange>& transcript() const { return transcript_; }

   private:
    std::string mock_response(int index) const;
    std::string live_response(const std::string& prompt) const;

    LLMSettings settings_;
    std::string credential_;
    std::vector<Exchange> transcript_;
};

struct PromptBundle {
    std::string rules;
    std::string apis;
    std::map<std::string, std::string> templates;  // coder, critic
    int token_budget = 12000;

    static PromptBundle builtin();
    // Substitutes {{name}} placeholders; the rules and apis texts are always bound.
    std::string render(const std::string& template_name, const std::map<std::string, std::string>& vars) const;
};

// Rough token count used for prompt budgeting (one token per four bytes).
int estimate_tokens(const std::string& text);

// Pulls the JSON document out of a model reply: prefers a fenced block, then
// the outermost braces, and drops trailing commas.
std::optional<std::string> extract_json(const std::string& reply);

class CoderFailed : public std::runtime_error {
   public:
    CoderFailed(const std::string& what, std::string diagnostics)
        : std::runtime_error(what), diagnostics(std::move(diagnostics)) {}
    std::string diagnostics;
};

struct CoderResult {
    dt::DecisionTreeSpec tree;
    std::string document;  // the accepted DSL text
    int attempts = 0;
};

// Throws CoderFailed once every attempt produced an invalid document.
CoderResult coder_generate(LLMClient& client, const std::string& tactic, const PromptBundle& bundle);

struct CriticResult {
    std::optional<std::string> tactic;  // nullopt: no improvement proposed
    std::string rationale;
    int attempts = 0;
};

CriticResult critic_improve(LLMClient& client, const dt::DecisionTreeSpec& old_tree, const std::string& code_text,
                            const std::string& trace_text, const PromptBundle& bundle);

inline constexpr int kTraceLineBudget = 20;

// Renders up to `cap` lost games, largest defeat first.
std::string serialize_trace(std::vector<train::LostGame> lost, int cap);

enum class Termination { debugger_no_flaw, critic_converged, budget_exhausted, coder_failed };
const char* termination_name(Termination t);

struct IterationRecord {
    int iteration = 0;
    dt::DecisionTreeSpec tree;
    std::string verdict;
    double debugger_win_rate = 0.0;
    std::string lost_digest;
    std::string critic_rationale;
    std::string next_tactic;
};

struct RefinementReport {
    std::vector<IterationRecord> iterations;
    std::vector<dt::DecisionTreeSpec> trees;  // every tree the Coder produced, in order
    Termination termination = Termination::budget_exhausted;
    std::string detail;
    int llm_calls = 0;

    std::string to_json() const;
    std::string to_markdown() const;
};

struct RefineConfig {
    int max_iterations = 5;
    train::TrainerConfig trainer{};
    int eval_matches = 200;
    int lost_trace_cap = train::kDefaultLostTraceCap;
    std::uint64_t seed = 0;
};

RefinementReport refine_loop(const std::string& initial_tactic, const RefineConfig& cfg, LLMClient& client,
                             const PromptBundle& bundle, const train::LogSink& log = {});

}  // namespace curling::llm
