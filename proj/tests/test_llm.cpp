#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "curling/llm.hpp"

using namespace curling;
using namespace curling::llm;

namespace {

const std::string kSource = CURLING_SOURCE_DIR;

LLMClient mock(const std::string& scenario) {
    LLMSettings s;
    s.fixture_dir = kSource + "/fixtures";
    s.scenario = scenario;
    return LLMClient(s);
}

std::string read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

train::LostGame lost_with_margin(int margin, std::uint64_t seed) {
    train::LostGame g;
    g.trace.seed = seed;
    g.margin = margin;
    return g;
}

RefineConfig quick_refine(long budget) {
    RefineConfig c;
    c.trainer.single_threaded = true;
    c.trainer.num_actors = 1;
    c.trainer.buffer_capacity = 2048;
    c.trainer.hidden = {64};
    c.trainer.ppo.epochs = 4;
    c.trainer.eval_matches = 40;
    c.trainer.max_env_throws = budget;
    c.trainer.eval_interval_throws = 4000;
    c.eval_matches = 20;
    return c;
}

}  // namespace

TEST_CASE("extract_json finds fenced, bare and comma-damaged documents") {
    CHECK(extract_json("text\n```json\n{\"a\": 1}\n```\nmore") == "{\"a\": 1}\n");
    CHECK(extract_json("here it is: {\"a\": {\"b\": 2}} done") == "{\"a\": {\"b\": 2}}");
    CHECK(extract_json("```\n{\"a\": [1, 2,]}\n```") == "{\"a\": [1, 2]}\n");
    CHECK_FALSE(extract_json("no document"));
    CHECK_FALSE(extract_json(""));
}

TEST_CASE("prompt rendering is deterministic and respects the budget") {
    PromptBundle b = PromptBundle::builtin();
    CHECK_FALSE(b.rules.empty());
    CHECK_FALSE(b.apis.empty());
    std::string p1 = b.render("coder", {{"tactic", "draw to the center"}, {"diagnostics", ""}});
    std::string p2 = b.render("coder", {{"tactic", "draw to the center"}, {"diagnostics", ""}});
    CHECK(p1 == p2);
    CHECK(p1.find("draw to the center") != std::string::npos);
    CHECK(p1.find(b.apis) != std::string::npos);
    CHECK(p1.find("{{") == std::string::npos);
    // The grammar lists every feature the parser accepts.
    for (const char* f : {"opp_nearest_dist_to_center", "own_throws_left", "is_last_throw", "center_occupied_by"})
        CHECK(b.apis.find(f) != std::string::npos);
    b.token_budget = 10;
    CHECK_THROWS_AS(b.render("coder", {{"tactic", "x"}}), PromptBudgetError);
    CHECK(estimate_tokens("abcd") == 1);
    CHECK(estimate_tokens("abcde") == 2);
}

TEST_CASE("coder turns the initial tactic into tree_I with its guard branch") {
    LLMClient client = mock("three_iterations");
    CoderResult r = coder_generate(client, "always throw to center", PromptBundle::builtin());
    CHECK(r.attempts == 1);
    CHECK(client.calls() == 1);
    CHECK(dt::semantically_equal(r.tree, dt::builtin_trees().at("tree_I")));
    CHECK(client.transcript()[0].prompt.find("always throw to center") != std::string::npos);
}

TEST_CASE("coder retries after a syntax error") {
    LLMClient client = mock("coder_retry");
    CoderResult r = coder_generate(client, "always throw to center", PromptBundle::builtin());
    CHECK(r.attempts == 2);
    CHECK(client.calls() == 2);
    const std::string& retry_prompt = client.transcript()[1].prompt;
    CHECK(retry_prompt.find("YOUR PREVIOUS DOCUMENT WAS REJECTED") != std::string::npos);
    CHECK(retry_prompt.find("syntax") != std::string::npos);
    CHECK(client.transcript()[0].prompt.find("REJECTED") == std::string::npos);
}

TEST_CASE("coder fails after three unknown-feature replies") {
    LLMClient client = mock("coder_unknown_feature");
    try {
        coder_generate(client, "count stones near the button", PromptBundle::builtin());
        FAIL("expected coder failure");
    } catch (const CoderFailed& e) {
        CHECK(e.diagnostics.find("unknown_feature") != std::string::npos);
        CHECK(e.diagnostics.find("stones_near_button") != std::string::npos);
    }
    CHECK(client.calls() == 3);
}

TEST_CASE("critic proposes the hit tactic after the first iteration") {
    LLMClient client = mock("three_iterations");
    PromptBundle b = PromptBundle::builtin();
    auto tree = coder_generate(client, "always throw to center", b).tree;
    CriticResult c = critic_improve(client, tree, dt::serialize_tree(tree), "no lost games\n", b);
    REQUIRE(c.tactic);
    CHECK(c.tactic->find("hit") != std::string::npos);
    CHECK_FALSE(c.rationale.empty());
    CHECK(client.transcript()[1].role == "critic");
    CHECK(client.transcript()[1].prompt.find("no lost games") != std::string::npos);
}

TEST_CASE("empty critic replies mean no improvement") {
    LLMClient client = mock("critic_empty");
    auto tree = dt::builtin_trees().at("tree_I");
    CriticResult c = critic_improve(client, tree, dt::serialize_tree(tree), "no lost games\n", PromptBundle::builtin());
    CHECK_FALSE(c.tactic);
    CHECK(c.attempts == 3);
    CHECK(client.calls() == 3);

    LLMClient explicit_none = mock("critic_no_improvement");
    CriticResult d =
        critic_improve(explicit_none, tree, dt::serialize_tree(tree), "no lost games\n", PromptBundle::builtin());
    CHECK_FALSE(d.tactic);
    CHECK(explicit_none.calls() == 1);
}

TEST_CASE("missing fixture is an LLM error") {
    LLMClient client = mock("no_such_scenario");
    CHECK_THROWS(client.complete("coder", "hello"));
}

TEST_CASE("live mode without a credential refuses to start") {
    LLMSettings s;
    s.mode = Mode::live;
    s.credential_env = "CURLING_TEST_UNSET_CREDENTIAL";
    ::unsetenv(s.credential_env.c_str());
    CHECK_THROWS_AS(LLMClient{s}, CredentialError);
}

TEST_CASE("serialize_trace sentinel, cap and ordering") {
    CHECK(serialize_trace({}, 5) == "no lost games\n");
    std::vector<train::LostGame> lost;
    int margins[] = {-1, -4, -2, -7, -1, -3, -5};
    for (int i = 0; i < 7; ++i) lost.push_back(lost_with_margin(margins[i], 100 + i));
    std::string text = serialize_trace(lost, 5);
    int headers = 0;
    std::size_t pos = 0;
    while ((pos = text.find("lost game ", pos)) != std::string::npos) {
        ++headers;
        ++pos;
    }
    CHECK(headers == 5);
    // Largest defeats first: -7, -5, -4, -3, -2.
    std::vector<std::string> order{"margin -7, seed 103", "margin -5, seed 106", "margin -4, seed 101",
                                   "margin -3, seed 105", "margin -2, seed 102"};
    std::size_t last = 0;
    for (const auto& o : order) {
        auto at = text.find(o);
        REQUIRE(at != std::string::npos);
        CHECK(at >= last);
        last = at;
    }
    CHECK(text.find("seed 100") == std::string::npos);
}

TEST_CASE("serialized fixture trace matches the golden file") {
    MatchTrace t = trace_from_json(read(kSource + "/tests/data/lost_game_trace.json"));
    std::vector<train::LostGame> lost{{t, Team::A, t.margin_for(Team::A)}};
    std::string text = serialize_trace(lost, 5);
    CHECK(text == read(kSource + "/tests/data/lost_game_trace.txt"));
    int lines = 0;
    for (char c : text) lines += c == '\n';
    CHECK(lines <= kTraceLineBudget);
}

TEST_CASE("refine with a zero training budget stops after one iteration") {
    LLMClient client = mock("three_iterations");
    RefinementReport r = refine_loop("always throw to center", quick_refine(0), client, PromptBundle::builtin());
    CHECK(r.termination == Termination::debugger_no_flaw);
    CHECK(r.iterations.size() == 1);
    CHECK(r.trees.size() == 1);
    CHECK(r.llm_calls == 1);
    CHECK(r.iterations[0].verdict == "no_flaw_found");
}

TEST_CASE("refine stops on max_iterations once a flaw is found") {
    LLMClient client = mock("weak_tree");
    RefineConfig c = quick_refine(12000);
    c.max_iterations = 1;
    RefinementReport r = refine_loop("draw to the far corner", c, client, PromptBundle::builtin());
    CHECK(r.termination == Termination::budget_exhausted);
    REQUIRE(r.iterations.size() == 1);
    CHECK(r.iterations[0].verdict == "flaw_found");
    CHECK(r.iterations[0].debugger_win_rate > 0.55);
}

TEST_CASE("refine reports coder failure") {
    LLMClient client = mock("coder_unknown_feature");
    RefinementReport r = refine_loop("count stones near the button", quick_refine(0), client, PromptBundle::builtin());
    CHECK(r.termination == Termination::coder_failed);
    CHECK(r.iterations.empty());
    CHECK(r.trees.empty());
}

TEST_CASE("report exports name the termination") {
    LLMClient client = mock("three_iterations");
    RefinementReport r = refine_loop("always throw to center", quick_refine(0), client, PromptBundle::builtin());
    auto j = nlohmann::json::parse(r.to_json());
    CHECK(j["termination"] == "debugger_no_flaw");
    CHECK(j["iterations"].size() == 1);
    CHECK(r.to_markdown().find("Termination: `debugger_no_flaw`") != std::string::npos);
}
