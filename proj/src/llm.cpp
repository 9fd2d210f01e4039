#include "curling/llm.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#ifdef CURLING_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include "curling/embedded_assets.hpp"

namespace curling::llm {

namespace {

std::string fmtd(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw LLMError("mock fixture missing: " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string asset_prompt(const std::string& name) {
    for (const auto& [n, text] : assets::kPrompts)
        if (name == n) return text;
    throw std::out_of_range("no bundled prompt " + name);
}

struct Url {
    std::string scheme_host;
    std::string path;
};

Url split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw LLMError("endpoint must be an absolute URL: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string team_letter(Team t) { return t == Team::A ? "A" : "B"; }

}  // namespace

void LLMSettings::validate() const {
    if (max_retries < 1) throw std::invalid_argument("llm.max_retries must be >= 1");
    if (temperature < 0) throw std::invalid_argument("llm.temperature must be >= 0");
    if (timeout_seconds < 1) throw std::invalid_argument("llm.timeout_seconds must be >= 1");
    if (mode == Mode::live && endpoint.empty()) throw std::invalid_argument("llm.endpoint is required in live mode");
}

LLMClient::LLMClient(LLMSettings settings) : settings_(std::move(settings)) {
    settings_.validate();
    if (settings_.mode == Mode::live) {
        const char* key = std::getenv(settings_.credential_env.c_str());
        if (!key || !*key) throw CredentialError("credential missing: set " + settings_.credential_env);
        credential_ = key;
    }
}

std::string LLMClient::complete(const std::string& role, const std::string& prompt) {
    int index = calls();
    std::string reply = settings_.mode == Mode::mock ? mock_response(index) : live_response(prompt);
    transcript_.push_back({role, prompt, reply});
    return reply;
}

std::string LLMClient::mock_response(int index) const {
    auto path = std::filesystem::path(settings_.fixture_dir) / settings_.scenario / (std::to_string(index) + ".txt");
    return read_file(path);
}

std::string LLMClient::live_response(const std::string& prompt) const {
    Url url = split_url(settings_.endpoint);
    nlohmann::json body = {{"model", settings_.model},
                           {"temperature", settings_.temperature},
                           {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
    httplib::Client cli(url.scheme_host);
    cli.set_connection_timeout(settings_.timeout_seconds, 0);
    cli.set_read_timeout(settings_.timeout_seconds, 0);
    httplib::Headers headers{{"Authorization", "Bearer " + credential_}};
    auto res = cli.Post(url.path, headers, body.dump(), "application/json");
    if (!res) throw LLMError("LLM request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw LLMError("LLM endpoint returned HTTP " + std::to_string(res->status));
    try {
        auto j = nlohmann::json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw LLMError(std::string("unexpected LLM response: ") + e.what());
    }
}

PromptBundle PromptBundle::builtin() {
    PromptBundle b;
    b.rules = asset_prompt("rules");
    b.apis = asset_prompt("apis");
    b.templates["coder"] = asset_prompt("coder");
    b.templates["critic"] = asset_prompt("critic");
    return b;
}

std::string PromptBundle::render(const std::string& template_name,
                                 const std::map<std::string, std::string>& vars) const {
    auto it = templates.find(template_name);
    if (it == templates.end()) throw std::out_of_range("no prompt template " + template_name);
    std::map<std::string, std::string> all = vars;
    all["rules"] = rules;
    all["apis"] = apis;
    const std::string& t = it->second;
    std::string out;
    std::size_t pos = 0;
    while (pos < t.size()) {
        auto open = t.find("{{", pos);
        if (open == std::string::npos) {
            out += t.substr(pos);
            break;
        }
        auto close = t.find("}}", open + 2);
        if (close == std::string::npos) {
            out += t.substr(pos);
            break;
        }
        out += t.substr(pos, open - pos);
        auto v = all.find(t.substr(open + 2, close - open - 2));
        if (v != all.end()) out += v->second;
        pos = close + 2;
    }
    if (estimate_tokens(out) > token_budget)
        throw PromptBudgetError(template_name + " prompt needs about " + std::to_string(estimate_tokens(out)) +
                                " tokens, budget is " + std::to_string(token_budget));
    return out;
}

int estimate_tokens(const std::string& text) { return static_cast<int>((text.size() + 3) / 4); }

std::optional<std::string> extract_json(const std::string& reply) {
    std::string body;
    static const std::regex fence("```(?:json|JSON)?[ \\t]*\\n([\\s\\S]*?)```");
    std::smatch m;
    if (std::regex_search(reply, m, fence)) {
        body = m[1].str();
    } else {
        auto open = reply.find('{');
        auto close = reply.rfind('}');
        if (open == std::string::npos || close == std::string::npos || close < open) return std::nullopt;
        body = reply.substr(open, close - open + 1);
    }
    static const std::regex trailing_comma(",(\\s*[}\\]])");
    body = std::regex_replace(body, trailing_comma, "$1");
    if (body.find_first_not_of(" \t\r\n") == std::string::npos) return std::nullopt;
    return body;
}

CoderResult coder_generate(LLMClient& client, const std::string& tactic, const PromptBundle& bundle) {
    std::string diagnostics;
    const int attempts = client.settings().max_retries;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        std::string feedback;
        if (!diagnostics.empty())
            feedback = "\nYOUR PREVIOUS DOCUMENT WAS REJECTED\n" + diagnostics + "Fix every problem listed above.\n";
        std::string reply = client.complete("coder", bundle.render("coder", {{"tactic", tactic}, {"diagnostics", feedback}}));
        auto doc = extract_json(reply);
        if (!doc) {
            diagnostics = "- reply contained no JSON document\n";
            continue;
        }
        try {
            return {dt::parse_tree(*doc), *doc, attempt};
        } catch (const dt::TreeParseError& e) {
            diagnostics.clear();
            for (const auto& d : e.diagnostics()) diagnostics += "- " + d.to_string() + "\n";
        }
    }
    throw CoderFailed("coder produced no valid tree after " + std::to_string(attempts) + " attempts", diagnostics);
}

CriticResult critic_improve(LLMClient& client, const dt::DecisionTreeSpec& old_tree, const std::string& code_text,
                            const std::string& trace_text, const PromptBundle& bundle) {
    CriticResult result;
    std::string prompt = bundle.render(
        "critic", {{"tactic", old_tree.comment.empty() ? old_tree.name : old_tree.comment}, {"code", code_text}, {"trace", trace_text}});
    const int attempts = client.settings().max_retries;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        result.attempts = attempt;
        auto doc = extract_json(client.complete("critic", prompt));
        if (!doc) continue;
        try {
            auto j = nlohmann::json::parse(*doc);
            if (!j.is_object() || !j.contains("tactic") || !j["tactic"].is_string()) continue;
            result.rationale = j.value("analysis", std::string{});
            std::string tactic = j["tactic"].get<std::string>();
            if (tactic.find_first_not_of(" \t\r\n") != std::string::npos) result.tactic = tactic;
            return result;
        } catch (const nlohmann::json::exception&) {
        }
    }
    return result;
}

std::string serialize_trace(std::vector<train::LostGame> lost, int cap) {
    if (lost.empty() || cap <= 0) return "no lost games\n";
    std::stable_sort(lost.begin(), lost.end(),
                     [](const train::LostGame& a, const train::LostGame& b) { return a.margin < b.margin; });
    if (static_cast<int>(lost.size()) > cap) lost.resize(static_cast<std::size_t>(cap));
    std::string out;
    for (std::size_t k = 0; k < lost.size(); ++k) {
        const auto& g = lost[k];
        const auto& t = g.trace;
        std::vector<std::string> lines;
        lines.push_back("lost game " + std::to_string(k + 1) + " of " + std::to_string(lost.size()) + ": tree played " +
                        team_letter(g.side) + ", final A " + std::to_string(t.total[0]) + " - B " +
                        std::to_string(t.total[1]) + ", margin " + std::to_string(g.margin) + ", seed " +
                        std::to_string(t.seed));
        if (t.aborted) lines.push_back("aborted: " + t.fault);
        lines.push_back("game throw team x0 angle speed | stones after | score A-B");
        for (const auto& r : t.throws) {
            std::string line = std::to_string(r.game) + " " + std::to_string(r.index + 1) + " " + team_letter(r.team) +
                               " " + fmtd("%.2f", r.values.x0) + " " + fmtd("%.1f", r.values.angle_deg) + " " +
                               fmtd("%.2f", r.values.speed) + " |";
            if (r.stones_after.empty()) line += " none";
            for (const auto& s : r.stones_after)
                line += " " + team_letter(s.team) + "(" + fmtd("%.2f", s.x) + "," + fmtd("%.2f", s.y) + ")";
            line += " | " + std::to_string(r.score_after[0]) + "-" + std::to_string(r.score_after[1]);
            lines.push_back(line);
        }
        if (static_cast<int>(lines.size()) > kTraceLineBudget) {
            lines.resize(kTraceLineBudget - 1);
            lines.push_back("...");
        }
        for (const auto& l : lines) out += l + "\n";
        if (k + 1 < lost.size()) out += "\n";
    }
    return out;
}

const char* termination_name(Termination t) {
    switch (t) {
        case Termination::debugger_no_flaw:
            return "debugger_no_flaw";
        case Termination::critic_converged:
            return "critic_converged";
        case Termination::budget_exhausted:
            return "budget_exhausted";
        case Termination::coder_failed:
            return "coder_failed";
    }
    return "unknown";
}

std::string RefinementReport::to_json() const {
    nlohmann::ordered_json j;
    j["termination"] = termination_name(termination);
    j["detail"] = detail;
    j["llm_calls"] = llm_calls;
    auto its = nlohmann::ordered_json::array();
    for (const auto& r : iterations) {
        nlohmann::ordered_json e;
        e["iteration"] = r.iteration;
        e["tree"] = nlohmann::ordered_json::parse(dt::serialize_tree(r.tree));
        e["verdict"] = r.verdict;
        e["debugger_win_rate"] = r.debugger_win_rate;
        e["lost_digest"] = r.lost_digest;
        e["critic_rationale"] = r.critic_rationale;
        e["next_tactic"] = r.next_tactic;
        its.push_back(std::move(e));
    }
    j["iterations"] = std::move(its);
    auto ts = nlohmann::ordered_json::array();
    for (const auto& t : trees) ts.push_back(nlohmann::ordered_json::parse(dt::serialize_tree(t)));
    j["trees"] = std::move(ts);
    return j.dump(2) + "\n";
}

std::string RefinementReport::to_markdown() const {
    std::string md = "# Refinement report\n\n";
    md += "Termination: `" + std::string(termination_name(termination)) + "`";
    if (!detail.empty()) md += " (" + detail + ")";
    md += "\n\nTrees produced: " + std::to_string(trees.size()) + ". LLM calls: " + std::to_string(llm_calls) + ".\n";
    for (const auto& r : iterations) {
        md += "\n## Iteration " + std::to_string(r.iteration) + "\n\n";
        md += "- tree: `" + r.tree.name + "`\n";
        md += "- debugger verdict: " + r.verdict + " (win rate " + fmtd("%.3f", r.debugger_win_rate) + ")\n";
        if (!r.lost_digest.empty()) md += "- lost games: " + r.lost_digest + "\n";
        if (!r.critic_rationale.empty()) md += "\n### Critic analysis\n\n" + r.critic_rationale + "\n";
        if (!r.next_tactic.empty()) md += "\n### Next tactic\n\n" + r.next_tactic + "\n";
    }
    return md;
}

RefinementReport refine_loop(const std::string& initial_tactic, const RefineConfig& cfg, LLMClient& client,
                             const PromptBundle& bundle, const train::LogSink& log) {
    if (cfg.max_iterations < 1) throw std::invalid_argument("refine.max_iterations must be >= 1");
    RefinementReport report;
    auto emit = [&](const std::string& s) {
        if (log) log(s);
    };
    auto done = [&](Termination t, std::string detail) {
        report.termination = t;
        report.detail = std::move(detail);
        report.llm_calls = client.calls();
        emit(std::string("termination=") + termination_name(t));
        return report;
    };

    dt::DecisionTreeSpec tree;
    try {
        tree = coder_generate(client, initial_tactic, bundle).tree;
    } catch (const CoderFailed& e) {
        return done(Termination::coder_failed, e.what() + std::string(": ") + e.diagnostics);
    }
    report.trees.push_back(tree);

    for (int it = 1; it <= cfg.max_iterations; ++it) {
        IterationRecord rec;
        rec.iteration = it;
        rec.tree = tree;
        emit("iteration=" + std::to_string(it) + " tree=" + tree.name);
        train::TrainResult tr;
        try {
            tr = train::train(tree, cfg.trainer, cfg.seed + static_cast<std::uint64_t>(it), log);
        } catch (const train::OpponentError& e) {
            report.iterations.push_back(rec);
            return done(Termination::coder_failed, e.what());
        }
        rec.verdict = train::verdict_name(tr.verdict);
        rec.debugger_win_rate = tr.final_win_rate;
        if (tr.verdict == train::Verdict::no_flaw_found) {
            report.iterations.push_back(rec);
            return done(Termination::debugger_no_flaw, "");
        }
        if (it == cfg.max_iterations) {
            report.iterations.push_back(rec);
            return done(Termination::budget_exhausted, "max_iterations reached");
        }

        dt::TreePolicy tree_policy(tree);
        train::NetPolicy debugger(std::make_shared<const nn::PolicyNet>(tr.net), true);
        train::WinStats stats =
            train::evaluate(tree_policy, debugger, cfg.eval_matches, cfg.seed ^ 0x5eedULL, cfg.trainer.sim, cfg.lost_trace_cap);
        rec.lost_digest = std::to_string(stats.losses) + " of " + std::to_string(stats.matches()) + " lost";
        if (!stats.lost_traces.empty())
            rec.lost_digest += ", worst margin " + std::to_string(stats.lost_traces.front().margin);

        std::string code = dt::serialize_tree(tree);
        CriticResult critic;
        for (int cap = cfg.lost_trace_cap;; --cap) {
            try {
                critic = critic_improve(client, tree, code, serialize_trace(stats.lost_traces, cap), bundle);
                break;
            } catch (const PromptBudgetError&) {
                if (cap <= 0) throw;
            }
        }
        rec.critic_rationale = critic.rationale;
        if (!critic.tactic) {
            report.iterations.push_back(rec);
            return done(Termination::critic_converged, "no improvement proposed");
        }
        rec.next_tactic = *critic.tactic;
        report.iterations.push_back(rec);

        dt::DecisionTreeSpec next;
        try {
            next = coder_generate(client, *critic.tactic, bundle).tree;
        } catch (const CoderFailed& e) {
            return done(Termination::coder_failed, e.what() + std::string(": ") + e.diagnostics);
        }
        report.trees.push_back(next);
        if (dt::semantically_equal(next, tree)) return done(Termination::critic_converged, "new tree semantically equal");
        tree = std::move(next);
    }
    return done(Termination::budget_exhausted, "max_iterations reached");
}

}  // namespace curling::llm
