#pragma once

#include <string>

#include "curling/llm.hpp"
#include "curling/trainer.hpp"

namespace curling {

struct RefineSettings {
    int max_iterations = 5;
    int eval_matches = 200;
    int lost_trace_cap = train::kDefaultLostTraceCap;
};

struct AppPaths {
    std::string out_dir = "out";
    std::string fixture_dir = "fixtures";
};

// Unified configuration file. Every section is optional and overlays the
// defaults; unknown keys are rejected.
struct AppConfig {
    SimConfig sim{};
    train::TrainerConfig trainer{};  // its sim and ppo members are filled from the sections below
    nn::PPOConfig ppo{};
    llm::LLMSettings llm{};
    RefineSettings refine{};
    AppPaths paths{};

    void validate() const;
    // Trainer settings with the shared sim and ppo sections applied.
    train::TrainerConfig trainer_config() const;
    llm::RefineConfig refine_config(std::uint64_t seed) const;
    llm::LLMSettings llm_settings() const;  // fixture_dir taken from paths
};

AppConfig app_config_from_json(const std::string& text);
AppConfig load_app_config(const std::string& path);  // throws ConfigError
std::string app_config_to_json(const AppConfig& config);

}  // namespace curling
