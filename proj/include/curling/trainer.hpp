#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "curling/dt_policy.hpp"
#include "curling/policy_net.hpp"

namespace curling::train {

using nn::Transition;

// Raised when the opponent policy faults during a rollout; the message names
// the opponent so callers can attribute the failure to it.
class OpponentError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Bounded FIFO of transitions. Episodes are pushed atomically; the learner
// takes exactly capacity/2 transitions per drain.
class SharedBuffer {
   public:
    explicit SharedBuffer(std::size_t capacity);

    std::size_t capacity() const { return capacity_; }
    std::size_t batch_size() const { return capacity_ / 2; }
    std::size_t fill() const;
    bool ready() const { return fill() >= batch_size(); }

    // Blocks while the episode does not fit. Returns false if stopped first, in
    // which case nothing was pushed.
    bool push_episode(std::vector<Transition> episode);
    // Non-blocking form; returns false (and pushes nothing) if it does not fit.
    bool try_push_episode(std::vector<Transition>& episode);

    // Blocks until a batch is available; nullopt once stopped.
    std::optional<std::vector<Transition>> drain_batch();
    std::optional<std::vector<Transition>> try_drain_batch();

    void stop();
    bool stopped() const;

    std::uint64_t total_pushed() const;
    std::uint64_t total_drained() const;

   private:
    std::vector<Transition> take_batch_locked();

    std::size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable not_full_;
    std::condition_variable ready_;
    std::deque<Transition> items_;
    bool stopped_ = false;
    std::uint64_t pushed_ = 0;
    std::uint64_t drained_ = 0;
};

// Versioned parameter snapshots published by the learner.
class ModelSource {
   public:
    explicit ModelSource(nn::PolicyNet initial);
    void publish(const nn::PolicyNet& net);
    std::shared_ptr<const nn::PolicyNet> snapshot(long* version = nullptr) const;
    long version() const;

   private:
    mutable std::mutex mu_;
    std::shared_ptr<const nn::PolicyNet> net_;
    long version_ = 0;
};

class NetPolicy : public Policy {
   public:
    NetPolicy(std::shared_ptr<const nn::PolicyNet> net, bool greedy = true, std::uint64_t seed = 0);
    ThrowAction act(const GameState& state) override;
    std::string name() const override { return greedy_ ? "net_greedy" : "net_sampled"; }

   private:
    std::shared_ptr<const nn::PolicyNet> net_;
    bool greedy_;
    std::mt19937_64 rng_;
};

// Throws every stone at a fixed point near the far corner of the field.
class FarCornerPolicy : public Policy {
   public:
    explicit FarCornerPolicy(const SimConfig& config);
    ThrowAction act(const GameState&) override { return action_; }
    std::string name() const override { return "far_corner"; }

   private:
    ThrowAction action_;
};

using PolicyFactory = std::function<std::unique_ptr<Policy>()>;
PolicyFactory tree_opponent(const dt::DecisionTreeSpec& tree);
PolicyFactory far_corner_opponent(const SimConfig& config);

struct LostGame {
    MatchTrace trace;
    Team side = Team::A;  // side played by policy_a
    int margin = 0;       // policy_a points minus opponent points
};

struct WinStats {
    int wins = 0;
    int losses = 0;
    int draws = 0;
    double win_rate = 0.0;  // (wins + draws/2) / matches
    std::vector<LostGame> lost_traces;  // worst margin first
    int matches() const { return wins + losses + draws; }
};

inline constexpr int kDefaultLostTraceCap = 5;

// Match i uses seed + i; policy_a serves first on even i.
WinStats evaluate(Policy& policy_a, Policy& policy_b, int n_matches, std::uint64_t seed, const SimConfig& config = {},
                  int lost_trace_cap = kDefaultLostTraceCap);

struct CurvePoint {
    long env_throws = 0;
    double win_rate = 0.0;
    bool operator==(const CurvePoint&) const = default;
};

struct WinCurve {
    std::vector<CurvePoint> points;
    std::string to_csv() const;
};

struct TrainerConfig {
    int num_actors = 4;
    std::size_t buffer_capacity = 16384;
    nn::PPOConfig ppo{};
    std::vector<int> hidden{128, 128};
    int sync_interval = 1;  // actor episodes between model refreshes
    int eval_matches = 200;
    double win_rate_threshold = 0.55;
    long max_env_throws = 2'000'000;
    long eval_interval_throws = 100'000;
    // Evaluations needed before the plateau rule may stop training.
    int plateau_window = 5;
    double plateau_range = 0.03;
    long plateau_min_env_throws = 0;
    // Deterministic round-robin of actors and learner on the calling thread.
    bool single_threaded = false;
    int max_numeric_failures = 3;
    std::string checkpoint_dir;  // empty: no checkpoints on disk
    int checkpoint_every = 0;    // learner iterations; 0 disables periodic checkpoints
    SimConfig sim{};

    void validate() const;
};

enum class Verdict { flaw_found, no_flaw_found };
const char* verdict_name(Verdict v);

struct TrainResult {
    nn::PolicyNet net;
    WinCurve curve;
    Verdict verdict = Verdict::no_flaw_found;
    double final_win_rate = 0.0;
    long env_throws = 0;
    long iterations = 0;
    std::string stop_reason;  // budget_exhausted or plateau
};

using LogSink = std::function<void(const std::string&)>;

// Plays one match as the learning side against the opponent and returns the
// GAE-processed transitions; `raw_rewards` receives the unprocessed rewards.
struct Episode {
    std::vector<Transition> transitions;
    std::vector<double> raw_rewards;
    int env_throws = 0;
    MatchTrace trace;
};
Episode play_episode(const nn::PolicyNet& net, Policy& opponent, Team learner_side, const SimConfig& config,
                     const nn::PPOConfig& ppo, std::uint64_t match_seed, std::mt19937_64& rng);

std::vector<double> episode_rewards(const MatchTrace& trace, Team learner_side);

TrainResult train(const PolicyFactory& opponent, const TrainerConfig& cfg, std::uint64_t seed, const LogSink& log = {});
TrainResult train(const dt::DecisionTreeSpec& opponent, const TrainerConfig& cfg, std::uint64_t seed,
                  const LogSink& log = {});

struct PlateauDetector {
    int window = 5;
    double range = 0.03;
    std::vector<double> history;
    // Records a value and reports whether the last `window` values lie within `range`.
    bool add(double win_rate);
};

}  // namespace curling::train
