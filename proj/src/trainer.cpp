#include "curling/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <thread>

namespace curling::train {

namespace {

constexpr std::uint64_t kEvalSalt = 0x6576616c5f736565ULL;
constexpr std::uint64_t kActorSalt = 0x6163746f725f7365ULL;

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// Learning-side policy that samples from the current snapshot and records the
// pre-GAE part of each transition.
class RecordingPolicy : public Policy {
   public:
    RecordingPolicy(const nn::PolicyNet& net, std::mt19937_64& rng) : net_(net), rng_(rng) {}

    ThrowAction act(const GameState& state) override {
        Transition t;
        t.s = build_features(state, state.thrower);
        auto out = nn::forward(net_, t.s);
        auto sample = nn::sample_action(out.probs, rng_);
        t.a = sample.index;
        t.logp = sample.logp;
        t.v = out.value;
        transitions.push_back(t);
        return from_flat_index(state.config.grid, sample.index);
    }
    std::string name() const override { return "learner"; }

    std::vector<Transition> transitions;

   private:
    const nn::PolicyNet& net_;
    std::mt19937_64& rng_;
};

std::uint64_t episode_seed(std::uint64_t seed, int actor, long episode) {
    return splitmix64(seed ^ kActorSalt ^ splitmix64((static_cast<std::uint64_t>(actor) << 40) + episode));
}

}  // namespace

SharedBuffer::SharedBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity < 2 || capacity % 2 != 0) throw std::invalid_argument("buffer capacity must be even and >= 2");
}

std::size_t SharedBuffer::fill() const {
    std::lock_guard lock(mu_);
    return items_.size();
}

bool SharedBuffer::push_episode(std::vector<Transition> episode) {
    if (episode.size() > capacity_) throw std::invalid_argument("episode larger than buffer capacity");
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return stopped_ || items_.size() + episode.size() <= capacity_; });
    if (stopped_) return false;
    for (auto& t : episode) items_.push_back(t);
    pushed_ += episode.size();
    if (items_.size() >= batch_size()) ready_.notify_one();
    return true;
}

bool SharedBuffer::try_push_episode(std::vector<Transition>& episode) {
    if (episode.size() > capacity_) throw std::invalid_argument("episode larger than buffer capacity");
    std::lock_guard lock(mu_);
    if (stopped_ || items_.size() + episode.size() > capacity_) return false;
    for (auto& t : episode) items_.push_back(t);
    pushed_ += episode.size();
    return true;
}

std::vector<Transition> SharedBuffer::take_batch_locked() {
    std::vector<Transition> batch(items_.begin(), items_.begin() + static_cast<std::ptrdiff_t>(batch_size()));
    items_.erase(items_.begin(), items_.begin() + static_cast<std::ptrdiff_t>(batch_size()));
    drained_ += batch.size();
    not_full_.notify_all();
    return batch;
}

std::optional<std::vector<Transition>> SharedBuffer::drain_batch() {
    std::unique_lock lock(mu_);
    ready_.wait(lock, [&] { return stopped_ || items_.size() >= batch_size(); });
    if (stopped_) return std::nullopt;
    return take_batch_locked();
}

std::optional<std::vector<Transition>> SharedBuffer::try_drain_batch() {
    std::lock_guard lock(mu_);
    if (items_.size() < batch_size()) return std::nullopt;
    return take_batch_locked();
}

void SharedBuffer::stop() {
    std::lock_guard lock(mu_);
    stopped_ = true;
    not_full_.notify_all();
    ready_.notify_all();
}

bool SharedBuffer::stopped() const {
    std::lock_guard lock(mu_);
    return stopped_;
}

std::uint64_t SharedBuffer::total_pushed() const {
    std::lock_guard lock(mu_);
    return pushed_;
}

std::uint64_t SharedBuffer::total_drained() const {
    std::lock_guard lock(mu_);
    return drained_;
}

ModelSource::ModelSource(nn::PolicyNet initial) : net_(std::make_shared<const nn::PolicyNet>(std::move(initial))) {}

void ModelSource::publish(const nn::PolicyNet& net) {
    auto copy = std::make_shared<const nn::PolicyNet>(net);
    std::lock_guard lock(mu_);
    net_ = std::move(copy);
    ++version_;
}

std::shared_ptr<const nn::PolicyNet> ModelSource::snapshot(long* version) const {
    std::lock_guard lock(mu_);
    if (version) *version = version_;
    return net_;
}

long ModelSource::version() const {
    std::lock_guard lock(mu_);
    return version_;
}

NetPolicy::NetPolicy(std::shared_ptr<const nn::PolicyNet> net, bool greedy, std::uint64_t seed)
    : net_(std::move(net)), greedy_(greedy), rng_(seed) {}

ThrowAction NetPolicy::act(const GameState& state) {
    auto out = nn::forward(*net_, build_features(state, state.thrower));
    int index = greedy_ ? nn::greedy_action(out.probs) : nn::sample_action(out.probs, rng_).index;
    return from_flat_index(state.config.grid, index);
}

FarCornerPolicy::FarCornerPolicy(const SimConfig& config)
    : action_(dt::aim_draw(config, {config.field_width - 0.5, config.field_length - 0.5})) {}

PolicyFactory tree_opponent(const dt::DecisionTreeSpec& tree) {
    return [tree] { return std::make_unique<dt::TreePolicy>(tree); };
}

PolicyFactory far_corner_opponent(const SimConfig& config) {
    return [config] { return std::make_unique<FarCornerPolicy>(config); };
}

WinStats evaluate(Policy& policy_a, Policy& policy_b, int n_matches, std::uint64_t seed, const SimConfig& config,
                  int lost_trace_cap) {
    WinStats stats;
    if (n_matches <= 0) return stats;
    for (int i = 0; i < n_matches; ++i) {
        bool a_first = i % 2 == 0;
        Team side = a_first ? Team::A : Team::B;
        MatchTrace trace = a_first ? run_match(policy_a, policy_b, config, seed + static_cast<std::uint64_t>(i))
                                   : run_match(policy_b, policy_a, config, seed + static_cast<std::uint64_t>(i));
        if (!trace.winner) {
            ++stats.draws;
        } else if (*trace.winner == side) {
            ++stats.wins;
        } else {
            ++stats.losses;
            if (lost_trace_cap > 0) {
                int margin = trace.margin_for(side);
                stats.lost_traces.push_back({std::move(trace), side, margin});
                std::stable_sort(stats.lost_traces.begin(), stats.lost_traces.end(),
                                 [](const LostGame& x, const LostGame& y) { return x.margin < y.margin; });
                if (static_cast<int>(stats.lost_traces.size()) > lost_trace_cap) stats.lost_traces.pop_back();
            }
        }
    }
    stats.win_rate = (stats.wins + 0.5 * stats.draws) / n_matches;
    return stats;
}

std::string WinCurve::to_csv() const {
    std::string out = "env_throws,win_rate\n";
    for (const auto& p : points) out += std::to_string(p.env_throws) + "," + fmt("%.6f", p.win_rate) + "\n";
    return out;
}

void TrainerConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
    if (num_actors < 1) fail("trainer.num_actors must be >= 1");
    if (buffer_capacity < 4 * static_cast<std::size_t>(kThrowsPerTeam) || buffer_capacity % 2 != 0)
        fail("trainer.buffer_capacity must be even and hold two episodes");
    if (sync_interval < 1) fail("trainer.sync_interval must be >= 1");
    if (eval_matches < 1) fail("trainer.eval_matches must be >= 1");
    if (!(win_rate_threshold > 0.5 && win_rate_threshold < 1.0)) fail("trainer.win_rate_threshold must be in (0.5, 1)");
    if (max_env_throws < 0) fail("trainer.max_env_throws must be >= 0");
    if (eval_interval_throws < 1) fail("trainer.eval_interval_throws must be >= 1");
    if (plateau_window < 1) fail("trainer.plateau_window must be >= 1");
    if (max_numeric_failures < 1) fail("trainer.max_numeric_failures must be >= 1");
    if (checkpoint_every < 0) fail("trainer.checkpoint_every must be >= 0");
    for (int h : hidden)
        if (h < 1) fail("trainer.hidden widths must be >= 1");
    ppo.validate();
    sim.validate();
}

const char* verdict_name(Verdict v) { return v == Verdict::flaw_found ? "flaw_found" : "no_flaw_found"; }

bool PlateauDetector::add(double win_rate) {
    history.push_back(win_rate);
    if (static_cast<int>(history.size()) < window) return false;
    auto first = history.end() - window;
    auto [lo, hi] = std::minmax_element(first, history.end());
    return *hi - *lo < range;
}

std::vector<double> episode_rewards(const MatchTrace& trace, Team learner_side) {
    std::vector<double> rewards;
    const int me = index_of(learner_side);
    std::array<int, 2> before{0, 0};
    for (std::size_t i = 0; i < trace.throws.size(); ++i) {
        const auto& rec = trace.throws[i];
        if (rec.team == learner_side) rewards.push_back(0.0);
        bool game_end = i + 1 == trace.throws.size() || trace.throws[i + 1].game != rec.game;
        if (game_end && !rewards.empty()) {
            std::array<int, 2> gained{rec.score_after[0] - before[0], rec.score_after[1] - before[1]};
            rewards.back() += gained[me] - gained[1 - me];
            before = rec.score_after;
        }
    }
    if (!rewards.empty() && !trace.aborted) {
        if (trace.winner == learner_side)
            rewards.back() += 1.0;
        else if (trace.winner)
            rewards.back() -= 1.0;
    }
    return rewards;
}

Episode play_episode(const nn::PolicyNet& net, Policy& opponent, Team learner_side, const SimConfig& config,
                     const nn::PPOConfig& ppo, std::uint64_t match_seed, std::mt19937_64& rng) {
    RecordingPolicy learner(net, rng);
    Episode ep;
    ep.trace = learner_side == Team::A ? run_match(learner, opponent, config, match_seed)
                                       : run_match(opponent, learner, config, match_seed);
    if (ep.trace.aborted) {
        if (ep.trace.faulting_team != learner_side)
            throw OpponentError("opponent " + opponent.name() + " failed during rollout: " + ep.trace.fault);
        throw TrainingError("learner failed during rollout: " + ep.trace.fault);
    }
    ep.env_throws = static_cast<int>(ep.trace.throws.size());
    ep.raw_rewards = episode_rewards(ep.trace, learner_side);
    ep.transitions = std::move(learner.transitions);
    for (std::size_t i = 0; i < ep.transitions.size(); ++i) ep.transitions[i].r = ep.raw_rewards[i];
    nn::gae_returns(ep.transitions, ppo.gamma, ppo.lambda);
    return ep;
}

namespace {

class Trainer {
   public:
    Trainer(const PolicyFactory& opponent, const TrainerConfig& cfg, std::uint64_t seed, const LogSink& log)
        : opponent_(opponent),
          cfg_(cfg),
          seed_(seed),
          log_(log),
          net_(nn::PolicyNet::create(kFeatureLength, cfg.hidden, cfg.sim.grid.size(), splitmix64(seed))),
          opt_(net_),
          source_(net_),
          buffer_(cfg.buffer_capacity),
          plateau_{cfg.plateau_window, cfg.plateau_range, {}} {}

    TrainResult run() {
        if (cfg_.max_env_throws == 0) return finish("budget_exhausted", false);
        if (cfg_.single_threaded)
            run_interleaved();
        else
            run_threaded();
        return finish(stop_reason_, true);
    }

   private:
    struct ActorState {
        int id = 0;
        long episodes = 0;
        std::shared_ptr<const nn::PolicyNet> snapshot;
        std::unique_ptr<Policy> opponent;
        std::mt19937_64 rng;
    };

    ActorState make_actor(int id) {
        ActorState a;
        a.id = id;
        a.snapshot = source_.snapshot();
        a.opponent = opponent_();
        a.rng.seed(splitmix64(seed_ ^ kActorSalt ^ static_cast<std::uint64_t>(id + 1)));
        return a;
    }

    Episode actor_episode(ActorState& a) {
        if (a.episodes % cfg_.sync_interval == 0) a.snapshot = source_.snapshot();
        Team side = (a.episodes % 2 == 0) ? Team::A : Team::B;
        Episode ep = play_episode(*a.snapshot, *a.opponent, side, cfg_.sim, cfg_.ppo, episode_seed(seed_, a.id, a.episodes),
                                  a.rng);
        ++a.episodes;
        return ep;
    }

    // Returns true if training should stop.
    bool learner_step(std::vector<Transition> batch, std::size_t fill_before) {
        try {
            nn::update(net_, batch, cfg_.ppo, opt_);
            numeric_failures_ = 0;
        } catch (const nn::NumericError& e) {
            if (++numeric_failures_ >= cfg_.max_numeric_failures) {
                save_checkpoint_file("aborted");
                throw TrainingError(std::string("training aborted after repeated numeric failures: ") + e.what());
            }
            return false;
        }
        ++iterations_;
        source_.publish(net_);
        if (cfg_.checkpoint_every > 0 && iterations_ % cfg_.checkpoint_every == 0)
            save_checkpoint_file("iter_" + std::to_string(iterations_));
        emit("iter=" + std::to_string(iterations_) + " fill=" + std::to_string(fill_before) +
             " win=" + fmt("%.3f", last_win_));
        return false;
    }

    // Returns true if the plateau rule fires.
    bool maybe_evaluate(long env_throws, bool force) {
        if (!force && env_throws < next_eval_) return false;
        while (next_eval_ <= env_throws) next_eval_ += cfg_.eval_interval_throws;
        if (!curve_.points.empty() && curve_.points.back().env_throws == env_throws) return false;
        NetPolicy greedy(std::make_shared<const nn::PolicyNet>(net_), true);
        auto opp = opponent_();
        WinStats s = evaluate(greedy, *opp, cfg_.eval_matches, splitmix64(seed_ ^ kEvalSalt), cfg_.sim, 0);
        last_win_ = s.win_rate;
        curve_.points.push_back({env_throws, s.win_rate});
        emit("eval env_throws=" + std::to_string(env_throws) + " win=" + fmt("%.3f", s.win_rate));
        bool flat = plateau_.add(s.win_rate);
        return flat && env_throws >= cfg_.plateau_min_env_throws;
    }

    void run_interleaved() {
        std::vector<ActorState> actors;
        for (int i = 0; i < cfg_.num_actors; ++i) actors.push_back(make_actor(i));
        long env_throws = 0;
        stop_reason_ = "budget_exhausted";
        while (env_throws < cfg_.max_env_throws) {
            for (auto& a : actors) {
                Episode ep = actor_episode(a);
                env_throws += ep.env_throws;
                if (!buffer_.try_push_episode(ep.transitions)) throw TrainingError("buffer overflow in interleaved mode");
                while (buffer_.ready()) {
                    std::size_t fill = buffer_.fill();
                    learner_step(*buffer_.try_drain_batch(), fill);
                }
                if (maybe_evaluate(env_throws, false)) {
                    stop_reason_ = "plateau";
                    env_throws_ = env_throws;
                    return;
                }
                if (env_throws >= cfg_.max_env_throws) break;
            }
        }
        env_throws_ = env_throws;
    }

    void run_threaded() {
        std::atomic<long> env_throws{0};
        std::atomic<bool> stop{false};
        std::mutex err_mu;
        std::exception_ptr actor_error;
        std::vector<std::thread> threads;
        for (int i = 0; i < cfg_.num_actors; ++i) {
            threads.emplace_back([&, i] {
                try {
                    ActorState a = make_actor(i);
                    while (!stop.load()) {
                        Episode ep = actor_episode(a);
                        if (stop.load()) break;
                        if (!buffer_.push_episode(std::move(ep.transitions))) break;
                        env_throws.fetch_add(ep.env_throws);
                    }
                } catch (...) {
                    std::lock_guard lock(err_mu);
                    if (!actor_error) actor_error = std::current_exception();
                    stop.store(true);
                    buffer_.stop();
                }
            });
        }
        stop_reason_ = "budget_exhausted";
        std::exception_ptr learner_error;
        try {
            while (true) {
                if (env_throws.load() >= cfg_.max_env_throws) break;
                auto batch = buffer_.drain_batch();
                if (!batch) break;
                learner_step(std::move(*batch), buffer_.batch_size());
                if (maybe_evaluate(env_throws.load(), false)) {
                    stop_reason_ = "plateau";
                    break;
                }
            }
        } catch (...) {
            learner_error = std::current_exception();
        }
        stop.store(true);
        buffer_.stop();
        for (auto& t : threads) t.join();
        env_throws_ = env_throws.load();
        if (actor_error) std::rethrow_exception(actor_error);
        if (learner_error) std::rethrow_exception(learner_error);
    }

    TrainResult finish(const std::string& reason, bool final_eval) {
        if (final_eval) maybe_evaluate(env_throws_, true);
        TrainResult r;
        r.net = net_;
        r.curve = curve_;
        r.final_win_rate = curve_.points.empty() ? 0.0 : curve_.points.back().win_rate;
        r.verdict = r.final_win_rate > cfg_.win_rate_threshold ? Verdict::flaw_found : Verdict::no_flaw_found;
        r.env_throws = env_throws_;
        r.iterations = iterations_;
        r.stop_reason = reason;
        save_checkpoint_file("iter_" + std::to_string(iterations_));
        return r;
    }

    void save_checkpoint_file(const std::string& name) {
        if (cfg_.checkpoint_dir.empty()) return;
        std::filesystem::path dir = std::filesystem::path(cfg_.checkpoint_dir) / "ckpt";
        std::filesystem::create_directories(dir);
        nn::save_checkpoint(net_, (dir / name).string());
    }

    void emit(const std::string& line) {
        if (log_) log_(line);
    }

    const PolicyFactory& opponent_;
    TrainerConfig cfg_;
    std::uint64_t seed_;
    const LogSink& log_;
    nn::PolicyNet net_;
    nn::AdamOptimizer opt_;
    ModelSource source_;
    SharedBuffer buffer_;
    PlateauDetector plateau_;
    WinCurve curve_;
    long next_eval_ = 0;
    long env_throws_ = 0;
    long iterations_ = 0;
    int numeric_failures_ = 0;
    double last_win_ = 0.0;
    std::string stop_reason_;
};

}  // namespace

TrainResult train(const PolicyFactory& opponent, const TrainerConfig& cfg, std::uint64_t seed, const LogSink& log) {
    cfg.validate();
    Trainer t(opponent, cfg, seed, log);
    return t.run();
}

TrainResult train(const dt::DecisionTreeSpec& opponent, const TrainerConfig& cfg, std::uint64_t seed,
                  const LogSink& log) {
    return train(tree_opponent(opponent), cfg, seed, log);
}

}  // namespace curling::train
