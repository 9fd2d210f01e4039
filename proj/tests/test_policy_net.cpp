#include <doctest.h>

#include <cmath>
#include <random>

#include "curling/policy_net.hpp"
#include "oracles.hpp"

using namespace curling;
using namespace curling::nn;

namespace {

FeatureVector random_features(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1, 1);
    FeatureVector f;
    for (double& v : f.values) v = u(rng);
    return f;
}

PolicyNet zero_net(int actions) {
    PolicyNet n = PolicyNet::create(kFeatureLength, {4}, actions, 1);
    for (double* p : n.parameters()) *p = 0.0;
    return n;
}

std::vector<Transition> random_batch(const PolicyNet& net, int n, std::mt19937_64& rng) {
    std::vector<Transition> b;
    std::normal_distribution<double> g(0, 1);
    for (int i = 0; i < n; ++i) {
        Transition t;
        t.s = random_features(rng);
        auto f = forward(net, t.s);
        t.a = sample_action(f.probs, rng).index;
        // Stored logp drifts from the current one so ratios leave 1.
        t.logp = std::log(f.probs(t.a)) + 0.1 * g(rng);
        t.v = f.value;
        t.r = g(rng);
        t.advantage = g(rng);
        b.push_back(t);
    }
    return b;
}

}  // namespace

TEST_CASE("zeroed final layers give a uniform policy and zero value") {
    PolicyNet n = PolicyNet::create(kFeatureLength, {8, 8}, 6, 3);
    for (auto* layer : {&n.policy_head, &n.value_head}) {
        layer->weight.setZero();
        layer->bias.setZero();
    }
    std::mt19937_64 rng(1);
    auto f = forward(n, random_features(rng));
    for (int i = 0; i < 6; ++i) CHECK(f.probs(i) == doctest::Approx(1.0 / 6).epsilon(1e-12));
    CHECK(f.value == 0.0);
}

TEST_CASE("forward is deterministic and normalized") {
    PolicyNet n = PolicyNet::create(kFeatureLength, {16}, 30, 9);
    std::mt19937_64 rng(2);
    for (int i = 0; i < 50; ++i) {
        FeatureVector x = random_features(rng);
        auto a = forward(n, x), b = forward(n, x);
        CHECK(a.probs == b.probs);
        CHECK(a.value == b.value);
        CHECK(std::abs(a.probs.sum() - 1.0) < 1e-9);
        CHECK(a.probs.minCoeff() >= 0.0);
    }
}

TEST_CASE("forward rejects a wrong input length") {
    PolicyNet n = PolicyNet::create(kFeatureLength, {4}, 3, 1);
    std::vector<double> x(5, 0.0);
    CHECK_THROWS_AS(forward(n, x), ShapeError);
}

TEST_CASE("one hidden unit toy net matches hand arithmetic") {
    PolicyNet n = PolicyNet::create(2, {1}, 2, 1);
    n.trunk[0].weight << 0.5, -1.0;
    n.trunk[0].bias << 0.1;
    n.policy_head.weight << 2.0, -1.0;
    n.policy_head.bias << 0.0, 0.3;
    n.value_head.weight << 1.5;
    n.value_head.bias << -0.2;
    std::vector<double> x{1.0, 0.25};
    double h = std::tanh(0.5 * 1.0 - 1.0 * 0.25 + 0.1);
    double z0 = 2.0 * h, z1 = -h + 0.3;
    double p0 = std::exp(z0) / (std::exp(z0) + std::exp(z1));
    auto f = forward(n, x);
    CHECK(f.probs(0) == doctest::Approx(p0).epsilon(1e-12));
    CHECK(f.probs(1) == doctest::Approx(1 - p0).epsilon(1e-12));
    CHECK(f.value == doctest::Approx(1.5 * h - 0.2).epsilon(1e-12));
}

TEST_CASE("gae_returns small cases") {
    std::vector<Transition> t(2);
    t[0].r = 1;
    gae_returns(t, 1.0, 1.0);
    CHECK(t[0].advantage == 1.0);
    CHECK(t[1].advantage == 0.0);
    CHECK(t[0].r == 1.0);
    CHECK(t[1].r == 0.0);

    std::vector<Transition> one(1);
    one[0].r = 1;
    one[0].v = 0.5;
    gae_returns(one, 0.9, 0.95);
    CHECK(one[0].advantage == doctest::Approx(0.5));
    CHECK(one[0].r == doctest::Approx(1.0));

    std::vector<Transition> empty;
    CHECK_NOTHROW(gae_returns(empty, 0.99, 0.95));
}

TEST_CASE("gae_returns recursion equals the closed-form sum") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0, 1);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Transition> t(20);
        std::vector<double> r, v;
        for (auto& x : t) {
            x.r = g(rng);
            x.v = g(rng);
            r.push_back(x.r);
            v.push_back(x.v);
        }
        double gamma = u(rng), lambda = u(rng);
        gae_returns(t, gamma, lambda);
        auto d = oracle::closed_form_gae(r, v, gamma, lambda);
        for (std::size_t i = 0; i < t.size(); ++i) {
            CHECK(std::abs(t[i].advantage - d[i]) < 1e-9);
            CHECK(std::abs(t[i].r - (d[i] + v[i])) < 1e-9);
        }
    }
}

TEST_CASE("clip branches, idempotence and interior identity") {
    CHECK(clip(1.5, 0.2) == doctest::Approx(1.2));
    CHECK(clip(1.0, 0.2) == 1.0);
    CHECK(clip(0.5, 0.2) == doctest::Approx(0.8));
    for (double r = 0.0; r < 3.0; r += 0.01) {
        CHECK(clip(clip(r, 0.3), 0.3) == clip(r, 0.3));
        if (r >= 0.7 && r <= 1.3) CHECK(clip(r, 0.3) == r);
    }
}

TEST_CASE("loss terms at ratio one and for a uniform two-action policy") {
    PolicyNet n = zero_net(2);
    n.value_head.bias << 0.5;
    PPOConfig cfg;
    cfg.value_coef = 0.5;
    cfg.entropy_coef = 0.0;
    Transition t;
    t.a = 1;
    t.r = 1.0;
    t.v = 0.5;
    t.logp = std::log(0.5);
    t.advantage = 0.0;
    std::vector<Transition> b{t};
    LossTerms l = ppo_loss(n, b, cfg);
    CHECK(l.total == doctest::Approx(0.125).epsilon(1e-12));
    CHECK(l.policy == 0.0);
    CHECK(l.entropy == doctest::Approx(-std::log(2.0)).epsilon(1e-12));

    cfg.normalize_advantages = false;
    std::vector<Transition> batch;
    double mean_adv = 0;
    for (int i = 0; i < 5; ++i) {
        Transition x = t;
        x.advantage = i - 1.5;
        mean_adv += x.advantage / 5;
        batch.push_back(x);
    }
    CHECK(ppo_loss(n, batch, cfg).policy == doctest::Approx(-mean_adv).epsilon(1e-12));
}

TEST_CASE("non-finite loss is a numeric error") {
    PolicyNet n = zero_net(2);
    Transition t;
    t.r = std::nan("");
    std::vector<Transition> b{t};
    CHECK_THROWS_AS(ppo_loss(n, b, PPOConfig{}), NumericError);
    AdamOptimizer opt(n);
    PolicyNet before = n;
    CHECK_THROWS_AS(update(n, b, PPOConfig{}, opt), NumericError);
    CHECK(n == before);
}

TEST_CASE("analytic gradient matches central finite differences") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 4; ++trial) {
        PolicyNet n = PolicyNet::create(kFeatureLength, {5, 4}, 7, 20 + trial);
        // Larger head weights than the default init so every path carries signal.
        std::normal_distribution<double> g(0, 0.5);
        for (auto& w : n.policy_head.weight.reshaped()) w = g(rng);
        auto batch = random_batch(n, 12, rng);
        PPOConfig cfg;
        cfg.entropy_coef = 0.05;
        LossAndGrad lg = ppo_loss_and_grad(n, batch, cfg);
        PolicyNet probe = n;
        auto params = probe.parameters();
        auto grads = lg.grad.parameters();
        const double h = 1e-5;
        double worst = 0.0;
        for (std::size_t k = 0; k < params.size(); ++k) {
            double keep = *params[k];
            *params[k] = keep + h;
            double up = ppo_loss(probe, batch, cfg).total;
            *params[k] = keep - h;
            double down = ppo_loss(probe, batch, cfg).total;
            *params[k] = keep;
            double numeric = (up - down) / (2 * h);
            worst = std::max(worst, oracle::relative_error(*grads[k], numeric));
        }
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("zero learning rate leaves the net unchanged") {
    std::mt19937_64 rng(7);
    PolicyNet n = PolicyNet::create(kFeatureLength, {8}, 5, 2);
    auto batch = random_batch(n, 16, rng);
    PPOConfig cfg;
    cfg.learning_rate = 0.0;
    PolicyNet before = n;
    AdamOptimizer opt(n);
    update(n, batch, cfg, opt);
    CHECK(n == before);
}

TEST_CASE("repeated updates on a fixed batch do not raise the loss early on") {
    std::mt19937_64 rng(8);
    PolicyNet n = PolicyNet::create(kFeatureLength, {8}, 4, 5);
    auto batch = random_batch(n, 32, rng);
    for (auto& t : batch) t.logp = std::log(forward(n, t.s).probs(t.a));
    PPOConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.entropy_coef = 0.0;
    AdamOptimizer opt(n);
    double prev = ppo_loss(n, batch, cfg).total;
    for (int step = 0; step < 10; ++step) {
        update(n, batch, cfg, opt);
        double now = ppo_loss(n, batch, cfg).total;
        CHECK(now <= prev + 1e-12);
        prev = now;
    }
}

TEST_CASE("minibatch passes cover the batch and stay finite") {
    std::mt19937_64 rng(9);
    PolicyNet n = PolicyNet::create(kFeatureLength, {8}, 4, 5);
    auto batch = random_batch(n, 30, rng);
    PPOConfig cfg;
    cfg.epochs = 3;
    cfg.minibatch_size = 7;
    AdamOptimizer opt(n);
    update(n, batch, cfg, opt);
    CHECK(opt.steps() == 3 * 5);
    for (double* p : n.parameters()) CHECK(std::isfinite(*p));
}

TEST_CASE("sample_action on one-hot, reproducibility and frequencies") {
    std::mt19937_64 rng(10);
    Eigen::VectorXd onehot = Eigen::VectorXd::Zero(4);
    onehot(2) = 1.0;
    for (int i = 0; i < 20; ++i) {
        Sample s = sample_action(onehot, rng);
        CHECK(s.index == 2);
        CHECK(s.logp == 0.0);
    }
    Eigen::VectorXd p(2);
    p << 0.25, 0.75;
    std::mt19937_64 r1(3), r2(3);
    for (int i = 0; i < 100; ++i) CHECK(sample_action(p, r1).index == sample_action(p, r2).index);

    const int n = 100000;
    int ones = 0;
    for (int i = 0; i < n; ++i) ones += sample_action(p, rng).index;
    double sigma = std::sqrt(n * 0.75 * 0.25);
    CHECK(std::abs(ones - 0.75 * n) < 3 * sigma);

    CHECK_THROWS_AS(sample_action(Eigen::VectorXd::Zero(3), rng), NumericError);
}

TEST_CASE("greedy ties go to the smaller index") {
    Eigen::VectorXd p(3);
    p << 0.4, 0.4, 0.2;
    CHECK(greedy_action(p) == 0);
}

TEST_CASE("checkpoint round-trips exactly") {
    PolicyNet n = PolicyNet::create(kFeatureLength, {6, 5}, 9, 11);
    PolicyNet back = checkpoint_from_json(checkpoint_to_json(n));
    CHECK(back == n);
    CHECK(back.widths() == n.widths());
    CHECK_THROWS(checkpoint_from_json("{\"format\": \"something else\"}"));
}

TEST_CASE("config validation") {
    PPOConfig c;
    CHECK_NOTHROW(c.validate());
    c.gamma = 1.5;
    CHECK_THROWS(c.validate());
    c = PPOConfig{};
    c.clip_epsilon = 0;
    CHECK_THROWS(c.validate());
    c = PPOConfig{};
    c.entropy_coef = -1;
    CHECK_THROWS(c.validate());
}
