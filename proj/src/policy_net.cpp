#include "curling/policy_net.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace curling::nn {

namespace {

constexpr double kPolicyHeadGain = 0.01;
constexpr double kAdvantageEps = 1e-8;
constexpr const char* kCheckpointFormat = "curling-policy-net";
constexpr int kCheckpointVersion = 1;

DenseLayer make_layer(int in, int out, double gain, std::mt19937_64& rng) {
    DenseLayer l;
    l.weight.resize(out, in);
    l.bias = Eigen::VectorXd::Zero(out);
    double bound = gain * std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (int c = 0; c < in; ++c)
        for (int r = 0; r < out; ++r) l.weight(r, c) = dist(rng);
    return l;
}

DenseLayer zero_layer(const DenseLayer& like) {
    return {Eigen::MatrixXd::Zero(like.weight.rows(), like.weight.cols()), Eigen::VectorXd::Zero(like.bias.size())};
}

template <typename F>
void for_each_layer(PolicyNet& net, F&& f) {
    for (auto& l : net.trunk) f(l);
    f(net.policy_head);
    f(net.value_head);
}

struct BatchForward {
    std::vector<Eigen::MatrixXd> activations;  // input, then each trunk output
    Eigen::MatrixXd logp;                      // actions x N
    Eigen::MatrixXd probs;
    Eigen::RowVectorXd values;
};

BatchForward forward_batch(const PolicyNet& net, const Eigen::MatrixXd& x) {
    BatchForward f;
    f.activations.push_back(x);
    for (const auto& l : net.trunk) {
        Eigen::MatrixXd pre = (l.weight * f.activations.back()).colwise() + l.bias;
        f.activations.push_back(pre.array().tanh().matrix());
    }
    const Eigen::MatrixXd& h = f.activations.back();
    Eigen::MatrixXd logits = (net.policy_head.weight * h).colwise() + net.policy_head.bias;
    f.values = ((net.value_head.weight * h).colwise() + net.value_head.bias).row(0);
    f.logp.resize(logits.rows(), logits.cols());
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        double mx = logits.col(c).maxCoeff();
        double lse = mx + std::log((logits.col(c).array() - mx).exp().sum());
        f.logp.col(c) = logits.col(c).array() - lse;
    }
    f.probs = f.logp.array().exp().matrix();
    return f;
}

Eigen::MatrixXd stack_inputs(const PolicyNet& net, std::span<const Transition> batch) {
    if (net.input_size() != kFeatureLength)
        throw ShapeError("policy net expects " + std::to_string(net.input_size()) + " inputs, features have " +
                         std::to_string(kFeatureLength));
    Eigen::MatrixXd x(kFeatureLength, static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i)
        for (int k = 0; k < kFeatureLength; ++k) x(k, static_cast<Eigen::Index>(i)) = batch[i].s.values[k];
    return x;
}

std::vector<double> advantages_for(std::span<const Transition> batch, const PPOConfig& cfg) {
    std::vector<double> adv(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) adv[i] = batch[i].advantage;
    if (cfg.normalize_advantages && adv.size() > 1) {
        double mean = 0.0;
        for (double a : adv) mean += a;
        mean /= static_cast<double>(adv.size());
        double var = 0.0;
        for (double a : adv) var += (a - mean) * (a - mean);
        double sd = std::sqrt(var / static_cast<double>(adv.size()));
        for (double& a : adv) a = (a - mean) / (sd + kAdvantageEps);
    }
    return adv;
}

struct Evaluated {
    LossTerms loss;
    BatchForward fwd;
    std::vector<double> adv;
};

Evaluated evaluate_loss(const PolicyNet& net, std::span<const Transition> batch, std::span<const double> old_logp,
                        const PPOConfig& cfg) {
    if (batch.empty()) throw ShapeError("ppo_loss: empty batch");
    if (old_logp.size() != batch.size()) throw ShapeError("ppo_loss: old_logp size differs from batch size");
    Evaluated e{{}, forward_batch(net, stack_inputs(net, batch)), advantages_for(batch, cfg)};
    const double n = static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        int a = batch[i].a;
        if (a < 0 || a >= net.action_count()) throw ShapeError("ppo_loss: action index out of range");
        double ratio = std::exp(e.fwd.logp(a, col) - old_logp[i]);
        double adv = e.adv[i];
        e.loss.policy -= std::min(ratio * adv, clip(ratio, cfg.clip_epsilon) * adv) / n;
        double err = batch[i].r - e.fwd.values(col);
        e.loss.value += err * err / n;
        e.loss.entropy += (e.fwd.probs.col(col).array() * e.fwd.logp.col(col).array()).sum() / n;
    }
    e.loss.total = e.loss.policy + cfg.value_coef * e.loss.value + cfg.entropy_coef * e.loss.entropy;
    if (!std::isfinite(e.loss.total)) throw NumericError("ppo_loss: non-finite loss term");
    return e;
}

std::vector<double> stored_logp(std::span<const Transition> batch) {
    std::vector<double> out(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) out[i] = batch[i].logp;
    return out;
}

}  // namespace

int PolicyNet::input_size() const {
    return trunk.empty() ? policy_head.inputs() : trunk.front().inputs();
}

std::vector<int> PolicyNet::widths() const {
    std::vector<int> w{input_size()};
    for (const auto& l : trunk) w.push_back(l.outputs());
    w.push_back(action_count());
    return w;
}

PolicyNet PolicyNet::create(int inputs, const std::vector<int>& hidden, int actions, std::uint64_t seed) {
    if (inputs <= 0 || actions <= 0) throw ShapeError("policy net needs positive input and action counts");
    std::mt19937_64 rng(seed);
    PolicyNet net;
    int prev = inputs;
    for (int h : hidden) {
        if (h <= 0) throw ShapeError("hidden widths must be positive");
        net.trunk.push_back(make_layer(prev, h, 1.0, rng));
        prev = h;
    }
    net.policy_head = make_layer(prev, actions, kPolicyHeadGain, rng);
    net.value_head = make_layer(prev, 1, 1.0, rng);
    return net;
}

PolicyNet PolicyNet::zeros_like() const {
    PolicyNet z;
    for (const auto& l : trunk) z.trunk.push_back(zero_layer(l));
    z.policy_head = zero_layer(policy_head);
    z.value_head = zero_layer(value_head);
    return z;
}

std::size_t PolicyNet::parameter_count() const {
    std::size_t n = 0;
    auto add = [&](const DenseLayer& l) { n += l.weight.size() + l.bias.size(); };
    for (const auto& l : trunk) add(l);
    add(policy_head);
    add(value_head);
    return n;
}

std::vector<double*> PolicyNet::parameters() {
    std::vector<double*> out;
    out.reserve(parameter_count());
    for_each_layer(*this, [&](DenseLayer& l) {
        for (Eigen::Index i = 0; i < l.weight.size(); ++i) out.push_back(l.weight.data() + i);
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) out.push_back(l.bias.data() + i);
    });
    return out;
}

bool PolicyNet::operator==(const PolicyNet& o) const {
    auto same = [](const DenseLayer& a, const DenseLayer& b) {
        return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() && a.weight == b.weight &&
               a.bias == b.bias;
    };
    if (trunk.size() != o.trunk.size()) return false;
    for (std::size_t i = 0; i < trunk.size(); ++i)
        if (!same(trunk[i], o.trunk[i])) return false;
    return same(policy_head, o.policy_head) && same(value_head, o.value_head);
}

ForwardResult forward(const PolicyNet& net, std::span<const double> input) {
    if (static_cast<int>(input.size()) != net.input_size())
        throw ShapeError("forward: expected " + std::to_string(net.input_size()) + " inputs, got " +
                         std::to_string(input.size()));
    Eigen::MatrixXd x(input.size(), 1);
    for (std::size_t i = 0; i < input.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = input[i];
    BatchForward f = forward_batch(net, x);
    return {f.probs.col(0), f.values(0)};
}

ForwardResult forward(const PolicyNet& net, const FeatureVector& input) {
    return forward(net, std::span<const double>(input.values));
}

void gae_returns(std::span<Transition> traj, double gamma, double lambda) {
    double next_v = 0.0;
    double next_d = 0.0;
    for (std::size_t k = traj.size(); k-- > 0;) {
        Transition& t = traj[k];
        double d = t.r + gamma * next_v - t.v + gamma * lambda * next_d;
        t.advantage = d;
        t.r = d + t.v;
        next_v = t.v;
        next_d = d;
    }
}

double clip(double ratio, double epsilon) {
    if (ratio > 1.0 + epsilon) return 1.0 + epsilon;
    if (ratio < 1.0 - epsilon) return 1.0 - epsilon;
    return ratio;
}

void PPOConfig::validate() const {
    auto fail = [](const char* m) { throw std::invalid_argument(m); };
    if (gamma < 0 || gamma > 1) fail("ppo.gamma must be in [0,1]");
    if (lambda < 0 || lambda > 1) fail("ppo.lambda must be in [0,1]");
    if (clip_epsilon <= 0) fail("ppo.clip_epsilon must be > 0");
    if (value_coef < 0 || entropy_coef < 0) fail("ppo coefficients must be >= 0");
    if (learning_rate < 0) fail("ppo.learning_rate must be >= 0");
    if (max_grad_norm < 0) fail("ppo.max_grad_norm must be >= 0");
    if (epochs < 1) fail("ppo.epochs must be >= 1");
    if (minibatch_size < 0) fail("ppo.minibatch_size must be >= 0");
}

LossTerms ppo_loss(const PolicyNet& net, std::span<const Transition> batch, std::span<const double> old_logp,
                   const PPOConfig& cfg) {
    return evaluate_loss(net, batch, old_logp, cfg).loss;
}

LossTerms ppo_loss(const PolicyNet& net, std::span<const Transition> batch, const PPOConfig& cfg) {
    auto old = stored_logp(batch);
    return ppo_loss(net, batch, old, cfg);
}

LossAndGrad ppo_loss_and_grad(const PolicyNet& net, std::span<const Transition> batch, const PPOConfig& cfg) {
    auto old = stored_logp(batch);
    Evaluated e = evaluate_loss(net, batch, old, cfg);
    const auto n = static_cast<Eigen::Index>(batch.size());
    const double inv_n = 1.0 / static_cast<double>(n);
    const Eigen::Index actions = net.action_count();

    // dL/dlogits and dL/dvalue per sample.
    Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(actions, n);
    Eigen::RowVectorXd dv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& t = batch[static_cast<std::size_t>(i)];
        auto p = e.fwd.probs.col(i).array();
        auto lp = e.fwd.logp.col(i).array();
        double ratio = std::exp(e.fwd.logp(t.a, i) - old[static_cast<std::size_t>(i)]);
        double adv = e.adv[static_cast<std::size_t>(i)];
        double unclipped = ratio * adv;
        double clipped = clip(ratio, cfg.clip_epsilon) * adv;
        // Active branch of the min; the clipped branch is flat in ratio.
        double dratio = unclipped <= clipped ? -adv : 0.0;
        if (dratio != 0.0) {
            Eigen::VectorXd g = -ratio * p.matrix();
            g(t.a) += ratio;
            dz.col(i) += dratio * inv_n * g;
        }
        if (cfg.entropy_coef != 0.0) {
            double neg_entropy = (p * lp).sum();
            dz.col(i) += (cfg.entropy_coef * inv_n) * (p * (lp - neg_entropy)).matrix();
        }
        dv(i) = cfg.value_coef * inv_n * (-2.0) * (t.r - e.fwd.values(i));
    }

    PolicyNet grad = net.zeros_like();
    const Eigen::MatrixXd& h = e.fwd.activations.back();
    grad.policy_head.weight = dz * h.transpose();
    grad.policy_head.bias = dz.rowwise().sum();
    grad.value_head.weight = dv * h.transpose();
    grad.value_head.bias = Eigen::VectorXd::Constant(1, dv.sum());

    Eigen::MatrixXd dh = net.policy_head.weight.transpose() * dz + net.value_head.weight.transpose() * dv;
    for (std::size_t k = net.trunk.size(); k-- > 0;) {
        const Eigen::MatrixXd& out = e.fwd.activations[k + 1];
        const Eigen::MatrixXd& in = e.fwd.activations[k];
        Eigen::MatrixXd dpre = (dh.array() * (1.0 - out.array().square())).matrix();
        grad.trunk[k].weight = dpre * in.transpose();
        grad.trunk[k].bias = dpre.rowwise().sum();
        if (k > 0) dh = net.trunk[k].weight.transpose() * dpre;
    }
    return {e.loss, std::move(grad)};
}

AdamOptimizer::AdamOptimizer(const PolicyNet& net, double beta1, double beta2, double eps)
    : m_(net.zeros_like()), v_(net.zeros_like()), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(PolicyNet& net, PolicyNet& grad, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto upd = [&](DenseLayer& p, const DenseLayer& g, DenseLayer& m, DenseLayer& v) {
        m.weight = beta1_ * m.weight + (1 - beta1_) * g.weight;
        v.weight = beta2_ * v.weight + (1 - beta2_) * g.weight.cwiseProduct(g.weight);
        m.bias = beta1_ * m.bias + (1 - beta1_) * g.bias;
        v.bias = beta2_ * v.bias + (1 - beta2_) * g.bias.cwiseProduct(g.bias);
        if (lr == 0.0) return;
        p.weight.array() -= lr * (m.weight.array() / bc1) / ((v.weight.array() / bc2).sqrt() + eps_);
        p.bias.array() -= lr * (m.bias.array() / bc1) / ((v.bias.array() / bc2).sqrt() + eps_);
    };
    for (std::size_t i = 0; i < net.trunk.size(); ++i) upd(net.trunk[i], grad.trunk[i], m_.trunk[i], v_.trunk[i]);
    upd(net.policy_head, grad.policy_head, m_.policy_head, v_.policy_head);
    upd(net.value_head, grad.value_head, m_.value_head, v_.value_head);
}

namespace {

void gradient_step(PolicyNet& net, std::span<const Transition> batch, const PPOConfig& cfg, AdamOptimizer& opt,
                   LossTerms* loss_out) {
    LossAndGrad lg = ppo_loss_and_grad(net, batch, cfg);
    double sq = 0.0;
    bool finite = true;
    for (double* p : lg.grad.parameters()) {
        finite = finite && std::isfinite(*p);
        sq += *p * *p;
    }
    if (!finite || !std::isfinite(sq)) throw NumericError("update: non-finite gradient, step rejected");
    if (cfg.max_grad_norm > 0.0) {
        double gn = std::sqrt(sq);
        if (gn > cfg.max_grad_norm) {
            double scale = cfg.max_grad_norm / gn;
            for_each_layer(lg.grad, [&](DenseLayer& l) {
                l.weight *= scale;
                l.bias *= scale;
            });
        }
    }
    opt.step(net, lg.grad, cfg.learning_rate);
    if (loss_out) *loss_out = lg.loss;
}

}  // namespace

LossTerms update(PolicyNet& net, std::span<const Transition> batch, const PPOConfig& cfg, AdamOptimizer& opt) {
    if (batch.empty()) throw ShapeError("update: empty batch");
    PolicyNet candidate = net;
    AdamOptimizer trial = opt;
    LossTerms first{};
    const std::size_t chunk = cfg.minibatch_size > 0 ? static_cast<std::size_t>(cfg.minibatch_size) : batch.size();
    bool recorded = false;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t start = 0; start < batch.size(); start += chunk) {
            auto part = batch.subspan(start, std::min(chunk, batch.size() - start));
            gradient_step(candidate, part, cfg, trial, recorded ? nullptr : &first);
            recorded = true;
        }
    }
    for (double* p : candidate.parameters())
        if (!std::isfinite(*p)) throw NumericError("update: parameters overflowed, step rejected");
    net = std::move(candidate);
    opt = std::move(trial);
    return first;
}

Sample sample_action(const Eigen::VectorXd& probs, std::mt19937_64& rng) {
    double total = probs.sum();
    if (!(total > 0.0) || !std::isfinite(total)) throw NumericError("sample_action: degenerate distribution");
    double u = unit_uniform(rng()) * total;
    double acc = 0.0;
    int last_positive = 0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        if (probs(i) <= 0.0) continue;
        last_positive = static_cast<int>(i);
        acc += probs(i);
        if (u < acc) return {static_cast<int>(i), std::log(probs(i) / total)};
    }
    return {last_positive, std::log(probs(last_positive) / total)};
}

int greedy_action(const Eigen::VectorXd& probs) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < probs.size(); ++i)
        if (probs(i) > probs(best)) best = i;
    return static_cast<int>(best);
}

std::string checkpoint_to_json(const PolicyNet& net) {
    auto layer_json = [](const DenseLayer& l) {
        nlohmann::ordered_json j;
        j["rows"] = l.weight.rows();
        j["cols"] = l.weight.cols();
        std::vector<double> w(l.weight.data(), l.weight.data() + l.weight.size());
        j["weight"] = w;
        j["bias"] = std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size());
        return j;
    };
    nlohmann::ordered_json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["widths"] = net.widths();
    auto trunk = nlohmann::ordered_json::array();
    for (const auto& l : net.trunk) trunk.push_back(layer_json(l));
    j["trunk"] = std::move(trunk);
    j["policy_head"] = layer_json(net.policy_head);
    j["value_head"] = layer_json(net.value_head);
    return j.dump();
}

PolicyNet checkpoint_from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    if (j.value("format", std::string{}) != kCheckpointFormat) throw ShapeError("not a policy-net checkpoint");
    if (j.value("version", 0) != kCheckpointVersion) throw ShapeError("unsupported checkpoint version");
    auto layer = [](const nlohmann::json& lj) {
        DenseLayer l;
        auto rows = lj.at("rows").get<Eigen::Index>();
        auto cols = lj.at("cols").get<Eigen::Index>();
        auto w = lj.at("weight").get<std::vector<double>>();
        auto b = lj.at("bias").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows)
            throw ShapeError("checkpoint layer size mismatch");
        l.weight = Eigen::Map<Eigen::MatrixXd>(w.data(), rows, cols);
        l.bias = Eigen::Map<Eigen::VectorXd>(b.data(), rows);
        return l;
    };
    PolicyNet net;
    for (const auto& lj : j.at("trunk")) net.trunk.push_back(layer(lj));
    net.policy_head = layer(j.at("policy_head"));
    net.value_head = layer(j.at("value_head"));
    if (net.widths() != j.at("widths").get<std::vector<int>>()) throw ShapeError("checkpoint widths mismatch");
    return net;
}

void save_checkpoint(const PolicyNet& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out << checkpoint_to_json(net);
}

PolicyNet load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return checkpoint_from_json(ss.str());
}

}  // namespace curling::nn
