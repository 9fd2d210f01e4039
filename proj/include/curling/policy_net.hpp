#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "curling/observation.hpp"

namespace curling::nn {

class ShapeError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};
class NumericError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;

    int inputs() const { return static_cast<int>(weight.cols()); }
    int outputs() const { return static_cast<int>(weight.rows()); }
};

// Shared tanh trunk feeding a softmax policy head and a scalar value head.
// The same type doubles as a gradient container.
struct PolicyNet {
    std::vector<DenseLayer> trunk;
    DenseLayer policy_head;
    DenseLayer value_head;

    int input_size() const;
    int action_count() const { return policy_head.outputs(); }
    std::vector<int> widths() const;  // input, hidden..., actions

    static PolicyNet create(int inputs, const std::vector<int>& hidden, int actions, std::uint64_t seed);
    PolicyNet zeros_like() const;

    std::size_t parameter_count() const;
    // Flat parameter view in a fixed order (trunk layers, policy head, value head;
    // weights column-major then biases).
    std::vector<double*> parameters();
    bool operator==(const PolicyNet& o) const;
};

struct ForwardResult {
    Eigen::VectorXd probs;
    double value = 0.0;
};

ForwardResult forward(const PolicyNet& net, std::span<const double> input);
ForwardResult forward(const PolicyNet& net, const FeatureVector& input);

struct Transition {
    FeatureVector s{};
    int a = 0;
    double r = 0.0;  // raw reward; rewritten to the return by gae_returns
    double v = 0.0;
    double logp = 0.0;  // log pi_old(a|s)
    double advantage = 0.0;
};

struct PPOConfig {
    double gamma = 0.99;
    double lambda = 0.95;
    double clip_epsilon = 0.2;
    double value_coef = 0.5;
    double entropy_coef = 0.01;
    double learning_rate = 3e-4;
    bool normalize_advantages = true;
    double max_grad_norm = 0.5;  // 0 disables clipping
    int epochs = 1;              // passes over each drained batch
    int minibatch_size = 0;      // 0: one step on the whole batch per pass

    void validate() const;
};

// Backward recursion d_t = r_t + gamma*v_{t+1} - v_t + gamma*lambda*d_{t+1},
// with v_{T+1} = d_{T+1} = 0; advantage_t = d_t and r_t becomes d_t + v_t.
void gae_returns(std::span<Transition> traj, double gamma, double lambda);

// Piecewise clip of the probability ratio to [1 - eps, 1 + eps].
double clip(double ratio, double epsilon);

struct LossTerms {
    double total = 0.0;
    double policy = 0.0;
    double value = 0.0;
    // Mean of sum_a pi log pi, i.e. negative entropy; minimizing it with a
    // positive coefficient raises entropy.
    double entropy = 0.0;
};

LossTerms ppo_loss(const PolicyNet& net, std::span<const Transition> batch, std::span<const double> old_logp,
                   const PPOConfig& cfg);
LossTerms ppo_loss(const PolicyNet& net, std::span<const Transition> batch, const PPOConfig& cfg);

struct LossAndGrad {
    LossTerms loss;
    PolicyNet grad;
};
LossAndGrad ppo_loss_and_grad(const PolicyNet& net, std::span<const Transition> batch, const PPOConfig& cfg);

class AdamOptimizer {
   public:
    explicit AdamOptimizer(const PolicyNet& net, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(PolicyNet& net, PolicyNet& grad, double learning_rate);
    long steps() const { return t_; }

   private:
    PolicyNet m_;
    PolicyNet v_;
    double beta1_, beta2_, eps_;
    long t_ = 0;
};

// One PPO pass over the batch (in consecutive minibatches); throws NumericError (leaving `net` untouched) if
// the loss or gradient is not finite.
LossTerms update(PolicyNet& net, std::span<const Transition> batch, const PPOConfig& cfg, AdamOptimizer& opt);

struct Sample {
    int index = 0;
    double logp = 0.0;
};
Sample sample_action(const Eigen::VectorXd& probs, std::mt19937_64& rng);
int greedy_action(const Eigen::VectorXd& probs);  // ties toward the smaller index

std::string checkpoint_to_json(const PolicyNet& net);
PolicyNet checkpoint_from_json(const std::string& text);
void save_checkpoint(const PolicyNet& net, const std::string& path);
PolicyNet load_checkpoint(const std::string& path);

}  // namespace curling::nn
