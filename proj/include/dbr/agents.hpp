#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dbr/constraint.hpp"
#include "dbr/envs.hpp"
#include "dbr/heads.hpp"
#include "dbr/net.hpp"
#include "dbr/replay.hpp"

namespace dbr::algorithms {

enum class Algo { sac, ddqn, bear, dbr, arm_fixed, sil, mrl };

Algo algo_from_string(const std::string& s);
std::string algo_to_string(Algo a);

struct AgentConfig {
    Algo algo = Algo::dbr;
    double learning_rate = 3e-4;
    int batch_size = 256;
    double gamma = 0.99;
    double tau = 0.005;
    std::vector<int> hidden = {256, 256, 256};
    size_t buffer_capacity = 1000000;
    int pretraining_steps = 1000;
    int steps_per_iteration = 1000;
    double reward_scale = 1.0;
    double entropy_weight = 0.2;  // fixed, no auto-tuning
    // minimum action std while acting with exploration (continuous only);
    // keeps data collection broad even when the entropy bonus is small
    double exploration_noise_floor = 0.0;
    // one-shot step-size decay: after this many training steps the learning
    // rate is multiplied by lr_decay_factor (0 = never)
    long lr_decay_after_steps = 0;
    double lr_decay_factor = 0.1;
    int critic_ensemble = 2;
    int value_samples = 4;  // V(s) = mean over sampled actions of min_i Q_i

    // divergence penalty (bear / dbr / arm_fixed)
    constraint::KernelSpec kernel;  // continuous actions: MMD
    double epsilon = 0.05;
    double dual_lr = 1e-3;
    double lambda_init = 1.0;

    // ablations
    double sil_weight = 1.0;
    double mrl_tau = 0.9;
    double mrl_log_floor = -1.0;
    std::string advantage_source = "return_to_go";  // or "q_value"
    int relabel_interval = 1000;

    // ddqn exploration
    double ddqn_eps_start = 1.0;
    double ddqn_eps_end = 0.05;
    long ddqn_eps_decay_steps = 20000;

    void validate() const;  // throws on non-positive values
};

// One row of the training log. Fields without a value for the current
// algorithm stay empty (BEAR has no beta_minus, DDQN has no actor, ...).
struct MetricsRow {
    long step = 0;
    std::optional<double> critic_loss;
    std::optional<double> actor_loss;
    std::optional<double> beta_plus_nll;
    std::optional<double> beta_minus_nll;
    std::optional<double> d_plus;
    std::optional<double> d_minus;
    std::optional<double> threshold;
    std::optional<double> lambda;
    std::optional<double> eval_return_mean;
    std::optional<double> eval_return_std;

    bool finite() const;  // every present value is finite
};

// Legality oracle for discrete envs: mask of legal actions in a given
// observation. Empty function = everything legal.
using MaskFn = std::function<std::vector<bool>(const Eigen::VectorXd&)>;

class Agent {
public:
    virtual ~Agent() = default;
    virtual const AgentConfig& config() const = 0;
    virtual replay::ReplayBuffer& buffer() = 0;
    virtual MetricsRow train_step() = 0;
    virtual long steps_done() const = 0;
    // exploration = false selects the deterministic action (mean / argmax)
    virtual Eigen::VectorXd act(const Eigen::VectorXd& obs, bool exploration,
                                const std::vector<bool>& mask = {}) = 0;
    virtual void set_mask_fn(MaskFn fn) = 0;
    virtual void save(const std::string& dir) const = 0;
    virtual void load(const std::string& dir) = 0;
};

struct CriticEnsemble {
    std::vector<neuro::DenseNet> online;
    std::vector<neuro::DenseNet> target;
    std::vector<neuro::AdamState> adam;

    // min over members; input rows as the nets expect
    Eigen::VectorXd min_online(const Eigen::MatrixXd& input) const;
    Eigen::VectorXd min_target(const Eigen::MatrixXd& input) const;
    // discrete critics emit one column per action
    Eigen::MatrixXd min_online_all(const Eigen::MatrixXd& states) const;
    Eigen::MatrixXd min_target_all(const Eigen::MatrixXd& states) const;
    void soft_update_targets(double tau);
};

struct BehaviorPolicy {
    neuro::DenseNet net;
    neuro::AdamState adam;
    long mle_steps = 0;  // gradient steps taken so far
};

struct BatchViews {
    Eigen::MatrixXd states, actions, next_states;
    Eigen::VectorXd rewards, returns_to_go;
    Eigen::VectorXd done;  // 1.0 / 0.0
    std::vector<int> action_index;  // discrete only
};

// SAC family: SAC, BEAR, DBR and the three ablations, continuous or discrete.
class ActorCriticAgent : public Agent {
public:
    ActorCriticAgent(AgentConfig cfg, envs::EnvSpec spec, uint64_t seed);

    // change the optimizer step size mid-run (Adam moments are kept)
    void set_learning_rate(double lr);

    const AgentConfig& config() const override { return cfg_; }
    replay::ReplayBuffer& buffer() override { return buffer_; }
    MetricsRow train_step() override;
    long steps_done() const override { return step_count_; }
    Eigen::VectorXd act(const Eigen::VectorXd& obs, bool exploration,
                        const std::vector<bool>& mask = {}) override;
    void set_mask_fn(MaskFn fn) override { mask_fn_ = std::move(fn); }
    void save(const std::string& dir) const override;
    void load(const std::string& dir) override;

    // --- pieces exposed for targeted tests --------------------------------
    BatchViews gather(const std::vector<size_t>& idx) const;
    Eigen::VectorXd critic_targets(const BatchViews& b);        // consumes rng for a' ~ pi
    double critic_step(const BatchViews& b, bool apply = true);
    struct ActorResult {
        double loss = 0.0;
        double d_plus = 0.0, d_minus = 0.0, threshold = 0.0;
        std::vector<Eigen::MatrixXd> weight_grads;
        std::vector<Eigen::RowVectorXd> bias_grads;
    };
    ActorResult actor_step(const BatchViews& b, bool apply = true);
    double behavior_step(BehaviorPolicy& bp, const BatchViews& b, bool apply = true);
    double value_estimate(const Eigen::VectorXd& state);  // V(s), consumes rng
    void relabel_partition();

    neuro::DenseNet& policy_net() { return policy_; }
    CriticEnsemble& critics() { return critics_; }
    BehaviorPolicy* beta_plus() { return beta_plus_ ? &*beta_plus_ : nullptr; }
    BehaviorPolicy* beta_minus() { return beta_minus_ ? &*beta_minus_ : nullptr; }
    constraint::ConstraintState& constraint_state() { return cstate_; }
    const replay::DualPartition& partition() const { return partition_; }

private:
    Eigen::MatrixXd behavior_sample_batch(const BehaviorPolicy& bp, const Eigen::MatrixXd& states_rep);
    double divergence_to(const BehaviorPolicy& bp, const Eigen::MatrixXd& states);  // plain estimate
    std::vector<bool> mask_for(const Eigen::VectorXd& obs) const;
    bool uses_penalty() const;
    bool has_minus() const { return cfg_.algo == Algo::dbr; }

    AgentConfig cfg_;
    envs::EnvSpec spec_;
    replay::ReplayBuffer buffer_;
    neuro::DenseNet policy_;
    neuro::AdamState policy_adam_;
    neuro::SquashedGaussianHead ghead_;
    neuro::CategoricalHead chead_;
    CriticEnsemble critics_;
    std::optional<BehaviorPolicy> beta_plus_, beta_minus_;
    constraint::ConstraintState cstate_;
    replay::DualPartition partition_;
    uint64_t partition_version_ = 0;
    MaskFn mask_fn_;
    long step_count_ = 0;
    std::mt19937_64 rng_batch_, rng_noise_, rng_act_;
};

class DdqnAgent : public Agent {
public:
    DdqnAgent(AgentConfig cfg, envs::EnvSpec spec, uint64_t seed);

    const AgentConfig& config() const override { return cfg_; }
    replay::ReplayBuffer& buffer() override { return buffer_; }
    MetricsRow train_step() override;
    long steps_done() const override { return step_count_; }
    Eigen::VectorXd act(const Eigen::VectorXd& obs, bool exploration,
                        const std::vector<bool>& mask = {}) override;
    void set_mask_fn(MaskFn fn) override { mask_fn_ = std::move(fn); }
    void save(const std::string& dir) const override;
    void load(const std::string& dir) override;

    Eigen::VectorXd targets(const BatchViews& b) const;
    BatchViews gather(const std::vector<size_t>& idx) const;
    double epsilon_now() const;
    neuro::DenseNet& online_net() { return online_; }
    neuro::DenseNet& target_net() { return target_; }

private:
    std::vector<bool> mask_for(const Eigen::VectorXd& obs) const;

    AgentConfig cfg_;
    envs::EnvSpec spec_;
    replay::ReplayBuffer buffer_;
    neuro::DenseNet online_, target_;
    neuro::AdamState adam_;
    neuro::CategoricalHead chead_;
    MaskFn mask_fn_;
    long step_count_ = 0, act_count_ = 0;
    std::mt19937_64 rng_batch_, rng_act_;
};

std::unique_ptr<Agent> make_agent(const AgentConfig& cfg, const envs::EnvSpec& spec, uint64_t seed);

struct EvalResult {
    std::vector<double> episode_returns;
    double mean = 0.0;
    double stddev = 0.0;  // 0 by convention for a single episode
    std::optional<double> win_rate;  // (wins + 0.5 draws) / episodes, win/loss envs only
};

EvalResult evaluate(Agent& agent, const envs::Env& env_proto, int n_episodes, uint64_t seed);

}  // namespace dbr::algorithms
