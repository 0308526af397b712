#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "dbr/agents.hpp"

using namespace dbr;
using namespace dbr::algorithms;

namespace {

envs::EnvSpec toy_continuous() {
    envs::EnvSpec s;
    s.id = "toy-cont";
    s.obs_dim = 3;
    s.discrete = false;
    s.action_dim = 2;
    s.max_steps = 10;
    return s;
}

envs::EnvSpec toy_discrete() {
    envs::EnvSpec s;
    s.id = "toy-disc";
    s.obs_dim = 2;
    s.discrete = true;
    s.n_actions = 3;
    s.max_steps = 10;
    return s;
}

AgentConfig small_config(Algo algo) {
    AgentConfig c;
    c.algo = algo;
    c.hidden = {8, 8};
    c.batch_size = 8;
    c.buffer_capacity = 1000;
    c.pretraining_steps = 0;
    c.relabel_interval = 10;
    return c;
}

void fill_random(replay::ReplayBuffer& buf, const envs::EnvSpec& spec, int n_episodes,
                 int ep_len, uint64_t seed, double reward_bias = 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    for (int e = 0; e < n_episodes; ++e) {
        for (int t = 0; t < ep_len; ++t) {
            Eigen::VectorXd s = Eigen::VectorXd::NullaryExpr(spec.obs_dim, [&] { return ud(rng); });
            Eigen::VectorXd s2 = Eigen::VectorXd::NullaryExpr(spec.obs_dim, [&] { return ud(rng); });
            Eigen::VectorXd a;
            if (spec.discrete) {
                a.resize(1);
                a(0) = std::uniform_int_distribution<int>(0, spec.n_actions - 1)(rng);
            } else {
                a = Eigen::VectorXd::NullaryExpr(spec.action_dim, [&] { return 0.9 * ud(rng); });
            }
            buf.push_step(s, a, ud(rng) + reward_bias, s2, t == ep_len - 1);
        }
    }
}

double max_grad_diff(const ActorCriticAgent::ActorResult& a,
                     const ActorCriticAgent::ActorResult& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.weight_grads.size(); ++i)
        m = std::max(m, (a.weight_grads[i] - b.weight_grads[i]).cwiseAbs().maxCoeff());
    for (size_t i = 0; i < a.bias_grads.size(); ++i)
        m = std::max(m, (a.bias_grads[i] - b.bias_grads[i]).cwiseAbs().maxCoeff());
    return m;
}

}  // namespace

TEST_CASE("critic targets: terminal transitions bootstrap to the bare reward") {
    for (bool discrete : {false, true}) {
        auto spec = discrete ? toy_discrete() : toy_continuous();
        ActorCriticAgent agent(small_config(Algo::sac), spec, 7);
        fill_random(agent.buffer(), spec, 2, 10, 3);
        std::vector<size_t> idx(8);
        for (size_t i = 0; i < 8; ++i) idx[i] = i;
        auto b = agent.gather(idx);
        b.done.setOnes();
        Eigen::VectorXd y = agent.critic_targets(b);
        for (long i = 0; i < y.size(); ++i) CHECK(y(i) == doctest::Approx(b.rewards(i)).epsilon(1e-14));
    }
}

TEST_CASE("discrete critic targets match an independent recomputation") {
    auto spec = toy_discrete();
    auto cfg = small_config(Algo::sac);
    ActorCriticAgent agent(cfg, spec, 11);
    fill_random(agent.buffer(), spec, 2, 10, 5);
    std::vector<size_t> idx = {0, 3, 5, 9, 12, 15};
    auto b = agent.gather(idx);
    Eigen::VectorXd y = agent.critic_targets(b);

    for (size_t i = 0; i < idx.size(); ++i) {
        Eigen::VectorXd s2 = b.next_states.row(i).transpose();
        Eigen::VectorXd logits = agent.policy_net().forward(s2);
        Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
        Eigen::ArrayXd p = e / e.sum();
        Eigen::ArrayXd lp = p.log();
        Eigen::VectorXd qt = agent.critics().min_target_all(s2.transpose()).row(0).transpose();
        double sv = (p * (qt.array() - cfg.entropy_weight * lp)).sum();
        double expect = b.rewards(i) + cfg.gamma * (1.0 - b.done(i)) * sv;
        CHECK(std::abs(y(i) - expect) < 1e-10);
    }
}

TEST_CASE("reduction: dbr actor gradient with lambda = 0 equals sac") {
    auto spec = toy_continuous();
    auto cfg_sac = small_config(Algo::sac);
    auto cfg_dbr = small_config(Algo::dbr);
    cfg_dbr.lambda_init = 0.0;
    ActorCriticAgent sac(cfg_sac, spec, 42);
    ActorCriticAgent dbr(cfg_dbr, spec, 42);
    fill_random(sac.buffer(), spec, 2, 10, 9);
    fill_random(dbr.buffer(), spec, 2, 10, 9);

    std::vector<size_t> idx = {0, 1, 2, 3, 4, 5, 6, 7};
    auto gs = sac.actor_step(sac.gather(idx), false);
    auto gd = dbr.actor_step(dbr.gather(idx), false);
    CHECK(max_grad_diff(gs, gd) < 1e-10);
}

TEST_CASE("reduction: dbr with empty minus view collapses to the bear loss") {
    auto spec = toy_continuous();
    ActorCriticAgent bear(small_config(Algo::bear), spec, 123);
    ActorCriticAgent dbr(small_config(Algo::dbr), spec, 123);
    fill_random(bear.buffer(), spec, 2, 10, 9);
    fill_random(dbr.buffer(), spec, 2, 10, 9);

    std::vector<size_t> idx = {0, 2, 4, 6, 8, 10, 12, 14};
    auto rb = bear.actor_step(bear.gather(idx), false);
    auto rd = dbr.actor_step(dbr.gather(idx), false);
    CHECK(std::abs(rb.loss - rd.loss) < 1e-10);
    CHECK(rd.d_minus == 0.0);
    CHECK(rd.threshold == doctest::Approx(dbr.config().epsilon));
    CHECK(max_grad_diff(rb, rd) < 1e-10);
}

TEST_CASE("reduction: mrl with zero scaling reproduces sac critic targets") {
    auto spec = toy_continuous();
    auto cfg_mrl = small_config(Algo::mrl);
    cfg_mrl.mrl_tau = 0.0;
    ActorCriticAgent sac(small_config(Algo::sac), spec, 77);
    ActorCriticAgent mrl(cfg_mrl, spec, 77);
    fill_random(sac.buffer(), spec, 2, 10, 4);
    fill_random(mrl.buffer(), spec, 2, 10, 4);

    std::vector<size_t> idx = {1, 3, 5, 7, 9, 11, 13, 15};
    Eigen::VectorXd ys = sac.critic_targets(sac.gather(idx));
    Eigen::VectorXd ym = mrl.critic_targets(mrl.gather(idx));
    CHECK((ys - ym).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("mrl reward augmentation arithmetic at the clamp") {
    // tau 0.9, log-density -1, reward 1 -> target contribution 0.1 before bootstrap
    double tau = 0.9, floor = -1.0;
    double aug = 1.0 + tau * std::clamp(-1.0, floor, 0.0);
    CHECK(aug == doctest::Approx(0.1));
    CHECK(1.0 + tau * std::clamp(0.0, floor, 0.0) == doctest::Approx(1.0));  // density 1
}

TEST_CASE("sil with zero advantage everywhere matches the plain sac actor gradient") {
    auto spec = toy_continuous();
    ActorCriticAgent sac(small_config(Algo::sac), spec, 31);
    ActorCriticAgent sil(small_config(Algo::sil), spec, 31);
    fill_random(sac.buffer(), spec, 2, 10, 8);
    fill_random(sil.buffer(), spec, 2, 10, 8);

    std::vector<size_t> idx = {0, 1, 2, 3, 4, 5, 6, 7};
    auto bs = sac.gather(idx);
    auto bl = sil.gather(idx);
    bl.returns_to_go.setConstant(-1e9);  // advantage clipped to zero for every sample
    auto gs = sac.actor_step(bs, false);
    auto gl = sil.actor_step(bl, false);
    CHECK(max_grad_diff(gs, gl) < 1e-12);
}

TEST_CASE("behavior mle on a 75/25 bandit recovers the empirical frequencies") {
    auto spec = toy_discrete();
    spec.n_actions = 2;
    auto cfg = small_config(Algo::dbr);
    cfg.learning_rate = 3e-3;
    ActorCriticAgent agent(cfg, spec, 5);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(2);
    for (int i = 0; i < 100; ++i) {
        Eigen::VectorXd a(1);
        a(0) = i < 75 ? 0.0 : 1.0;
        agent.buffer().push_step(s, a, 0.0, s, true);
    }
    std::vector<size_t> all(100);
    for (size_t i = 0; i < 100; ++i) all[i] = i;
    auto b = agent.gather(all);
    for (int k = 0; k < 600; ++k) agent.behavior_step(*agent.beta_plus(), b);

    Eigen::VectorXd logits = agent.beta_plus()->net.forward(s);
    Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
    Eigen::ArrayXd p = e / e.sum();
    CHECK(p(0) == doctest::Approx(0.75).epsilon(0.03));
    CHECK(p(1) == doctest::Approx(0.25).epsilon(0.09));
}

TEST_CASE("behavior mle density on one repeated pair increases") {
    auto spec = toy_continuous();
    auto cfg = small_config(Algo::dbr);
    cfg.learning_rate = 1e-3;
    ActorCriticAgent agent(cfg, spec, 6);
    Eigen::VectorXd s(3), a(2);
    s << 0.1, -0.2, 0.3;
    a << 0.4, -0.5;
    for (int i = 0; i < 8; ++i) agent.buffer().push_step(s, a, 0.0, s, true);
    std::vector<size_t> idx = {0, 1, 2, 3, 4, 5, 6, 7};
    auto b = agent.gather(idx);

    neuro::SquashedGaussianHead head{2};
    double lp0 = head.log_prob_plain(agent.beta_plus()->net.forward(s), a);
    double prev = lp0;
    int drops = 0;
    for (int k = 0; k < 300; ++k) {
        agent.behavior_step(*agent.beta_plus(), b);
        double lp = head.log_prob_plain(agent.beta_plus()->net.forward(s), a);
        if (lp < prev) ++drops;
        prev = lp;
    }
    CHECK(prev > lp0 + 1.0);
    CHECK(drops <= 20);  // Adam may overshoot occasionally, never systematically
}

TEST_CASE("updating beta_plus leaves beta_minus bit-identical") {
    auto spec = toy_continuous();
    ActorCriticAgent agent(small_config(Algo::dbr), spec, 19);
    fill_random(agent.buffer(), spec, 1, 10, 2);
    std::vector<size_t> idx = {0, 1, 2, 3};
    auto b = agent.gather(idx);
    auto before = agent.beta_minus()->net.weights();
    agent.behavior_step(*agent.beta_plus(), b);
    auto after = agent.beta_minus()->net.weights();
    for (size_t i = 0; i < before.size(); ++i) CHECK((before[i] - after[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("untrained positive behavior model blocks dbr actor updates") {
    auto spec = toy_continuous();
    auto cfg = small_config(Algo::dbr);
    cfg.pretraining_steps = 50;
    ActorCriticAgent agent(cfg, spec, 3);
    fill_random(agent.buffer(), spec, 1, 10, 2);
    std::vector<size_t> idx = {0, 1, 2, 3};
    CHECK_THROWS_WITH_AS(agent.actor_step(agent.gather(idx)), doctest::Contains("pretraining"),
                         std::runtime_error);
}

TEST_CASE("dbr with an empty minus partition completes with threshold epsilon") {
    auto spec = toy_continuous();
    auto cfg = small_config(Algo::dbr);
    ActorCriticAgent agent(cfg, spec, 21);
    // huge returns guarantee every sample labels positive
    fill_random(agent.buffer(), spec, 2, 10, 2, 1e5);
    auto row = agent.train_step();
    CHECK(agent.partition().minus_indices.empty());
    CHECK(row.threshold.has_value());
    CHECK(*row.threshold == doctest::Approx(cfg.epsilon));
    CHECK(row.finite());
}

TEST_CASE("bear metrics carry no beta_minus entries") {
    auto spec = toy_continuous();
    ActorCriticAgent agent(small_config(Algo::bear), spec, 22);
    fill_random(agent.buffer(), spec, 2, 10, 2);
    auto row = agent.train_step();
    CHECK(!row.beta_minus_nll.has_value());
    CHECK(!row.d_minus.has_value());
    CHECK(row.beta_plus_nll.has_value());
    CHECK(row.finite());
}

TEST_CASE("seeded determinism across all actor-critic variants") {
    for (Algo algo : {Algo::sac, Algo::bear, Algo::dbr, Algo::arm_fixed, Algo::sil, Algo::mrl}) {
        CAPTURE(algo_to_string(algo));
        auto spec = toy_continuous();
        ActorCriticAgent a(small_config(algo), spec, 99);
        ActorCriticAgent b(small_config(algo), spec, 99);
        fill_random(a.buffer(), spec, 2, 10, 7);
        fill_random(b.buffer(), spec, 2, 10, 7);
        for (int k = 0; k < 3; ++k) {
            auto ra = a.train_step();
            auto rb = b.train_step();
            CHECK(ra.critic_loss == rb.critic_loss);
            CHECK(ra.actor_loss == rb.actor_loss);
            CHECK(ra.beta_plus_nll == rb.beta_plus_nll);
            CHECK(ra.d_plus == rb.d_plus);
            CHECK(ra.lambda == rb.lambda);
        }
    }
}

TEST_CASE("metrics stay finite over a short run of every variant") {
    for (Algo algo : {Algo::sac, Algo::bear, Algo::dbr, Algo::arm_fixed, Algo::sil, Algo::mrl}) {
        CAPTURE(algo_to_string(algo));
        auto spec = toy_continuous();
        auto cfg = small_config(algo);
        cfg.pretraining_steps = 5;
        ActorCriticAgent agent(cfg, spec, 17);
        fill_random(agent.buffer(), spec, 4, 10, 13);
        for (int k = 0; k < 25; ++k) {
            auto row = agent.train_step();
            CHECK(row.finite());
        }
    }
}

TEST_CASE("discrete variants run and stay finite") {
    for (Algo algo : {Algo::sac, Algo::dbr}) {
        auto spec = toy_discrete();
        auto cfg = small_config(algo);
        cfg.pretraining_steps = 3;
        ActorCriticAgent agent(cfg, spec, 29);
        fill_random(agent.buffer(), spec, 4, 10, 13);
        for (int k = 0; k < 15; ++k) CHECK(agent.train_step().finite());
    }
}

TEST_CASE("ddqn targets use the online argmax, not the target argmax") {
    auto spec = toy_discrete();
    spec.obs_dim = 1;
    spec.n_actions = 2;
    auto cfg = small_config(Algo::ddqn);
    cfg.hidden = {4};
    DdqnAgent agent(cfg, spec, 1);
    // zero the weights so each net's output equals its final bias row
    for (auto& w : agent.online_net().weights()) w.setZero();
    for (auto& w : agent.target_net().weights()) w.setZero();
    for (auto& bb : agent.online_net().biases()) bb.setZero();
    for (auto& bb : agent.target_net().biases()) bb.setZero();
    agent.online_net().biases().back() << 1.0, 0.0;  // online prefers action 0
    agent.target_net().biases().back() << 0.0, 5.0;  // target prefers action 1

    Eigen::VectorXd s(1), a(1);
    s << 0.0;
    a << 0.0;
    agent.buffer().push_step(s, a, 2.0, s, false);
    agent.buffer().end_episode();
    auto b = agent.gather({0});
    Eigen::VectorXd y = agent.targets(b);
    // online argmax is 0, so the bootstrap reads Q_target(s', 0) = 0, not 5
    CHECK(y(0) == doctest::Approx(2.0 + cfg.gamma * 0.0));

    // terminal transition collapses to the reward
    agent.buffer().push_step(s, a, 3.0, s, true);
    auto bt = agent.gather({1});
    CHECK(agent.targets(bt)(0) == doctest::Approx(3.0));
}

TEST_CASE("ddqn seeded determinism and finite metrics") {
    auto spec = toy_discrete();
    auto cfg = small_config(Algo::ddqn);
    DdqnAgent a(cfg, spec, 55), b(cfg, spec, 55);
    fill_random(a.buffer(), spec, 3, 10, 21);
    fill_random(b.buffer(), spec, 3, 10, 21);
    for (int k = 0; k < 10; ++k) {
        auto ra = a.train_step();
        auto rb = b.train_step();
        CHECK(ra.critic_loss == rb.critic_loss);
        CHECK(ra.finite());
    }
}

TEST_CASE("ddqn exploration rate anneals and respects masks") {
    auto spec = toy_discrete();
    auto cfg = small_config(Algo::ddqn);
    cfg.ddqn_eps_decay_steps = 100;
    DdqnAgent agent(cfg, spec, 2);
    CHECK(agent.epsilon_now() == doctest::Approx(cfg.ddqn_eps_start));
    Eigen::VectorXd s = Eigen::VectorXd::Zero(2);
    std::vector<bool> mask = {false, true, false};
    for (int i = 0; i < 150; ++i) {
        Eigen::VectorXd a = agent.act(s, true, mask);
        CHECK(a(0) == 1.0);  // only legal action
    }
    CHECK(agent.epsilon_now() == doctest::Approx(cfg.ddqn_eps_end));
}

namespace {

// fixed-length episode paying a constant reward each step
class ConstEnv : public envs::Env {
public:
    envs::EnvSpec spec() const override {
        envs::EnvSpec s;
        s.id = "const-env";
        s.obs_dim = 1;
        s.action_dim = 1;
        s.max_steps = 5;
        return s;
    }
    Eigen::VectorXd reset(std::mt19937_64&) override {
        t_ = 0;
        return Eigen::VectorXd::Zero(1);
    }
    envs::StepResult step(const Eigen::VectorXd&) override {
        ++t_;
        return {Eigen::VectorXd::Zero(1), 0.7, t_ >= 5};
    }
    std::unique_ptr<envs::Env> clone() const override { return std::make_unique<ConstEnv>(*this); }

private:
    int t_ = 0;
};

}  // namespace

TEST_CASE("evaluate on a constant-reward env, aggregates recomputable") {
    ConstEnv env;
    ActorCriticAgent agent(small_config(Algo::sac), env.spec(), 8);
    auto res = evaluate(agent, env, 10, 99);
    CHECK(res.mean == doctest::Approx(3.5));
    CHECK(res.stddev == doctest::Approx(0.0));
    CHECK(res.episode_returns.size() == 10);
    CHECK(!res.win_rate.has_value());

    auto one = evaluate(agent, env, 1, 99);
    CHECK(one.stddev == 0.0);

    double mean = 0.0;
    for (double r : res.episode_returns) mean += r;
    mean /= res.episode_returns.size();
    CHECK(res.mean == doctest::Approx(mean));
}

TEST_CASE("agent checkpoints round-trip") {
    auto spec = toy_continuous();
    ActorCriticAgent a(small_config(Algo::dbr), spec, 64);
    fill_random(a.buffer(), spec, 2, 10, 12);
    for (int k = 0; k < 5; ++k) a.train_step();
    a.save("agent_ckpt_test");

    ActorCriticAgent b(small_config(Algo::dbr), spec, 65);
    b.load("agent_ckpt_test");
    CHECK(b.steps_done() == a.steps_done());
    Eigen::VectorXd s = Eigen::VectorXd::Constant(3, 0.2);
    CHECK((a.act(s, false) - b.act(s, false)).norm() == 0.0);
    std::filesystem::remove_all("agent_ckpt_test");
}

TEST_CASE("config validation rejects nonsense") {
    AgentConfig c;
    c.gamma = 1.5;
    CHECK_THROWS(c.validate());
    c = AgentConfig{};
    c.learning_rate = 0.0;
    CHECK_THROWS(c.validate());
    c = AgentConfig{};
    c.advantage_source = "oops";
    CHECK_THROWS(c.validate());
    CHECK_THROWS(algo_from_string("nope"));
    CHECK(algo_from_string(algo_to_string(Algo::arm_fixed)) == Algo::arm_fixed);
}
