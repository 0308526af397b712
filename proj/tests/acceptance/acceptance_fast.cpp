// Criteria 1-5: gradient correctness, algorithm reduction chain, partition
// algebra, divergence anchors, and the finite-MDP bound sweep.
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "acceptance.hpp"
#include "dbr/agents.hpp"
#include "dbr/constraint.hpp"
#include "dbr/net.hpp"
#include "dbr/theory.hpp"

using namespace dbr;

namespace {

double net_loss(const neuro::DenseNet& net, const Eigen::MatrixXd& input) {
    return net.forward(input).array().tanh().square().sum();
}

// criterion 1: reverse-mode gradients vs central finite differences
bool gradient_correctness(std::string& detail) {
    Stopwatch sw;
    double worst = 0.0;
    for (int seed = 0; seed < 50; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<int> dim(1, 5);
        std::vector<int> sizes = {dim(rng), dim(rng), dim(rng)};
        neuro::DenseNet net(sizes, rng);
        std::normal_distribution<double> nd(0.0, 1.0);
        Eigen::MatrixXd input(3, sizes[0]);
        for (int i = 0; i < input.size(); ++i) input.data()[i] = nd(rng);

        autodiff::Tape tape;
        neuro::NetGraph g(tape, net);
        autodiff::Val out = g.forward(tape.constant(input));
        tape.backward(autodiff::sum(autodiff::square(autodiff::tanh_(out))));
        auto gw = g.weight_grads();
        auto gb = g.bias_grads();

        const double h = 1e-5;
        auto probe = [&](double* p, double analytic) {
            double orig = *p;
            *p = orig + h;
            double up = net_loss(net, input);
            *p = orig - h;
            double dn = net_loss(net, input);
            *p = orig;
            double fd = (up - dn) / (2 * h);
            double denom = std::max({std::abs(fd), std::abs(analytic), 1e-6});
            worst = std::max(worst, std::abs(fd - analytic) / denom);
        };
        for (size_t l = 0; l < net.weights().size(); ++l) {
            auto& W = net.weights()[l];
            for (int i = 0; i < W.size(); ++i) probe(W.data() + i, gw[l].data()[i]);
            auto& b = net.biases()[l];
            for (int i = 0; i < b.size(); ++i) probe(b.data() + i, gb[l].data()[i]);
        }
    }
    std::ostringstream os;
    os << "max relative error " << worst << " over 50 seeds in " << sw.seconds() << "s";
    detail = os.str();
    return worst < 1e-4 && sw.seconds() < 60.0;
}

envs::EnvSpec toy_spec() {
    envs::EnvSpec s;
    s.id = "toy";
    s.obs_dim = 3;
    s.action_dim = 2;
    s.max_steps = 10;
    return s;
}

algorithms::AgentConfig toy_config(algorithms::Algo algo) {
    algorithms::AgentConfig c;
    c.algo = algo;
    c.hidden = {8, 8};
    c.batch_size = 8;
    c.buffer_capacity = 1000;
    c.pretraining_steps = 0;
    c.relabel_interval = 10;
    return c;
}

void fill_buffer(replay::ReplayBuffer& buf, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    for (int e = 0; e < 2; ++e)
        for (int t = 0; t < 10; ++t) {
            Eigen::VectorXd s = Eigen::VectorXd::NullaryExpr(3, [&] { return ud(rng); });
            Eigen::VectorXd s2 = Eigen::VectorXd::NullaryExpr(3, [&] { return ud(rng); });
            Eigen::VectorXd a = Eigen::VectorXd::NullaryExpr(2, [&] { return 0.9 * ud(rng); });
            buf.push_step(s, a, ud(rng), s2, t == 9);
        }
}

double grad_gap(const algorithms::ActorCriticAgent::ActorResult& a,
                const algorithms::ActorCriticAgent::ActorResult& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.weight_grads.size(); ++i)
        m = std::max(m, (a.weight_grads[i] - b.weight_grads[i]).cwiseAbs().maxCoeff());
    for (size_t i = 0; i < a.bias_grads.size(); ++i)
        m = std::max(m, (a.bias_grads[i] - b.bias_grads[i]).cwiseAbs().maxCoeff());
    return m;
}

// criterion 2: each variant with its special case disabled collapses to its base
bool reduction_chain(std::string& detail) {
    using algorithms::ActorCriticAgent;
    using algorithms::Algo;
    Stopwatch sw;
    auto spec = toy_spec();
    std::vector<size_t> idx = {0, 1, 2, 3, 4, 5, 6, 7};
    double worst = 0.0;

    {  // dbr with a zeroed multiplier == sac actor gradient
        auto cfg = toy_config(Algo::dbr);
        cfg.lambda_init = 0.0;
        ActorCriticAgent sac(toy_config(Algo::sac), spec, 42), dbr(cfg, spec, 42);
        fill_buffer(sac.buffer(), 9);
        fill_buffer(dbr.buffer(), 9);
        worst = std::max(worst, grad_gap(sac.actor_step(sac.gather(idx), false),
                                         dbr.actor_step(dbr.gather(idx), false)));
    }
    {  // dbr with an untrained negative model (d- = 0) == bear loss and gradient
        ActorCriticAgent bear(toy_config(Algo::bear), spec, 123), dbr(toy_config(Algo::dbr), spec, 123);
        fill_buffer(bear.buffer(), 9);
        fill_buffer(dbr.buffer(), 9);
        auto rb = bear.actor_step(bear.gather(idx), false);
        auto rd = dbr.actor_step(dbr.gather(idx), false);
        worst = std::max({worst, grad_gap(rb, rd), std::abs(rb.loss - rd.loss)});
    }
    {  // mrl with zero reward shaping == sac critic targets
        auto cfg = toy_config(Algo::mrl);
        cfg.mrl_tau = 0.0;
        ActorCriticAgent sac(toy_config(Algo::sac), spec, 77), mrl(cfg, spec, 77);
        fill_buffer(sac.buffer(), 4);
        fill_buffer(mrl.buffer(), 4);
        Eigen::VectorXd ys = sac.critic_targets(sac.gather(idx));
        Eigen::VectorXd ym = mrl.critic_targets(mrl.gather(idx));
        worst = std::max(worst, (ys - ym).cwiseAbs().maxCoeff());
    }
    std::ostringstream os;
    os << "max deviation " << worst << " across three reductions in " << sw.seconds() << "s";
    detail = os.str();
    return worst < 1e-10 && sw.seconds() < 60.0;
}

// criterion 3: clip identities, partition totality/overlap, cumulative
// advantage recurrence vs an explicit loop oracle
bool partition_algebra(std::string& detail) {
    Stopwatch sw;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ud(-3.0, 3.0);

    for (int i = 0; i < 1000; ++i) {
        double x = ud(rng);
        if (replay::clip_pos(x) + replay::clip_neg(x) != x) {
            detail = "clip identity violated";
            return false;
        }
        if (replay::clip_pos(x) < 0.0 || replay::clip_neg(x) > 0.0) {
            detail = "clip sign violated";
            return false;
        }
    }

    replay::ReplayBuffer buf(100, 0.99);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(1), a = Eigen::VectorXd::Zero(1);
    for (int i = 0; i < 30; ++i) buf.push_step(s, a, i < 10 ? -1.0 : (i < 20 ? 0.0 : 1.0), s, true);
    auto part = buf.partition([](const Eigen::VectorXd&) { return 0.0; }, 1);
    std::vector<int> hits(30, 0);
    for (size_t i : part.plus_indices) ++hits[i];
    for (size_t i : part.minus_indices) ++hits[i];
    for (size_t i = 0; i < 30; ++i) {
        double r = buf.at(i).return_to_go;
        int want = r == 0.0 ? 2 : 1;  // equality cases land in both views
        if (hits[i] != want) {
            detail = "partition totality/overlap violated at index " + std::to_string(i);
            return false;
        }
    }

    std::vector<double> qs(50), vs(50);
    for (auto& q : qs) q = ud(rng);
    for (auto& v : vs) v = ud(rng);
    replay::ArmAccumulator acc;
    for (int t = 0; t < 50; ++t) {
        acc.update(qs[t], vs[t]);
        double oracle = 0.0;  // refold the whole prefix from scratch
        for (int k = 0; k <= t; ++k) oracle = std::max(oracle, 0.0) + (qs[k] - vs[k]);
        if (oracle != acc.value || acc.iteration != t + 1) {
            detail = "cumulative advantage recurrence mismatch at t=" + std::to_string(t);
            return false;
        }
    }

    std::ostringstream os;
    os << "clip/partition/recurrence identities exact in " << sw.seconds() << "s";
    detail = os.str();
    return sw.seconds() < 60.0;
}

// criterion 4: kernel two-sample distance anchors
bool divergence_anchors(std::string& detail) {
    Stopwatch sw;
    constraint::KernelSpec k;  // laplacian
    k.sigma = 1.0;

    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd x(6, 2), y(6, 2);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
    for (int i = 0; i < y.size(); ++i) y.data()[i] = nd(rng);

    double self_dist = constraint::mmd_sq(x, x, k);
    Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 1), one = Eigen::MatrixXd::Ones(1, 1);
    double point_pair = constraint::mmd_sq(zero, one, k);
    double expect = 2.0 - 2.0 / std::exp(1.0);
    double sym = std::abs(constraint::mmd_sq(x, y, k) - constraint::mmd_sq(y, x, k));

    std::ostringstream os;
    os << "self " << self_dist << ", {0}-{1} off by " << std::abs(point_pair - expect)
       << ", asymmetry " << sym;
    detail = os.str();
    return self_dist == 0.0 && std::abs(point_pair - expect) < 1e-9 && sym < 1e-12 &&
           sw.seconds() < 60.0;
}

// criterion 5: concentrability bound + TV lemma over 200 random finite MDPs
bool bound_sweep(std::string& detail) {
    Stopwatch sw;
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> Sd(2, 5), Ad(2, 3);
    std::uniform_real_distribution<double> eps_d(0.05, 0.4), ud(0.05, 1.0);
    auto rand_policy = [&](int S, int A) {
        Eigen::MatrixXd p(S, A);
        for (int s = 0; s < S; ++s) {
            for (int a = 0; a < A; ++a) p(s, a) = ud(rng);
            p.row(s) /= p.row(s).sum();
        }
        return p;
    };

    const double gamma = 0.9;
    int K = theory::horizon_for(gamma);
    int bound_violations = 0, tv_violations = 0, degenerate = 0;
    for (int i = 0; i < 200; ++i) {
        auto mdp = tabular::TabularMdp::random(Sd(rng), Ad(rng), gamma, rng);
        auto bp = rand_policy(mdp.n_states, mdp.n_actions);
        auto bm = rand_policy(mdp.n_states, mdp.n_actions);
        auto rep = theory::verify_theorem(mdp, bp, bm, eps_d(rng), K, 9000 + i);
        if (rep.degenerate) ++degenerate;
        if (!rep.holds) ++bound_violations;
        if (!rep.tv_lemma_holds) ++tv_violations;
    }

    std::ostringstream os;
    os << "bound violations " << bound_violations << "/200, tv violations " << tv_violations
       << "/200 (" << degenerate << " degenerate) in " << sw.seconds() << "s";
    detail = os.str();
    return bound_violations == 0 && tv_violations == 0 && sw.seconds() < 600.0;
}

}  // namespace

int main() {
    Gate gate;
    std::string d;
    gate.report(1, "gradient correctness", gradient_correctness(d), d);
    gate.report(2, "reduction chain", reduction_chain(d), d);
    gate.report(3, "partition algebra", partition_algebra(d), d);
    gate.report(4, "divergence anchors", divergence_anchors(d), d);
    gate.report(5, "finite-mdp bound sweep", bound_sweep(d), d);
    return gate.exit_code();
}
