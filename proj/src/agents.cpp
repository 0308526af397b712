#include "dbr/agents.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>

#include "dbr/rng.hpp"

namespace dbr::algorithms {

namespace ad = autodiff;
using neuro::DenseNet;
using neuro::NetGraph;
using json = nlohmann::json;

Algo algo_from_string(const std::string& s) {
    if (s == "sac") return Algo::sac;
    if (s == "ddqn") return Algo::ddqn;
    if (s == "bear") return Algo::bear;
    if (s == "dbr") return Algo::dbr;
    if (s == "arm-fixed") return Algo::arm_fixed;
    if (s == "sil") return Algo::sil;
    if (s == "mrl") return Algo::mrl;
    throw std::invalid_argument("unknown algorithm id: " + s);
}

std::string algo_to_string(Algo a) {
    switch (a) {
        case Algo::sac: return "sac";
        case Algo::ddqn: return "ddqn";
        case Algo::bear: return "bear";
        case Algo::dbr: return "dbr";
        case Algo::arm_fixed: return "arm-fixed";
        case Algo::sil: return "sil";
        case Algo::mrl: return "mrl";
    }
    throw std::logic_error("unreachable");
}

void AgentConfig::validate() const {
    auto pos = [](double v, const char* name) {
        if (!(v > 0.0)) throw std::invalid_argument(std::string(name) + " must be positive");
    };
    pos(learning_rate, "learning_rate");
    pos(batch_size, "batch_size");
    pos(gamma, "gamma");
    pos(tau, "tau");
    pos(static_cast<double>(buffer_capacity), "buffer_capacity");
    pos(reward_scale, "reward_scale");
    if (exploration_noise_floor < 0.0)
        throw std::invalid_argument("exploration_noise_floor must be >= 0");
    if (lr_decay_after_steps < 0)
        throw std::invalid_argument("lr_decay_after_steps must be >= 0");
    pos(lr_decay_factor, "lr_decay_factor");
    pos(critic_ensemble, "critic_ensemble");
    pos(value_samples, "value_samples");
    pos(kernel.samples_per_state, "samples_per_state");
    pos(epsilon, "epsilon");
    pos(dual_lr, "dual_lr");
    if (gamma >= 1.0) throw std::invalid_argument("gamma must be < 1");
    for (int h : hidden) pos(h, "hidden layer size");
    if (advantage_source != "return_to_go" && advantage_source != "q_value")
        throw std::invalid_argument("advantage_source must be return_to_go or q_value");
}

bool MetricsRow::finite() const {
    auto ok = [](const std::optional<double>& v) { return !v || std::isfinite(*v); };
    return ok(critic_loss) && ok(actor_loss) && ok(beta_plus_nll) && ok(beta_minus_nll) &&
           ok(d_plus) && ok(d_minus) && ok(threshold) && ok(lambda) && ok(eval_return_mean) &&
           ok(eval_return_std);
}

namespace {

Eigen::MatrixXd repeat_rows(const Eigen::MatrixXd& m, int n) {
    Eigen::MatrixXd out(m.rows() * n, m.cols());
    for (long i = 0; i < m.rows(); ++i)
        out.middleRows(i * n, n) = m.row(i).replicate(n, 1);
    return out;
}

Eigen::MatrixXd hstack(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd out = logits;
    for (long i = 0; i < out.rows(); ++i) {
        Eigen::ArrayXd e = (out.row(i).array() - out.row(i).maxCoeff()).exp();
        out.row(i) = (e / e.sum()).matrix();
    }
    return out;
}

Eigen::MatrixXd logsoftmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd out = logits;
    for (long i = 0; i < out.rows(); ++i) {
        double mx = out.row(i).maxCoeff();
        double lse = std::log((out.row(i).array() - mx).exp().sum()) + mx;
        out.row(i).array() -= lse;
    }
    return out;
}

constexpr double kMaskPenalty = -1e9;

// Vectorized squashed-Gaussian sampling without a tape. net_out holds
// [mean | log_std]; fills actions and optionally the per-row log-density.
void gaussian_sample_rows(const neuro::SquashedGaussianHead& head, const Eigen::MatrixXd& net_out,
                          std::mt19937_64& rng, Eigen::MatrixXd& actions, Eigen::VectorXd* logp) {
    const int d = head.action_dim;
    const long n = net_out.rows();
    Eigen::MatrixXd noise(n, d);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (long i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) noise(i, j) = nd(rng);
    Eigen::ArrayXXd mu = net_out.leftCols(d).array();
    Eigen::ArrayXXd ls = net_out.rightCols(d).array().max(head.log_std_min).min(head.log_std_max);
    Eigen::ArrayXXd a = (mu + ls.exp() * noise.array()).tanh().max(-1.0 + 1e-9).min(1.0 - 1e-9);
    actions = a.matrix();
    if (logp) {
        Eigen::ArrayXXd gauss = -0.5 * noise.array().square() - ls - 0.9189385332046727;
        Eigen::ArrayXXd jac = (1.0 + 1e-6 - a.square()).log();
        *logp = (gauss - jac).rowwise().sum().matrix();
    }
}

double batched_mmd_plain(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, int n,
                         const constraint::KernelSpec& kernel) {
    long n_states = x.rows() / n;
    double acc = 0.0;
    for (long s = 0; s < n_states; ++s)
        acc += constraint::mmd_sq(x.middleRows(s * n, n), y.middleRows(s * n, n), kernel);
    return acc / static_cast<double>(n_states);
}

std::vector<int> policy_sizes(const envs::EnvSpec& spec, const std::vector<int>& hidden) {
    std::vector<int> s{spec.obs_dim};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(spec.discrete ? spec.n_actions : 2 * spec.action_dim);
    return s;
}

std::vector<int> critic_sizes(const envs::EnvSpec& spec, const std::vector<int>& hidden) {
    std::vector<int> s{spec.discrete ? spec.obs_dim : spec.obs_dim + spec.action_dim};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(spec.discrete ? spec.n_actions : 1);
    return s;
}

}  // namespace

// --- CriticEnsemble ---------------------------------------------------------

Eigen::VectorXd CriticEnsemble::min_online(const Eigen::MatrixXd& input) const {
    Eigen::VectorXd q = online[0].forward(input).col(0);
    for (size_t i = 1; i < online.size(); ++i) q = q.cwiseMin(online[i].forward(input).col(0));
    return q;
}

Eigen::VectorXd CriticEnsemble::min_target(const Eigen::MatrixXd& input) const {
    Eigen::VectorXd q = target[0].forward(input).col(0);
    for (size_t i = 1; i < target.size(); ++i) q = q.cwiseMin(target[i].forward(input).col(0));
    return q;
}

Eigen::MatrixXd CriticEnsemble::min_online_all(const Eigen::MatrixXd& states) const {
    Eigen::MatrixXd q = online[0].forward(states);
    for (size_t i = 1; i < online.size(); ++i) q = q.cwiseMin(online[i].forward(states));
    return q;
}

Eigen::MatrixXd CriticEnsemble::min_target_all(const Eigen::MatrixXd& states) const {
    Eigen::MatrixXd q = target[0].forward(states);
    for (size_t i = 1; i < target.size(); ++i) q = q.cwiseMin(target[i].forward(states));
    return q;
}

void CriticEnsemble::soft_update_targets(double tau) {
    for (size_t i = 0; i < online.size(); ++i) neuro::soft_update(target[i], online[i], tau);
}

// --- ActorCriticAgent -------------------------------------------------------

ActorCriticAgent::ActorCriticAgent(AgentConfig cfg, envs::EnvSpec spec, uint64_t seed)
    : cfg_(std::move(cfg)),
      spec_(std::move(spec)),
      buffer_(cfg_.buffer_capacity, cfg_.gamma) {
    cfg_.validate();
    if (cfg_.algo == Algo::ddqn) throw std::invalid_argument("use DdqnAgent for ddqn");
    RngStreams streams(seed);
    auto init_rng = streams.stream("init");
    policy_ = DenseNet(policy_sizes(spec_, cfg_.hidden), init_rng);
    policy_adam_.init(policy_, cfg_.learning_rate);
    ghead_ = neuro::SquashedGaussianHead{spec_.action_dim};
    chead_ = neuro::CategoricalHead{spec_.n_actions};
    for (int i = 0; i < cfg_.critic_ensemble; ++i) {
        critics_.online.emplace_back(critic_sizes(spec_, cfg_.hidden), init_rng);
        critics_.target.push_back(critics_.online.back());
        critics_.adam.emplace_back();
        critics_.adam.back().init(critics_.online.back(), cfg_.learning_rate);
    }
    bool wants_plus = cfg_.algo == Algo::bear || cfg_.algo == Algo::dbr ||
                      cfg_.algo == Algo::arm_fixed || cfg_.algo == Algo::mrl;
    if (wants_plus) {
        beta_plus_.emplace();
        beta_plus_->net = DenseNet(policy_sizes(spec_, cfg_.hidden), init_rng);
        beta_plus_->adam.init(beta_plus_->net, cfg_.learning_rate);
    }
    if (has_minus()) {
        beta_minus_.emplace();
        beta_minus_->net = DenseNet(policy_sizes(spec_, cfg_.hidden), init_rng);
        beta_minus_->adam.init(beta_minus_->net, cfg_.learning_rate);
    }
    cstate_.epsilon = cfg_.epsilon;
    cstate_.dual_step_size = cfg_.dual_lr;
    cstate_.lagrange_multiplier = uses_penalty() ? cfg_.lambda_init : 0.0;
    rng_batch_ = streams.stream("batch");
    rng_noise_ = streams.stream("noise");
    rng_act_ = streams.stream("act");
}

void ActorCriticAgent::set_learning_rate(double lr) {
    if (!(lr > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    cfg_.learning_rate = lr;
    policy_adam_.learning_rate = lr;
    for (auto& a : critics_.adam) a.learning_rate = lr;
    if (beta_plus_) beta_plus_->adam.learning_rate = lr;
    if (beta_minus_) beta_minus_->adam.learning_rate = lr;
}

bool ActorCriticAgent::uses_penalty() const {
    return cfg_.algo == Algo::bear || cfg_.algo == Algo::dbr || cfg_.algo == Algo::arm_fixed;
}

std::vector<bool> ActorCriticAgent::mask_for(const Eigen::VectorXd& obs) const {
    if (!mask_fn_) return {};
    return mask_fn_(obs);
}

BatchViews ActorCriticAgent::gather(const std::vector<size_t>& idx) const {
    BatchViews b;
    const long n = static_cast<long>(idx.size());
    const int adim = spec_.discrete ? 1 : spec_.action_dim;
    b.states.resize(n, spec_.obs_dim);
    b.actions.resize(n, adim);
    b.next_states.resize(n, spec_.obs_dim);
    b.rewards.resize(n);
    b.returns_to_go.resize(n);
    b.done.resize(n);
    if (spec_.discrete) b.action_index.resize(n);
    for (long i = 0; i < n; ++i) {
        const auto& t = buffer_.at(idx[i]);
        b.states.row(i) = t.state.transpose();
        b.actions.row(i) = t.action.transpose();
        b.next_states.row(i) = t.next_state.transpose();
        b.rewards(i) = t.reward;
        b.returns_to_go(i) = t.return_to_go;
        b.done(i) = t.done ? 1.0 : 0.0;
        if (spec_.discrete) b.action_index[i] = static_cast<int>(std::lround(t.action(0)));
    }
    return b;
}

Eigen::VectorXd ActorCriticAgent::critic_targets(const BatchViews& b) {
    const long n = b.states.rows();
    Eigen::VectorXd rs = b.rewards * cfg_.reward_scale;
    if (cfg_.algo == Algo::mrl) {
        // reward augmentation from the positive behavior model
        Eigen::MatrixXd bout = beta_plus_->net.forward(b.states);
        for (long i = 0; i < n; ++i) {
            double lb;
            if (spec_.discrete) {
                Eigen::VectorXd lp = logsoftmax_rows(bout.row(i)).transpose();
                lb = lp(b.action_index[i]);
            } else {
                lb = ghead_.log_prob_plain(bout.row(i).transpose(), b.actions.row(i).transpose());
            }
            rs(i) += cfg_.mrl_tau * std::clamp(lb, cfg_.mrl_log_floor, 0.0);
        }
    }
    Eigen::MatrixXd pout = policy_.forward(b.next_states);
    Eigen::VectorXd soft_value(n);
    if (spec_.discrete) {
        Eigen::MatrixXd logits = pout;
        if (mask_fn_) {
            for (long i = 0; i < n; ++i) {
                auto m = mask_fn_(b.next_states.row(i).transpose());
                for (int a = 0; a < spec_.n_actions; ++a)
                    if (!m[a]) logits(i, a) += kMaskPenalty;
            }
        }
        Eigen::MatrixXd p = softmax_rows(logits);
        Eigen::MatrixXd lp = logsoftmax_rows(logits);
        Eigen::MatrixXd qt = critics_.min_target_all(b.next_states);
        soft_value = (p.array() * (qt.array() - cfg_.entropy_weight * lp.array()))
                         .rowwise().sum().matrix();
    } else {
        Eigen::MatrixXd a2;
        Eigen::VectorXd logp2;
        gaussian_sample_rows(ghead_, pout, rng_noise_, a2, &logp2);
        Eigen::VectorXd qt = critics_.min_target(hstack(b.next_states, a2));
        soft_value = qt - cfg_.entropy_weight * logp2;
    }
    return rs.array() +
           cfg_.gamma * (1.0 - b.done.array()) * soft_value.array();
}

double ActorCriticAgent::critic_step(const BatchViews& b, bool apply) {
    Eigen::VectorXd y = critic_targets(b);
    ad::Tape tape;
    ad::Val yv = tape.constant(y);
    ad::Val loss = tape.constant(Eigen::MatrixXd::Zero(1, 1));
    std::vector<NetGraph> graphs;
    graphs.reserve(critics_.online.size());

    // SIL extra term reuses the same tape; weights computed up front
    Eigen::VectorXd sil_w;
    if (cfg_.algo == Algo::sil) {
        sil_w.resize(b.states.rows());
        for (long i = 0; i < b.states.rows(); ++i)
            sil_w(i) = replay::clip_pos(b.returns_to_go(i) * cfg_.reward_scale -
                                        value_estimate(b.states.row(i).transpose()));
    }

    for (auto& net : critics_.online) {
        graphs.emplace_back(tape, net);
        ad::Val q;
        if (spec_.discrete) {
            ad::Val all = graphs.back().forward(tape.constant(b.states));
            q = ad::gather_cols(all, b.action_index);
        } else {
            q = graphs.back().forward(tape.constant(hstack(b.states, b.actions)));
        }
        ad::Val err = ad::square(ad::sub(q, yv));
        loss = ad::add(loss, ad::mean(err));
        if (cfg_.algo == Algo::sil) {
            ad::Val err_sil = ad::square(ad::sub(q, tape.constant(b.returns_to_go * cfg_.reward_scale)));
            ad::Val weighted = ad::mul(err_sil, tape.constant(sil_w));
            loss = ad::add(loss, ad::scalar_mul(ad::mean(weighted), cfg_.sil_weight));
        }
    }
    tape.backward(loss);
    if (apply) {
        for (size_t i = 0; i < critics_.online.size(); ++i)
            critics_.adam[i].step(critics_.online[i], graphs[i].weight_grads(),
                                  graphs[i].bias_grads());
    }
    return tape.scalar(loss);
}

Eigen::MatrixXd ActorCriticAgent::behavior_sample_batch(const BehaviorPolicy& bp,
                                                        const Eigen::MatrixXd& states_rep) {
    Eigen::MatrixXd out = bp.net.forward(states_rep);
    Eigen::MatrixXd a;
    gaussian_sample_rows(ghead_, out, rng_noise_, a, nullptr);
    return a;
}

double ActorCriticAgent::divergence_to(const BehaviorPolicy& bp, const Eigen::MatrixXd& states) {
    if (spec_.discrete) {
        Eigen::MatrixXd p = softmax_rows(policy_.forward(states));
        Eigen::MatrixXd q = softmax_rows(bp.net.forward(states));
        double acc = 0.0;
        for (long i = 0; i < states.rows(); ++i)
            acc += constraint::kl_discrete(p.row(i).transpose(), q.row(i).transpose());
        return acc / static_cast<double>(states.rows());
    }
    int n = cfg_.kernel.samples_per_state;
    Eigen::MatrixXd srep = repeat_rows(states, n);
    Eigen::MatrixXd x;
    gaussian_sample_rows(ghead_, policy_.forward(srep), rng_noise_, x, nullptr);
    Eigen::MatrixXd y = behavior_sample_batch(bp, srep);
    return batched_mmd_plain(x, y, n, cfg_.kernel);
}

ActorCriticAgent::ActorResult ActorCriticAgent::actor_step(const BatchViews& b, bool apply) {
    if (cfg_.algo == Algo::dbr &&
        (!beta_plus_ || beta_plus_->mle_steps < cfg_.pretraining_steps)) {
        throw std::runtime_error(
            "positive behavior model is untrained; run pretraining before actor updates");
    }
    const long n_states = b.states.rows();
    ad::Tape tape;
    NetGraph pg(tape, policy_);
    ActorResult res;

    ad::Val base, penalty_d;
    bool with_penalty = uses_penalty();
    if (spec_.discrete) {
        ad::Val logits = pg.forward(tape.constant(b.states));
        if (mask_fn_) {
            Eigen::MatrixXd pen = Eigen::MatrixXd::Zero(n_states, spec_.n_actions);
            for (long i = 0; i < n_states; ++i) {
                auto m = mask_fn_(b.states.row(i).transpose());
                for (int a = 0; a < spec_.n_actions; ++a)
                    if (!m[a]) pen(i, a) = kMaskPenalty;
            }
            logits = ad::add(logits, tape.constant(pen));
        }
        ad::Val lp = chead_.log_probs(tape, logits);
        ad::Val p = ad::exp_(lp);
        Eigen::MatrixXd qmin = critics_.min_online_all(b.states);
        ad::Val inner = ad::sub(ad::scalar_mul(lp, cfg_.entropy_weight), tape.constant(qmin));
        base = ad::mean(ad::rowsum(ad::mul(p, inner)));
        if (with_penalty) {
            Eigen::MatrixXd lbp = logsoftmax_rows(beta_plus_->net.forward(b.states));
            ad::Val kl_inner = ad::mul(p, ad::sub(lp, tape.constant(lbp)));
            penalty_d = ad::mean(ad::rowsum(kl_inner));
        }
    } else {
        const int n = cfg_.kernel.samples_per_state;
        Eigen::MatrixXd srep = repeat_rows(b.states, n);
        ad::Val out = pg.forward(tape.constant(srep));
        Eigen::MatrixXd noise(srep.rows(), spec_.action_dim);
        std::normal_distribution<double> nd(0.0, 1.0);
        for (long i = 0; i < noise.rows(); ++i)
            for (int j = 0; j < spec_.action_dim; ++j) noise(i, j) = nd(rng_noise_);
        auto sample = ghead_.sample(tape, out, noise);
        ad::Val q;
        {
            ad::Val input = ad::hcat(tape.constant(srep), sample.action);
            std::vector<NetGraph> cgs;
            cgs.reserve(critics_.online.size());
            for (auto& net : critics_.online) {
                cgs.emplace_back(tape, net);
                ad::Val qi = cgs.back().forward(input);
                q = (cgs.size() == 1) ? qi : ad::minimum(q, qi);
            }
        }
        base = ad::mean(ad::sub(ad::scalar_mul(sample.log_prob, cfg_.entropy_weight), q));
        if (with_penalty) {
            Eigen::MatrixXd y_plus = behavior_sample_batch(*beta_plus_, srep);
            penalty_d = constraint::mmd_sq_batched(tape, sample.action, y_plus, n, cfg_.kernel);
        }
    }

    ad::Val loss = base;
    if (with_penalty) {
        res.d_plus = tape.scalar(penalty_d);
        res.d_minus = 0.0;
        if (has_minus() && beta_minus_ && beta_minus_->mle_steps > 0)
            res.d_minus = divergence_to(*beta_minus_, b.states);
        cstate_.d_plus_est = res.d_plus;
        cstate_.d_minus_est = res.d_minus;
        res.threshold = constraint::dynamic_threshold(cstate_);
        // threshold held constant in the graph: the max term is gradient-stopped
        ad::Val gap = ad::scalar_add(penalty_d, -res.threshold);
        loss = ad::add(loss, ad::scalar_mul(gap, cstate_.lagrange_multiplier));
    }

    // SIL adds a weighted imitation term toward high-return actions
    if (cfg_.algo == Algo::sil) {
        Eigen::VectorXd w(n_states);
        for (long i = 0; i < n_states; ++i)
            w(i) = replay::clip_pos(b.returns_to_go(i) * cfg_.reward_scale -
                                    value_estimate(b.states.row(i).transpose()));
        ad::Val lp_data;
        if (spec_.discrete) {
            ad::Val logits = pg.forward(tape.constant(b.states));
            lp_data = ad::gather_cols(chead_.log_probs(tape, logits), b.action_index);
        } else {
            ad::Val out2 = pg.forward(tape.constant(b.states));
            lp_data = ghead_.log_prob(tape, out2, b.actions);
        }
        ad::Val sil_term = ad::mean(ad::mul(ad::neg(lp_data), tape.constant(w)));
        loss = ad::add(loss, ad::scalar_mul(sil_term, cfg_.sil_weight));
    }

    tape.backward(loss);
    res.loss = tape.scalar(loss);
    res.weight_grads = pg.weight_grads();
    res.bias_grads = pg.bias_grads();
    if (apply) policy_adam_.step(policy_, res.weight_grads, res.bias_grads);
    return res;
}

double ActorCriticAgent::behavior_step(BehaviorPolicy& bp, const BatchViews& b, bool apply) {
    ad::Tape tape;
    NetGraph g(tape, bp.net);
    ad::Val out = g.forward(tape.constant(b.states));
    ad::Val lp;
    if (spec_.discrete) {
        lp = ad::gather_cols(chead_.log_probs(tape, out), b.action_index);
    } else {
        lp = ghead_.log_prob(tape, out, b.actions);
    }
    ad::Val loss = ad::neg(ad::mean(lp));
    tape.backward(loss);
    if (apply) {
        bp.adam.step(bp.net, g.weight_grads(), g.bias_grads());
        ++bp.mle_steps;
    }
    return tape.scalar(loss);
}

double ActorCriticAgent::value_estimate(const Eigen::VectorXd& state) {
    if (spec_.discrete) {
        Eigen::VectorXd logits = policy_.forward(state);
        auto m = mask_for(state);
        if (!m.empty())
            for (int a = 0; a < spec_.n_actions; ++a)
                if (!m[a]) logits(a) += kMaskPenalty;
        Eigen::VectorXd p = chead_.probs_plain(logits);
        Eigen::VectorXd q = critics_.min_online_all(state.transpose()).row(0).transpose();
        return p.dot(q);
    }
    Eigen::MatrixXd srep = state.transpose().replicate(cfg_.value_samples, 1);
    Eigen::MatrixXd a;
    gaussian_sample_rows(ghead_, policy_.forward(srep), rng_noise_, a, nullptr);
    return critics_.min_online(hstack(srep, a)).mean();
}

void ActorCriticAgent::relabel_partition() {
    const size_t n = buffer_.size();
    partition_.plus_indices.clear();
    partition_.minus_indices.clear();
    partition_.v_version = ++partition_version_;
    if (n == 0) return;

    Eigen::MatrixXd S(n, spec_.obs_dim);
    for (size_t i = 0; i < n; ++i) S.row(i) = buffer_.at(i).state.transpose();

    Eigen::VectorXd v(n);
    if (spec_.discrete) {
        Eigen::MatrixXd p = softmax_rows(policy_.forward(S));
        Eigen::MatrixXd q = critics_.min_online_all(S);
        v = (p.array() * q.array()).rowwise().sum().matrix();
    } else {
        v.setZero();
        for (int j = 0; j < cfg_.value_samples; ++j) {
            Eigen::MatrixXd a;
            gaussian_sample_rows(ghead_, policy_.forward(S), rng_noise_, a, nullptr);
            v += critics_.min_online(hstack(S, a));
        }
        v /= static_cast<double>(cfg_.value_samples);
    }

    Eigen::VectorXd label(n);
    if (cfg_.advantage_source == "q_value") {
        if (spec_.discrete) {
            Eigen::MatrixXd q = critics_.min_online_all(S);
            for (size_t i = 0; i < n; ++i)
                label(i) = q(i, static_cast<int>(std::lround(buffer_.at(i).action(0))));
        } else {
            Eigen::MatrixXd A(n, spec_.action_dim);
            for (size_t i = 0; i < n; ++i) A.row(i) = buffer_.at(i).action.transpose();
            label = critics_.min_online(hstack(S, A));
        }
    } else {
        for (size_t i = 0; i < n; ++i)
            label(i) = buffer_.at(i).return_to_go * cfg_.reward_scale;
    }

    for (size_t i = 0; i < n; ++i) {
        if (label(i) >= v(i)) partition_.plus_indices.push_back(i);
        if (label(i) <= v(i)) partition_.minus_indices.push_back(i);
    }
}

MetricsRow ActorCriticAgent::train_step() {
    if (buffer_.size() < static_cast<size_t>(cfg_.batch_size))
        throw std::runtime_error("replay buffer smaller than one batch");

    bool needs_partition = cfg_.algo == Algo::dbr || cfg_.algo == Algo::arm_fixed ||
                           cfg_.algo == Algo::mrl;
    // an empty side means V is still outside the data's return range; retry
    // until the partition is informative
    bool degenerate = partition_.plus_indices.empty() || partition_.minus_indices.empty();
    if (needs_partition &&
        (partition_.v_version == 0 || degenerate || step_count_ % cfg_.relabel_interval == 0))
        relabel_partition();

    if (cfg_.lr_decay_after_steps > 0 && step_count_ == cfg_.lr_decay_after_steps)
        set_learning_rate(cfg_.learning_rate * cfg_.lr_decay_factor);

    MetricsRow row;
    row.step = step_count_;
    auto idx = buffer_.sample_indices(cfg_.batch_size, rng_batch_);
    BatchViews b = gather(idx);

    row.critic_loss = critic_step(b);

    if (beta_plus_) {
        std::vector<size_t> view;
        if (cfg_.algo == Algo::bear || partition_.plus_indices.empty()) {
            // no advantage signal yet: the positive model defaults to the
            // full behavior estimate
            view = buffer_.sample_indices(cfg_.batch_size, rng_batch_);
        } else {
            view = buffer_.sample_from(partition_.plus_indices, cfg_.batch_size, rng_batch_);
        }
        if (!view.empty())
            row.beta_plus_nll = behavior_step(*beta_plus_, gather(view));
    }
    if (beta_minus_) {
        if (!partition_.minus_indices.empty()) {
            auto view = buffer_.sample_from(partition_.minus_indices, cfg_.batch_size, rng_batch_);
            row.beta_minus_nll = behavior_step(*beta_minus_, gather(view));
        }
    }

    bool pretraining = step_count_ < cfg_.pretraining_steps;
    if (!pretraining) {
        auto ar = actor_step(b);
        row.actor_loss = ar.loss;
        if (uses_penalty()) {
            row.d_plus = ar.d_plus;
            row.d_minus = has_minus() ? std::optional<double>(ar.d_minus) : std::nullopt;
            row.threshold = ar.threshold;
            constraint::dual_update(cstate_, ar.d_plus);
            row.lambda = cstate_.lagrange_multiplier;
        }
    }

    critics_.soft_update_targets(cfg_.tau);
    ++step_count_;
    return row;
}

Eigen::VectorXd ActorCriticAgent::act(const Eigen::VectorXd& obs, bool exploration,
                                      const std::vector<bool>& mask) {
    Eigen::VectorXd out = policy_.forward(obs);
    if (spec_.discrete) {
        const std::vector<bool>& m = mask.empty() ? mask_for(obs) : mask;
        int a = exploration ? chead_.sample_plain(out, rng_act_, m) : chead_.argmax(out, m);
        Eigen::VectorXd r(1);
        r(0) = a;
        return r;
    }
    if (!exploration) return ghead_.mean_action(out);
    if (cfg_.exploration_noise_floor > 0.0) {
        double floor = std::log(cfg_.exploration_noise_floor);
        out.tail(spec_.action_dim) = out.tail(spec_.action_dim).cwiseMax(floor);
    }
    return ghead_.sample_plain(out, rng_act_);
}

void ActorCriticAgent::save(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    neuro::save_checkpoint(policy_, dir + "/policy.json");
    for (size_t i = 0; i < critics_.online.size(); ++i) {
        neuro::save_checkpoint(critics_.online[i], dir + "/critic" + std::to_string(i) + ".json");
        neuro::save_checkpoint(critics_.target[i],
                               dir + "/critic_target" + std::to_string(i) + ".json");
    }
    if (beta_plus_) neuro::save_checkpoint(beta_plus_->net, dir + "/beta_plus.json");
    if (beta_minus_) neuro::save_checkpoint(beta_minus_->net, dir + "/beta_minus.json");
    json m;
    m["format_version"] = 1;
    m["algo"] = algo_to_string(cfg_.algo);
    m["env"] = spec_.id;
    m["step_count"] = step_count_;
    m["lambda"] = cstate_.lagrange_multiplier;
    m["d_minus_est"] = cstate_.d_minus_est;
    m["beta_plus_steps"] = beta_plus_ ? beta_plus_->mle_steps : 0;
    m["beta_minus_steps"] = beta_minus_ ? beta_minus_->mle_steps : 0;
    std::ofstream f(dir + "/agent.json");
    f << m.dump(2) << "\n";
}

void ActorCriticAgent::load(const std::string& dir) {
    std::ifstream f(dir + "/agent.json");
    if (!f) throw std::runtime_error("cannot open " + dir + "/agent.json");
    json m = json::parse(f);
    if (m.at("algo").get<std::string>() != algo_to_string(cfg_.algo))
        throw std::runtime_error("checkpoint algorithm mismatch");
    policy_ = neuro::load_checkpoint(dir + "/policy.json");
    for (size_t i = 0; i < critics_.online.size(); ++i) {
        critics_.online[i] = neuro::load_checkpoint(dir + "/critic" + std::to_string(i) + ".json");
        critics_.target[i] =
            neuro::load_checkpoint(dir + "/critic_target" + std::to_string(i) + ".json");
    }
    if (beta_plus_) {
        beta_plus_->net = neuro::load_checkpoint(dir + "/beta_plus.json");
        beta_plus_->mle_steps = m.at("beta_plus_steps").get<long>();
    }
    if (beta_minus_) {
        beta_minus_->net = neuro::load_checkpoint(dir + "/beta_minus.json");
        beta_minus_->mle_steps = m.at("beta_minus_steps").get<long>();
    }
    step_count_ = m.at("step_count").get<long>();
    cstate_.lagrange_multiplier = m.at("lambda").get<double>();
    cstate_.d_minus_est = m.at("d_minus_est").get<double>();
}

// --- DdqnAgent ---------------------------------------------------------------

DdqnAgent::DdqnAgent(AgentConfig cfg, envs::EnvSpec spec, uint64_t seed)
    : cfg_(std::move(cfg)),
      spec_(std::move(spec)),
      buffer_(cfg_.buffer_capacity, cfg_.gamma) {
    cfg_.validate();
    if (!spec_.discrete) throw std::invalid_argument("ddqn needs a discrete action space");
    RngStreams streams(seed);
    auto init_rng = streams.stream("init");
    online_ = DenseNet(critic_sizes(spec_, cfg_.hidden), init_rng);
    target_ = online_;
    adam_.init(online_, cfg_.learning_rate);
    chead_ = neuro::CategoricalHead{spec_.n_actions};
    rng_batch_ = streams.stream("batch");
    rng_act_ = streams.stream("act");
}

std::vector<bool> DdqnAgent::mask_for(const Eigen::VectorXd& obs) const {
    if (!mask_fn_) return {};
    return mask_fn_(obs);
}

BatchViews DdqnAgent::gather(const std::vector<size_t>& idx) const {
    BatchViews b;
    const long n = static_cast<long>(idx.size());
    b.states.resize(n, spec_.obs_dim);
    b.next_states.resize(n, spec_.obs_dim);
    b.rewards.resize(n);
    b.returns_to_go.resize(n);
    b.done.resize(n);
    b.action_index.resize(n);
    for (long i = 0; i < n; ++i) {
        const auto& t = buffer_.at(idx[i]);
        b.states.row(i) = t.state.transpose();
        b.next_states.row(i) = t.next_state.transpose();
        b.rewards(i) = t.reward;
        b.returns_to_go(i) = t.return_to_go;
        b.done(i) = t.done ? 1.0 : 0.0;
        b.action_index[i] = static_cast<int>(std::lround(t.action(0)));
    }
    return b;
}

Eigen::VectorXd DdqnAgent::targets(const BatchViews& b) const {
    Eigen::MatrixXd qo = online_.forward(b.next_states);
    Eigen::MatrixXd qt = target_.forward(b.next_states);
    Eigen::VectorXd y(b.states.rows());
    for (long i = 0; i < y.size(); ++i) {
        auto m = mask_for(b.next_states.row(i).transpose());
        int best = chead_.argmax(qo.row(i).transpose(), m);
        y(i) = b.rewards(i) * cfg_.reward_scale +
               cfg_.gamma * (1.0 - b.done(i)) * qt(i, best);
    }
    return y;
}

double DdqnAgent::epsilon_now() const {
    double frac = std::min(1.0, static_cast<double>(act_count_) /
                                    static_cast<double>(cfg_.ddqn_eps_decay_steps));
    return cfg_.ddqn_eps_start + frac * (cfg_.ddqn_eps_end - cfg_.ddqn_eps_start);
}

MetricsRow DdqnAgent::train_step() {
    if (buffer_.size() < static_cast<size_t>(cfg_.batch_size))
        throw std::runtime_error("replay buffer smaller than one batch");
    if (cfg_.lr_decay_after_steps > 0 && step_count_ == cfg_.lr_decay_after_steps) {
        cfg_.learning_rate *= cfg_.lr_decay_factor;
        adam_.learning_rate = cfg_.learning_rate;
    }
    auto idx = buffer_.sample_indices(cfg_.batch_size, rng_batch_);
    BatchViews b = gather(idx);
    Eigen::VectorXd y = targets(b);

    ad::Tape tape;
    NetGraph g(tape, online_);
    ad::Val q = ad::gather_cols(g.forward(tape.constant(b.states)), b.action_index);
    ad::Val loss = ad::mean(ad::square(ad::sub(q, tape.constant(y))));
    tape.backward(loss);
    adam_.step(online_, g.weight_grads(), g.bias_grads());
    neuro::soft_update(target_, online_, cfg_.tau);

    MetricsRow row;
    row.step = step_count_++;
    row.critic_loss = tape.scalar(loss);
    return row;
}

Eigen::VectorXd DdqnAgent::act(const Eigen::VectorXd& obs, bool exploration,
                               const std::vector<bool>& mask) {
    const std::vector<bool>& m = mask.empty() ? mask_for(obs) : mask;
    Eigen::VectorXd r(1);
    if (exploration) {
        ++act_count_;
        std::uniform_real_distribution<double> ud(0.0, 1.0);
        if (ud(rng_act_) < epsilon_now()) {
            std::vector<int> legal;
            for (int a = 0; a < spec_.n_actions; ++a)
                if (m.empty() || m[a]) legal.push_back(a);
            std::uniform_int_distribution<size_t> pick(0, legal.size() - 1);
            r(0) = legal[pick(rng_act_)];
            return r;
        }
    }
    r(0) = chead_.argmax(online_.forward(obs), m);
    return r;
}

void DdqnAgent::save(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    neuro::save_checkpoint(online_, dir + "/q_online.json");
    neuro::save_checkpoint(target_, dir + "/q_target.json");
    json m;
    m["format_version"] = 1;
    m["algo"] = "ddqn";
    m["env"] = spec_.id;
    m["step_count"] = step_count_;
    m["act_count"] = act_count_;
    std::ofstream f(dir + "/agent.json");
    f << m.dump(2) << "\n";
}

void DdqnAgent::load(const std::string& dir) {
    std::ifstream f(dir + "/agent.json");
    if (!f) throw std::runtime_error("cannot open " + dir + "/agent.json");
    json m = json::parse(f);
    online_ = neuro::load_checkpoint(dir + "/q_online.json");
    target_ = neuro::load_checkpoint(dir + "/q_target.json");
    step_count_ = m.at("step_count").get<long>();
    act_count_ = m.at("act_count").get<long>();
}

std::unique_ptr<Agent> make_agent(const AgentConfig& cfg, const envs::EnvSpec& spec,
                                  uint64_t seed) {
    if (cfg.algo == Algo::ddqn) return std::make_unique<DdqnAgent>(cfg, spec, seed);
    return std::make_unique<ActorCriticAgent>(cfg, spec, seed);
}

EvalResult evaluate(Agent& agent, const envs::Env& env_proto, int n_episodes, uint64_t seed) {
    EvalResult res;
    auto spec = env_proto.spec();
    bool track_wins = spec.id.rfind("connect4", 0) == 0;
    int wins = 0, draws = 0;
    for (int ep = 0; ep < n_episodes; ++ep) {
        auto env = env_proto.clone();
        std::mt19937_64 rng(seed + static_cast<uint64_t>(ep));
        Eigen::VectorXd obs = env->reset(rng);
        double ret = 0.0, last_r = 0.0;
        while (true) {
            std::vector<bool> mask;
            if (spec.discrete) mask = env->legal_actions();
            Eigen::VectorXd a = agent.act(obs, false, mask);
            auto sr = env->step(a);
            ret += sr.reward;
            last_r = sr.reward;
            obs = sr.next_state;
            if (sr.done) break;
        }
        res.episode_returns.push_back(ret);
        if (track_wins) {
            if (last_r > 0.0) ++wins;
            else if (last_r == 0.0) ++draws;
        }
    }
    const double n = static_cast<double>(res.episode_returns.size());
    res.mean = std::accumulate(res.episode_returns.begin(), res.episode_returns.end(), 0.0) / n;
    double ss = 0.0;
    for (double r : res.episode_returns) ss += (r - res.mean) * (r - res.mean);
    res.stddev = std::sqrt(ss / n);
    if (track_wins) res.win_rate = (wins + 0.5 * draws) / n;
    return res;
}

}  // namespace dbr::algorithms
