#pragma once

#include <Eigen/Dense>
#include <random>
#include <utility>
#include <vector>

#include "dbr/autodiff.hpp"

namespace dbr::neuro {

using autodiff::Tape;
using autodiff::Val;

// Tanh-squashed Gaussian policy head. The backing net emits
// [mean | log_std] per action dimension; log_std is clamped to
// [log_std_min, log_std_max].
struct SquashedGaussianHead {
    int action_dim = 0;
    double log_std_min = -20.0;
    double log_std_max = 2.0;

    struct GraphSample {
        Val action;    // (batch x d), componentwise in (-1, 1)
        Val log_prob;  // (batch x 1), includes the tanh Jacobian correction
    };

    // Reparameterized sample: noise is standard normal, gradients flow into
    // mean and log_std through the tape.
    GraphSample sample(Tape& tape, Val net_output, const Eigen::MatrixXd& noise) const;

    // log pi(a|s) for externally given actions (behavior MLE path).
    Val log_prob(Tape& tape, Val net_output, const Eigen::MatrixXd& actions) const;

    // Plain (no tape) versions.
    Eigen::VectorXd sample_plain(const Eigen::VectorXd& net_output, std::mt19937_64& rng) const;
    Eigen::VectorXd mean_action(const Eigen::VectorXd& net_output) const;
    double log_prob_plain(const Eigen::VectorXd& net_output, const Eigen::VectorXd& action) const;
};

// Discrete softmax head over n actions.
struct CategoricalHead {
    int n_actions = 0;

    // log-probabilities (batch x n), numerically stable.
    Val log_probs(Tape& tape, Val logits) const;

    Eigen::VectorXd probs_plain(const Eigen::VectorXd& logits) const;
    // Masked sampling: illegal entries get probability 0 (mask empty = all legal).
    int sample_plain(const Eigen::VectorXd& logits, std::mt19937_64& rng,
                     const std::vector<bool>& mask = {}) const;
    int argmax(const Eigen::VectorXd& logits, const std::vector<bool>& mask = {}) const;
    double entropy_plain(const Eigen::VectorXd& logits) const;
};

}  // namespace dbr::neuro
