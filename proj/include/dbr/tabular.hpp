#pragma once

#include <Eigen/Dense>
#include <random>
#include <string>
#include <vector>

namespace dbr::tabular {

// Row-stochastic policy matrix pi[s][a].
using PolicyTable = Eigen::MatrixXd;

bool row_stochastic(const Eigen::MatrixXd& m, double tol = 1e-12);

struct TabularMdp {
    int n_states = 0;
    int n_actions = 0;
    std::vector<Eigen::MatrixXd> P;  // per action: (s x s'), rows sum to 1
    Eigen::MatrixXd R;               // (s x a)
    Eigen::VectorXd rho0;
    double gamma = 0.99;

    void validate() const;  // throws on bad rows / distributions

    // State transition matrix induced by a policy: P_pi(s, s').
    Eigen::MatrixXd transition_matrix(const PolicyTable& pi) const;

    static TabularMdp load(const std::string& path);
    void save(const std::string& path) const;
    static TabularMdp random(int n_states, int n_actions, double gamma, std::mt19937_64& rng);
};

struct TabularStep {
    int state, action;
    double reward;
    int next_state;
};

// Sample an episode of fixed horizon under a stationary policy.
std::vector<TabularStep> tabular_sample(const TabularMdp& mdp, const PolicyTable& policy,
                                        int horizon, std::mt19937_64& rng);

}  // namespace dbr::tabular
