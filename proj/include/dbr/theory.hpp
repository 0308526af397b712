#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dbr/tabular.hpp"

namespace dbr::theory {

using tabular::PolicyTable;
using tabular::TabularMdp;

// Weighted discounted state marginal
//   mu = (1-gamma)^2 sum_{m>=1} m gamma^{m-1} rho0 P^{pi_1} ... P^{pi_m}
// truncated at K terms. The (1-gamma)^2 factor normalizes the weights to a
// probability distribution (sum_m m gamma^{m-1} = (1-gamma)^-2). A sequence
// shorter than K is extended by repeating its last policy.
struct Marginal {
    Eigen::VectorXd mu;
    double tail_bound = 0.0;  // total weight dropped by truncation
};
Marginal discounted_marginal(const TabularMdp& mdp, const std::vector<PolicyTable>& seq, int K);

// Smallest K with truncation tail gamma^K (1 + K(1-gamma)) < tol.
int horizon_for(double gamma, double tol = 1e-10);

// c(k) = max over policy sequences and states of  [rho0 P^{pi_1}..P^{pi_k}](s) / mu(s),
// C = (1-gamma)^2 sum_{k<=K} k gamma^{k-1} c(k).
// Sequences searched: every length-2 combination exactly, all stationary
// repetitions, plus `sampled_sequences` random nonstationary draws per length.
struct ConcentrabilityResult {
    std::vector<double> c;    // c(1..K)
    double C = 0.0;
    double tail_bound = 0.0;  // bound on the dropped tail, using sup_s 1/mu(s)
    bool infinite = false;    // some sequence reaches a zero-mass state of mu
};
ConcentrabilityResult concentrability(const TabularMdp& mdp,
                                      const std::vector<PolicyTable>& policy_class,
                                      const Eigen::VectorXd& mu, int K, int sampled_sequences,
                                      uint64_t seed);

// Allowed-action mask: M[s][a] = [beta_plus(a|s) >= max(epsilon, beta_minus(a|s))].
struct SupportClass {
    std::vector<std::vector<bool>> mask;  // [state][action]
    std::vector<int> infeasible_states;   // states whose mask row is empty
    bool feasible() const { return infeasible_states.empty(); }
};
SupportClass support_class(const PolicyTable& beta_plus, const PolicyTable& beta_minus,
                           double epsilon);

// All deterministic policies respecting the mask (empty when infeasible).
std::vector<PolicyTable> enumerate_deterministic(const SupportClass& cls);

// f = max over beta in {beta+, beta-} of min over {s : mu_class(s) > 0} of mu_beta(s),
// where mu_class(s) = max over the enumerated deterministic policies of their
// stationary discounted marginal. Returns 0 when the class is empty.
double f_epsilon(const TabularMdp& mdp, const PolicyTable& beta_plus,
                 const PolicyTable& beta_minus, const SupportClass& cls, int K);

struct TheoryReport {
    std::vector<double> c_class;   // c(k) for the constrained class
    double C_class = 0.0;          // C(Pi_eps)
    double C_beta = 0.0;           // C(beta+)
    double f_eps = 0.0;
    double tv_distance = 0.0;      // max over class of TV(mu_beta+, mu_pi)
    double tv_bound = 0.0;         // gamma (1 - epsilon) / (1 - gamma)
    bool tv_lemma_holds = false;
    double sup_ratio = 0.0;        // max over class, s of mu_pi(s) / mu_beta+(s)
    double sup_ratio_bound = 0.0;  // 1 + gamma (1-eps) / ((1-gamma) f)
    bool sup_ratio_holds = false;
    double bound_rhs = 0.0;        // C(beta+) * sup_ratio_bound
    double truncation_tail = 0.0;  // combined truncation allowance
    int class_size = 0;
    bool degenerate = false;       // empty class / no feasible policy
    bool vacuous = false;          // f = 0: bound carries no content
    bool holds = false;
};

TheoryReport verify_theorem(const TabularMdp& mdp, const PolicyTable& beta_plus,
                            const PolicyTable& beta_minus, double epsilon, int K, uint64_t seed);

}  // namespace dbr::theory
