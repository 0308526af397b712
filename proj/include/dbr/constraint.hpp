#pragma once

#include <Eigen/Dense>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dbr/autodiff.hpp"

namespace dbr::constraint {

enum class KernelFamily { laplacian, gaussian };

struct KernelSpec {
    KernelFamily family = KernelFamily::laplacian;
    double sigma = 20.0;
    int samples_per_state = 4;
    bool unbiased = false;  // biased V-statistic by default: mmd_sq(X, X) == 0
};

KernelFamily kernel_from_string(const std::string& s);

double kernel_eval(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const KernelSpec& k);

// Squared MMD between two sample sets (rows = samples). Biased V-statistic by
// default; the unbiased variant drops the diagonal terms.
double mmd_sq(const Eigen::MatrixXd& samples_p, const Eigen::MatrixXd& samples_q,
              const KernelSpec& kernel);

// In-graph batched MMD^2: X holds n policy samples per state stacked in blocks
// of n rows, Y the matching behavior samples (constant). Returns the mean over
// states as a 1x1 node; the backward pass is analytic in X.
autodiff::Val mmd_sq_batched(autodiff::Tape& tape, autodiff::Val x, const Eigen::MatrixXd& y,
                             int samples_per_state, const KernelSpec& kernel);

// Monte-Carlo estimate of E_s E_{a~pi}[log pi(a|s) - log b(a|s)]. The sampler
// draws an action and its log-density for a state; behavior_logp evaluates the
// behavior model at that action. May come out slightly negative from noise.
double kl_estimate(
    const std::function<std::pair<Eigen::VectorXd, double>(const Eigen::VectorXd&, std::mt19937_64&)>&
        sampler,
    const std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>& behavior_logp,
    const std::vector<Eigen::VectorXd>& states, int n_samples, std::mt19937_64& rng);

// Exact summation path for discrete distributions.
double kl_discrete(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

// epsilon, current divergence estimates, and the Lagrange multiplier that
// enforces E[D(pi, b+)] < max(epsilon, E[D(pi, b-)]).
struct ConstraintState {
    double epsilon = 0.05;
    double d_plus_est = 0.0;
    double d_minus_est = 0.0;
    double lagrange_multiplier = 0.0;
    double dual_step_size = 1e-3;
};

inline double dynamic_threshold(const ConstraintState& s) {
    return std::max(s.epsilon, s.d_minus_est);
}

// lambda <- max(0, lambda + eta * (d_plus - threshold))
void dual_update(ConstraintState& s, double d_plus_est);

}  // namespace dbr::constraint
