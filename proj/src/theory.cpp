#include "dbr/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace dbr::theory {

namespace {

constexpr double kMassTol = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

// remaining normalized weight sum_{m>K} (1-g)^2 m g^{m-1} = g^K (K(1-g) + 1)
double weight_tail(double gamma, int K) {
    return std::pow(gamma, K) * (K * (1.0 - gamma) + 1.0);
}

double max_ratio(const Eigen::RowVectorXd& d, const Eigen::VectorXd& mu, bool& infinite) {
    double r = 0.0;
    for (long s = 0; s < d.size(); ++s) {
        if (d(s) <= kMassTol) continue;
        if (mu(s) <= kMassTol) {
            infinite = true;
            return kInf;
        }
        r = std::max(r, d(s) / mu(s));
    }
    return r;
}

}  // namespace

int horizon_for(double gamma, double tol) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in (0, 1)");
    int K = 1;
    while (weight_tail(gamma, K) >= tol) {
        ++K;
        if (K > 5000000) throw std::runtime_error("horizon_for: gamma too close to 1");
    }
    return K;
}

Marginal discounted_marginal(const TabularMdp& mdp, const std::vector<PolicyTable>& seq, int K) {
    if (seq.empty()) throw std::invalid_argument("discounted_marginal: empty policy sequence");
    if (K < 1) throw std::invalid_argument("discounted_marginal: K must be >= 1");
    std::vector<Eigen::MatrixXd> P;
    P.reserve(seq.size());
    for (const auto& pi : seq) P.push_back(mdp.transition_matrix(pi));  // validates stochasticity

    const double g = mdp.gamma;
    const double norm = (1.0 - g) * (1.0 - g);
    Eigen::RowVectorXd d = mdp.rho0.transpose();
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(mdp.n_states);
    for (int m = 1; m <= K; ++m) {
        d = d * P[std::min<size_t>(m - 1, P.size() - 1)];
        mu += norm * m * std::pow(g, m - 1) * d.transpose();
    }
    return {mu, weight_tail(g, K)};
}

ConcentrabilityResult concentrability(const TabularMdp& mdp,
                                      const std::vector<PolicyTable>& policy_class,
                                      const Eigen::VectorXd& mu, int K, int sampled_sequences,
                                      uint64_t seed) {
    if (policy_class.empty()) throw std::invalid_argument("concentrability: empty policy class");
    if (mu.size() != mdp.n_states) throw std::invalid_argument("concentrability: mu size mismatch");
    std::vector<Eigen::MatrixXd> P;
    P.reserve(policy_class.size());
    for (const auto& pi : policy_class) P.push_back(mdp.transition_matrix(pi));

    ConcentrabilityResult res;
    res.c.assign(K, 0.0);

    auto scan = [&](const Eigen::RowVectorXd& d, int k) {
        double r = max_ratio(d, mu, res.infinite);
        res.c[k - 1] = std::max(res.c[k - 1], r);
    };

    // stationary repetitions of every class member
    for (const auto& p : P) {
        Eigen::RowVectorXd d = mdp.rho0.transpose();
        for (int k = 1; k <= K; ++k) {
            d = d * p;
            scan(d, k);
            if (res.infinite) break;
        }
        if (res.infinite) break;
    }

    // every ordered pair exactly (nonstationarity matters most at short range)
    if (!res.infinite && P.size() > 1) {
        for (const auto& p1 : P) {
            Eigen::RowVectorXd d1 = mdp.rho0.transpose() * p1;
            for (const auto& p2 : P) {
                scan(d1 * p2, 2);
                if (res.infinite) break;
            }
            if (res.infinite) break;
        }
    }

    // random nonstationary sequences
    if (!res.infinite && P.size() > 1 && sampled_sequences > 0) {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<size_t> pick(0, P.size() - 1);
        for (int i = 0; i < sampled_sequences && !res.infinite; ++i) {
            Eigen::RowVectorXd d = mdp.rho0.transpose();
            for (int k = 1; k <= K; ++k) {
                d = d * P[pick(rng)];
                scan(d, k);
                if (res.infinite) break;
            }
        }
    }

    if (res.infinite) {
        res.C = kInf;
        res.tail_bound = kInf;
        return res;
    }

    const double g = mdp.gamma;
    const double norm = (1.0 - g) * (1.0 - g);
    for (int k = 1; k <= K; ++k) res.C += norm * k * std::pow(g, k - 1) * res.c[k - 1];

    double mu_min_pos = kInf;
    for (long s = 0; s < mu.size(); ++s)
        if (mu(s) > kMassTol) mu_min_pos = std::min(mu_min_pos, mu(s));
    res.tail_bound = weight_tail(g, K) / mu_min_pos;  // c(k) <= 1 / min positive mass
    return res;
}

SupportClass support_class(const PolicyTable& beta_plus, const PolicyTable& beta_minus,
                           double epsilon) {
    if (beta_plus.rows() != beta_minus.rows() || beta_plus.cols() != beta_minus.cols())
        throw std::invalid_argument("support_class: table shape mismatch");
    SupportClass cls;
    cls.mask.assign(beta_plus.rows(), std::vector<bool>(beta_plus.cols(), false));
    for (long s = 0; s < beta_plus.rows(); ++s) {
        bool any = false;
        for (long a = 0; a < beta_plus.cols(); ++a) {
            // zero-density actions are outside the support even at epsilon = 0
            bool ok = beta_plus(s, a) > 0.0 &&
                      beta_plus(s, a) >= std::max(epsilon, beta_minus(s, a));
            cls.mask[s][a] = ok;
            any = any || ok;
        }
        if (!any) cls.infeasible_states.push_back(static_cast<int>(s));
    }
    return cls;
}

std::vector<PolicyTable> enumerate_deterministic(const SupportClass& cls) {
    std::vector<PolicyTable> out;
    if (!cls.feasible() || cls.mask.empty()) return out;
    const int S = static_cast<int>(cls.mask.size());
    const int A = static_cast<int>(cls.mask[0].size());
    std::vector<std::vector<int>> choices(S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            if (cls.mask[s][a]) choices[s].push_back(a);

    std::vector<size_t> idx(S, 0);
    while (true) {
        PolicyTable pi = Eigen::MatrixXd::Zero(S, A);
        for (int s = 0; s < S; ++s) pi(s, choices[s][idx[s]]) = 1.0;
        out.push_back(std::move(pi));
        int s = 0;
        while (s < S && ++idx[s] == choices[s].size()) idx[s++] = 0;
        if (s == S) break;
    }
    return out;
}

double f_epsilon(const TabularMdp& mdp, const PolicyTable& beta_plus,
                 const PolicyTable& beta_minus, const SupportClass& cls, int K) {
    auto policies = enumerate_deterministic(cls);
    if (policies.empty()) return 0.0;
    Eigen::VectorXd mu_class = Eigen::VectorXd::Zero(mdp.n_states);
    for (const auto& pi : policies)
        mu_class = mu_class.cwiseMax(discounted_marginal(mdp, {pi}, K).mu);

    Eigen::VectorXd mu_bp = discounted_marginal(mdp, {beta_plus}, K).mu;
    Eigen::VectorXd mu_bm = discounted_marginal(mdp, {beta_minus}, K).mu;
    double min_bp = kInf, min_bm = kInf;
    for (long s = 0; s < mu_class.size(); ++s) {
        if (mu_class(s) <= kMassTol) continue;
        min_bp = std::min(min_bp, mu_bp(s));
        min_bm = std::min(min_bm, mu_bm(s));
    }
    if (min_bp == kInf) return 0.0;  // class visits nothing, treat as vacuous
    return std::max(min_bp, min_bm);
}

TheoryReport verify_theorem(const TabularMdp& mdp, const PolicyTable& beta_plus,
                            const PolicyTable& beta_minus, double epsilon, int K, uint64_t seed) {
    mdp.validate();
    TheoryReport rep;
    const double g = mdp.gamma;
    rep.tv_bound = g * (1.0 - epsilon) / (1.0 - g);

    auto cls = support_class(beta_plus, beta_minus, epsilon);
    auto policies = enumerate_deterministic(cls);
    rep.class_size = static_cast<int>(policies.size());
    rep.degenerate = policies.empty() || epsilon >= 1.0;
    if (policies.empty()) {
        // nothing to bound; the claim holds over the empty class
        rep.holds = true;
        rep.tv_lemma_holds = true;
        rep.sup_ratio_holds = true;
        return rep;
    }

    auto mu_beta = discounted_marginal(mdp, {beta_plus}, K);
    auto cb = concentrability(mdp, {beta_plus}, mu_beta.mu, K, 0, seed);
    auto cc = concentrability(mdp, policies, mu_beta.mu, K, 200, seed + 1);
    rep.C_beta = cb.C;
    rep.C_class = cc.C;
    rep.c_class = cc.c;
    rep.f_eps = f_epsilon(mdp, beta_plus, beta_minus, cls, K);
    rep.vacuous = rep.f_eps <= 0.0;

    // proof-side quantities: TV lemma and the pointwise marginal ratio
    for (const auto& pi : policies) {
        Eigen::VectorXd mu_pi = discounted_marginal(mdp, {pi}, K).mu;
        rep.tv_distance = std::max(rep.tv_distance, 0.5 * (mu_beta.mu - mu_pi).lpNorm<1>());
        for (long s = 0; s < mu_pi.size(); ++s) {
            if (mu_pi(s) <= kMassTol) continue;
            double r = mu_beta.mu(s) <= kMassTol ? kInf : mu_pi(s) / mu_beta.mu(s);
            rep.sup_ratio = std::max(rep.sup_ratio, r);
        }
    }
    rep.tv_lemma_holds = rep.tv_distance <= rep.tv_bound + 1e-9;

    rep.sup_ratio_bound =
        rep.vacuous ? kInf : 1.0 + g * (1.0 - epsilon) / ((1.0 - g) * rep.f_eps);
    rep.sup_ratio_holds = rep.sup_ratio <= rep.sup_ratio_bound + 1e-9;

    rep.bound_rhs = rep.C_beta * rep.sup_ratio_bound;
    rep.truncation_tail = cc.tail_bound + cb.tail_bound * rep.sup_ratio_bound;
    if (rep.vacuous) {
        rep.holds = true;  // infinite right-hand side carries no content
    } else if (cc.infinite) {
        rep.holds = false;
    } else {
        rep.holds = rep.C_class <= rep.bound_rhs + rep.truncation_tail + 1e-9;
    }
    return rep;
}

}  // namespace dbr::theory
