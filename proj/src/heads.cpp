#include "dbr/heads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dbr::neuro {

namespace ad = autodiff;

namespace {
constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)
constexpr double kSquashEps = 1e-6;
}  // namespace

SquashedGaussianHead::GraphSample SquashedGaussianHead::sample(Tape& tape, Val net_output,
                                                              const Eigen::MatrixXd& noise) const {
    Val mu = ad::colslice(net_output, 0, action_dim);
    Val log_std = ad::clamp(ad::colslice(net_output, action_dim, action_dim), log_std_min, log_std_max);
    Val std = ad::exp_(log_std);
    Val n = tape.constant(noise);
    Val u = ad::add(mu, ad::mul(std, n));
    // tanh can round to exactly +-1 for large |u|; keep actions strictly inside
    Val a = ad::clamp(ad::tanh_(u), -1.0 + 1e-9, 1.0 - 1e-9);
    // log N(u; mu, std) with (u-mu)/std == noise, minus the tanh Jacobian.
    Val gauss = ad::scalar_add(ad::neg(ad::add(ad::scalar_mul(tape.constant(noise.array().square()), 0.5), log_std)),
                               -kHalfLog2Pi);
    Val jac = ad::log_(ad::scalar_add(ad::neg(ad::square(a)), 1.0 + kSquashEps));
    Val log_prob = ad::rowsum(ad::sub(gauss, jac));
    return {a, log_prob};
}

Val SquashedGaussianHead::log_prob(Tape& tape, Val net_output, const Eigen::MatrixXd& actions) const {
    Eigen::MatrixXd a = actions.cwiseMax(-1.0 + kSquashEps).cwiseMin(1.0 - kSquashEps);
    Eigen::MatrixXd u = a.array().atanh();
    Val mu = ad::colslice(net_output, 0, action_dim);
    Val log_std = ad::clamp(ad::colslice(net_output, action_dim, action_dim), log_std_min, log_std_max);
    Val std = ad::exp_(log_std);
    Val z = ad::mul(ad::sub(tape.constant(u), mu), ad::exp_(ad::neg(log_std)));
    Val gauss = ad::scalar_add(ad::neg(ad::add(ad::scalar_mul(ad::square(z), 0.5), log_std)), -kHalfLog2Pi);
    Eigen::MatrixXd jac = (1.0 + kSquashEps - a.array().square()).log();
    Val log_prob = ad::rowsum(ad::sub(gauss, tape.constant(jac)));
    return log_prob;
}

Eigen::VectorXd SquashedGaussianHead::sample_plain(const Eigen::VectorXd& net_output,
                                                  std::mt19937_64& rng) const {
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::VectorXd a(action_dim);
    for (int i = 0; i < action_dim; ++i) {
        double mu = net_output(i);
        double ls = std::clamp(net_output(action_dim + i), log_std_min, log_std_max);
        a(i) = std::clamp(std::tanh(mu + std::exp(ls) * nd(rng)), -1.0 + 1e-9, 1.0 - 1e-9);
    }
    return a;
}

Eigen::VectorXd SquashedGaussianHead::mean_action(const Eigen::VectorXd& net_output) const {
    return net_output.head(action_dim).array().tanh();
}

double SquashedGaussianHead::log_prob_plain(const Eigen::VectorXd& net_output,
                                            const Eigen::VectorXd& action) const {
    double lp = 0.0;
    for (int i = 0; i < action_dim; ++i) {
        double a = std::clamp(action(i), -1.0 + kSquashEps, 1.0 - kSquashEps);
        double u = std::atanh(a);
        double mu = net_output(i);
        double ls = std::clamp(net_output(action_dim + i), log_std_min, log_std_max);
        double z = (u - mu) * std::exp(-ls);
        lp += -0.5 * z * z - ls - kHalfLog2Pi - std::log(1.0 + kSquashEps - a * a);
    }
    return lp;
}

Val CategoricalHead::log_probs(Tape& tape, Val logits) const {
    Val lse = ad::logsumexp_rows(logits);
    // broadcast subtraction of the per-row logsumexp
    Val ones = tape.constant(Eigen::MatrixXd::Ones(tape.value(logits).rows(), n_actions));
    return ad::sub(logits, ad::mul_bcast_col(ones, lse));
}

Eigen::VectorXd CategoricalHead::probs_plain(const Eigen::VectorXd& logits) const {
    Eigen::ArrayXd shifted = logits.array() - logits.maxCoeff();
    Eigen::ArrayXd e = shifted.exp();
    return (e / e.sum()).matrix();
}

int CategoricalHead::sample_plain(const Eigen::VectorXd& logits, std::mt19937_64& rng,
                                  const std::vector<bool>& mask) const {
    Eigen::VectorXd p = probs_plain(logits);
    if (!mask.empty()) {
        for (int i = 0; i < n_actions; ++i)
            if (!mask[i]) p(i) = 0.0;
        double s = p.sum();
        if (s <= 0.0) throw std::runtime_error("categorical sample: no legal action has mass");
        p /= s;
    }
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    double r = ud(rng), acc = 0.0;
    for (int i = 0; i < n_actions; ++i) {
        acc += p(i);
        if (r <= acc) return i;
    }
    return n_actions - 1;
}

int CategoricalHead::argmax(const Eigen::VectorXd& logits, const std::vector<bool>& mask) const {
    int best = -1;
    double bv = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_actions; ++i) {
        if (!mask.empty() && !mask[i]) continue;
        if (logits(i) > bv) {
            bv = logits(i);
            best = i;
        }
    }
    if (best < 0) throw std::runtime_error("categorical argmax: no legal action");
    return best;
}

double CategoricalHead::entropy_plain(const Eigen::VectorXd& logits) const {
    Eigen::VectorXd p = probs_plain(logits);
    double h = 0.0;
    for (int i = 0; i < n_actions; ++i)
        if (p(i) > 0.0) h -= p(i) * std::log(p(i));
    return h;
}

}  // namespace dbr::neuro
