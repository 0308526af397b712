#include "dbr/constraint.hpp"

#include <cmath>
#include <stdexcept>

namespace dbr::constraint {

namespace ad = autodiff;

KernelFamily kernel_from_string(const std::string& s) {
    if (s == "laplacian") return KernelFamily::laplacian;
    if (s == "gaussian") return KernelFamily::gaussian;
    throw std::invalid_argument("unknown kernel family: " + s);
}

double kernel_eval(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const KernelSpec& k) {
    if (x.size() != y.size()) throw std::invalid_argument("kernel_eval: dimension mismatch");
    if (k.family == KernelFamily::laplacian)
        return std::exp(-(x - y).lpNorm<1>() / k.sigma);
    return std::exp(-(x - y).squaredNorm() / (2.0 * k.sigma * k.sigma));
}

namespace {

double mean_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const KernelSpec& k,
                   bool drop_diagonal) {
    long n = a.rows(), m = b.rows();
    double acc = 0.0;
    long count = 0;
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < m; ++j) {
            if (drop_diagonal && i == j) continue;
            acc += kernel_eval(a.row(i), b.row(j), k);
            ++count;
        }
    if (count == 0) throw std::invalid_argument("mmd: need >= 2 samples for the unbiased variant");
    return acc / static_cast<double>(count);
}

}  // namespace

double mmd_sq(const Eigen::MatrixXd& samples_p, const Eigen::MatrixXd& samples_q,
              const KernelSpec& kernel) {
    if (samples_p.rows() == 0 || samples_q.rows() == 0)
        throw std::invalid_argument("mmd_sq: empty sample set");
    if (samples_p.cols() != samples_q.cols())
        throw std::invalid_argument("mmd_sq: dimension mismatch");
    bool dd = kernel.unbiased;
    double kxx = mean_kernel(samples_p, samples_p, kernel, dd);
    double kyy = mean_kernel(samples_q, samples_q, kernel, dd);
    double kxy = mean_kernel(samples_p, samples_q, kernel, false);
    return kxx + kyy - 2.0 * kxy;
}

namespace {

// d k(x, y) / d x for the supported families.
Eigen::VectorXd kernel_grad_x(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                              const KernelSpec& k, double kval) {
    if (k.family == KernelFamily::laplacian) {
        Eigen::VectorXd s = (x - y).array().sign();
        return -kval / k.sigma * s;
    }
    return -kval / (k.sigma * k.sigma) * (x - y);
}

}  // namespace

ad::Val mmd_sq_batched(ad::Tape& tape, ad::Val x, const Eigen::MatrixXd& y, int samples_per_state,
                       const KernelSpec& kernel) {
    const Eigen::MatrixXd& xv = tape.value(x);
    int n = samples_per_state;
    if (n < 1) throw std::invalid_argument("mmd_sq_batched: samples_per_state < 1");
    if (xv.rows() % n != 0 || y.rows() % n != 0 || xv.rows() != y.rows())
        throw std::invalid_argument("mmd_sq_batched: sample layout mismatch");
    if (xv.cols() != y.cols()) throw std::invalid_argument("mmd_sq_batched: dimension mismatch");
    long n_states = xv.rows() / n;

    double total = 0.0;
    Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(xv.rows(), xv.cols());
    for (long b = 0; b < n_states; ++b) {
        auto xb = xv.middleRows(b * n, n);
        auto yb = y.middleRows(b * n, n);
        double kxx = 0.0, kyy = 0.0, kxy = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double kx = kernel_eval(xb.row(i), xb.row(j), kernel);
                kxx += kx;
                kyy += kernel_eval(yb.row(i), yb.row(j), kernel);
                double ky = kernel_eval(xb.row(i), yb.row(j), kernel);
                kxy += ky;
                // dMMD_b/dx_i: 2/n^2 sum_j d1 k(x_i, x_j) - 2/n^2 sum_j d1 k(x_i, y_j)
                dx.row(b * n + i) +=
                    (2.0 / (n * n)) * kernel_grad_x(xb.row(i), xb.row(j), kernel, kx).transpose();
                dx.row(b * n + i) -=
                    (2.0 / (n * n)) * kernel_grad_x(xb.row(i), yb.row(j), kernel, ky).transpose();
            }
        total += (kxx + kyy - 2.0 * kxy) / static_cast<double>(n * n);
    }
    total /= static_cast<double>(n_states);
    dx /= static_cast<double>(n_states);

    Eigen::MatrixXd out(1, 1);
    out(0, 0) = total;
    bool rg = tape.node(x.id).requires_grad;
    ad::Val res = tape.push(out, rg);
    if (rg) {
        int ri = res.id, xi = x.id;
        tape.set_backprop(res, [&tape, ri, xi, dx] {
            tape.node(xi).grad += tape.node(ri).grad(0, 0) * dx;
        });
    }
    return res;
}

double kl_estimate(
    const std::function<std::pair<Eigen::VectorXd, double>(const Eigen::VectorXd&, std::mt19937_64&)>&
        sampler,
    const std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>& behavior_logp,
    const std::vector<Eigen::VectorXd>& states, int n_samples, std::mt19937_64& rng) {
    if (states.empty() || n_samples < 1) throw std::invalid_argument("kl_estimate: empty input");
    double acc = 0.0;
    long count = 0;
    for (const auto& s : states) {
        for (int k = 0; k < n_samples; ++k) {
            auto [a, lp] = sampler(s, rng);
            double lb = behavior_logp(s, a);
            if (!std::isfinite(lb)) throw std::runtime_error("kl_estimate: non-finite behavior log-density");
            acc += lp - lb;
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

double kl_discrete(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    if (p.size() != q.size()) throw std::invalid_argument("kl_discrete: size mismatch");
    double acc = 0.0;
    for (int i = 0; i < p.size(); ++i) {
        if (p(i) <= 0.0) continue;
        if (q(i) <= 0.0) throw std::runtime_error("kl_discrete: q has zero mass where p > 0");
        acc += p(i) * std::log(p(i) / q(i));
    }
    return acc;
}

void dual_update(ConstraintState& s, double d_plus_est) {
    s.d_plus_est = d_plus_est;
    double violation = d_plus_est - dynamic_threshold(s);
    s.lagrange_multiplier = std::max(0.0, s.lagrange_multiplier + s.dual_step_size * violation);
}

}  // namespace dbr::constraint
