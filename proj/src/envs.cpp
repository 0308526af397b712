#include "dbr/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dbr/connect4.hpp"

namespace dbr::envs {

std::vector<bool> Env::legal_actions() const {
    throw std::logic_error("legal_actions: not a discrete environment");
}

// --- point mass --------------------------------------------------------------

void PointMassEnv::dynamics_matrices(Eigen::Matrix4d& A, Eigen::Matrix<double, 4, 2>& B) {
    A.setIdentity();
    A(0, 2) = kDt;
    A(1, 3) = kDt;
    B.setZero();
    B(0, 0) = kDt * kDt / 2.0;
    B(1, 1) = kDt * kDt / 2.0;
    B(2, 0) = kDt;
    B(3, 1) = kDt;
}

void PointMassEnv::cost_matrices(Eigen::Matrix4d& Q, Eigen::Matrix2d& R) {
    Q = Eigen::Vector4d(kPosCost, kPosCost, kVelCost, kVelCost).asDiagonal();
    R = kActCost * Eigen::Matrix2d::Identity();
}

EnvSpec PointMassEnv::spec() const {
    return {"pointmass-v0", 4, false, 2, 0, kHorizon, -20.0, 0.0};
}

Eigen::VectorXd PointMassEnv::reset(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(-kStartHalfWidth, kStartHalfWidth);
    x_ << d(rng), d(rng), 0.0, 0.0;
    t_ = 0;
    return x_;
}

StepResult PointMassEnv::step(const Eigen::VectorXd& action) {
    if (action.size() != 2) throw std::invalid_argument("pointmass: action must be 2-dim");
    Eigen::Vector2d a = action.head<2>();
    for (int i = 0; i < 2; ++i) {
        if (a(i) < -1.0 || a(i) > 1.0) {
            a(i) = std::clamp(a(i), -1.0, 1.0);
            ++clamps_;
        }
    }
    Eigen::Matrix4d Q;
    Eigen::Matrix2d R;
    cost_matrices(Q, R);
    double reward = -(x_.dot(Q * x_) + a.dot(R * a));

    Eigen::Matrix4d A;
    Eigen::Matrix<double, 4, 2> B;
    dynamics_matrices(A, B);
    x_ = A * x_ + B * a;
    ++t_;
    return {x_, reward, t_ >= kHorizon};
}

LqrSolution pointmass_lqr() {
    Eigen::Matrix4d A, Q;
    Eigen::Matrix<double, 4, 2> B;
    Eigen::Matrix2d R;
    PointMassEnv::dynamics_matrices(A, B);
    PointMassEnv::cost_matrices(Q, R);

    LqrSolution sol;
    sol.gains.resize(PointMassEnv::kHorizon);
    Eigen::Matrix4d P = Eigen::Matrix4d::Zero();  // no terminal cost
    for (int k = PointMassEnv::kHorizon - 1; k >= 0; --k) {
        Eigen::Matrix2d G = R + B.transpose() * P * B;
        Eigen::Matrix<double, 2, 4> K = G.ldlt().solve(B.transpose() * P * A);
        sol.gains[k] = K;
        P = Q + A.transpose() * P * (A - B * K);
    }
    sol.value_matrix = P;
    return sol;
}

double pointmass_optimal_expected_return() {
    LqrSolution sol = pointmass_lqr();
    double var = PointMassEnv::kStartHalfWidth * PointMassEnv::kStartHalfWidth / 3.0;  // U(-w,w)
    Eigen::Matrix4d sigma = Eigen::Vector4d(var, var, 0.0, 0.0).asDiagonal();
    return -(sol.value_matrix * sigma).trace();
}

// --- pendulum ----------------------------------------------------------------

namespace {
double wrap_angle(double x) {
    double two_pi = 2.0 * std::numbers::pi;
    x = std::fmod(x + std::numbers::pi, two_pi);
    if (x < 0) x += two_pi;
    return x - std::numbers::pi;
}
}  // namespace

EnvSpec PendulumEnv::spec() const {
    return {"pendulum-v0", 3, false, 1, 0, kHorizon, -18.0, 0.0};
}

Eigen::VectorXd PendulumEnv::obs() const {
    Eigen::VectorXd o(3);
    o << std::cos(theta_), std::sin(theta_), theta_dot_;
    return o;
}

Eigen::VectorXd PendulumEnv::reset(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dth(-std::numbers::pi, std::numbers::pi);
    std::uniform_real_distribution<double> dv(-1.0, 1.0);
    theta_ = dth(rng);
    theta_dot_ = dv(rng);
    t_ = 0;
    return obs();
}

StepResult PendulumEnv::step(const Eigen::VectorXd& action) {
    if (action.size() != 1) throw std::invalid_argument("pendulum: action must be 1-dim");
    double a = action(0);
    if (a < -1.0 || a > 1.0) {
        a = std::clamp(a, -1.0, 1.0);
        ++clamps_;
    }
    double u = a * kMaxTorque;
    constexpr double g = 10.0, l = 1.0, m = 1.0;
    double reward = -(theta_ * theta_ + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u);

    double acc = 3.0 * g / (2.0 * l) * std::sin(theta_) + 3.0 / (m * l * l) * u;
    theta_dot_ = std::clamp(theta_dot_ + acc * kDt, -kMaxSpeed, kMaxSpeed);
    theta_ = wrap_angle(theta_ + theta_dot_ * kDt);
    ++t_;
    return {obs(), reward, t_ >= kHorizon};
}

// --- chain ---------------------------------------------------------------

ChainEnv::ChainEnv(int n) : n_(n) {
    if (n < 2) throw std::invalid_argument("chain: need >= 2 states");
}

EnvSpec ChainEnv::spec() const {
    return {"chain:" + std::to_string(n_), n_, true, 0, 2, 4 * n_, 0.0, 1.0};
}

Eigen::VectorXd ChainEnv::obs() const {
    Eigen::VectorXd o = Eigen::VectorXd::Zero(n_);
    o(pos_) = 1.0;
    return o;
}

Eigen::VectorXd ChainEnv::reset(std::mt19937_64&) {
    pos_ = 0;
    t_ = 0;
    return obs();
}

StepResult ChainEnv::step(const Eigen::VectorXd& action) {
    int a = static_cast<int>(std::lround(action(0)));
    if (a != 0 && a != 1) throw std::invalid_argument("chain: illegal action");
    pos_ = a == 1 ? std::min(pos_ + 1, n_ - 1) : std::max(pos_ - 1, 0);
    ++t_;
    bool reached = pos_ == n_ - 1;
    return {obs(), reached ? 1.0 : 0.0, reached || t_ >= spec().max_steps};
}

// --- factory ---------------------------------------------------------------

std::unique_ptr<Env> make_env(const std::string& id) {
    if (id == "pointmass-v0") return std::make_unique<PointMassEnv>();
    if (id == "pendulum-v0") return std::make_unique<PendulumEnv>();
    if (id == "connect4-random")
        return std::make_unique<Connect4Env>(Connect4Opponent{Connect4Opponent::Kind::random});
    if (id.rfind("connect4-mcts:", 0) == 0) {
        int depth = std::stoi(id.substr(14));
        Connect4Opponent o{Connect4Opponent::Kind::mcts, depth};
        return std::make_unique<Connect4Env>(o);
    }
    if (id.rfind("chain:", 0) == 0) return std::make_unique<ChainEnv>(std::stoi(id.substr(6)));
    throw std::invalid_argument("unknown environment id: " + id);
}

}  // namespace dbr::envs
