#pragma once

#include <Eigen/Dense>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace dbr::envs {

struct EnvSpec {
    std::string id;
    int obs_dim = 0;
    bool discrete = false;
    int action_dim = 0;  // continuous: box [-1,1]^action_dim
    int n_actions = 0;   // discrete
    int max_steps = 0;
    double reward_min = 0.0;
    double reward_max = 0.0;
};

struct StepResult {
    Eigen::VectorXd next_state;
    double reward = 0.0;
    bool done = false;
};

class Env {
public:
    virtual ~Env() = default;
    virtual EnvSpec spec() const = 0;
    virtual Eigen::VectorXd reset(std::mt19937_64& rng) = 0;
    // Continuous envs clamp out-of-range actions and count the clamps;
    // discrete envs reject illegal actions.
    virtual StepResult step(const Eigen::VectorXd& action) = 0;
    virtual std::vector<bool> legal_actions() const;  // discrete only
    virtual std::unique_ptr<Env> clone() const = 0;
    virtual size_t clamp_count() const { return 0; }
};

// 2-D double integrator, exact discretization:
//   p' = p + v dt + a dt^2/2,  v' = v + a dt
// reward = -(p'Qp + 0.1 v'v + 0.1 a'a); start p ~ U(-0.5, 0.5)^2, v = 0.
class PointMassEnv : public Env {
public:
    static constexpr double kDt = 0.1;
    static constexpr int kHorizon = 60;
    static constexpr double kPosCost = 1.0;
    static constexpr double kVelCost = 0.1;
    static constexpr double kActCost = 0.3;
    static constexpr double kStartHalfWidth = 0.4;

    EnvSpec spec() const override;
    Eigen::VectorXd reset(std::mt19937_64& rng) override;
    StepResult step(const Eigen::VectorXd& action) override;
    std::unique_ptr<Env> clone() const override { return std::make_unique<PointMassEnv>(*this); }
    size_t clamp_count() const override { return clamps_; }

    void set_state(const Eigen::Vector4d& x) { x_ = x; t_ = 0; }
    const Eigen::Vector4d& state() const { return x_; }

    static void dynamics_matrices(Eigen::Matrix4d& A, Eigen::Matrix<double, 4, 2>& B);
    static void cost_matrices(Eigen::Matrix4d& Q, Eigen::Matrix2d& R);

private:
    Eigen::Vector4d x_ = Eigen::Vector4d::Zero();
    int t_ = 0;
    size_t clamps_ = 0;
};

// Finite-horizon discrete Riccati recursion for the point-mass task.
// Returns per-step feedback gains K_0..K_{H-1} and the value matrix P_0.
struct LqrSolution {
    std::vector<Eigen::Matrix<double, 2, 4>> gains;  // u = -K x
    Eigen::Matrix4d value_matrix;
};
LqrSolution pointmass_lqr();
// Expected optimal return over the start distribution: -tr(P_0 Sigma_0).
double pointmass_optimal_expected_return();

// Torque-limited pendulum swing-up; theta = 0 is upright.
class PendulumEnv : public Env {
public:
    static constexpr double kDt = 0.05;
    static constexpr int kHorizon = 100;
    static constexpr double kMaxTorque = 2.0;
    static constexpr double kMaxSpeed = 8.0;

    EnvSpec spec() const override;
    Eigen::VectorXd reset(std::mt19937_64& rng) override;
    StepResult step(const Eigen::VectorXd& action) override;
    std::unique_ptr<Env> clone() const override { return std::make_unique<PendulumEnv>(*this); }
    size_t clamp_count() const override { return clamps_; }

    void set_state(double theta, double theta_dot) { theta_ = theta; theta_dot_ = theta_dot; t_ = 0; }

private:
    Eigen::VectorXd obs() const;
    double theta_ = 0.0, theta_dot_ = 0.0;
    int t_ = 0;
    size_t clamps_ = 0;
};

// One-hot chain MDP walk: actions {left, right}, reward 1 on reaching the
// right end (terminal).
class ChainEnv : public Env {
public:
    explicit ChainEnv(int n);
    EnvSpec spec() const override;
    Eigen::VectorXd reset(std::mt19937_64& rng) override;
    StepResult step(const Eigen::VectorXd& action) override;
    std::vector<bool> legal_actions() const override { return {true, true}; }
    std::unique_ptr<Env> clone() const override { return std::make_unique<ChainEnv>(*this); }

private:
    Eigen::VectorXd obs() const;
    int n_, pos_ = 0, t_ = 0;
};

// Factory for the string ids: pointmass-v0, pendulum-v0, connect4-random,
// connect4-mcts:<depth>, chain:<n>.
std::unique_ptr<Env> make_env(const std::string& id);

}  // namespace dbr::envs
