#pragma once

#include <Eigen/Dense>
#include <random>
#include <string>
#include <vector>

#include "dbr/autodiff.hpp"

namespace dbr::neuro {

using autodiff::Tape;
using autodiff::Val;

// Fully connected net, ReLU on hidden layers, identity output.
class DenseNet {
public:
    DenseNet() = default;
    DenseNet(std::vector<int> layer_sizes, std::mt19937_64& rng);

    // Plain evaluation, no tape. Input is one row per sample.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& input) const;
    Eigen::VectorXd forward(const Eigen::VectorXd& input) const;

    int input_dim() const { return sizes_.front(); }
    int output_dim() const { return sizes_.back(); }
    const std::vector<int>& layer_sizes() const { return sizes_; }

    std::vector<Eigen::MatrixXd>& weights() { return W_; }
    std::vector<Eigen::RowVectorXd>& biases() { return b_; }
    const std::vector<Eigen::MatrixXd>& weights() const { return W_; }
    const std::vector<Eigen::RowVectorXd>& biases() const { return b_; }

    bool same_architecture(const DenseNet& o) const { return sizes_ == o.sizes_; }
    bool finite() const;

private:
    std::vector<int> sizes_;
    std::vector<Eigen::MatrixXd> W_;     // (in x out)
    std::vector<Eigen::RowVectorXd> b_;  // (1 x out)
};

// Tape binding of a net: parameters become leaves once, so several forward
// passes in one graph share and accumulate into the same gradients.
class NetGraph {
public:
    NetGraph(Tape& tape, const DenseNet& net);

    Val forward(Val input) const;  // input: (batch x in)

    // d(loss)/d(param), in the same order as weights()/biases() interleaved.
    std::vector<Eigen::MatrixXd> weight_grads() const;
    std::vector<Eigen::RowVectorXd> bias_grads() const;

private:
    Tape* tape_;
    const DenseNet* net_;
    std::vector<Val> w_, b_;
};

struct AdamState {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step_count = 0;
    std::vector<Eigen::MatrixXd> m_w, v_w;
    std::vector<Eigen::RowVectorXd> m_b, v_b;

    void init(const DenseNet& net, double lr);
    // Throws on non-finite gradients; the step is not applied in that case.
    void step(DenseNet& net, const std::vector<Eigen::MatrixXd>& gw,
              const std::vector<Eigen::RowVectorXd>& gb);
};

// target <- tau * source + (1 - tau) * target
void soft_update(DenseNet& target, const DenseNet& source, double tau);

// Checkpoint round-trip (JSON, format_version 1).
void save_checkpoint(const DenseNet& net, const std::string& path);
DenseNet load_checkpoint(const std::string& path);

}  // namespace dbr::neuro
