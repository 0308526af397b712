#include "dbr/net.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace dbr::neuro {

using json = nlohmann::json;

DenseNet::DenseNet(std::vector<int> layer_sizes, std::mt19937_64& rng) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("DenseNet needs at least two layers");
    for (int s : sizes_)
        if (s <= 0) throw std::invalid_argument("DenseNet layer sizes must be positive");
    for (size_t i = 0; i + 1 < sizes_.size(); ++i) {
        int in = sizes_[i], out = sizes_[i + 1];
        double bound = 1.0 / std::sqrt(static_cast<double>(in));  // uniform fan-in init
        std::uniform_real_distribution<double> dist(-bound, bound);
        Eigen::MatrixXd w(in, out);
        for (int r = 0; r < in; ++r)
            for (int c = 0; c < out; ++c) w(r, c) = dist(rng);
        W_.push_back(std::move(w));
        b_.push_back(Eigen::RowVectorXd::Zero(out));
    }
}

Eigen::MatrixXd DenseNet::forward(const Eigen::MatrixXd& input) const {
    if (input.cols() != input_dim()) throw std::invalid_argument("forward: input width mismatch");
    Eigen::MatrixXd h = input;
    for (size_t i = 0; i < W_.size(); ++i) {
        h = (h * W_[i]).rowwise() + b_[i];
        if (i + 1 < W_.size()) h = h.cwiseMax(0.0);
    }
    return h;
}

Eigen::VectorXd DenseNet::forward(const Eigen::VectorXd& input) const {
    return forward(Eigen::MatrixXd(input.transpose())).row(0).transpose();
}

bool DenseNet::finite() const {
    for (const auto& w : W_)
        if (!w.allFinite()) return false;
    for (const auto& b : b_)
        if (!b.allFinite()) return false;
    return true;
}

NetGraph::NetGraph(Tape& tape, const DenseNet& net) : tape_(&tape), net_(&net) {
    for (const auto& w : net.weights()) w_.push_back(tape.leaf(w));
    for (const auto& b : net.biases()) b_.push_back(tape.leaf(b));
}

Val NetGraph::forward(Val input) const {
    if (tape_->value(input).cols() != net_->input_dim())
        throw std::invalid_argument("NetGraph::forward: input width mismatch");
    Val h = input;
    for (size_t i = 0; i < w_.size(); ++i) {
        h = autodiff::add_rowvec(autodiff::matmul(h, w_[i]), b_[i]);
        if (i + 1 < w_.size()) h = autodiff::relu(h);
    }
    return h;
}

std::vector<Eigen::MatrixXd> NetGraph::weight_grads() const {
    std::vector<Eigen::MatrixXd> out;
    for (Val v : w_) out.push_back(tape_->grad(v));
    return out;
}

std::vector<Eigen::RowVectorXd> NetGraph::bias_grads() const {
    std::vector<Eigen::RowVectorXd> out;
    for (Val v : b_) out.push_back(tape_->grad(v).row(0));
    return out;
}

void AdamState::init(const DenseNet& net, double lr) {
    learning_rate = lr;
    step_count = 0;
    m_w.clear(); v_w.clear(); m_b.clear(); v_b.clear();
    for (const auto& w : net.weights()) {
        m_w.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
        v_w.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    }
    for (const auto& b : net.biases()) {
        m_b.push_back(Eigen::RowVectorXd::Zero(b.cols()));
        v_b.push_back(Eigen::RowVectorXd::Zero(b.cols()));
    }
}

void AdamState::step(DenseNet& net, const std::vector<Eigen::MatrixXd>& gw,
                     const std::vector<Eigen::RowVectorXd>& gb) {
    if (gw.size() != m_w.size() || gb.size() != m_b.size())
        throw std::invalid_argument("adam: gradient count mismatch");
    for (const auto& g : gw)
        if (!g.allFinite()) throw std::runtime_error("adam: non-finite weight gradient, step aborted");
    for (const auto& g : gb)
        if (!g.allFinite()) throw std::runtime_error("adam: non-finite bias gradient, step aborted");

    ++step_count;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    auto upd = [&](auto& p, auto& m, auto& v, const auto& g) {
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v.array() + (1.0 - beta2) * g.array().square();
        p.array() -= learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
    };
    for (size_t i = 0; i < m_w.size(); ++i) upd(net.weights()[i], m_w[i], v_w[i], gw[i]);
    for (size_t i = 0; i < m_b.size(); ++i) upd(net.biases()[i], m_b[i], v_b[i], gb[i]);
}

void soft_update(DenseNet& target, const DenseNet& source, double tau) {
    if (!target.same_architecture(source))
        throw std::invalid_argument("soft_update: architecture mismatch");
    for (size_t i = 0; i < target.weights().size(); ++i) {
        target.weights()[i] = tau * source.weights()[i] + (1.0 - tau) * target.weights()[i];
        target.biases()[i] = tau * source.biases()[i] + (1.0 - tau) * target.biases()[i];
    }
}

void save_checkpoint(const DenseNet& net, const std::string& path) {
    json doc;
    doc["format_version"] = 1;
    doc["layer_sizes"] = net.layer_sizes();
    json ws = json::array(), bs = json::array();
    for (const auto& w : net.weights()) {
        json rows = json::array();  // row-major
        for (int r = 0; r < w.rows(); ++r)
            for (int c = 0; c < w.cols(); ++c) rows.push_back(w(r, c));
        ws.push_back(rows);
    }
    for (const auto& b : net.biases()) {
        json row = json::array();
        for (int c = 0; c < b.cols(); ++c) row.push_back(b(c));
        bs.push_back(row);
    }
    doc["weights"] = ws;
    doc["biases"] = bs;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << doc.dump() << "\n";
}

DenseNet load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    json doc = json::parse(in);
    if (doc.value("format_version", 0) != 1)
        throw std::runtime_error("checkpoint format_version mismatch in " + path);
    std::vector<int> sizes = doc.at("layer_sizes").get<std::vector<int>>();
    std::mt19937_64 dummy(0);
    DenseNet net(sizes, dummy);
    const auto& ws = doc.at("weights");
    const auto& bs = doc.at("biases");
    if (ws.size() != net.weights().size() || bs.size() != net.biases().size())
        throw std::runtime_error("checkpoint layer count mismatch in " + path);
    for (size_t i = 0; i < net.weights().size(); ++i) {
        auto& w = net.weights()[i];
        const auto& flat = ws[i];
        if (static_cast<long>(flat.size()) != w.size())
            throw std::runtime_error("checkpoint weight size mismatch in " + path);
        long k = 0;
        for (int r = 0; r < w.rows(); ++r)
            for (int c = 0; c < w.cols(); ++c) w(r, c) = flat[k++].get<double>();
        auto& b = net.biases()[i];
        const auto& bf = bs[i];
        if (static_cast<long>(bf.size()) != b.cols())
            throw std::runtime_error("checkpoint bias size mismatch in " + path);
        for (int c = 0; c < b.cols(); ++c) b(c) = bf[c].get<double>();
    }
    return net;
}

}  // namespace dbr::neuro
