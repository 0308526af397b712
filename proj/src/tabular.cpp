#include "dbr/tabular.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace dbr::tabular {

using json = nlohmann::json;

bool row_stochastic(const Eigen::MatrixXd& m, double tol) {
    for (int r = 0; r < m.rows(); ++r) {
        if (std::abs(m.row(r).sum() - 1.0) > tol) return false;
        for (int c = 0; c < m.cols(); ++c)
            if (m(r, c) < 0.0) return false;
    }
    return true;
}

void TabularMdp::validate() const {
    if (n_states < 1 || n_actions < 1) throw std::invalid_argument("mdp: empty state/action space");
    if (static_cast<int>(P.size()) != n_actions) throw std::invalid_argument("mdp: P action count");
    for (const auto& pa : P) {
        if (pa.rows() != n_states || pa.cols() != n_states)
            throw std::invalid_argument("mdp: P shape mismatch");
        if (!row_stochastic(pa)) throw std::invalid_argument("mdp: P rows must be distributions");
    }
    if (R.rows() != n_states || R.cols() != n_actions)
        throw std::invalid_argument("mdp: R shape mismatch");
    if (rho0.size() != n_states || std::abs(rho0.sum() - 1.0) > 1e-12 || rho0.minCoeff() < 0.0)
        throw std::invalid_argument("mdp: rho0 must be a distribution");
    if (gamma <= 0.0 || gamma >= 1.0) throw std::invalid_argument("mdp: gamma must be in (0,1)");
}

Eigen::MatrixXd TabularMdp::transition_matrix(const PolicyTable& pi) const {
    if (pi.rows() != n_states || pi.cols() != n_actions)
        throw std::invalid_argument("transition_matrix: policy shape mismatch");
    if (!row_stochastic(pi, 1e-9)) throw std::invalid_argument("transition_matrix: policy not row-stochastic");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_states, n_states);
    for (int a = 0; a < n_actions; ++a)
        out += pi.col(a).asDiagonal() * P[a];
    return out;
}

TabularMdp TabularMdp::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read mdp: " + path);
    json j = json::parse(in);
    TabularMdp m;
    const auto& P = j.at("P");
    m.n_states = static_cast<int>(P.size());
    if (m.n_states == 0) throw std::runtime_error(path + ": empty P");
    m.n_actions = static_cast<int>(P[0].size());
    m.P.assign(m.n_actions, Eigen::MatrixXd::Zero(m.n_states, m.n_states));
    for (int s = 0; s < m.n_states; ++s) {
        if (static_cast<int>(P[s].size()) != m.n_actions)
            throw std::runtime_error(path + ": ragged P");
        for (int a = 0; a < m.n_actions; ++a) {
            if (static_cast<int>(P[s][a].size()) != m.n_states)
                throw std::runtime_error(path + ": P row length mismatch");
            for (int s2 = 0; s2 < m.n_states; ++s2) m.P[a](s, s2) = P[s][a][s2].get<double>();
        }
    }
    const auto& R = j.at("R");
    m.R.resize(m.n_states, m.n_actions);
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a) m.R(s, a) = R[s][a].get<double>();
    const auto& rho = j.at("rho0");
    m.rho0.resize(m.n_states);
    for (int s = 0; s < m.n_states; ++s) m.rho0(s) = rho[s].get<double>();
    m.gamma = j.at("gamma").get<double>();
    m.validate();
    return m;
}

void TabularMdp::save(const std::string& path) const {
    validate();
    json jP = json::array();
    for (int s = 0; s < n_states; ++s) {
        json row = json::array();
        for (int a = 0; a < n_actions; ++a) {
            json dist = json::array();
            for (int s2 = 0; s2 < n_states; ++s2) dist.push_back(P[a](s, s2));
            row.push_back(dist);
        }
        jP.push_back(row);
    }
    json jR = json::array();
    for (int s = 0; s < n_states; ++s) {
        json row = json::array();
        for (int a = 0; a < n_actions; ++a) row.push_back(R(s, a));
        jR.push_back(row);
    }
    json jrho = json::array();
    for (int s = 0; s < n_states; ++s) jrho.push_back(rho0(s));
    json doc = {{"P", jP}, {"R", jR}, {"rho0", jrho}, {"gamma", gamma}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write mdp: " + path);
    out << doc.dump() << "\n";
}

TabularMdp TabularMdp::random(int n_states, int n_actions, double gamma, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    TabularMdp m;
    m.n_states = n_states;
    m.n_actions = n_actions;
    m.gamma = gamma;
    m.P.assign(n_actions, Eigen::MatrixXd::Zero(n_states, n_states));
    for (int a = 0; a < n_actions; ++a)
        for (int s = 0; s < n_states; ++s) {
            Eigen::VectorXd row(n_states);
            for (int s2 = 0; s2 < n_states; ++s2) row(s2) = u(rng);
            m.P[a].row(s) = row / row.sum();
        }
    m.R.resize(n_states, n_actions);
    std::uniform_real_distribution<double> ur(-1.0, 1.0);
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) m.R(s, a) = ur(rng);
    Eigen::VectorXd rho(n_states);
    for (int s = 0; s < n_states; ++s) rho(s) = u(rng);
    m.rho0 = rho / rho.sum();
    return m;
}

std::vector<TabularStep> tabular_sample(const TabularMdp& mdp, const PolicyTable& policy,
                                        int horizon, std::mt19937_64& rng) {
    if (!row_stochastic(policy, 1e-9))
        throw std::invalid_argument("tabular_sample: policy not row-stochastic");
    auto draw = [&rng](const Eigen::VectorXd& p) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double r = u(rng), acc = 0.0;
        for (int i = 0; i < p.size(); ++i) {
            acc += p(i);
            if (r <= acc) return i;
        }
        return static_cast<int>(p.size()) - 1;
    };
    std::vector<TabularStep> episode;
    int s = draw(mdp.rho0);
    for (int t = 0; t < horizon; ++t) {
        int a = draw(policy.row(s).transpose());
        int s2 = draw(mdp.P[a].row(s).transpose());
        episode.push_back({s, a, mdp.R(s, a), s2});
        s = s2;
    }
    return episode;
}

}  // namespace dbr::tabular
