#include "dbr/replay.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace dbr::replay {

using json = nlohmann::json;

std::vector<double> return_to_go(const std::vector<double>& rewards, double gamma) {
    std::vector<double> out(rewards.size());
    double acc = 0.0;
    for (size_t i = rewards.size(); i-- > 0;) {
        acc = rewards[i] + gamma * acc;
        out[i] = acc;
    }
    return out;
}

void ReplayBuffer::push_step(Eigen::VectorXd s, Eigen::VectorXd a, double r, Eigen::VectorXd s2,
                             bool done) {
    Transition t;
    t.state = std::move(s);
    t.action = std::move(a);
    t.reward = r;
    t.next_state = std::move(s2);
    t.done = done;
    open_episode_.push_back(std::move(t));
    if (done) end_episode();
}

void ReplayBuffer::end_episode() {
    if (open_episode_.empty()) return;
    std::vector<double> rewards;
    rewards.reserve(open_episode_.size());
    for (const auto& t : open_episode_) rewards.push_back(t.reward);
    std::vector<double> rtg = return_to_go(rewards, gamma_);
    for (size_t i = 0; i < open_episode_.size(); ++i) {
        open_episode_[i].return_to_go = rtg[i];
        push_closed(std::move(open_episode_[i]));
    }
    open_episode_.clear();
}

void ReplayBuffer::push_closed(Transition t) {
    if (!std::isfinite(t.return_to_go))
        throw std::invalid_argument("push_closed: non-finite return_to_go");
    data_.push_back(std::move(t));
    ++insert_count_;
    while (data_.size() > capacity_) data_.pop_front();
}

std::vector<size_t> ReplayBuffer::sample_indices(size_t batch_size, std::mt19937_64& rng) const {
    if (data_.empty()) throw std::runtime_error("sample: empty buffer");
    std::uniform_int_distribution<size_t> d(0, data_.size() - 1);
    std::vector<size_t> out(batch_size);
    for (auto& i : out) i = d(rng);
    return out;
}

std::vector<size_t> ReplayBuffer::sample_from(const std::vector<size_t>& view, size_t batch_size,
                                              std::mt19937_64& rng) const {
    if (view.empty()) throw std::runtime_error("sample: empty partition view");
    std::uniform_int_distribution<size_t> d(0, view.size() - 1);
    std::vector<size_t> out(batch_size);
    for (auto& i : out) i = view[d(rng)];
    return out;
}

DualPartition ReplayBuffer::partition(const std::function<double(const Eigen::VectorXd&)>& value_fn,
                                      uint64_t v_version) const {
    DualPartition p;
    p.v_version = v_version;
    for (size_t i = 0; i < data_.size(); ++i) {
        double v = value_fn(data_[i].state);
        double r = data_[i].return_to_go;
        if (r >= v) p.plus_indices.push_back(i);
        if (r <= v) p.minus_indices.push_back(i);  // ties land in both, per the >= / <= split
    }
    return p;
}

namespace {
json vec_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}
Eigen::VectorXd json_to_vec(const json& a) {
    Eigen::VectorXd v(a.size());
    for (size_t i = 0; i < a.size(); ++i) v(i) = a[i].get<double>();
    return v;
}
}  // namespace

void ReplayBuffer::save(const std::string& path, const std::string& env_id) const {
    if (episode_open()) throw std::runtime_error("dataset_save: open episode; close it first");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write dataset: " + path);
    json header = {{"format", "dbr-dataset"}, {"version", 1}, {"env", env_id}, {"gamma", gamma_}};
    out << header.dump() << "\n";
    for (const auto& t : data_) {
        json line = {{"s", vec_to_json(t.state)}, {"a", vec_to_json(t.action)}, {"r", t.reward},
                     {"s2", vec_to_json(t.next_state)}, {"done", t.done}, {"rtg", t.return_to_go}};
        out << line.dump() << "\n";
    }
}

ReplayBuffer ReplayBuffer::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read dataset: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ":1: missing header");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ":1: bad header: " + e.what());
    }
    if (header.value("format", "") != "dbr-dataset" || header.value("version", 0) != 1)
        throw std::runtime_error(path + ":1: not a dbr-dataset v1 file");
    ReplayBuffer buf(1000000, header.value("gamma", 0.99));
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": parse error: " + e.what());
        }
        Transition t;
        try {
            t.state = json_to_vec(j.at("s"));
            t.action = json_to_vec(j.at("a"));
            t.reward = j.at("r").get<double>();
            t.next_state = json_to_vec(j.at("s2"));
            t.done = j.at("done").get<bool>();
            t.return_to_go = j.at("rtg").get<double>();
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad record: " + e.what());
        }
        if (!std::isfinite(t.reward))
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": non-finite reward");
        if (!std::isfinite(t.return_to_go))
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": non-finite return_to_go");
        buf.push_closed(std::move(t));
    }
    return buf;
}

}  // namespace dbr::replay
