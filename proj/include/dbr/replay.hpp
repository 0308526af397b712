#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace dbr::replay {

struct Transition {
    Eigen::VectorXd state;
    Eigen::VectorXd action;  // 1-dim holding the index for discrete actions
    double reward = 0.0;
    Eigen::VectorXd next_state;
    bool done = false;
    double return_to_go = 0.0;
};

inline double clip_pos(double x) { return x > 0.0 ? x : 0.0; }
inline double clip_neg(double x) { return x < 0.0 ? x : 0.0; }

// R_t = sum_k gamma^k r_{t+k}, by backward recursion.
std::vector<double> return_to_go(const std::vector<double>& rewards, double gamma);

// D+/D- index views over a buffer, tagged with the V snapshot that labeled them.
struct DualPartition {
    std::vector<size_t> plus_indices;   // R >= V(s)
    std::vector<size_t> minus_indices;  // R <= V(s)
    uint64_t v_version = 0;
};

// A_T = max(A_{T-1}, 0) + (q - v)
struct ArmAccumulator {
    double value = 0.0;
    long iteration = 0;
    void update(double q, double v) {
        value = clip_pos(value) + (q - v);
        ++iteration;
    }
};

// FIFO ring buffer of closed-episode transitions.
class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity = 1000000, double gamma = 0.99)
        : capacity_(capacity), gamma_(gamma) {}

    // Episode interface: transitions enter the ring only when the episode
    // closes, so return_to_go is always filled.
    void push_step(Eigen::VectorXd s, Eigen::VectorXd a, double r, Eigen::VectorXd s2, bool done);
    void end_episode();  // closes the open episode (marks last step done = false horizon cut)
    bool episode_open() const { return !open_episode_.empty(); }

    void push_closed(Transition t);  // for dataset loading; rtg must be set

    size_t size() const { return data_.size(); }
    size_t insertions() const { return insert_count_; }
    size_t capacity() const { return capacity_; }
    double gamma() const { return gamma_; }
    const Transition& at(size_t i) const { return data_[i]; }

    std::vector<size_t> sample_indices(size_t batch_size, std::mt19937_64& rng) const;
    std::vector<size_t> sample_from(const std::vector<size_t>& view, size_t batch_size,
                                    std::mt19937_64& rng) const;

    DualPartition partition(const std::function<double(const Eigen::VectorXd&)>& value_fn,
                            uint64_t v_version) const;

    void save(const std::string& path, const std::string& env_id) const;
    static ReplayBuffer load(const std::string& path);

private:
    size_t capacity_;
    double gamma_;
    std::deque<Transition> data_;
    std::vector<Transition> open_episode_;
    size_t insert_count_ = 0;
};

}  // namespace dbr::replay
