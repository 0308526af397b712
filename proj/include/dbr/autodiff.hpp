#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <vector>

namespace dbr::autodiff {

// Reverse-mode tape over dense matrices. Values are handles into the tape;
// a fresh tape is built for every training step and thrown away afterwards.
class Tape;

struct Val {
    Tape* tape = nullptr;
    int id = -1;
};

class Tape {
public:
    struct Node {
        Eigen::MatrixXd value;
        Eigen::MatrixXd grad;
        std::function<void()> backprop;  // empty for leaves/constants
        bool requires_grad = false;
    };

    Val constant(Eigen::MatrixXd v) { return push(std::move(v), false); }
    Val leaf(Eigen::MatrixXd v) { return push(std::move(v), true); }

    const Eigen::MatrixXd& value(Val v) const { return nodes_[v.id].value; }
    const Eigen::MatrixXd& grad(Val v) const { return nodes_[v.id].grad; }
    double scalar(Val v) const {
        const auto& m = nodes_[v.id].value;
        if (m.size() != 1) throw std::logic_error("Tape::scalar: value is not 1x1");
        return m(0, 0);
    }

    // Generic node insertion; op implementations live in this header's free
    // functions, custom ops (e.g. the MMD estimator) use it directly.
    Val push(Eigen::MatrixXd v, bool requires_grad) {
        nodes_.push_back(Node{std::move(v), {}, {}, requires_grad});
        auto& n = nodes_.back();
        if (n.requires_grad) n.grad = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
        return Val{this, static_cast<int>(nodes_.size()) - 1};
    }
    void set_backprop(Val v, std::function<void()> fn) { nodes_[v.id].backprop = std::move(fn); }
    Node& node(int id) { return nodes_[id]; }

    // Accumulates d(loss)/d(node) for every node that requires grad.
    void backward(Val loss) {
        auto& ln = nodes_[loss.id];
        if (ln.value.size() != 1) throw std::logic_error("backward: loss must be scalar");
        if (!ln.requires_grad) return;  // loss constant in all parameters
        ln.grad(0, 0) = 1.0;
        for (int i = loss.id; i >= 0; --i) {
            if (nodes_[i].requires_grad && nodes_[i].backprop) nodes_[i].backprop();
        }
    }

    size_t size() const { return nodes_.size(); }

private:
    std::vector<Node> nodes_;
};

namespace detail {
inline bool rg(const Tape::Node& n) { return n.requires_grad; }
}

// --- elementwise / structural ops ------------------------------------------

Val add(Val a, Val b);
Val sub(Val a, Val b);
Val mul(Val a, Val b);              // elementwise, same shape
Val mul_bcast_col(Val a, Val col);  // a: (r x c), col: (r x 1)
Val neg(Val a);
Val scalar_mul(Val a, double k);
Val scalar_add(Val a, double k);
Val matmul(Val a, Val b);
Val add_rowvec(Val a, Val row);     // broadcast (1 x c) over rows
Val relu(Val a);
Val tanh_(Val a);
Val atanh_(Val a);
Val exp_(Val a);
Val log_(Val a);
Val square(Val a);
Val clamp(Val a, double lo, double hi);  // zero gradient outside [lo, hi]
Val stopgrad(Val a);
Val sum(Val a);                     // 1x1
Val mean(Val a);                    // 1x1
Val rowsum(Val a);                  // (r x 1)
Val colslice(Val a, int start, int n);
Val gather_cols(Val a, const std::vector<int>& idx);  // (r x 1), a(i, idx[i])
Val logsumexp_rows(Val a);          // (r x 1), numerically stable
Val minimum(Val a, Val b);          // elementwise min, gradient to the smaller (ties -> a)
Val hcat(Val a, Val b);             // column-wise concatenation, same row count

}  // namespace dbr::autodiff
