#include "dbr/autodiff.hpp"

namespace dbr::autodiff {

namespace {

void check_same_tape(Val a, Val b) {
    if (a.tape != b.tape) throw std::logic_error("values from different tapes");
}

// Binary op helper: forward value + per-input gradient accumulators.
Val binary(Val a, Val b, Eigen::MatrixXd v,
           std::function<void(Tape&, const Eigen::MatrixXd&)> da,
           std::function<void(Tape&, const Eigen::MatrixXd&)> db) {
    check_same_tape(a, b);
    Tape& t = *a.tape;
    bool rg = t.node(a.id).requires_grad || t.node(b.id).requires_grad;
    Val out = t.push(std::move(v), rg);
    if (rg) {
        int oi = out.id, ai = a.id, bi = b.id;
        t.set_backprop(out, [&t, oi, ai, bi, da = std::move(da), db = std::move(db)] {
            const Eigen::MatrixXd& g = t.node(oi).grad;
            if (t.node(ai).requires_grad) da(t, g);
            if (t.node(bi).requires_grad) db(t, g);
        });
    }
    return out;
}

Val unary(Val a, Eigen::MatrixXd v, std::function<void(Tape&, const Eigen::MatrixXd&)> da) {
    Tape& t = *a.tape;
    bool rg = t.node(a.id).requires_grad;
    Val out = t.push(std::move(v), rg);
    if (rg && da) {
        int oi = out.id;
        t.set_backprop(out, [&t, oi, da = std::move(da)] { da(t, t.node(oi).grad); });
    }
    return out;
}

}  // namespace

Val add(Val a, Val b) {
    Tape& t = *a.tape;
    return binary(a, b, t.value(a) + t.value(b),
                  [ai = a.id](Tape& t, const Eigen::MatrixXd& g) { t.node(ai).grad += g; },
                  [bi = b.id](Tape& t, const Eigen::MatrixXd& g) { t.node(bi).grad += g; });
}

Val sub(Val a, Val b) {
    Tape& t = *a.tape;
    return binary(a, b, t.value(a) - t.value(b),
                  [ai = a.id](Tape& t, const Eigen::MatrixXd& g) { t.node(ai).grad += g; },
                  [bi = b.id](Tape& t, const Eigen::MatrixXd& g) { t.node(bi).grad -= g; });
}

Val mul(Val a, Val b) {
    Tape& t = *a.tape;
    return binary(a, b, t.value(a).cwiseProduct(t.value(b)),
                  [ai = a.id, bi = b.id](Tape& t, const Eigen::MatrixXd& g) {
                      t.node(ai).grad += g.cwiseProduct(t.node(bi).value);
                  },
                  [ai = a.id, bi = b.id](Tape& t, const Eigen::MatrixXd& g) {
                      t.node(bi).grad += g.cwiseProduct(t.node(ai).value);
                  });
}

Val mul_bcast_col(Val a, Val col) {
    Tape& t = *a.tape;
    Eigen::MatrixXd v = t.value(a).array().colwise() * t.value(col).col(0).array();
    return binary(a, col, std::move(v),
                  [ai = a.id, ci = col.id](Tape& t, const Eigen::MatrixXd& g) {
                      t.node(ai).grad.array() += g.array().colwise() * t.node(ci).value.col(0).array();
                  },
                  [ai = a.id, ci = col.id](Tape& t, const Eigen::MatrixXd& g) {
                      t.node(ci).grad.col(0) += g.cwiseProduct(t.node(ai).value).rowwise().sum();
                  });
}

Val neg(Val a) {
    Tape& t = *a.tape;
    return unary(a, -t.value(a),
                 [ai = a.id](Tape& t, const Eigen::MatrixXd& g) { t.node(ai).grad -= g; });
}

Val scalar_mul(Val a, double k) {
    Tape& t = *a.tape;
    return unary(a, t.value(a) * k,
                 [ai = a.id, k](Tape& t, const Eigen::MatrixXd& g) { t.node(ai).grad += g * k; });
}

Val scalar_add(Val a, double k) {
    Tape& t = *a.tape;
    return unary(a, t.value(a).array() + k,
                 [ai = a.id](Tape& t, const Eigen::MatrixXd& g) { t.node(ai).grad += g; });
}

Val matmul(Val a, Val b) {
    Tape& t = *a.tape;
    return binary(a, b, t.value(a) * t.value(b),
                  [ai = a.id, bi = b.id](Tape& t, const Eigen::MatrixXd& g) {
                      t.node(ai).grad.noalias() += g * t.node(bi).value.transpose();
                  },
                  [ai = a.id, bi = b.id](Tape& t, const Eigen::MatrixXd& g) {
                      t.node(bi).grad.noalias() += t.node(ai).value.transpose() * g;
                  });
}

Val add_rowvec(Val a, Val row) {
    Tape& t = *a.tape;
    Eigen::MatrixXd v = t.value(a).rowwise() + t.value(row).row(0);
    return binary(a, row, std::move(v),
                  [ai = a.id](Tape& t, const Eigen::MatrixXd& g) { t.node(ai).grad += g; },
                  [ri = row.id](Tape& t, const Eigen::MatrixXd& g) {
                      t.node(ri).grad.row(0) += g.colwise().sum();
                  });
}

Val relu(Val a) {
    Tape& t = *a.tape;
    return unary(a, t.value(a).cwiseMax(0.0),
                 [ai = a.id](Tape& t, const Eigen::MatrixXd& g) {
                     t.node(ai).grad.array() +=
                         g.array() * (t.node(ai).value.array() > 0.0).cast<double>();
                 });
}

Val tanh_(Val a) {
    Tape& t = *a.tape;
    Eigen::MatrixXd v = t.value(a).array().tanh();
    Val out = unary(a, v, nullptr);
    if (t.node(out.id).requires_grad) {
        int oi = out.id, ai = a.id;
        t.set_backprop(out, [&t, oi, ai] {
            t.node(ai).grad.array() +=
                t.node(oi).grad.array() * (1.0 - t.node(oi).value.array().square());
        });
    }
    return out;
}

Val atanh_(Val a) {
    Tape& t = *a.tape;
    Eigen::MatrixXd v = t.value(a).array().atanh();
    return unary(a, std::move(v), [ai = a.id](Tape& t, const Eigen::MatrixXd& g) {
        t.node(ai).grad.array() += g.array() / (1.0 - t.node(ai).value.array().square());
    });
}

Val exp_(Val a) {
    Tape& t = *a.tape;
    Eigen::MatrixXd v = t.value(a).array().exp();
    Val out = unary(a, v, nullptr);
    if (t.node(out.id).requires_grad) {
        int oi = out.id, ai = a.id;
        t.set_backprop(out, [&t, oi, ai] {
            t.node(ai).grad.array() += t.node(oi).grad.array() * t.node(oi).value.array();
        });
    }
    return out;
}

Val log_(Val a) {
    Tape& t = *a.tape;
    Eigen::MatrixXd v = t.value(a).array().log();
    return unary(a, std::move(v), [ai = a.id](Tape& t, const Eigen::MatrixXd& g) {
        t.node(ai).grad.array() += g.array() / t.node(ai).value.array();
    });
}

Val square(Val a) {
    Tape& t = *a.tape;
    return unary(a, t.value(a).array().square(),
                 [ai = a.id](Tape& t, const Eigen::MatrixXd& g) {
                     t.node(ai).grad.array() += 2.0 * g.array() * t.node(ai).value.array();
                 });
}

Val clamp(Val a, double lo, double hi) {
    Tape& t = *a.tape;
    return unary(a, t.value(a).cwiseMax(lo).cwiseMin(hi),
                 [ai = a.id, lo, hi](Tape& t, const Eigen::MatrixXd& g) {
                     const auto& x = t.node(ai).value.array();
                     t.node(ai).grad.array() +=
                         g.array() * ((x >= lo) && (x <= hi)).cast<double>();
                 });
}

Val stopgrad(Val a) { return a.tape->constant(a.tape->value(a)); }

Val sum(Val a) {
    Tape& t = *a.tape;
    Eigen::MatrixXd v(1, 1);
    v(0, 0) = t.value(a).sum();
    return unary(a, std::move(v), [ai = a.id](Tape& t, const Eigen::MatrixXd& g) {
        t.node(ai).grad.array() += g(0, 0);
    });
}

Val mean(Val a) {
    Tape& t = *a.tape;
    double n = static_cast<double>(t.value(a).size());
    Eigen::MatrixXd v(1, 1);
    v(0, 0) = t.value(a).sum() / n;
    return unary(a, std::move(v), [ai = a.id, n](Tape& t, const Eigen::MatrixXd& g) {
        t.node(ai).grad.array() += g(0, 0) / n;
    });
}

Val rowsum(Val a) {
    Tape& t = *a.tape;
    Eigen::MatrixXd v = t.value(a).rowwise().sum();
    return unary(a, std::move(v), [ai = a.id](Tape& t, const Eigen::MatrixXd& g) {
        t.node(ai).grad.colwise() += g.col(0);
    });
}

Val colslice(Val a, int start, int n) {
    Tape& t = *a.tape;
    Eigen::MatrixXd v = t.value(a).middleCols(start, n);
    return unary(a, std::move(v), [ai = a.id, start, n](Tape& t, const Eigen::MatrixXd& g) {
        t.node(ai).grad.middleCols(start, n) += g;
    });
}

Val gather_cols(Val a, const std::vector<int>& idx) {
    Tape& t = *a.tape;
    const auto& m = t.value(a);
    if (static_cast<int>(idx.size()) != m.rows())
        throw std::invalid_argument("gather_cols: index count != rows");
    Eigen::MatrixXd v(m.rows(), 1);
    for (int i = 0; i < m.rows(); ++i) v(i, 0) = m(i, idx[i]);
    return unary(a, std::move(v), [ai = a.id, idx](Tape& t, const Eigen::MatrixXd& g) {
        for (int i = 0; i < g.rows(); ++i) t.node(ai).grad(i, idx[i]) += g(i, 0);
    });
}

Val logsumexp_rows(Val a) {
    Tape& t = *a.tape;
    const auto& m = t.value(a);
    Eigen::VectorXd mx = m.rowwise().maxCoeff();
    Eigen::MatrixXd shifted = m.colwise() - mx;
    Eigen::VectorXd se = shifted.array().exp().rowwise().sum();
    Eigen::MatrixXd v = (se.array().log() + mx.array()).matrix();
    // softmax cached for the backward pass
    Eigen::MatrixXd soft = shifted.array().exp().colwise() / se.array();
    return unary(a, std::move(v), [ai = a.id, soft](Tape& t, const Eigen::MatrixXd& g) {
        t.node(ai).grad.array() += soft.array().colwise() * g.col(0).array();
    });
}

Val minimum(Val a, Val b) {
    Tape& t = *a.tape;
    return binary(a, b, t.value(a).cwiseMin(t.value(b)),
                  [ai = a.id, bi = b.id](Tape& t, const Eigen::MatrixXd& g) {
                      auto mask = (t.node(ai).value.array() <= t.node(bi).value.array()).cast<double>();
                      t.node(ai).grad.array() += g.array() * mask;
                  },
                  [ai = a.id, bi = b.id](Tape& t, const Eigen::MatrixXd& g) {
                      auto mask = (t.node(ai).value.array() > t.node(bi).value.array()).cast<double>();
                      t.node(bi).grad.array() += g.array() * mask;
                  });
}

Val hcat(Val a, Val b) {
    Tape& t = *a.tape;
    const auto& va = t.value(a);
    const auto& vb = t.value(b);
    if (va.rows() != vb.rows()) throw std::invalid_argument("hcat: row count mismatch");
    Eigen::MatrixXd v(va.rows(), va.cols() + vb.cols());
    v << va, vb;
    long ca = va.cols(), cb = vb.cols();
    return binary(a, b, std::move(v),
                  [ai = a.id, ca](Tape& t, const Eigen::MatrixXd& g) {
                      t.node(ai).grad += g.leftCols(ca);
                  },
                  [bi = b.id, ca, cb](Tape& t, const Eigen::MatrixXd& g) {
                      t.node(bi).grad += g.middleCols(ca, cb);
                  });
}

}  // namespace dbr::autodiff
