#include <doctest.h>

#include <cmath>
#include <random>

#include "dbr/heads.hpp"

using namespace dbr::neuro;
namespace ad = dbr::autodiff;

TEST_CASE("squashed gaussian: tiny std collapses to tanh(mean)") {
    SquashedGaussianHead head{1};
    Eigen::VectorXd out(2);
    out << 0.0, -30.0;  // mean 0, log_std below the clamp floor
    std::mt19937_64 rng(1);
    for (int i = 0; i < 20; ++i) {
        Eigen::VectorXd a = head.sample_plain(out, rng);
        CHECK(std::abs(a(0)) < 1e-6);
    }
}

TEST_CASE("squashed gaussian: actions strictly inside (-1,1)") {
    SquashedGaussianHead head{3};
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd(0.0, 3.0);
    for (int trial = 0; trial < 200; ++trial) {
        Eigen::VectorXd out(6);
        for (int i = 0; i < 6; ++i) out(i) = nd(rng);
        Eigen::VectorXd a = head.sample_plain(out, rng);
        for (int i = 0; i < 3; ++i) {
            CHECK(a(i) > -1.0);
            CHECK(a(i) < 1.0);
        }
        CHECK(std::isfinite(head.log_prob_plain(out, a)));
    }
}

TEST_CASE("squashed gaussian density integrates to 1 in 1-D") {
    SquashedGaussianHead head{1};
    Eigen::VectorXd out(2);
    out << 0.4, -0.5;
    // quadrature over the action interval
    const int n = 200000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        double a = -1.0 + (i + 0.5) * (2.0 / n);
        acc += std::exp(head.log_prob_plain(out, Eigen::VectorXd::Constant(1, a))) * (2.0 / n);
    }
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("squashed gaussian: flipped mean negates the deterministic action") {
    SquashedGaussianHead head{2};
    Eigen::VectorXd out(4);
    out << 0.7, -0.3, 0.0, 0.0;
    Eigen::VectorXd flipped = out;
    flipped.head(2) = -out.head(2);
    CHECK((head.mean_action(out) + head.mean_action(flipped)).norm() < 1e-15);
}

TEST_CASE("graph sample log_prob agrees with the plain evaluation") {
    SquashedGaussianHead head{2};
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd netout(3, 4);
    for (int i = 0; i < netout.size(); ++i) netout.data()[i] = 0.5 * nd(rng);
    Eigen::MatrixXd noise(3, 2);
    for (int i = 0; i < noise.size(); ++i) noise.data()[i] = nd(rng);

    ad::Tape tape;
    auto gs = head.sample(tape, tape.constant(netout), noise);
    for (int r = 0; r < 3; ++r) {
        Eigen::VectorXd a = tape.value(gs.action).row(r).transpose();
        double plain = head.log_prob_plain(netout.row(r).transpose(), a);
        CHECK(tape.value(gs.log_prob)(r, 0) == doctest::Approx(plain).epsilon(1e-6));
    }
}

TEST_CASE("categorical: equal logits give 1/7 each, summing to 1") {
    CategoricalHead head{7};
    Eigen::VectorXd logits = Eigen::VectorXd::Constant(7, 1.3);
    Eigen::VectorXd p = head.probs_plain(logits);
    CHECK(std::abs(p.sum() - 1.0) < 1e-9);
    for (int i = 0; i < 7; ++i) CHECK(p(i) == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("categorical: dominant logit takes all mass") {
    CategoricalHead head{4};
    Eigen::VectorXd logits(4);
    logits << 0.0, 500.0, 0.0, 0.0;
    Eigen::VectorXd p = head.probs_plain(logits);
    CHECK(p(1) == doctest::Approx(1.0));
    CHECK(head.argmax(logits) == 1);
}

TEST_CASE("categorical sampling frequencies within 3-sigma binomial bounds") {
    CategoricalHead head{5};
    Eigen::VectorXd logits(5);
    logits << 0.1, -0.4, 1.0, 0.0, 0.5;
    Eigen::VectorXd p = head.probs_plain(logits);
    std::mt19937_64 rng(123);
    const int n = 100000;
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(5);
    for (int i = 0; i < n; ++i) counts(head.sample_plain(logits, rng)) += 1.0;
    for (int i = 0; i < 5; ++i) {
        double sigma = std::sqrt(n * p(i) * (1 - p(i)));
        CHECK(std::abs(counts(i) - n * p(i)) < 3.0 * sigma);
    }
}

TEST_CASE("categorical masked sampling never picks illegal actions") {
    CategoricalHead head{4};
    Eigen::VectorXd logits = Eigen::VectorXd::Zero(4);
    std::vector<bool> mask = {false, true, false, true};
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
        int a = head.sample_plain(logits, rng, mask);
        CHECK((a == 1 || a == 3));
    }
}

TEST_CASE("graph log_probs: rows are normalized log distributions") {
    CategoricalHead head{6};
    ad::Tape tape;
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd logits(4, 6);
    for (int i = 0; i < logits.size(); ++i) logits.data()[i] = nd(rng);
    auto lp = head.log_probs(tape, tape.constant(logits));
    for (int r = 0; r < 4; ++r) {
        double s = tape.value(lp).row(r).array().exp().sum();
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}
