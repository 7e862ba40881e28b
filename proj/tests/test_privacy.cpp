#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "plms/privacy.hpp"
#include "support.hpp"

using namespace plms;

namespace {

Mat random_psd(int n, Rng& rng) {
    Mat g(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) g(i, j) = rng.next_gauss();
    return g * g.transpose() / n;
}

}  // namespace

TEST_CASE("estimation error of the best linear estimator") {
    Mat u(1, 1), xp(1, 1), w(1, 1);
    u << 1.0;
    xp << 2.0;
    w << 1.0;
    CHECK(llmse_mse(u, xp, w) == doctest::Approx(0.5));

    Rng rng(83);
    Mat wm = random_psd(3, rng) + Mat::Identity(3, 3);
    CHECK(std::abs(llmse_mse(wm, wm, wm)) < 1e-9);

    double prev = llmse_mse(wm, wm, wm);
    for (double s2 : {0.1, 1.0, 10.0, 100.0}) {
        double e = llmse_mse(wm, Mat(wm + s2 * Mat::Identity(3, 3)), wm);
        CHECK(e >= prev - 1e-12);
        prev = e;
    }
    double far = llmse_mse(wm, Mat(wm + 1e12 * Mat::Identity(3, 3)), wm);
    CHECK(far == doctest::Approx(wm.trace()).epsilon(1e-6));

    CHECK_THROWS_AS(llmse_mse(u, Mat::Zero(1, 1), w), NumericError);
}

TEST_CASE("closed-form power satisfies its own constraint") {
    Mat u = Mat::Identity(2, 2);
    Mat w = Mat::Identity(2, 2);
    double s2 = sufficient_power(u, w, 1.0);
    CHECK(s2 == doctest::Approx(2.0));
    Mat x = Mat::Identity(2, 2);
    CHECK((u * (x + s2 * Mat::Identity(2, 2)).inverse() * u.transpose()).trace() ==
          doctest::Approx(2.0 / 3.0));
    CHECK(verify_constraint(s2, u, x, w, 1.0));

    CHECK(sufficient_power(u, w, 0.0) ==
          doctest::Approx((u.transpose() * u).trace() / w.trace()));
}

TEST_CASE("steady-state power identity") {
    CHECK(steady_state_power(Mat::Identity(3, 3), 0.9) == doctest::Approx(10.0 / 7.0));
    Rng rng(89);
    Mat w = random_psd(4, rng) + 0.1 * Mat::Identity(4, 4);
    double delta = 0.3 * w.trace();
    CHECK(steady_state_power(w, delta) ==
          doctest::Approx((w * w).trace() / (w.trace() - delta)));
    CHECK(steady_state_power(w, delta) == doctest::Approx(sufficient_power(w, w, delta)));
}

TEST_CASE("sufficiency holds on random instances and is near-minimal") {
    Rng rng(97);
    for (int trial = 0; trial < 100; ++trial) {
        int n = rng.uniform_int(2, 4);
        Mat w = random_psd(n, rng) + 0.2 * Mat::Identity(n, n);
        Mat u = w - random_psd(n, rng) * 0.05;
        Mat x = w + random_psd(n, rng) * 0.05;
        double delta = rng.uniform(0.05, 0.6) * w.trace();
        double s2 = sufficient_power(u, w, delta);
        CHECK(s2 > 0.0);
        CHECK(verify_constraint(s2, u, x, w, delta));
    }
}

TEST_CASE("constraint verification rejects the degenerate corners") {
    Mat w = Mat::Identity(2, 2);
    CHECK_FALSE(verify_constraint(0.0, w, w, w, 0.5));
    CHECK_FALSE(verify_constraint(1e6, w, w, w, w.trace()));
    CHECK(verify_constraint(0.0, Mat::Zero(2, 2), w, w, 0.0));
    CHECK_THROWS_AS(sufficient_power(w, w, w.trace()), ConfigError);
}

TEST_CASE("adaptive estimator holds its power behind the guard") {
    AdaptiveNoiseState st(0.5, 0.95);
    CHECK(st.power == 0.0);
    Vec mean = Vec::Constant(3, 1.0);
    for (int i = 0; i < 200; ++i) st.update(mean, mean);
    CHECK(st.power == 0.0);
}

TEST_CASE("forgetting factor zero reproduces the one-step estimate") {
    AdaptiveNoiseState st(0.5, 0.0);
    Vec psi(2), mean(2);
    psi << 2.0, 1.0;
    mean << 1.0, 0.0;
    st.update(psi, mean);
    double tr = 2.0;
    CHECK(st.beta == doctest::Approx(tr * tr));
    CHECK(st.gamma == doctest::Approx(tr));
    CHECK(st.power == doctest::Approx(tr * tr / (tr - 0.5)));
}

TEST_CASE("adaptive power is never negative along a random stream") {
    Rng rng(101);
    AdaptiveNoiseState st(0.8, 0.9);
    for (int i = 0; i < 2000; ++i) {
        Vec psi = rng.gauss_vec(3);
        st.update(psi, Vec::Zero(3));
        CHECK(st.power >= 0.0);
    }
    CHECK(st.power > 0.0);
}

TEST_CASE("ensemble traces drive the same recursion") {
    AdaptiveNoiseState a(0.25, 0.9);
    AdaptiveNoiseState b(0.25, 0.9);
    Rng rng(103);
    for (int i = 0; i < 50; ++i) {
        Vec x = rng.gauss_vec(2);
        a.update(x, Vec::Zero(2));
        double tr = x.squaredNorm();
        b.update_traces(tr, tr * tr);
        CHECK(a.power == doctest::Approx(b.power));
    }
}

TEST_CASE("noise samples have the requested variance") {
    Rng rng(107);
    CHECK(sample_noise(0.0, 4, rng).cwiseAbs().maxCoeff() == 0.0);
    const int n = 100000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += sample_noise(2.5, 1, rng).squaredNorm();
    CHECK(acc / n == doctest::Approx(2.5).epsilon(0.03));
}

TEST_CASE("cross moment reaching the target covariance recovers the limit power") {
    Rng rng(109);
    Mat w = random_psd(3, rng) + 0.2 * Mat::Identity(3, 3);
    double delta = 0.4 * w.trace();
    CHECK(sufficient_power(w, w, delta) == doctest::Approx(steady_state_power(w, delta)));
}
