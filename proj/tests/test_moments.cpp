#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "plms/moments.hpp"
#include "support.hpp"

using namespace plms;

namespace {

SignalModel toy_model(Rng& rng, double mu0 = 0.05, double mu1 = 0.08) {
    SignalModel m;
    m.dims = {2, 1};
    m.offsets = {0, 2};
    m.ru = {random_spd(2, 0.8, 2.0, rng), random_spd(1, 0.8, 2.0, rng)};
    m.ru_chol = {Mat(Eigen::LLT<Mat>(m.ru[0]).matrixL()),
                 Mat(Eigen::LLT<Mat>(m.ru[1]).matrixL())};
    m.sv2 = {0.3, 0.5};
    m.mu = {mu0, mu1};
    m.refresh_global();
    return m;
}

Mat block_regressor(const SignalModel& m, Rng& rng) {
    Mat r = Mat::Zero(3, 3);
    for (int k = 0; k < 2; ++k) {
        int o = m.offsets[k], d = m.dims[k];
        Vec u = m.ru_chol[k] * rng.gauss_vec(d);
        r.block(o, o, d, d) = u * u.transpose();
    }
    return r;
}

Mat random_mat(int n, Rng& rng) {
    Mat s(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) s(i, j) = rng.next_gauss();
    return s;
}

}  // namespace

TEST_CASE("scalar fourth moment is three") {
    Mat one = Mat::Identity(1, 1);
    CHECK(gaussian_fourth_moment(one, one)(0, 0) == doctest::Approx(3.0));
}

TEST_CASE("isotropic fourth moment is dimension plus two") {
    Mat r = Mat::Identity(2, 2);
    CHECK(testsup::near(gaussian_fourth_moment(r, r), Mat(4.0 * Mat::Identity(2, 2)),
                        1e-12));
    Mat r3 = Mat::Identity(3, 3);
    CHECK(testsup::near(gaussian_fourth_moment(r3, r3), Mat(5.0 * Mat::Identity(3, 3)),
                        1e-12));
}

TEST_CASE("fourth moment matches Monte Carlo") {
    Rng rng(113);
    Mat r = random_spd(3, 0.5, 2.0, rng);
    Mat l = Eigen::LLT<Mat>(r).matrixL();
    Mat s = random_mat(3, rng);
    Mat expect = gaussian_fourth_moment(r, s);
    const int n = 300000;
    Mat acc = Mat::Zero(3, 3);
    for (int i = 0; i < n; ++i) {
        Vec u = l * rng.gauss_vec(3);
        acc += u.dot(s * u) * (u * u.transpose());
    }
    acc /= n;
    double scale = expect.cwiseAbs().maxCoeff();
    CHECK((acc - expect).cwiseAbs().maxCoeff() < 0.05 * scale);
}

TEST_CASE("block sandwich splits into mean products and diagonal corrections") {
    Rng rng(127);
    SignalModel m = toy_model(rng);
    Mat s = random_mat(3, rng);
    Mat expect = m.cal_ru * s * m.cal_ru;
    for (int k = 0; k < 2; ++k) {
        int o = m.offsets[k], d = m.dims[k];
        expect.block(o, o, d, d) =
            gaussian_fourth_moment(m.ru[k], s.block(o, o, d, d));
    }
    CHECK(testsup::near(quartic_sandwich(m, s), expect, 1e-12));
}

TEST_CASE("block sandwich matches Monte Carlo") {
    Rng rng(131);
    SignalModel m = toy_model(rng);
    Mat s = random_mat(3, rng);
    s = Mat(0.5 * (s + s.transpose()));
    Mat expect = quartic_sandwich(m, s);
    const int n = 200000;
    Mat acc = Mat::Zero(3, 3);
    for (int i = 0; i < n; ++i) {
        Mat r = block_regressor(m, rng);
        acc += r * s * r;
    }
    acc /= n;
    double scale = expect.cwiseAbs().maxCoeff();
    CHECK((acc - expect).cwiseAbs().maxCoeff() < 0.06 * scale);
}

TEST_CASE("step sandwich expands into its four terms") {
    Rng rng(137);
    SignalModel m = toy_model(rng);
    Mat s = random_mat(3, rng);
    s = Mat(0.5 * (s + s.transpose()));
    Mat ms = m.cal_m * m.cal_ru * s;
    Mat expect = s - ms - ms.transpose() + m.cal_m * quartic_sandwich(m, s) * m.cal_m;
    CHECK(testsup::near(step_sandwich(m, s), expect, 1e-12));

    const int n = 200000;
    Mat acc = Mat::Zero(3, 3);
    Mat eye = Mat::Identity(3, 3);
    for (int i = 0; i < n; ++i) {
        Mat a = eye - m.cal_m * block_regressor(m, rng);
        acc += a * s * a.transpose();
    }
    acc /= n;
    CHECK((acc - expect).cwiseAbs().maxCoeff() < 0.05 * expect.cwiseAbs().maxCoeff());
}

TEST_CASE("kronecker identities") {
    Rng rng(139);
    Mat a = random_mat(3, rng), b = random_mat(3, rng), c = random_mat(3, rng);
    CHECK(std::abs((a.transpose() * b).trace() - vec_of(a).dot(vec_of(b))) < 1e-12);
    Vec lhs = vec_of(a * c * b);
    Vec rhs = kron(b.transpose(), a) * vec_of(c);
    CHECK(testsup::near(lhs, rhs, 1e-12));
}

TEST_CASE("kron fourth moment matches Monte Carlo") {
    Rng rng(149);
    SignalModel m = toy_model(rng);
    Mat expect = kron_fourth_moment(m);
    const int n = 150000;
    Mat acc = Mat::Zero(9, 9);
    for (int i = 0; i < n; ++i) {
        Mat r = block_regressor(m, rng);
        acc += kron(r, r);
    }
    acc /= n;
    CHECK((acc - expect).cwiseAbs().maxCoeff() < 0.06 * expect.cwiseAbs().maxCoeff());
}

TEST_CASE("kron step map propagates vectorized sandwiches") {
    Rng rng(151);
    SignalModel m = toy_model(rng);
    Mat z = kron_step_map(m);
    Mat k = random_mat(3, rng);
    k = Mat(k * k.transpose());
    CHECK(testsup::near(Vec(z * vec_of(k)), vec_of(step_sandwich(m, k)), 1e-10));
}

TEST_CASE("steady transition is the transposed projected step map") {
    Rng rng(157);
    SignalModel m = toy_model(rng);
    Mat p = random_mat(3, rng);
    Mat f = steady_transition(m, p);
    Mat k = random_mat(3, rng);
    k = Mat(k * k.transpose());
    Vec lhs = vec_of(Mat(p * step_sandwich(m, k) * p.transpose()));
    Vec rhs = f.transpose() * vec_of(k);
    CHECK(testsup::near(lhs, rhs, 1e-10));
}

TEST_CASE("small step shortcut drops the fourth-moment correction") {
    Rng rng(163);
    SignalModel m = toy_model(rng);
    Mat p = random_mat(3, rng);
    Mat a = p * (Mat::Identity(3, 3) - m.cal_m * m.cal_ru);
    Mat at = a.transpose();
    CHECK(testsup::near(steady_transition_small_mu(m, p), kron(at, at), 1e-14));
}

TEST_CASE("forcing constant ignores the projector and offset") {
    Rng rng(167);
    SignalModel m = toy_model(rng);
    TaskPrior prior;
    prior.mean_w = rng.gauss_vec(3);
    prior.cal_w = random_spd(3, 0.2, 0.8, rng);
    prior.w_part = Vec::Zero(3);
    prior.dims = {2, 1};
    prior.offsets = {0, 2};
    Mat p1 = random_mat(3, rng), p2 = random_mat(3, rng);
    Vec f1 = rng.gauss_vec(3), f2 = rng.gauss_vec(3);
    auto a = cross_moments(m, prior, p1, f1);
    auto b = cross_moments(m, prior, p2, f2);
    CHECK(testsup::near(a.c4, b.c4, 0.0));
    CHECK(testsup::near(a.z, b.z, 0.0));
}

TEST_CASE("zero step size freezes the share recursion") {
    Rng rng(173);
    SignalModel m = toy_model(rng, 0.0, 0.0);
    TaskPrior prior;
    prior.mean_w = rng.gauss_vec(3);
    prior.cal_w = random_spd(3, 0.2, 0.8, rng);
    prior.w_part = Vec::Zero(3);
    prior.dims = {2, 1};
    prior.offsets = {0, 2};
    Mat p = random_mat(3, rng);
    Vec f = rng.gauss_vec(3);
    auto cm = cross_moments(m, prior, p, f);
    CHECK(testsup::near(cm.z, Mat(Mat::Identity(9, 9)), 1e-14));
    CHECK(testsup::near(cm.h, kron(p, p), 1e-14));
    CHECK(testsup::near(cm.c1, Mat(f * f.transpose()), 1e-14));
    CHECK(cm.c2.cwiseAbs().maxCoeff() == 0.0);
    CHECK(cm.c4.cwiseAbs().maxCoeff() == 0.0);
    CHECK(cm.y.cwiseAbs().maxCoeff() == 0.0);
}
