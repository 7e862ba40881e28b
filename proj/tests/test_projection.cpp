#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "plms/projection.hpp"
#include "support.hpp"

using namespace plms;

namespace {

Network pair_net(double off = 0.0) {
    return Network({1, 1}, {Constraint::scalar({0, 1}, {1.0, -1.0}, off, {1, 1})});
}

Network random_net(Rng& rng, int trial) {
    if (trial % 2) return line_network(rng.uniform_int(3, 7), rng.uniform_int(1, 3), rng);
    return dense_network(rng.uniform_int(8, 10), rng.uniform_int(1, 2),
                         rng.uniform_int(2, 4), rng);
}

}  // namespace

TEST_CASE("weights follow the exponential decay in noise power") {
    Network net({1, 1}, {Constraint::scalar({0, 1}, {1.0, -1.0}, 0.0, {1, 1})});
    WeightSet ws = compute_weights(net, Vec::Zero(2));
    CHECK(ws.omega[0](0) == doctest::Approx(0.5));
    CHECK(ws.omega[0](1) == doctest::Approx(0.5));

    Network tri({1, 1, 1}, {Constraint::scalar({0, 1}, {1.0, -1.0}, 0.0, {1, 1, 1}),
                            Constraint::scalar({1, 2}, {1.0, -1.0}, 0.0, {1, 1, 1}),
                            Constraint::scalar({0, 2}, {1.0, -1.0}, 0.0, {1, 1, 1})});
    WeightSet uniform = compute_weights(tri, Vec::Zero(3));
    for (int i = 0; i < 3; ++i) CHECK(uniform.omega[0](i) == doctest::Approx(1.0 / 3.0));

    Vec pw(3);
    pw << 1.0, 0.0, 2.0;
    WeightSet decayed = compute_weights(tri, pw);
    double den = 1.0 + std::exp(-1.0) + std::exp(-2.0);
    CHECK(decayed.omega[1](0) == doctest::Approx(std::exp(-1.0) / den));
    CHECK(decayed.omega[1](1) == doctest::Approx(1.0 / den));
    CHECK(decayed.omega[1](2) == doctest::Approx(std::exp(-2.0) / den));
    for (int k = 0; k < 3; ++k) {
        CHECK(decayed.omega[k].sum() == doctest::Approx(1.0));
        CHECK(decayed.omega[k].minCoeff() > 0.0);
    }
    CHECK_THROWS_AS(compute_weights(tri, Vec::Zero(2)), ConfigError);
}

TEST_CASE("difference constraint with uniform weights averages the pair") {
    Network net = pair_net();
    ProjectionSet ps = build_projection(net, compute_weights(net, Vec::Zero(2)));
    Mat expect(2, 2);
    expect << 0.5, 0.5, 0.5, 0.5;
    CHECK(testsup::near(ps.p, expect, 1e-12));
    CHECK(ps.f.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(ps.norm == doctest::Approx(1.0));
    CHECK(testsup::near(ps.p_minus, Mat(ps.p - 0.5 * Mat::Identity(2, 2)), 1e-12));
}

TEST_CASE("projector identities hold across random scenarios") {
    Rng rng(53);
    for (int trial = 0; trial < 50; ++trial) {
        Network net = random_net(rng, trial);
        Vec pw(net.n_agents());
        for (int k = 0; k < net.n_agents(); ++k) pw(k) = rng.uniform(0.0, 2.0);
        ProjectionSet ps = build_projection(net, compute_weights(net, pw));
        for (int k = 0; k < net.n_agents(); ++k) {
            const Mat& p = ps.local_p[k];
            const Vec& f = ps.local_f[k];
            CHECK((p * p - p).cwiseAbs().maxCoeff() < 1e-9);
            if (net.local_d(k).rows()) {
                CHECK((net.local_d(k) * p).cwiseAbs().maxCoeff() < 1e-9);
                CHECK((net.local_d(k) * f - net.local_b(k)).cwiseAbs().maxCoeff() <
                      1e-9);
            }
            Vec shares = rng.gauss_vec(net.neighborhood_dim(k));
            Vec proj = p * shares - f;
            if (net.local_d(k).rows())
                CHECK((net.local_d(k) * proj + net.local_b(k)).cwiseAbs().maxCoeff() <
                      1e-8);
        }
    }
}

TEST_CASE("feasible points are fixed points") {
    Rng rng(59);
    for (int trial = 0; trial < 20; ++trial) {
        Network net = random_net(rng, trial);
        Mat z = null_basis(net.global_d());
        Vec w = particular_solution(net.global_d(), net.global_b()) +
                z * rng.gauss_vec(z.cols());
        Vec pw(net.n_agents());
        for (int k = 0; k < net.n_agents(); ++k) pw(k) = rng.uniform(0.0, 1.0);
        ProjectionSet ps = build_projection(net, compute_weights(net, pw));
        for (int k = 0; k < net.n_agents(); ++k) {
            Vec out = project(net, ps, k, net.gather(k, w));
            CHECK(testsup::near(out, Vec(w.segment(net.offset(k), net.dim(k))), 1e-8));
        }
    }
}

TEST_CASE("global operator has the adjacency zero pattern") {
    Rng rng(61);
    Network net = line_network(6, 2, rng);
    ProjectionSet ps = build_projection(net, compute_weights(net, Vec::Zero(6)));
    for (int k = 0; k < 6; ++k)
        for (int l = 0; l < 6; ++l) {
            const auto& nb = net.neighbors(k);
            bool linked = std::find(nb.begin(), nb.end(), l) != nb.end();
            double mass = ps.p.block(net.offset(k), net.offset(l), 2, 2)
                              .cwiseAbs()
                              .maxCoeff();
            if (!linked) CHECK(mass == 0.0);
        }
    CHECK(ps.norm >= 1.0 - 1e-9);
}

TEST_CASE("per-run weighted projection matches the cached operator") {
    Rng rng(67);
    for (int trial = 0; trial < 20; ++trial) {
        Network net = random_net(rng, trial);
        Vec pw(net.n_agents());
        for (int k = 0; k < net.n_agents(); ++k) pw(k) = rng.uniform(0.0, 2.0);
        WeightSet ws = compute_weights(net, pw);
        ProjectionSet ps = build_projection(net, ws);
        for (int k = 0; k < net.n_agents(); ++k) {
            Vec shares = rng.gauss_vec(net.neighborhood_dim(k));
            Vec a = project(net, ps, k, shares);
            Vec b = project_with_weights(net, ws, k, shares);
            CHECK(testsup::near(a, b, 1e-9));
        }
    }
}

TEST_CASE("vanishing neighbor weights approach the no-cooperation update") {
    Network net = pair_net();
    Vec pw(2);
    pw << 40.0, 40.0;
    WeightSet ws = compute_weights(net, pw);
    CHECK(ws.omega[0](1) <= 1e-6);
    ProjectionSet ps = build_projection(net, ws);
    Rng rng(71);
    for (int i = 0; i < 50; ++i) {
        Vec shares = rng.gauss_vec(2);
        Vec out = project(net, ps, 0, shares);
        CHECK(std::abs(out(0) - shares(0)) <= 1e-3 * std::abs(shares(0)) + 1e-9);
    }
}

TEST_CASE("agents without constraints keep their share") {
    Network net({1, 1, 2}, {Constraint::scalar({0, 1}, {1.0, -1.0}, 0.0, {1, 1})});
    ProjectionSet ps = build_projection(net, compute_weights(net, Vec::Zero(3)));
    CHECK(testsup::near(ps.local_p[2], Mat(Mat::Identity(2, 2)), 0.0));
    CHECK(ps.local_f[2].cwiseAbs().maxCoeff() == 0.0);
    CHECK(testsup::near(Mat(ps.p.block(2, 2, 2, 2)), Mat(Mat::Identity(2, 2)), 0.0));
}

TEST_CASE("identity projection is the no-cooperation operator") {
    Rng rng(73);
    Network net = line_network(4, 2, rng);
    ProjectionSet ps = identity_projection(net);
    CHECK(testsup::near(ps.p, Mat(Mat::Identity(8, 8)), 0.0));
    CHECK(ps.p_minus.cwiseAbs().maxCoeff() == 0.0);
    CHECK(ps.norm == 1.0);
    Vec shares = rng.gauss_vec(net.neighborhood_dim(1));
    Vec out = project(net, ps, 1, shares);
    int pos = net.dim(0);
    CHECK(testsup::near(out, Vec(shares.segment(pos, net.dim(1))), 0.0));
}

TEST_CASE("nearly dependent constraints are rejected") {
    Constraint a = Constraint::scalar({0, 1}, {1.0, -1.0}, 0.0, {1, 1});
    Constraint b = Constraint::scalar({0, 1}, {1.0, -1.0 + 1e-14}, 0.0, {1, 1});
    Network net({1, 1}, {a, b});
    try {
        build_projection(net, compute_weights(net, Vec::Zero(2)));
        FAIL("expected a NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("agent") != std::string::npos);
    }
}

TEST_CASE("offsets land the projection on the shifted manifold") {
    Network net = pair_net(1.0);
    ProjectionSet ps = build_projection(net, compute_weights(net, Vec::Zero(2)));
    Rng rng(79);
    for (int i = 0; i < 20; ++i) {
        Vec shares = rng.gauss_vec(2);
        Vec w0 = project(net, ps, 0, shares);
        Vec w1 = project(net, ps, 1, shares);
        CHECK(std::abs(w0(0) - w1(0) + 1.0) < 1e-10);
    }
}
