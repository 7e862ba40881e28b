#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cmath>

#include "plms/privacy.hpp"
#include "plms/simulate.hpp"
#include "support.hpp"

using namespace plms;

namespace {

MonteCarloPlan base_plan(const Scenario& sc, int runs, int iters, Algo algo) {
    MonteCarloPlan plan;
    plan.runs = runs;
    plan.iters = iters;
    plan.seed = 11;
    plan.algo = algo;
    plan.rho = 0.6;
    if (algo == Algo::noisy) {
        plan.noise = MonteCarloPlan::Noise::schedule;
        plan.schedule = {Vec::Constant(sc.net.n_agents(), 0.5)};
    }
    return plan;
}

double tail_mean(const std::vector<double>& v, int last) {
    double acc = 0.0;
    for (int i = static_cast<int>(v.size()) - last; i < static_cast<int>(v.size()); ++i)
        acc += v[i];
    return acc / last;
}

}  // namespace

TEST_CASE("adaptation step hand cases") {
    Vec w(1), u(1);
    w << 1.0;
    u << 2.0;
    CHECK(adapt_step(w, u, 3.0, 0.5)(0) == doctest::Approx(2.0));
    CHECK(adapt_step(w, Vec::Zero(1), 3.0, 0.5)(0) == doctest::Approx(1.0));
    CHECK(adapt_step(Vec::Zero(1), u, 3.0, 0.5)(0) == doctest::Approx(0.5 * 2.0 * 3.0));

    Vec w2(2), u2(2);
    w2 << 1.0, -1.0;
    u2 << 0.5, 2.0;
    Vec out = adapt_step(w2, u2, 0.7, 0.1);
    double err = 0.7 - u2.dot(w2);
    CHECK(testsup::near(out, Vec(w2 + 0.1 * err * u2), 1e-15));
}

TEST_CASE("same plan gives bitwise identical records") {
    Scenario sc = testsup::small_scenario(3);
    MonteCarloPlan plan = base_plan(sc, 128, 25, Algo::noisy);
    plan.noise = MonteCarloPlan::Noise::adaptive_ensemble;
    plan.schedule.clear();
    RunRecord a = run_monte_carlo(sc.net, sc.model, sc.prior, plan);
    RunRecord b = run_monte_carlo(sc.net, sc.model, sc.prior, plan);
    REQUIRE(a.msd.size() == b.msd.size());
    for (size_t i = 0; i < a.msd.size(); ++i) {
        CHECK(a.msd[i] == b.msd[i]);
        CHECK(a.privacy.xi[i] == b.privacy.xi[i]);
        CHECK((a.powers[i] - b.powers[i]).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK((a.privacy.single_share - b.privacy.single_share).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("worker count does not change the numbers") {
    Scenario sc = testsup::small_scenario(3);
    MonteCarloPlan plan = base_plan(sc, 200, 20, Algo::noisy);
#ifdef _OPENMP
    omp_set_num_threads(1);
#endif
    RunRecord a = run_monte_carlo(sc.net, sc.model, sc.prior, plan);
#ifdef _OPENMP
    omp_set_num_threads(3);
#endif
    RunRecord b = run_monte_carlo(sc.net, sc.model, sc.prior, plan);
#ifdef _OPENMP
    omp_set_num_threads(omp_get_num_procs());
#endif
    for (size_t i = 0; i < a.msd.size(); ++i) {
        CHECK(a.msd[i] == b.msd[i]);
        CHECK(a.privacy.xi[i] == b.privacy.xi[i]);
    }
}

TEST_CASE("block engine matches the plain-loop reference") {
    Scenario sc = testsup::small_scenario(3);
    for (Algo algo : {Algo::noisy, Algo::plain, Algo::nocoop}) {
        MonteCarloPlan plan = base_plan(sc, 150, 20, algo);
        RunRecord a = run_monte_carlo(sc.net, sc.model, sc.prior, plan);
        RunRecord b = run_monte_carlo_serial(sc.net, sc.model, sc.prior, plan);
        for (size_t i = 0; i < a.msd.size(); ++i) {
            CHECK(a.msd[i] == doctest::Approx(b.msd[i]).epsilon(1e-10));
            CHECK(a.privacy.xi[i] == doctest::Approx(b.privacy.xi[i]).epsilon(1e-10));
        }
    }
}

TEST_CASE("adaptive estimators agree between the engines") {
    Scenario sc = testsup::small_scenario(3);
    MonteCarloPlan plan = base_plan(sc, 150, 25, Algo::noisy);
    plan.noise = MonteCarloPlan::Noise::adaptive_ensemble;
    plan.schedule.clear();
    RunRecord a = run_monte_carlo(sc.net, sc.model, sc.prior, plan);
    RunRecord b = run_monte_carlo_serial(sc.net, sc.model, sc.prior, plan);
    for (size_t i = 0; i < a.msd.size(); ++i) {
        CHECK(a.msd[i] == doctest::Approx(b.msd[i]).epsilon(1e-9));
        CHECK((a.powers[i] - b.powers[i]).cwiseAbs().maxCoeff() <=
              1e-9 * (1.0 + a.powers[i].cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("noise-free shares reduce to the plain variant") {
    Scenario sc = testsup::small_scenario(3);
    MonteCarloPlan noisy = base_plan(sc, 128, 20, Algo::noisy);
    noisy.schedule = {Vec::Zero(sc.net.n_agents())};
    MonteCarloPlan plain = base_plan(sc, 128, 20, Algo::plain);
    RunRecord a = run_monte_carlo(sc.net, sc.model, sc.prior, noisy);
    RunRecord b = run_monte_carlo(sc.net, sc.model, sc.prior, plain);
    for (size_t i = 0; i < a.msd.size(); ++i) {
        CHECK(a.msd[i] == b.msd[i]);
        CHECK(a.privacy.xi[i] == b.privacy.xi[i]);
    }
}

TEST_CASE("share noise costs accuracy and buys privacy at steady state") {
    Scenario sc = testsup::small_scenario(3);
    MonteCarloPlan noisy = base_plan(sc, 256, 80, Algo::noisy);
    noisy.schedule = {Vec::Constant(sc.net.n_agents(), 1.0)};
    MonteCarloPlan plain = base_plan(sc, 256, 80, Algo::plain);
    RunRecord a = run_monte_carlo(sc.net, sc.model, sc.prior, noisy);
    RunRecord b = run_monte_carlo(sc.net, sc.model, sc.prior, plain);
    CHECK(tail_mean(a.msd, 8) > tail_mean(b.msd, 8));
    CHECK(tail_mean(a.privacy.xi, 8) > tail_mean(b.privacy.xi, 8));
}

TEST_CASE("tracking redraw bumps the error at the change index") {
    Scenario sc = testsup::small_scenario(3);
    MonteCarloPlan plan = base_plan(sc, 192, 40, Algo::plain);
    plan.tracking = TrackingChange{20, 4.0};
    RunRecord rec = run_monte_carlo(sc.net, sc.model, sc.prior, plan);
    CHECK(rec.msd[20] > 1.5 * rec.msd[19]);
}

TEST_CASE("ensemble noise estimate settles near the steady-state power") {
    Scenario sc = testsup::small_scenario(3);
    MonteCarloPlan plan = base_plan(sc, 256, 120, Algo::noisy);
    plan.noise = MonteCarloPlan::Noise::adaptive_ensemble;
    plan.schedule.clear();
    RunRecord rec = run_monte_carlo(sc.net, sc.model, sc.prior, plan);
    double got = 0.0, want = 0.0;
    for (int k = 0; k < sc.net.n_agents(); ++k) {
        double delta = 0.6 * sc.prior.wkk(k).trace();
        want += steady_state_power(sc.prior.wkk(k), delta);
        double acc = 0.0;
        for (int i = 105; i < 120; ++i) acc += rec.powers[i](k);
        got += acc / 15.0;
    }
    CHECK(got / want == doctest::Approx(1.0).epsilon(0.25));

    MonteCarloPlan per_run = plan;
    per_run.noise = MonteCarloPlan::Noise::adaptive_per_run;
    RunRecord rec2 = run_monte_carlo(sc.net, sc.model, sc.prior, per_run);
    CHECK(rec2.powers.back().minCoeff() > 0.0);
}

TEST_CASE("single-share errors respect the privacy threshold") {
    Scenario sc = testsup::small_scenario(3);
    MonteCarloPlan plan = base_plan(sc, 256, 60, Algo::noisy);
    RunRecord rec = run_monte_carlo(sc.net, sc.model, sc.prior, plan);
    for (int k = 0; k < sc.net.n_agents(); ++k) {
        double delta = 0.6 * sc.prior.wkk(k).trace();
        for (int i = 0; i < 60; ++i) {
            double se = rec.privacy.single_share_se(k, i);
            CHECK(std::isfinite(se));
            CHECK(se >= 0.0);
            CHECK(rec.privacy.single_share(k, i) >= delta - 3.0 * se);
        }
    }
}

TEST_CASE("privacy collection can be turned off") {
    Scenario sc = testsup::small_scenario(3);
    MonteCarloPlan plan = base_plan(sc, 64, 10, Algo::plain);
    plan.collect_privacy = false;
    RunRecord rec = run_monte_carlo(sc.net, sc.model, sc.prior, plan);
    CHECK(rec.msd.size() == 10);
    CHECK(rec.privacy.xi.empty());
}

TEST_CASE("plan validation fails closed") {
    Scenario sc = testsup::small_scenario(3);
    {
        MonteCarloPlan plan = base_plan(sc, 128, 10, Algo::noisy);
        plan.schedule.clear();
        CHECK_THROWS_AS(run_monte_carlo(sc.net, sc.model, sc.prior, plan), ConfigError);
    }
    {
        MonteCarloPlan plan = base_plan(sc, 0, 10, Algo::plain);
        CHECK_THROWS_AS(run_monte_carlo(sc.net, sc.model, sc.prior, plan), ConfigError);
    }
    {
        MonteCarloPlan plan = base_plan(sc, 24, 10, Algo::plain);
        CHECK_THROWS_AS(run_monte_carlo(sc.net, sc.model, sc.prior, plan), ConfigError);
    }
    {
        MonteCarloPlan plan = base_plan(sc, 128, 10, Algo::plain);
        plan.tracking = TrackingChange{10, 4.0};
        CHECK_THROWS_AS(run_monte_carlo(sc.net, sc.model, sc.prior, plan), ConfigError);
    }
    {
        MonteCarloPlan plan = base_plan(sc, 128, 10, Algo::plain);
        plan.rho = 1.0;
        CHECK_THROWS_AS(run_monte_carlo(sc.net, sc.model, sc.prior, plan), ConfigError);
    }
    {
        MonteCarloPlan plan = base_plan(sc, 128, 10, Algo::plain);
        plan.batches = 1;
        CHECK_THROWS_AS(run_monte_carlo(sc.net, sc.model, sc.prior, plan), ConfigError);
    }
}

TEST_CASE("plug-in estimation error matches the population value") {
    Rng rng(197);
    const int n = 200000;
    Mat a(2, 4), b(3, 4);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 4; ++j) a(i, j) = rng.next_gauss() * 0.7;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) b(i, j) = rng.next_gauss() * 0.7;
    Mat target(2, n), obs(3, n);
    for (int i = 0; i < n; ++i) {
        Vec z = rng.gauss_vec(4);
        target.col(i) = a * z;
        obs.col(i) = b * z + 0.3 * rng.gauss_vec(3);
    }
    Mat w = a * a.transpose();
    Mat u = a * b.transpose();
    Mat xp = b * b.transpose() + 0.09 * Mat::Identity(3, 3);
    double expect = llmse_mse(u, xp, w);
    bool ridged = false;
    double got = empirical_llmse(target, obs, &ridged);
    CHECK_FALSE(ridged);
    CHECK(got == doctest::Approx(expect).epsilon(0.03));
}

TEST_CASE("degenerate observations flag the ridge") {
    Rng rng(199);
    const int n = 500;
    Mat target(1, n), obs(2, n);
    for (int i = 0; i < n; ++i) {
        double g = rng.next_gauss();
        target(0, i) = g;
        obs(0, i) = g;
        obs(1, i) = g;
    }
    bool ridged = false;
    double got = empirical_llmse(target, obs, &ridged);
    CHECK(ridged);
    CHECK(std::isfinite(got));

    CHECK_THROWS_AS(empirical_llmse(Mat::Zero(1, 3), Mat::Zero(1, 4)), ConfigError);
    CHECK_THROWS_AS(empirical_llmse(Mat::Zero(1, 1), Mat::Zero(1, 1)), ConfigError);
}
