#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "plms/harness.hpp"
#include "plms/privacy.hpp"
#include "plms/simulate.hpp"

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double rel_gap(double a, double b) {
    double den = std::max(std::abs(a), std::abs(b));
    return den > 0 ? std::abs(a - b) / den : 0.0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"block Monte-Carlo engine vs the serial reference loop"};
    std::string scenario = "tracking";
    int runs = 512, iters = 80;
    std::uint64_t seed = 1;
    app.add_option("--scenario", scenario, "preset name or config file");
    app.add_option("--runs", runs, "Monte-Carlo run count");
    app.add_option("--iters", iters, "iteration horizon");
    app.add_option("--seed", seed, "master seed");
    CLI11_PARSE(app, argc, argv);

    try {
        plms::ScenarioConfig cfg = plms::load_config(scenario);
        cfg.runs = runs;
        cfg.iters = iters;
        cfg.seed = seed;
        if (cfg.tracking && cfg.tracking->index >= iters) cfg.tracking.reset();
        if (!cfg.tracking && cfg.noise_source != "adaptive_per_run")
            cfg.noise_source = "steady";
        cfg.check();
        plms::Scenario sc = plms::build_scenario(cfg);

        plms::MonteCarloPlan plan;
        plan.runs = cfg.runs;
        plan.iters = cfg.iters;
        plan.seed = cfg.seed;
        plan.rho = cfg.rho;
        plan.alpha = cfg.alpha;
        plan.tracking = cfg.tracking;
        if (cfg.tracking) {
            plan.noise = plms::MonteCarloPlan::Noise::adaptive_ensemble;
        } else {
            plan.noise = plms::MonteCarloPlan::Noise::schedule;
            plan.schedule.assign(1, plms::Vec::Zero(sc.net.n_agents()));
            for (int k = 0; k < sc.net.n_agents(); ++k) {
                plms::Mat wkk = sc.prior.wkk(k);
                plan.schedule[0][k] =
                    plms::steady_state_power(wkk, cfg.rho * wkk.trace());
            }
        }

        int threads = 1;
#ifdef _OPENMP
        threads = omp_get_max_threads();
#endif
        std::cout << "scenario " << scenario << ": runs=" << plan.runs
                  << " iters=" << plan.iters << " threads=" << threads << "\n";

        auto t0 = std::chrono::steady_clock::now();
        plms::RunRecord par = plms::run_monte_carlo(sc.net, sc.model, sc.prior, plan);
        double t_par = seconds_since(t0);

        t0 = std::chrono::steady_clock::now();
        plms::RunRecord ser =
            plms::run_monte_carlo_serial(sc.net, sc.model, sc.prior, plan);
        double t_ser = seconds_since(t0);

        double msd_gap = 0.0, xi_gap = 0.0;
        for (int i = 0; i < plan.iters; ++i) {
            msd_gap = std::max(msd_gap, rel_gap(par.msd[i], ser.msd[i]));
            if (plan.collect_privacy)
                xi_gap = std::max(xi_gap, rel_gap(par.privacy.xi[i], ser.privacy.xi[i]));
        }

        std::cout << "block engine:  " << t_par << " s\n"
                  << "serial loop:   " << t_ser << " s\n"
                  << "speedup:       " << (t_par > 0 ? t_ser / t_par : 0.0) << "x\n"
                  << "max rel gap:   msd " << msd_gap << ", xi " << xi_gap << "\n";
        const double tol = 1e-10;
        if (msd_gap > tol || xi_gap > tol) {
            std::cout << "engines disagree beyond " << tol << "\n";
            return 1;
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
