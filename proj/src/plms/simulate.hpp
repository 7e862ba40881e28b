#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "plms/common.hpp"
#include "plms/datamodel.hpp"
#include "plms/network.hpp"
#include "plms/projection.hpp"
#include "plms/theory.hpp"

namespace plms {

// Mid-stream statistics change: at iteration `index` every run redraws its
// tasks from the prior with the latent covariance scaled by `factor`.
struct TrackingChange {
    int index = 0;
    double factor = 1.0;
};

struct MonteCarloPlan {
    int runs = 1000;
    int iters = 400;
    std::uint64_t seed = 1;
    Algo algo = Algo::noisy;
    // schedule: per-iteration powers fixed up front; adaptive_ensemble: one
    // forgetting-factor estimator per agent fed by the cross-run share
    // moment; adaptive_per_run: an estimator per run and agent, implying
    // per-run combination weights and projectors.
    enum class Noise { schedule, adaptive_ensemble, adaptive_per_run };
    Noise noise = Noise::schedule;
    std::vector<Vec> schedule;  // per-iteration per-agent powers, last held
    double rho = 0.1;           // delta_k = rho tr(W_kk) for the adaptive modes
    double alpha = 0.95;
    std::optional<TrackingChange> tracking;
    bool collect_privacy = true;
    int batches = 10;  // run grouping for single-share standard errors
};

struct PrivacyCurve {
    std::vector<double> xi;  // network inference-privacy error per iteration
    Mat single_share;        // agents x iterations: plug-in single-share error
    Mat single_share_se;     // agents x iterations: batch standard error
    bool ridge_flagged = false;
};

struct RunRecord {
    std::vector<double> msd;  // empirical network MSD per iteration
    std::vector<Vec> powers;  // per-iteration per-agent powers (mean over runs)
    PrivacyCurve privacy;     // populated when collect_privacy is set
};

// psi = w + mu u (d - u^T w). Shared by every variant; assigning the result
// directly back to w is the no-cooperation update.
Vec adapt_step(const Vec& w, const Vec& u, double d, double mu);

// Plug-in estimation error of `target` from `obs`, one column per sample.
// A non-positive observation moment gets ridge 1e-8 tr/dim and sets *ridged.
double empirical_llmse(const Mat& target, const Mat& obs, bool* ridged = nullptr);

// Block engine: runs are processed in fixed 64-run blocks whose partial
// statistics merge in ascending block order, so every emitted number is
// bitwise independent of the OpenMP worker count.
RunRecord run_monte_carlo(const Network& net, const SignalModel& model,
                          const TaskPrior& prior, const MonteCarloPlan& plan);

// Plain-loop reference engine kept for validating the block engine; it
// accumulates per run in ascending order, so its sums differ from the block
// engine's only by floating-point association.
RunRecord run_monte_carlo_serial(const Network& net, const SignalModel& model,
                                 const TaskPrior& prior, const MonteCarloPlan& plan);

}  // namespace plms
