#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "plms/common.hpp"
#include "plms/datamodel.hpp"
#include "plms/network.hpp"
#include "plms/simulate.hpp"
#include "plms/theory.hpp"

namespace plms {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Everything an experiment needs, reproducible from the master seed alone.
// `kind` picks the topology; `custom` scenarios are assembled by handing a
// Network to build_scenario directly.
struct ScenarioConfig {
    std::string preset;        // name this config started from, if any
    std::string kind = "line"; // line | dense | custom
    int agents = 12;
    int dim = 3;               // coordinates per agent
    int wide_constraints = 4;  // dense topology only
    double coeff_lo = 1.0, coeff_hi = 3.0;  // |constraint coefficients| range
    double eig_lo = 4.0, eig_hi = 7.0;      // regressor covariance eigenvalues
    double latent_lo = 0.5, latent_hi = 1.5;  // task prior eigenvalues
    double snr_lo_db = 10.0, snr_hi_db = 20.0;  // spread linearly over agents
    double mu = 0.02;
    double rho = 0.1;    // privacy threshold fraction of tr(W_kk)
    double alpha = 0.95; // adaptive estimator forgetting factor
    std::vector<std::string> algos = {"noisy", "plain", "nocoop"};
    // closed_form | steady | adaptive | adaptive_per_run
    std::string noise_source = "closed_form";
    int runs = 1000;
    int iters = 400;
    std::uint64_t seed = 1;
    std::optional<TrackingChange> tracking;
    bool privacy = true;
    int batches = 10;

    void check() const;
};

ScenarioConfig preset_config(const std::string& name);  // line | dense | tracking

// Flat key tree, fail-closed: any unknown key is an error. A "preset" key
// selects the base config the remaining keys override.
ScenarioConfig config_from_json(const nlohmann::json& j);
ScenarioConfig load_config(const std::string& name_or_path);
nlohmann::json config_to_json(const ScenarioConfig& cfg);

struct Scenario {
    Network net;
    TaskPrior prior;
    SignalModel model;
};

// Deterministic construction from the config's seed: topology, then task
// prior, then signal statistics, all off one scenario stream.
Scenario build_scenario(const ScenarioConfig& cfg);
Scenario build_scenario(const ScenarioConfig& cfg, const Network& net);

// Aligned per-iteration curves for one algorithm; linear scale throughout,
// dB conversion happens at emission.
struct AlgoCurves {
    Algo algo = Algo::noisy;
    bool has_sim = false;
    bool has_theory = false;
    bool has_privacy = false;
    std::vector<double> msd_emp, msd_th, xi_emp, xi_th, sigma_mean;
    bool ridge_flagged = false;
};

struct GainToLoss {
    double ratio = 0.0;
    double gain_db = 0.0;
    double loss_db = 0.0;
    bool infinite = false;
    bool degenerate = false;
};

// Mean of the last tenth of a curve; the steady-state summary statistic.
double steady_mean(const std::vector<double>& curve, double frac = 0.1);

// |privacy gain| / |accuracy loss| in dB between a noisy bundle and its
// noise-free baseline, at steady state. Empirical curves when present,
// theory otherwise.
GainToLoss gain_to_loss(const AlgoCurves& noisy, const AlgoCurves& baseline);

struct ExperimentBundle {
    ScenarioConfig config;
    ValidationReport network;
    StabilityReport stability;
    int null_dim = 0;
    std::vector<AlgoCurves> curves;
    std::optional<GainToLoss> ratio;  // noisy vs plain when both were run
    std::vector<std::string> notices;
};

// Orchestrates scenario build, assumption gates, theory recursions and the
// Monte-Carlo engine, all deterministic from the config. with_sim=false
// produces theory-only curves. Networks too large for the vectorized
// steady-state machinery skip theory with a notice instead of failing.
ExperimentBundle run_experiment(const ScenarioConfig& cfg, bool with_sim = true,
                                bool force = false);
ExperimentBundle run_experiment(const ScenarioConfig& cfg, const Scenario& sc,
                                bool with_sim = true, bool force = false);

nlohmann::json summary_json(const ExperimentBundle& b);

// Scenario health report without running any experiment: constraint ranks,
// feasibility, stability band, and the notices a run would print.
nlohmann::json validate_json(const ScenarioConfig& cfg);

// curves_<algo>.csv per algorithm, summary.json, optionally msd.svg and
// privacy.svg. Fixed shortest-round-trip number formatting keeps re-emission
// byte-identical.
void emit(const ExperimentBundle& b, const std::string& dir, bool svg = false);

}  // namespace plms
