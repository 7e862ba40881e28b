#pragma once

#include <cmath>

#include "plms/harness.hpp"

namespace testsup {

// Small line scenario shared by the test binaries: six agents with two
// coordinates each and mild regressor spectra, so mu = 0.02 sits inside the
// stability band and the moment recursions settle within a few hundred
// iterations.
inline plms::ScenarioConfig small_config(std::uint64_t seed) {
    plms::ScenarioConfig cfg;
    cfg.agents = 6;
    cfg.dim = 2;
    cfg.eig_lo = 2.0;
    cfg.eig_hi = 3.5;
    cfg.latent_lo = 0.25;
    cfg.latent_hi = 0.75;
    cfg.rho = 0.6;
    cfg.seed = seed;
    return cfg;
}

inline plms::Scenario small_scenario(std::uint64_t seed) {
    return plms::build_scenario(small_config(seed));
}

inline bool near(const plms::Mat& a, const plms::Mat& b, double tol) {
    return (a - b).cwiseAbs().maxCoeff() <= tol;
}

inline bool near(const plms::Vec& a, const plms::Vec& b, double tol) {
    return (a - b).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace testsup
