#pragma once

#include "plms/common.hpp"
#include "plms/rng.hpp"

namespace plms {

// Error of the best linear estimator of a zero-centered target with
// covariance W from an observation with cross moment U and second moment Xp:
// tr(W) - tr(U Xp^-1 U^T). Throws on singular Xp.
double llmse_mse(const Mat& u, const Mat& xp, const Mat& w);

// True iff noise power sigma2 keeps the single-share estimation error at or
// above tr(W) - delta, i.e. tr(U (X + sigma2 I)^-1 U^T) <= tr(W) - delta.
bool verify_constraint(double sigma2, const Mat& u, const Mat& x, const Mat& w,
                       double delta);

// Closed-form power tr(U^T U) / (tr(W) - delta); always satisfies the
// constraint above, possibly loosely. Requires delta < tr(W).
double sufficient_power(const Mat& u, const Mat& w, double delta);

// Limit of the closed-form power once the estimate cross moment has
// converged to W itself: tr(W^2) / (tr(W) - delta).
double steady_state_power(const Mat& wkk, double delta);

// Forgetting-factor estimator of the limit power from a stream of centered
// intermediate-estimate moments. update() consumes the rank-one moment of a
// single deviation sample; update_traces() accepts externally computed
// tr(R) and tr(R^2) so the same recursion can run on ensemble-averaged
// moments. The power update is guarded: held whenever the trace estimate
// does not exceed the threshold by more than 1e-9, or the ratio is not
// positive.
struct AdaptiveNoiseState {
    double beta = 0.0;
    double gamma = 0.0;
    double power = 0.0;
    double alpha = 0.95;
    double delta = 0.0;

    AdaptiveNoiseState() = default;
    AdaptiveNoiseState(double delta_k, double alpha_f)
        : beta(0.0), gamma(delta_k), power(0.0), alpha(alpha_f), delta(delta_k) {}

    void update_traces(double tr_r, double tr_r2) {
        beta = alpha * beta + (1.0 - alpha) * tr_r2;
        gamma = alpha * gamma + (1.0 - alpha) * tr_r;
        double den = gamma - delta;
        if (den > 1e-9 && beta / den > 0.0)
            power = alpha * power + (1.0 - alpha) * beta / den;
    }

    void update(const Vec& psi_k, const Vec& mean_k) {
        Vec x = psi_k - mean_k;
        double tr = x.squaredNorm();
        update_traces(tr, tr * tr);
    }
};

// Zero-mean Gaussian with variance sigma2 per entry.
Vec sample_noise(double sigma2, int dim, Rng& rng);

}  // namespace plms
