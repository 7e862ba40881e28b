#pragma once

#include <vector>

#include "plms/common.hpp"
#include "plms/network.hpp"
#include "plms/rng.hpp"

namespace plms {

// Gaussian prior over tasks confined to the constraint manifold:
// w = w_part + Z zeta, zeta ~ N(latent_mean, latent_cov).
struct TaskPrior {
    Vec w_part;       // particular solution of the global system
    Mat z;            // orthonormal null-space basis
    Vec latent_mean;
    Mat latent_cov;
    Mat latent_chol;  // lower factor, zero when latent_cov is zero
    Vec mean_w;       // E w = w_part + Z latent_mean
    Mat cal_w;        // Cov(w) = Z latent_cov Z^T
    std::vector<int> dims;
    std::vector<int> offsets;

    Mat wkk(int k) const { return cal_w.block(offsets[k], offsets[k], dims[k], dims[k]); }
    Vec mean_k(int k) const { return mean_w.segment(offsets[k], dims[k]); }
    Mat second_moment() const { return cal_w + mean_w * mean_w.transpose(); }
    Vec sample(Rng& rng) const;
};

TaskPrior make_task_prior(const Network& net, const Mat& latent_cov, const Vec& latent_mean);

// Per-agent streaming-data statistics plus the stacked block-diagonal forms
// used by the analysis: cal_m = diag(mu_k I), cal_ru = diag(R_uk),
// cal_g = diag(sigma_vk^2 R_uk).
struct SignalModel {
    std::vector<Mat> ru;
    std::vector<Mat> ru_chol;  // lower factors for regressor sampling
    std::vector<double> sv2;
    std::vector<double> mu;
    Mat cal_ru, cal_m, cal_g;
    std::vector<int> dims;
    std::vector<int> offsets;

    void refresh_global();
};

// Random SPD with Haar-random eigenvectors and eigenvalues uniform in [lo, hi].
Mat random_spd(int n, double lo, double hi, Rng& rng);

// sigma_v^2 making E[(u^T w)^2] / sigma_v^2 hit the target (u and w both random).
double snr_noise_power(const Mat& ru, const Mat& wkk, const Vec& mean_k, double snr_db);

SignalModel make_signal_model(const Network& net, const TaskPrior& prior,
                              double eig_lo, double eig_hi,
                              const std::vector<double>& snr_db,
                              const std::vector<double>& mu, Rng& rng);

void calibrate_snr(SignalModel& model, const TaskPrior& prior,
                   const std::vector<double>& snr_db);

}  // namespace plms
