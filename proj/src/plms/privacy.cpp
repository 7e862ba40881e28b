#include "plms/privacy.hpp"

#include <cmath>

namespace plms {

double llmse_mse(const Mat& u, const Mat& xp, const Mat& w) {
    Eigen::LDLT<Mat> ldlt(xp);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 0.0)
        throw NumericError("llmse: observation second moment is singular");
    return w.trace() - (u * ldlt.solve(u.transpose())).trace();
}

bool verify_constraint(double sigma2, const Mat& u, const Mat& x, const Mat& w,
                       double delta) {
    Mat xp = x + sigma2 * Mat::Identity(x.rows(), x.cols());
    Eigen::LDLT<Mat> ldlt(xp);
    if (ldlt.info() != Eigen::Success)
        throw NumericError("verify_constraint: singular observation moment");
    double info_gain = (u * ldlt.solve(u.transpose())).trace();
    return info_gain <= w.trace() - delta;
}

double sufficient_power(const Mat& u, const Mat& w, double delta) {
    double head = w.trace() - delta;
    if (!(head > 0.0))
        throw ConfigError("sufficient_power: threshold must stay below tr(W)");
    return (u.transpose() * u).trace() / head;
}

double steady_state_power(const Mat& wkk, double delta) {
    double head = wkk.trace() - delta;
    if (!(head > 0.0))
        throw ConfigError("steady_state_power: threshold must stay below tr(W)");
    return (wkk * wkk).trace() / head;
}

Vec sample_noise(double sigma2, int dim, Rng& rng) {
    if (sigma2 < 0.0) throw ConfigError("sample_noise: negative variance");
    if (sigma2 == 0.0) return Vec::Zero(dim);
    return std::sqrt(sigma2) * rng.gauss_vec(dim);
}

}  // namespace plms
