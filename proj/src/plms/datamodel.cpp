#include "plms/datamodel.hpp"

#include <cmath>

namespace plms {

Vec TaskPrior::sample(Rng& rng) const {
    Vec zeta = latent_mean;
    if (latent_chol.size() > 0) zeta += latent_chol * rng.gauss_vec(latent_chol.cols());
    return w_part + z * zeta;
}

TaskPrior make_task_prior(const Network& net, const Mat& latent_cov, const Vec& latent_mean) {
    TaskPrior p;
    p.w_part = particular_solution(net.global_d(), net.global_b());
    p.z = null_basis(net.global_d());
    const Eigen::Index nd = p.z.cols();
    if (nd == 0) throw ConfigError("task prior: constraint null space is trivial");
    if (latent_cov.rows() != nd || latent_cov.cols() != nd || latent_mean.size() != nd)
        throw ConfigError("task prior: latent dimension must match the null-space dimension");
    p.latent_mean = latent_mean;
    p.latent_cov = latent_cov;
    if (latent_cov.norm() > 0.0) {
        Eigen::LLT<Mat> llt(latent_cov);
        if (llt.info() != Eigen::Success)
            throw NumericError("task prior: latent covariance is not positive definite");
        p.latent_chol = llt.matrixL();
    } else {
        p.latent_chol = Mat();
    }
    p.mean_w = p.w_part + p.z * latent_mean;
    p.cal_w = p.z * latent_cov * p.z.transpose();
    p.dims = net.dims();
    p.offsets.resize(net.n_agents());
    for (int k = 0; k < net.n_agents(); ++k) p.offsets[k] = net.offset(k);
    return p;
}

Mat random_spd(int n, double lo, double hi, Rng& rng) {
    Mat g(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) g(i, j) = rng.next_gauss();
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ();
    Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int i = 0; i < n; ++i)
        if (r(i, i) < 0) q.col(i) = -q.col(i);
    Vec eig(n);
    for (int i = 0; i < n; ++i) eig(i) = rng.uniform(lo, hi);
    return q * eig.asDiagonal() * q.transpose();
}

double snr_noise_power(const Mat& ru, const Mat& wkk, const Vec& mean_k, double snr_db) {
    if (!std::isfinite(snr_db)) throw ConfigError("snr target must be finite");
    double signal = (ru * (wkk + mean_k * mean_k.transpose())).trace();
    return signal / std::pow(10.0, snr_db / 10.0);
}

void SignalModel::refresh_global() {
    int total = 0;
    for (int d : dims) total += d;
    cal_ru = Mat::Zero(total, total);
    cal_m = Mat::Zero(total, total);
    cal_g = Mat::Zero(total, total);
    for (size_t k = 0; k < dims.size(); ++k) {
        int o = offsets[k], d = dims[k];
        cal_ru.block(o, o, d, d) = ru[k];
        cal_m.block(o, o, d, d) = mu[k] * Mat::Identity(d, d);
        cal_g.block(o, o, d, d) = sv2[k] * ru[k];
    }
}

SignalModel make_signal_model(const Network& net, const TaskPrior& prior,
                              double eig_lo, double eig_hi,
                              const std::vector<double>& snr_db,
                              const std::vector<double>& mu, Rng& rng) {
    const int n = net.n_agents();
    if (static_cast<int>(snr_db.size()) != n || static_cast<int>(mu.size()) != n)
        throw ConfigError("signal model: need one SNR and one step size per agent");
    SignalModel m;
    m.dims = net.dims();
    m.offsets.resize(n);
    for (int k = 0; k < n; ++k) m.offsets[k] = net.offset(k);
    m.mu = mu;
    for (int k = 0; k < n; ++k) {
        Mat r = random_spd(net.dim(k), eig_lo, eig_hi, rng);
        m.ru.push_back(r);
        m.ru_chol.push_back(Mat(Eigen::LLT<Mat>(r).matrixL()));
    }
    m.sv2.resize(n);
    calibrate_snr(m, prior, snr_db);
    return m;
}

void calibrate_snr(SignalModel& model, const TaskPrior& prior,
                   const std::vector<double>& snr_db) {
    for (size_t k = 0; k < model.ru.size(); ++k)
        model.sv2[k] = snr_noise_power(model.ru[k], prior.wkk(static_cast<int>(k)),
                                       prior.mean_k(static_cast<int>(k)), snr_db[k]);
    model.refresh_global();
}

}  // namespace plms
