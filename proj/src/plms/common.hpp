#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace plms {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Floor keeps CSV output finite when a curve hits exact zero.
constexpr double kDbFloor = -300.0;

inline double to_db(double linear) {
    if (!(linear > 0.0)) return kDbFloor;
    return std::max(10.0 * std::log10(linear), kDbFloor);
}

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline Vec vec_of(const Mat& a) {
    return Eigen::Map<const Vec>(a.data(), a.size());
}

inline Mat mat_of(const Vec& v, Eigen::Index rows, Eigen::Index cols) {
    if (v.size() != rows * cols) throw NumericError("mat_of: size mismatch");
    return Eigen::Map<const Mat>(v.data(), rows, cols);
}

inline Mat kron(const Mat& a, const Mat& b) {
    Mat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline double spectral_norm(const Mat& a) {
    Eigen::SelfAdjointEigenSolver<Mat> es(a.transpose() * a);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

inline double spectral_radius(const Mat& a) {
    return Eigen::EigenSolver<Mat>(a, false).eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace plms
