#include "plms/moments.hpp"

namespace plms {

Mat gaussian_fourth_moment(const Mat& r, const Mat& s) {
    return r * s * r + r * s.transpose() * r + r * (s * r).trace();
}

Mat quartic_sandwich(const SignalModel& m, const Mat& s) {
    Mat out = m.cal_ru * s * m.cal_ru;
    for (size_t k = 0; k < m.dims.size(); ++k) {
        int o = m.offsets[k], d = m.dims[k];
        const Mat& rk = m.ru[k];
        Mat skk = s.block(o, o, d, d);
        out.block(o, o, d, d) += rk * skk.transpose() * rk + rk * (skk * rk).trace();
    }
    return out;
}

Mat step_sandwich(const SignalModel& m, const Mat& s) {
    Mat ms = m.cal_m * (m.cal_ru * s);
    return s - ms - ms.transpose() + m.cal_m * quartic_sandwich(m, s) * m.cal_m;
}

Mat kron_fourth_moment(const SignalModel& m) {
    const Eigen::Index mm = m.cal_ru.rows();
    Mat q = kron(m.cal_ru, m.cal_ru);
    for (size_t a = 0; a < m.dims.size(); ++a) {
        int o = m.offsets[a], d = m.dims[a];
        for (int i = o; i < o + d; ++i)
            for (int j = o; j < o + d; ++j)
                for (int k = o; k < o + d; ++k)
                    for (int l = o; l < o + d; ++l)
                        q(i * mm + k, j * mm + l) +=
                            m.cal_ru(i, k) * m.cal_ru(j, l) + m.cal_ru(i, l) * m.cal_ru(j, k);
    }
    return q;
}

Mat kron_step_map(const SignalModel& m) {
    const Eigen::Index mm = m.cal_ru.rows();
    Mat eye = Mat::Identity(mm, mm);
    Mat mr = m.cal_m * m.cal_ru;
    return Mat(Mat::Identity(mm * mm, mm * mm)) - kron(eye, mr) - kron(mr, eye) +
           kron(m.cal_m, m.cal_m) * kron_fourth_moment(m);
}

Mat steady_transition(const SignalModel& m, const Mat& p) {
    return (kron(p, p) * kron_step_map(m)).transpose();
}

Mat steady_transition_small_mu(const SignalModel& m, const Mat& p) {
    Mat a = p * (Mat::Identity(p.rows(), p.cols()) - m.cal_m * m.cal_ru);
    Mat at = a.transpose();
    return kron(at, at);
}

CrossMomentSet cross_moments(const SignalModel& m, const TaskPrior& prior,
                             const Mat& p, const Vec& f) {
    CrossMomentSet out;
    out.z = kron_step_map(m);
    out.h = out.z * kron(p, p);
    Mat fmat = f;  // M x 1
    out.x = out.z * kron(fmat, p);
    out.xp = out.z * kron(p, fmat);

    // E[(M r) kron (A P)] with r = R(i) w + g: the measurement-noise part
    // drops (odd Gaussian moments), leaving mean terms and an in-block
    // fourth-moment correction through E[R kron R].
    Mat q4 = kron_fourth_moment(m);
    Vec mrew = m.cal_m * (m.cal_ru * prior.mean_w);
    Mat ew = prior.mean_w;  // M x 1
    out.y = kron(Mat(mrew), p) -
            kron(m.cal_m, m.cal_m) * (q4 * kron(ew, p));
    out.yp = kron(p, Mat(mrew)) -
             kron(m.cal_m, m.cal_m) * (q4 * kron(p, ew));

    out.c1 = step_sandwich(m, f * f.transpose());
    Mat few = f * prior.mean_w.transpose();
    out.c2 = (few * m.cal_ru - m.cal_m * quartic_sandwich(m, few)) * m.cal_m;
    out.c3 = out.c2.transpose();
    out.c4 = m.cal_m * (quartic_sandwich(m, prior.second_moment()) + m.cal_g) * m.cal_m;
    out.c = vec_of(out.c1) - vec_of(out.c2) - vec_of(out.c3) + vec_of(out.c4);
    return out;
}

}  // namespace plms
