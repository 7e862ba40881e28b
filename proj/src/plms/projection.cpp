#include "plms/projection.hpp"

#include <cmath>

namespace plms {

namespace {
constexpr double kWeightFloor = 1e-12;
constexpr double kExpFloor = 1e-300;
constexpr double kCondLimit = 1e12;
}  // namespace

WeightSet compute_weights(const Network& net, const Vec& noise_powers) {
    if (noise_powers.size() != net.n_agents())
        throw ConfigError("weights: need one noise power per agent");
    WeightSet ws;
    ws.omega.resize(net.n_agents());
    for (int k = 0; k < net.n_agents(); ++k) {
        const auto& nb = net.neighbors(k);
        Vec w(nb.size());
        double denom = 1.0;
        for (size_t i = 0; i < nb.size(); ++i)
            if (nb[i] != k) denom += std::max(std::exp(-noise_powers(nb[i])), kExpFloor);
        for (size_t i = 0; i < nb.size(); ++i)
            w(i) = (nb[i] == k ? 1.0
                               : std::max(std::exp(-noise_powers(nb[i])), kExpFloor)) /
                   denom;
        ws.omega[k] = w;
    }
    return ws;
}

ProjectionSet build_projection(const Network& net, const WeightSet& weights) {
    const int n = net.n_agents();
    const int m = net.total_dim();
    ProjectionSet ps;
    ps.local_p.resize(n);
    ps.local_f.resize(n);
    ps.p = Mat::Zero(m, m);
    ps.f = Vec::Zero(m);

    for (int k = 0; k < n; ++k) {
        const Mat& d = net.local_d(k);
        const Vec& b = net.local_b(k);
        const int mk = net.neighborhood_dim(k);
        if (d.rows() == 0) {
            ps.local_p[k] = Mat::Identity(mk, mk);
            ps.local_f[k] = Vec::Zero(mk);
        } else {
            const auto& nb = net.neighbors(k);
            Vec om(mk);
            int pos = 0;
            for (size_t i = 0; i < nb.size(); ++i) {
                double wl = std::max(weights.omega[k](i), kWeightFloor);
                om.segment(pos, net.dim(nb[i])).setConstant(1.0 / wl);
                pos += net.dim(nb[i]);
            }
            Mat omdt = om.asDiagonal() * d.transpose();
            Mat gram = d * omdt;
            Eigen::SelfAdjointEigenSolver<Mat> es(gram);
            double lo = es.eigenvalues().minCoeff();
            double hi = es.eigenvalues().maxCoeff();
            if (!(lo > 0.0) || hi / lo > kCondLimit)
                throw NumericError("projector for agent " + std::to_string(k) +
                                   ": weighted constraint Gram matrix is ill-conditioned");
            Eigen::LLT<Mat> llt(gram);
            ps.local_p[k] = Mat::Identity(mk, mk) - omdt * llt.solve(d);
            ps.local_f[k] = omdt * llt.solve(b);
        }

        // Scatter row-block k of the global operator.
        const auto& nb = net.neighbors(k);
        int row_pos = 0;
        for (size_t i = 0; i < nb.size(); ++i) {
            if (nb[i] == k) break;
            row_pos += net.dim(nb[i]);
        }
        int col_pos = 0;
        for (size_t i = 0; i < nb.size(); ++i) {
            ps.p.block(net.offset(k), net.offset(nb[i]), net.dim(k), net.dim(nb[i])) =
                ps.local_p[k].block(row_pos, col_pos, net.dim(k), net.dim(nb[i]));
            col_pos += net.dim(nb[i]);
        }
        ps.f.segment(net.offset(k), net.dim(k)) =
            ps.local_f[k].segment(row_pos, net.dim(k));
    }

    ps.p_minus = ps.p;
    for (int k = 0; k < n; ++k)
        ps.p_minus.block(net.offset(k), net.offset(k), net.dim(k), net.dim(k)).setZero();
    ps.norm = spectral_norm(ps.p);
    return ps;
}

ProjectionSet identity_projection(const Network& net) {
    const int n = net.n_agents();
    ProjectionSet ps;
    ps.local_p.resize(n);
    ps.local_f.resize(n);
    for (int k = 0; k < n; ++k) {
        ps.local_p[k] = Mat::Identity(net.neighborhood_dim(k), net.neighborhood_dim(k));
        ps.local_f[k] = Vec::Zero(net.neighborhood_dim(k));
    }
    ps.p = Mat::Identity(net.total_dim(), net.total_dim());
    ps.p_minus = Mat::Zero(net.total_dim(), net.total_dim());
    ps.f = Vec::Zero(net.total_dim());
    ps.norm = 1.0;
    return ps;
}

Vec project(const Network& net, const ProjectionSet& ps, int k, const Vec& shares) {
    if (shares.size() != net.neighborhood_dim(k))
        throw ConfigError("project: share stack has wrong dimension");
    const auto& nb = net.neighbors(k);
    int row_pos = 0;
    for (size_t i = 0; i < nb.size(); ++i) {
        if (nb[i] == k) break;
        row_pos += net.dim(nb[i]);
    }
    return ps.local_p[k].middleRows(row_pos, net.dim(k)) * shares -
           ps.local_f[k].segment(row_pos, net.dim(k));
}

Vec project_with_weights(const Network& net, const WeightSet& weights, int k,
                         const Vec& shares) {
    if (shares.size() != net.neighborhood_dim(k))
        throw ConfigError("project: share stack has wrong dimension");
    const auto& nb = net.neighbors(k);
    int row_pos = 0;
    for (size_t i = 0; i < nb.size(); ++i) {
        if (nb[i] == k) break;
        row_pos += net.dim(nb[i]);
    }
    const Mat& d = net.local_d(k);
    if (d.rows() == 0) return shares.segment(row_pos, net.dim(k));

    Vec om(net.neighborhood_dim(k));
    int pos = 0;
    for (size_t i = 0; i < nb.size(); ++i) {
        double wl = std::max(weights.omega[k](i), kWeightFloor);
        om.segment(pos, net.dim(nb[i])).setConstant(1.0 / wl);
        pos += net.dim(nb[i]);
    }
    Mat omdt = om.asDiagonal() * d.transpose();
    Eigen::LLT<Mat> llt(Mat(d * omdt));
    if (llt.info() != Eigen::Success)
        throw NumericError("projector for agent " + std::to_string(k) +
                           ": weighted constraint Gram matrix is not positive definite");
    Vec lam = llt.solve(d * shares + net.local_b(k));
    return shares.segment(row_pos, net.dim(k)) -
           omdt.middleRows(row_pos, net.dim(k)) * lam;
}

}  // namespace plms
