#include "plms/network.hpp"

#include <algorithm>
#include <set>

namespace plms {

Constraint Constraint::scalar(const std::vector<int>& agents,
                              const std::vector<double>& coeffs, double offset,
                              const std::vector<int>& dims) {
    if (agents.size() != coeffs.size())
        throw ConfigError("scalar constraint: one coefficient per agent required");
    if (agents.empty()) throw ConfigError("scalar constraint: no participants");
    int rows = dims.at(agents[0]);
    Constraint c;
    c.participants = agents;
    for (size_t i = 0; i < agents.size(); ++i) {
        int mk = dims.at(agents[i]);
        if (mk != rows)
            throw ConfigError("scalar constraint: participants must share one dimension");
        c.blocks.push_back(coeffs[i] * Mat::Identity(rows, rows));
    }
    c.offset = offset * Vec::Ones(rows);
    return c;
}

Network::Network(std::vector<int> dims, std::vector<Constraint> constraints)
    : dims_(std::move(dims)), constraints_(std::move(constraints)) {
    const int n = static_cast<int>(dims_.size());
    if (n == 0) throw ConfigError("network: no agents");
    if (constraints_.empty()) throw ConfigError("network: empty constraint set");
    offsets_.resize(n);
    for (int k = 0; k < n; ++k) {
        if (dims_[k] <= 0) throw ConfigError("network: nonpositive agent dimension");
        offsets_[k] = total_;
        total_ += dims_[k];
    }

    int total_rows = 0;
    for (const auto& c : constraints_) {
        if (c.participants.empty()) throw ConfigError("constraint: no participants");
        std::set<int> seen;
        int rows = static_cast<int>(c.offset.size());
        if (rows <= 0) throw ConfigError("constraint: empty offset");
        if (c.blocks.size() != c.participants.size())
            throw ConfigError("constraint: one block per participant required");
        for (size_t i = 0; i < c.participants.size(); ++i) {
            int a = c.participants[i];
            if (a < 0 || a >= n) throw ConfigError("constraint: agent id out of range");
            if (!seen.insert(a).second)
                throw ConfigError("constraint: duplicate participant");
            if (c.blocks[i].rows() != rows || c.blocks[i].cols() != dims_[a])
                throw ConfigError("constraint: block shape mismatch");
        }
        total_rows += rows;
    }

    global_d_ = Mat::Zero(total_rows, total_);
    global_b_ = Vec::Zero(total_rows);
    int row = 0;
    for (const auto& c : constraints_) {
        int rows = static_cast<int>(c.offset.size());
        for (size_t i = 0; i < c.participants.size(); ++i)
            global_d_.block(row, offsets_[c.participants[i]], rows, dims_[c.participants[i]]) =
                c.blocks[i];
        global_b_.segment(row, rows) = c.offset;
        row += rows;
    }

    // Neighborhoods: co-occurrence in any constraint, plus the agent itself.
    std::vector<std::set<int>> nb(n);
    for (int k = 0; k < n; ++k) nb[k].insert(k);
    for (const auto& c : constraints_)
        for (int a : c.participants)
            for (int b : c.participants) nb[a].insert(b);
    nbrs_.resize(n);
    nbr_dim_.resize(n);
    for (int k = 0; k < n; ++k) {
        nbrs_[k].assign(nb[k].begin(), nb[k].end());
        int d = 0;
        for (int l : nbrs_[k]) d += dims_[l];
        nbr_dim_[k] = d;
    }

    // Local systems: rows from constraints involving k, columns over
    // neighbors(k) ascending.
    local_d_.resize(n);
    local_b_.resize(n);
    for (int k = 0; k < n; ++k) {
        int rows_k = 0;
        for (const auto& c : constraints_)
            if (std::find(c.participants.begin(), c.participants.end(), k) !=
                c.participants.end())
                rows_k += static_cast<int>(c.offset.size());
        Mat dk = Mat::Zero(rows_k, nbr_dim_[k]);
        Vec bk = Vec::Zero(rows_k);
        std::vector<int> col_of(n, -1);
        int col = 0;
        for (int l : nbrs_[k]) {
            col_of[l] = col;
            col += dims_[l];
        }
        int r = 0;
        for (const auto& c : constraints_) {
            if (std::find(c.participants.begin(), c.participants.end(), k) ==
                c.participants.end())
                continue;
            int rows = static_cast<int>(c.offset.size());
            for (size_t i = 0; i < c.participants.size(); ++i) {
                int a = c.participants[i];
                dk.block(r, col_of[a], rows, dims_[a]) = c.blocks[i];
            }
            bk.segment(r, rows) = c.offset;
            r += rows;
        }
        local_d_[k] = std::move(dk);
        local_b_[k] = std::move(bk);
    }
}

Vec Network::gather(int k, const Vec& global) const {
    Vec out(nbr_dim_[k]);
    int pos = 0;
    for (int l : nbrs_[k]) {
        out.segment(pos, dims_[l]) = global.segment(offsets_[l], dims_[l]);
        pos += dims_[l];
    }
    return out;
}

int rank_of(const Mat& a) {
    if (a.size() == 0) return 0;
    Eigen::JacobiSVD<Mat> svd(a);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) <= 0.0) return 0;
    double tol = 1e-10 * s(0);
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > tol) ++r;
    return r;
}

Mat null_basis(const Mat& d) {
    Eigen::JacobiSVD<Mat> svd(d, Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    double tol = (s.size() && s(0) > 0.0) ? 1e-10 * s(0) : 0.0;
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > tol) ++r;
    Mat z = svd.matrixV().rightCols(d.cols() - r);
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            if (std::abs(z(i, j)) > 1e-12) {
                if (z(i, j) < 0) z.col(j) = -z.col(j);
                break;
            }
        }
    }
    return z;
}

Vec particular_solution(const Mat& d, const Vec& b) {
    Vec w = d.completeOrthogonalDecomposition().solve(-b);
    double res = (d * w + b).lpNorm<Eigen::Infinity>();
    if (res > 1e-8 * (1.0 + b.lpNorm<Eigen::Infinity>()))
        throw NumericError("constraint system is infeasible, residual " + std::to_string(res));
    return w;
}

ValidationReport Network::validate() const {
    const int n = n_agents();
    ValidationReport rep;
    rep.local.resize(n);
    rep.local_full_row_rank.resize(n);
    rep.local_col_deficient.resize(n);
    rep.own_block_col_deficient.resize(n);
    for (int k = 0; k < n; ++k) {
        const Mat& dk = local_d_[k];
        RankInfo info;
        info.rows = static_cast<int>(dk.rows());
        info.cols = static_cast<int>(dk.cols());
        info.row_rank = rank_of(dk);
        info.col_rank = info.row_rank;
        rep.local[k] = info;
        rep.local_full_row_rank[k] = info.row_rank == info.rows;
        rep.local_col_deficient[k] = info.col_rank < info.cols;

        int pos = 0;
        for (int l : nbrs_[k]) {
            if (l == k) break;
            pos += dims_[l];
        }
        Mat own = dk.middleCols(pos, dims_[k]);
        rep.own_block_col_deficient[k] = rank_of(own) < dims_[k];
        rep.any_own_block_col_deficient =
            rep.any_own_block_col_deficient || rep.own_block_col_deficient[k];
    }
    rep.global_full_row_rank = rank_of(global_d_) == global_d_.rows();
    rep.null_dim = total_ - rank_of(global_d_);
    try {
        particular_solution(global_d_, global_b_);
        rep.feasible = true;
        rep.feas_residual = 0.0;
    } catch (const NumericError&) {
        rep.feasible = false;
    }
    if (rep.feasible) {
        Vec w = global_d_.completeOrthogonalDecomposition().solve(-global_b_);
        rep.feas_residual = (global_d_ * w + global_b_).lpNorm<Eigen::Infinity>();
    }
    return rep;
}

Network line_network(int n, int mk, Rng& rng, double lo, double hi) {
    if (n < 2) throw ConfigError("line network: need at least two agents");
    std::vector<int> dims(n, mk);
    std::vector<Constraint> cons;
    for (int k = 0; k + 1 < n; ++k) {
        std::vector<double> coef = {rng.signed_band(lo, hi), rng.signed_band(lo, hi)};
        cons.push_back(Constraint::scalar({k, k + 1}, coef, rng.signed_band(lo, hi), dims));
    }
    return Network(dims, cons);
}

Network dense_network(int n, int mk, int q, Rng& rng, double lo, double hi) {
    if (n < 8) throw ConfigError("dense network: need at least eight agents");
    std::vector<int> dims(n, mk);
    for (int attempt = 0; attempt < 64; ++attempt) {
        std::vector<std::vector<int>> parts(q);
        std::vector<bool> used(n, false);
        for (int c = 0; c < q; ++c) {
            int sz = rng.uniform_int(6, 8);
            std::vector<int> pool(n);
            for (int i = 0; i < n; ++i) pool[i] = i;
            for (int i = 0; i < sz; ++i) {
                int j = rng.uniform_int(i, n - 1);
                std::swap(pool[i], pool[j]);
            }
            parts[c].assign(pool.begin(), pool.begin() + sz);
            std::sort(parts[c].begin(), parts[c].end());
            for (int a : parts[c]) used[a] = true;
        }
        for (int a = 0; a < n; ++a) {
            if (used[a]) continue;
            int c = rng.uniform_int(0, q - 1);
            parts[c].push_back(a);
            std::sort(parts[c].begin(), parts[c].end());
        }
        std::vector<Constraint> cons;
        for (int c = 0; c < q; ++c) {
            std::vector<double> coef;
            for (size_t i = 0; i < parts[c].size(); ++i)
                coef.push_back(rng.signed_band(lo, hi));
            cons.push_back(Constraint::scalar(parts[c], coef, rng.signed_band(lo, hi), dims));
        }
        Network net(dims, cons);
        if (rank_of(net.global_d()) == net.global_d().rows()) return net;
    }
    throw NumericError("dense network: could not draw a full-row-rank constraint set");
}

}  // namespace plms
