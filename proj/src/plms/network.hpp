#pragma once

#include <vector>

#include "plms/common.hpp"
#include "plms/rng.hpp"

namespace plms {

// One linear equality constraint sum_k B_qk w_k + b_q = 0 over a set of
// participating agents. All blocks of a constraint share the same row count.
struct Constraint {
    std::vector<int> participants;  // distinct agent ids
    std::vector<Mat> blocks;        // blocks[i] multiplies w_{participants[i]}
    Vec offset;

    // Scalar form: coefficient times identity per participant, offset times ones.
    static Constraint scalar(const std::vector<int>& agents,
                             const std::vector<double>& coeffs, double offset,
                             const std::vector<int>& dims);
};

struct RankInfo {
    int rows = 0;
    int cols = 0;
    int row_rank = 0;
    int col_rank = 0;
};

struct ValidationReport {
    std::vector<RankInfo> local;            // D_k
    std::vector<bool> local_full_row_rank;
    std::vector<bool> local_col_deficient;
    std::vector<bool> own_block_col_deficient;  // [D_k] columns of agent k only
    bool any_own_block_col_deficient = false;   // warning-level check (see README)
    bool global_full_row_rank = false;
    bool feasible = false;
    int null_dim = 0;
    double feas_residual = 0.0;

    // Gating checks; own-block deficiency is reported but never gates since
    // the projector-norm lower bound only needs a nontrivial null space.
    bool pass() const {
        if (!feasible || null_dim <= 0) return false;
        for (size_t k = 0; k < local.size(); ++k)
            if (!local_full_row_rank[k]) return false;
        return true;
    }
};

class Network {
public:
    Network(std::vector<int> dims, std::vector<Constraint> constraints);

    int n_agents() const { return static_cast<int>(dims_.size()); }
    int total_dim() const { return total_; }
    int dim(int k) const { return dims_[k]; }
    int offset(int k) const { return offsets_[k]; }
    const std::vector<int>& dims() const { return dims_; }
    const std::vector<Constraint>& constraints() const { return constraints_; }

    // Sorted ascending, always contains k itself.
    const std::vector<int>& neighbors(int k) const { return nbrs_[k]; }
    int neighborhood_dim(int k) const { return nbr_dim_[k]; }

    const Mat& global_d() const { return global_d_; }
    const Vec& global_b() const { return global_b_; }

    // Constraints involving agent k, columns over neighbors(k) ascending.
    const Mat& local_d(int k) const { return local_d_[k]; }
    const Vec& local_b(int k) const { return local_b_[k]; }

    // Stack the blocks of a global vector belonging to neighbors(k).
    Vec gather(int k, const Vec& global) const;

    ValidationReport validate() const;

private:
    std::vector<int> dims_;
    std::vector<int> offsets_;
    int total_ = 0;
    std::vector<Constraint> constraints_;
    std::vector<std::vector<int>> nbrs_;
    std::vector<int> nbr_dim_;
    Mat global_d_;
    Vec global_b_;
    std::vector<Mat> local_d_;
    std::vector<Vec> local_b_;
};

// Rank with singular values below 1e-10 x largest treated as zero.
int rank_of(const Mat& a);

// Orthonormal null-space basis; each column's first nonzero entry is positive.
Mat null_basis(const Mat& d);

// Least-norm w with d w + b = 0; throws NumericError if inconsistent.
Vec particular_solution(const Mat& d, const Vec& b);

// Consecutive-pair scalar constraints, coefficients from [-hi,-lo] U [lo,hi].
Network line_network(int n, int mk, Rng& rng, double lo = 1.0, double hi = 3.0);

// Few wide constraints over 6..8 agents each; every agent covered; redraws
// until the stacked constraint matrix has full row rank.
Network dense_network(int n, int mk, int q, Rng& rng, double lo = 1.0, double hi = 3.0);

}  // namespace plms
