#pragma once

#include "plms/common.hpp"
#include "plms/datamodel.hpp"
#include "plms/projection.hpp"

namespace plms {

// E[u u^T S u u^T] for u ~ N(0, R), any square S: R S R + R S^T R + R tr(S R).
Mat gaussian_fourth_moment(const Mat& r, const Mat& s);

// E[R(i) S R(i)] where R(i) = blkdiag(u_k u_k^T): the mean-field product plus
// per-agent diagonal-block fourth-moment corrections.
Mat quartic_sandwich(const SignalModel& m, const Mat& s);

// E[(I - M R(i)) S (I - M R(i))^T].
Mat step_sandwich(const SignalModel& m, const Mat& s);

// E[R(i) kron R(i)]: kron of the means plus in-block Isserlis corrections.
Mat kron_fourth_moment(const SignalModel& m);

// Z = E[(I - M R(i)) kron (I - M R(i))].
Mat kron_step_map(const SignalModel& m);

// Transition of the stacked error second moment, transposed form used by the
// steady-state weighted-norm solve: F = ((P kron P) Z)^T.
Mat steady_transition(const SignalModel& m, const Mat& p);

// Small step-size shortcut dropping regressor fourth moments:
// F ~= A^T kron A^T with A = P (I - M Ru).
Mat steady_transition_small_mu(const SignalModel& m, const Mat& p);

// Per-iteration auxiliary operators of the share-moment recursion in
// vectorized (column-major) form. Letter names follow the internal algebra:
// h propagates vec(Psi); x/xp carry the offset-cross terms; y/yp carry the
// data-cross terms; c collects the constant forcing.
struct CrossMomentSet {
    Mat h;             // M^2 x M^2
    Mat x, xp, y, yp;  // M^2 x M
    Mat z;             // M^2 x M^2
    Mat c1, c2, c3, c4;
    Vec c;
};

CrossMomentSet cross_moments(const SignalModel& m, const TaskPrior& prior,
                             const Mat& p, const Vec& f);

}  // namespace plms
