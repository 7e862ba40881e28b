#pragma once

#include <vector>

#include "plms/common.hpp"
#include "plms/network.hpp"

namespace plms {

// Neighbor combination weights per agent; omega[k] is indexed like
// neighbors(k). Positive, each vector sums to one.
struct WeightSet {
    std::vector<Vec> omega;
};

// Softmax-style down-weighting of noisy shares: the weight of a neighbor
// share decays as exp(-noise power); the receiver's own share gets weight
// proportional to 1.
WeightSet compute_weights(const Network& net, const Vec& noise_powers);

struct ProjectionSet {
    std::vector<Mat> local_p;  // per agent, sized by the stacked neighborhood
    std::vector<Vec> local_f;
    Mat p;        // global block matrix, zero outside neighborhoods
    Mat p_minus;  // p with each agent's own diagonal block zeroed
    Vec f;
    double norm = 1.0;  // spectral norm of p
};

// Weighted oblique projector onto each agent's local constraint manifold:
// P = I - Om D^T (D Om D^T)^-1 D, f = Om D^T (D Om D^T)^-1 b, where Om has
// blocks (1/omega_lk) I. Solved by factorization; a condition estimate above
// 1e12 raises an error naming the agent. Agents without constraints get
// P = I, f = 0.
ProjectionSet build_projection(const Network& net, const WeightSet& weights);

ProjectionSet identity_projection(const Network& net);

// Block k of P_{N_k} shares - f_{N_k}; shares stacked over neighbors(k).
Vec project(const Network& net, const ProjectionSet& ps, int k, const Vec& shares);

// Same result computed directly from a weight set, without materializing the
// operator. Used when weights differ per run; skips the condition estimate
// and only rejects a Gram factorization that fails outright.
Vec project_with_weights(const Network& net, const WeightSet& weights, int k,
                         const Vec& shares);

}  // namespace plms
