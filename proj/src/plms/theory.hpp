#pragma once

#include <string>
#include <vector>

#include "plms/common.hpp"
#include "plms/datamodel.hpp"
#include "plms/network.hpp"
#include "plms/projection.hpp"

namespace plms {

// Exchange behavior of the three variants sharing one adapt/exchange/project
// skeleton: noisy shares, noise-free shares, or no exchange at all.
enum class Algo { noisy, plain, nocoop };

std::string algo_name(Algo a);
Algo algo_from_name(const std::string& name);

// The share-moment recursion either keeps the exact task/share cross term or
// substitutes the mean task for it (cheaper, biased once noise is on).
enum class PsiMode { exact, literal };

// Per-iteration share-noise powers: recomputed from the current moments,
// frozen at the converged value, or supplied as an explicit schedule.
struct NoisePolicy {
    enum class Source { closed_form, steady_constant, schedule };
    Source source = Source::closed_form;
    std::vector<Vec> schedule;  // one entry per iteration, last one held
};

// One value per coordinate from one value per agent.
Vec expand_agent_values(const Network& net, const Vec& per_agent);

// Covariance of the projected share noise: the projector with own diagonal
// blocks zeroed sandwiching the expanded power diagonal.
Mat gamma_matrix(const Network& net, const ProjectionSet& ps, const Vec& powers);

struct StabilityReport {
    Vec mu_lo, mu_hi;                 // admissible per-agent step-size band
    std::vector<bool> hypothesis_ok;  // (1-1/|P|)/(1+1/|P|) < lmin/lmax
    bool all_hypothesis_ok = true;
    bool mu_inside = true;            // configured steps strictly inside the band
    double p_norm = 1.0;
    double rho_a = 0.0;               // spectral radius of P (I - M Ru)
};

// Mean-stability band per agent plus the exact transition spectral radius at
// the configured step sizes. A band is only sufficient; rho_a is the sharp
// divergence detector.
StabilityReport stability_bounds(const SignalModel& model, const ProjectionSet& ps);

struct MeanTrajectory {
    std::vector<double> norms;  // |E wt(i)| for i = 0..t-1
    double rho_a = 0.0;
    bool unstable = false;      // rho_a > 1: divergence expected
};

// Propagates E wt(i) = P (I - M Ru) E wt(i-1) from E wt(-1) = E w.
MeanTrajectory mean_recursion(const SignalModel& model, const ProjectionSet& ps,
                              const TaskPrior& prior, int t);

// Network MSD curve for explicit projector and noise-covariance schedules;
// the last entry of each schedule is held once it runs out. Keeping the two
// schedules separate is what lets a single noise power be perturbed while
// the projectors stay put.
std::vector<double> msd_transient(const SignalModel& model, const TaskPrior& prior,
                                  const std::vector<ProjectionSet>& ps_schedule,
                                  const std::vector<Mat>& gamma_schedule, int t,
                                  int m_cap = 64);

struct SteadyState {
    Vec sigma_ss;               // (1/N) (I - F)^-1 vec(I)
    double rho_f = 0.0;         // exact transition spectral radius
    double msd = 0.0;           // exact Gaussian evaluation
    double msd_small_mu = 0.0;  // regressor fourth moments dropped; NaN if unstable
    double rho_f_small_mu = 0.0;
};

// Limiting network MSD via the vectorized fixed point. Throws NumericError
// quoting the spectral radius when the transition is unstable, ConfigError
// when the stacked dimension exceeds m_cap (the transition is dim^2 x dim^2).
SteadyState steady_state_msd(const SignalModel& model, const ProjectionSet& ps,
                             const Mat& gamma, int m_cap = 64);

struct TheoryStep {
    double msd = 0.0;        // network MSD after the update at i
    double xi = 0.0;         // network inference-privacy error of the shares at i
    double mean_norm = 0.0;  // |E wt(i)|
    Vec powers;              // per-agent share-noise powers used at i
};

// Exact Gaussian moment propagation for one algorithm: the error second
// moment behind the MSD, the mean error, and the share moments V, E psi,
// Psi behind the inference-privacy error. step() reports iteration i and
// advances the state to i+1; observers read the pre-update state.
class TheoryRun {
public:
    TheoryRun(const Network& net, const SignalModel& model, const TaskPrior& prior,
              double rho, Algo algo = Algo::noisy, NoisePolicy noise = {},
              PsiMode psi_mode = PsiMode::exact, std::vector<Vec> weight_powers = {});

    TheoryStep step();
    std::vector<TheoryStep> run(int t);

    int iter() const { return i_; }
    const Vec& delta() const { return delta_; }

    Vec powers() const;
    double xi(const Vec& powers) const;
    // Error a neighbor attains estimating agent k's task from the single
    // share it receives at the current iteration, noised at sigma2.
    double single_share_error(int k, double sigma2) const;
    ProjectionSet projection_at(const Vec& weight_powers) const;

    const Mat& task_share_cov() const { return v_; }
    const Vec& share_mean() const { return epsi_; }
    const Mat& share_moment() const { return psi_; }
    const Mat& error_moment() const { return k_; }
    const Vec& mean_error() const { return ewt_; }
    bool ridge_flagged() const { return ridged_; }

private:
    Mat ylike(const Mat& p, const Mat& c) const;
    double guarded_llmse(const Mat& u, const Mat& xp, const Mat& w) const;

    Network net_;
    SignalModel model_;
    TaskPrior prior_;
    Algo algo_;
    NoisePolicy noise_;
    PsiMode psi_mode_;
    std::vector<Vec> wpows_;  // optional projector-side power schedule
    Vec delta_;
    Mat mr_, a_i_;
    Mat v_, psi_, k_, c4_;
    Vec epsi_, ewt_;
    int i_ = 0;
    mutable bool ridged_ = false;
};

struct LimitingState {
    Vec powers;
    ProjectionSet ps;
    Mat gamma;
    int iterations = 0;
    bool converged = false;
};

// Runs the moment recursions until the noise powers pass a windowed Cauchy
// test, then rebuilds the projector and noise covariance at the limit.
LimitingState limiting_projection(const Network& net, const SignalModel& model,
                                  const TaskPrior& prior, double rho, Algo algo,
                                  NoisePolicy noise = {}, int max_iter = 5000,
                                  double tol = 1e-10, int window = 10);

}  // namespace plms
