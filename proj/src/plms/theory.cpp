#include "plms/theory.hpp"

#include <algorithm>
#include <cstddef>
#include <limits>

#include "plms/moments.hpp"
#include "plms/privacy.hpp"

namespace plms {

std::string algo_name(Algo a) {
    switch (a) {
        case Algo::noisy: return "noisy";
        case Algo::plain: return "plain";
        case Algo::nocoop: return "nocoop";
    }
    throw ConfigError("unknown algorithm id");
}

Algo algo_from_name(const std::string& name) {
    if (name == "noisy") return Algo::noisy;
    if (name == "plain") return Algo::plain;
    if (name == "nocoop") return Algo::nocoop;
    throw ConfigError("unknown algorithm: " + name);
}

Vec expand_agent_values(const Network& net, const Vec& per_agent) {
    Vec out(net.total_dim());
    for (int k = 0; k < net.n_agents(); ++k)
        out.segment(net.offset(k), net.dim(k)).setConstant(per_agent[k]);
    return out;
}

Mat gamma_matrix(const Network& net, const ProjectionSet& ps, const Vec& powers) {
    Vec rn = expand_agent_values(net, powers);
    return ps.p_minus * rn.asDiagonal() * ps.p_minus.transpose();
}

StabilityReport stability_bounds(const SignalModel& model, const ProjectionSet& ps) {
    const int n = static_cast<int>(model.ru.size());
    StabilityReport rep;
    rep.p_norm = ps.norm;
    rep.mu_lo = Vec(n);
    rep.mu_hi = Vec(n);
    rep.hypothesis_ok.resize(n);
    const double inv = 1.0 / ps.norm;
    for (int k = 0; k < n; ++k) {
        Eigen::SelfAdjointEigenSolver<Mat> es(model.ru[k]);
        const double lmin = es.eigenvalues().minCoeff();
        const double lmax = es.eigenvalues().maxCoeff();
        rep.mu_lo[k] = (1.0 - inv) / lmin;
        rep.mu_hi[k] = (1.0 + inv) / lmax;
        rep.hypothesis_ok[k] = (1.0 - inv) / (1.0 + inv) < lmin / lmax;
        if (!rep.hypothesis_ok[k]) rep.all_hypothesis_ok = false;
        if (!(model.mu[k] > rep.mu_lo[k] && model.mu[k] < rep.mu_hi[k]))
            rep.mu_inside = false;
    }
    const Eigen::Index m = model.cal_ru.rows();
    rep.rho_a = spectral_radius(ps.p * (Mat::Identity(m, m) - model.cal_m * model.cal_ru));
    return rep;
}

MeanTrajectory mean_recursion(const SignalModel& model, const ProjectionSet& ps,
                              const TaskPrior& prior, int t) {
    const Eigen::Index m = model.cal_ru.rows();
    Mat a = ps.p * (Mat::Identity(m, m) - model.cal_m * model.cal_ru);
    MeanTrajectory out;
    out.rho_a = spectral_radius(a);
    out.unstable = out.rho_a > 1.0;
    out.norms.reserve(static_cast<std::size_t>(std::max(t, 0)));
    Vec ewt = prior.mean_w;
    for (int i = 0; i < t; ++i) {
        ewt = a * ewt;
        out.norms.push_back(ewt.norm());
    }
    return out;
}

std::vector<double> msd_transient(const SignalModel& model, const TaskPrior& prior,
                                  const std::vector<ProjectionSet>& ps_schedule,
                                  const std::vector<Mat>& gamma_schedule, int t,
                                  int m_cap) {
    if (ps_schedule.empty() || gamma_schedule.empty())
        throw ConfigError("msd_transient: empty schedule");
    if (model.cal_ru.rows() > m_cap)
        throw ConfigError("msd_transient: stacked dimension " +
                          std::to_string(model.cal_ru.rows()) + " exceeds cap " +
                          std::to_string(m_cap));
    const double n = static_cast<double>(model.dims.size());
    Mat k = prior.second_moment();
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(std::max(t, 0)));
    for (int i = 0; i < t; ++i) {
        const auto pi = std::min<std::size_t>(i, ps_schedule.size() - 1);
        const auto gi = std::min<std::size_t>(i, gamma_schedule.size() - 1);
        const Mat& p = ps_schedule[pi].p;
        k = p * step_sandwich(model, k) * p.transpose() +
            p * model.cal_m * model.cal_g * model.cal_m * p.transpose() +
            gamma_schedule[gi];
        out.push_back(k.trace() / n);
    }
    return out;
}

SteadyState steady_state_msd(const SignalModel& model, const ProjectionSet& ps,
                             const Mat& gamma, int m_cap) {
    const Eigen::Index m = model.cal_ru.rows();
    if (m > m_cap)
        throw ConfigError("steady_state_msd: stacked dimension " + std::to_string(m) +
                          " exceeds cap " + std::to_string(m_cap));
    SteadyState out;
    Mat f = steady_transition(model, ps.p);
    out.rho_f = spectral_radius(f);
    if (out.rho_f >= 1.0)
        throw NumericError("steady-state transition unstable: spectral radius " +
                           std::to_string(out.rho_f));
    const double n = static_cast<double>(model.dims.size());
    Vec rhs = vec_of(Mat::Identity(m, m)) / n;
    out.sigma_ss = (Mat::Identity(m * m, m * m) - f).partialPivLu().solve(rhs);
    Mat force = ps.p * model.cal_m * model.cal_g * model.cal_m * ps.p.transpose() + gamma;
    out.msd = vec_of(force).dot(out.sigma_ss);

    Mat f2 = steady_transition_small_mu(model, ps.p);
    out.rho_f_small_mu = spectral_radius(f2);
    if (out.rho_f_small_mu < 1.0) {
        Vec s2 = (Mat::Identity(m * m, m * m) - f2).partialPivLu().solve(rhs);
        out.msd_small_mu = vec_of(force).dot(s2);
    } else {
        out.msd_small_mu = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

TheoryRun::TheoryRun(const Network& net, const SignalModel& model, const TaskPrior& prior,
                     double rho, Algo algo, NoisePolicy noise, PsiMode psi_mode,
                     std::vector<Vec> weight_powers)
    : net_(net),
      model_(model),
      prior_(prior),
      algo_(algo),
      noise_(std::move(noise)),
      psi_mode_(psi_mode),
      wpows_(std::move(weight_powers)) {
    if (!(rho >= 0.0 && rho < 1.0))
        throw ConfigError("privacy fraction rho must lie in [0, 1)");
    const int n = net_.n_agents();
    delta_ = Vec(n);
    for (int k = 0; k < n; ++k) delta_[k] = rho * prior_.wkk(k).trace();
    const Eigen::Index m = net_.total_dim();
    mr_ = model_.cal_m * model_.cal_ru;
    a_i_ = Mat::Identity(m, m) - mr_;
    v_ = prior_.cal_w * a_i_;
    epsi_ = mr_ * prior_.mean_w;
    c4_ = model_.cal_m *
          (quartic_sandwich(model_, prior_.second_moment()) + model_.cal_g) * model_.cal_m;
    psi_ = c4_;
    k_ = prior_.second_moment();
    ewt_ = prior_.mean_w;
}

Vec TheoryRun::powers() const {
    Vec out = Vec::Zero(net_.n_agents());
    if (algo_ != Algo::noisy) return out;
    switch (noise_.source) {
        case NoisePolicy::Source::closed_form:
            for (int k = 0; k < net_.n_agents(); ++k) {
                const int o = net_.offset(k), d = net_.dim(k);
                Mat u = prior_.wkk(k) - v_.block(o, o, d, d);
                out[k] = sufficient_power(u, prior_.wkk(k), delta_[k]);
            }
            return out;
        case NoisePolicy::Source::steady_constant:
            for (int k = 0; k < net_.n_agents(); ++k)
                out[k] = steady_state_power(prior_.wkk(k), delta_[k]);
            return out;
        case NoisePolicy::Source::schedule:
            if (noise_.schedule.empty()) throw ConfigError("noise schedule is empty");
            return noise_.schedule[std::min<std::size_t>(i_, noise_.schedule.size() - 1)];
    }
    throw ConfigError("unknown noise source");
}

double TheoryRun::guarded_llmse(const Mat& u, const Mat& xp, const Mat& w) const {
    try {
        return llmse_mse(u, xp, w);
    } catch (const NumericError&) {
        ridged_ = true;
        Mat padded = xp + 1e-10 * Mat::Identity(xp.rows(), xp.cols());
        return llmse_mse(u, padded, w);
    }
}

double TheoryRun::xi(const Vec& powers) const {
    Mat c = psi_ - epsi_ * epsi_.transpose();
    Mat wmv = prior_.cal_w - v_;
    double tot = 0.0;
    for (int k = 0; k < net_.n_agents(); ++k) {
        const int ok = net_.offset(k), dk = net_.dim(k);
        const auto& nbrs = net_.neighbors(k);
        const int others = static_cast<int>(nbrs.size()) - 1;
        if (others <= 0) continue;
        double acc = 0.0;
        for (int l : nbrs) {
            if (l == k) continue;
            const int ol = net_.offset(l), dl = net_.dim(l);
            if (algo_ == Algo::nocoop) {
                Mat u = wmv.block(ok, ol, dk, dl);
                Mat xp = c.block(ol, ol, dl, dl);
                acc += guarded_llmse(u, xp, prior_.wkk(k));
            } else {
                Mat u(dk, dk + dl);
                u << wmv.block(ok, ok, dk, dk), wmv.block(ok, ol, dk, dl);
                Mat xp(dk + dl, dk + dl);
                xp << c.block(ok, ok, dk, dk), c.block(ok, ol, dk, dl),
                    c.block(ol, ok, dl, dk), c.block(ol, ol, dl, dl);
                if (algo_ == Algo::noisy)
                    xp.topLeftCorner(dk, dk) += powers[k] * Mat::Identity(dk, dk);
                acc += guarded_llmse(u, xp, prior_.wkk(k));
            }
        }
        tot += acc / others;
    }
    return tot / net_.n_agents();
}

double TheoryRun::single_share_error(int k, double sigma2) const {
    const int o = net_.offset(k), d = net_.dim(k);
    Mat u = prior_.wkk(k) - v_.block(o, o, d, d);
    Vec ek = epsi_.segment(o, d);
    Mat xp = psi_.block(o, o, d, d) - ek * ek.transpose() + sigma2 * Mat::Identity(d, d);
    return guarded_llmse(u, xp, prior_.wkk(k));
}

ProjectionSet TheoryRun::projection_at(const Vec& weight_powers) const {
    return build_projection(net_, compute_weights(net_, weight_powers));
}

Mat TheoryRun::ylike(const Mat& p, const Mat& c) const {
    Mat pc = p * c;
    return (pc * model_.cal_ru - model_.cal_m * quartic_sandwich(model_, pc)) * model_.cal_m;
}

TheoryStep TheoryRun::step() {
    TheoryStep out;
    out.powers = powers();
    out.xi = xi(out.powers);

    ProjectionSet ps;
    if (algo_ == Algo::nocoop) {
        ps = identity_projection(net_);
    } else {
        Vec wp = Vec::Zero(net_.n_agents());
        if (algo_ == Algo::noisy)
            wp = wpows_.empty() ? out.powers
                                : wpows_[std::min<std::size_t>(i_, wpows_.size() - 1)];
        ps = projection_at(wp);
    }
    Mat gamma = gamma_matrix(net_, ps, out.powers);

    k_ = ps.p * step_sandwich(model_, k_) * ps.p.transpose() +
         ps.p * model_.cal_m * model_.cal_g * model_.cal_m * ps.p.transpose() + gamma;
    ewt_ = ps.p * (a_i_ * ewt_);
    out.msd = k_.trace() / net_.n_agents();
    out.mean_norm = ewt_.norm();

    const Vec& ew = prior_.mean_w;
    Vec pe = ps.p * epsi_;
    Mat s_psi = ps.p * psi_ * ps.p.transpose() + gamma + ps.f * ps.f.transpose() -
                pe * ps.f.transpose() - ps.f * pe.transpose();
    Mat next = step_sandwich(model_, s_psi);
    Mat mat_y = ylike(ps.p, epsi_ * ew.transpose());
    if (psi_mode_ == PsiMode::exact)
        mat_y += ylike(ps.p, Mat((prior_.cal_w - v_).transpose()));
    Mat few = ps.f * ew.transpose();
    Mat c2 =
        (few * model_.cal_ru - model_.cal_m * quartic_sandwich(model_, few)) * model_.cal_m;
    psi_ = next - c2 - c2.transpose() + c4_ + mat_y + mat_y.transpose();
    epsi_ = a_i_ * (pe - ps.f) + mr_ * ew;
    v_ = v_ * (a_i_ * ps.p).transpose();
    ++i_;
    return out;
}

std::vector<TheoryStep> TheoryRun::run(int t) {
    std::vector<TheoryStep> out;
    out.reserve(static_cast<std::size_t>(std::max(t, 0)));
    for (int i = 0; i < t; ++i) out.push_back(step());
    return out;
}

LimitingState limiting_projection(const Network& net, const SignalModel& model,
                                  const TaskPrior& prior, double rho, Algo algo,
                                  NoisePolicy noise, int max_iter, double tol, int window) {
    TheoryRun run(net, model, prior, rho, algo, noise);
    LimitingState out;
    Vec prev = run.powers();
    int streak = 0;
    while (run.iter() < max_iter) {
        run.step();
        Vec cur = run.powers();
        const double gap = (cur - prev).cwiseAbs().maxCoeff();
        streak = gap <= tol * (1.0 + cur.cwiseAbs().maxCoeff()) ? streak + 1 : 0;
        prev = cur;
        if (streak >= window) {
            out.converged = true;
            break;
        }
    }
    out.iterations = run.iter();
    out.powers = prev;
    if (algo == Algo::nocoop)
        out.ps = identity_projection(net);
    else
        out.ps = build_projection(net, compute_weights(net, out.powers));
    out.gamma = gamma_matrix(net, out.ps, out.powers);
    return out;
}

}  // namespace plms
