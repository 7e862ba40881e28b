#include "plms/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <vector>

#include "plms/privacy.hpp"
#include "plms/rng.hpp"

namespace plms {

namespace {

constexpr int kBlockRuns = 64;

struct Edge {
    int k, l;
};

std::vector<Edge> directed_edges(const Network& net) {
    std::vector<Edge> out;
    for (int k = 0; k < net.n_agents(); ++k)
        for (int l : net.neighbors(k))
            if (l != k) out.push_back({k, l});
    return out;
}

// Raw first/second moment sums of a stacked [target; observation] sample.
struct MomentAcc {
    Vec s1;
    Mat s2;

    void init(Eigen::Index n) {
        s1 = Vec::Zero(n);
        s2 = Mat::Zero(n, n);
    }
    void reset() {
        s1.setZero();
        s2.setZero();
    }
    void add(const Vec& y) {
        s1 += y;
        s2.noalias() += y * y.transpose();
    }
    void merge(const MomentAcc& o) {
        s1 += o.s1;
        s2 += o.s2;
    }
};

// Centered covariance from the sums, then the plug-in estimation error of
// the first dk coordinates from the rest.
double plugin_error(const MomentAcc& acc, double runs, int dk, bool* ridged) {
    const Eigen::Index n = acc.s1.size();
    Mat c = (acc.s2 - acc.s1 * acc.s1.transpose() / runs) / (runs - 1.0);
    Mat w = c.topLeftCorner(dk, dk);
    Mat u = c.topRightCorner(dk, n - dk);
    Mat xp = c.bottomRightCorner(n - dk, n - dk);
    try {
        return llmse_mse(u, xp, w);
    } catch (const NumericError&) {
        if (ridged) *ridged = true;
        double eps = 1e-8 * xp.trace() / static_cast<double>(xp.rows());
        if (!(eps > 0.0)) eps = 1e-8;
        return llmse_mse(u, Mat(xp + eps * Mat::Identity(xp.rows(), xp.rows())), w);
    }
}

int edge_sample_dim(const Network& net, Algo algo, const Edge& e) {
    return algo == Algo::nocoop ? net.dim(e.k) + net.dim(e.l)
                                : 2 * net.dim(e.k) + net.dim(e.l);
}

// What neighbor l holds about agent k at one iteration: its own intermediate
// estimate plus k's (noisy) share, or just its own estimate when nothing is
// exchanged. Stacked behind the target w_k for moment accumulation.
Vec edge_sample(const Network& net, Algo algo, const Edge& e, const Mat& wo,
                const Mat& psi, const Mat& share, const Mat& w, int r) {
    const int ok = net.offset(e.k), dk = net.dim(e.k);
    const int ol = net.offset(e.l), dl = net.dim(e.l);
    if (algo == Algo::nocoop) {
        Vec y(dk + dl);
        y << wo.col(r).segment(ok, dk), w.col(r).segment(ol, dl);
        return y;
    }
    Vec y(2 * dk + dl);
    y << wo.col(r).segment(ok, dk), share.col(r).segment(ok, dk),
        psi.col(r).segment(ol, dl);
    return y;
}

double finalize_xi(const Network& net, const std::vector<Edge>& edges,
                   const std::vector<MomentAcc>& stats, double runs, bool* ridged) {
    double tot = 0.0;
    std::size_t e = 0;
    for (int k = 0; k < net.n_agents(); ++k) {
        const int others = static_cast<int>(net.neighbors(k).size()) - 1;
        if (others <= 0) continue;
        double acc = 0.0;
        for (int j = 0; j < others; ++j, ++e)
            acc += plugin_error(stats[e], runs, net.dim(edges[e].k), ridged);
        tot += acc / others;
    }
    return tot / net.n_agents();
}

void validate_plan(const Network& net, const MonteCarloPlan& plan) {
    if (plan.runs < 1 || plan.iters < 1)
        throw ConfigError("monte carlo plan needs runs >= 1 and iters >= 1");
    if (!(plan.rho >= 0.0 && plan.rho < 1.0))
        throw ConfigError("privacy fraction rho must lie in [0, 1)");
    if (!(plan.alpha > 0.0 && plan.alpha < 1.0))
        throw ConfigError("forgetting factor alpha must lie in (0, 1)");
    if (plan.tracking) {
        if (plan.tracking->index < 0 || plan.tracking->index >= plan.iters)
            throw ConfigError("tracking change index outside [0, iters)");
        if (!(plan.tracking->factor > 0.0))
            throw ConfigError("tracking scale factor must be positive");
    }
    if (plan.algo == Algo::noisy && plan.noise == MonteCarloPlan::Noise::schedule) {
        if (plan.schedule.empty())
            throw ConfigError("scheduled noise source needs a non-empty schedule");
        for (const Vec& s : plan.schedule)
            if (s.size() != net.n_agents())
                throw ConfigError("noise schedule entries need one power per agent");
    }
    if (plan.collect_privacy) {
        if (net.n_agents() < 2)
            throw ConfigError("privacy collection needs at least two agents");
        int dim = 0;
        for (const Edge& e : directed_edges(net))
            dim = std::max(dim, edge_sample_dim(net, plan.algo, e));
        if (plan.runs < 10 * dim)
            throw ConfigError("privacy collection needs runs >= " +
                              std::to_string(10 * dim) +
                              " (10x the largest sample dimension)");
        if (plan.batches < 2 || plan.batches > plan.runs)
            throw ConfigError("batch count must lie in [2, runs]");
    }
}

// Per-run kernels shared by both engines. One stream per (run, agent,
// kind, iteration); estimates live one column per run.

void adapt_run(const Network& net, const SignalModel& model, std::uint64_t seed,
               int r, int iter, const Mat& wo, const Mat& w, Mat& psi) {
    for (int k = 0; k < net.n_agents(); ++k) {
        const int o = net.offset(k), d = net.dim(k);
        Rng gu(seed, r, k, StreamKind::regressor, iter);
        Vec u = model.ru_chol[k] * gu.gauss_vec(d);
        Rng gv(seed, r, k, StreamKind::obs_noise, iter);
        const double obs =
            u.dot(wo.col(r).segment(o, d)) + gv.next_gauss() * std::sqrt(model.sv2[k]);
        psi.col(r).segment(o, d) =
            adapt_step(Vec(w.col(r).segment(o, d)), u, obs, model.mu[k]);
    }
}

void exchange_run(const Network& net, std::uint64_t seed, int r, int iter,
                  const Vec& run_powers, const Mat& psi, Mat& noise, Mat& share) {
    for (int k = 0; k < net.n_agents(); ++k) {
        const int o = net.offset(k), d = net.dim(k);
        Rng gn(seed, r, k, StreamKind::share_noise, iter);
        noise.col(r).segment(o, d) = std::sqrt(run_powers[k]) * gn.gauss_vec(d);
    }
    share.col(r) = psi.col(r) + noise.col(r);
}

// ws is the per-run weight set for the per-run adaptive mode; otherwise the
// precomputed global operator applies. A receiver's own share enters its
// projection un-noised.
void project_run(const Network& net, Algo algo, const ProjectionSet* ps,
                 const WeightSet* ws, const Mat& psi, const Mat& noise,
                 const Mat& share, Mat& w, int r) {
    if (algo == Algo::nocoop) {
        w.col(r) = psi.col(r);
        return;
    }
    if (ws != nullptr) {
        for (int k = 0; k < net.n_agents(); ++k) {
            Vec stack(net.neighborhood_dim(k));
            int pos = 0;
            for (int l : net.neighbors(k)) {
                const int ol = net.offset(l), dl = net.dim(l);
                stack.segment(pos, dl) = (l == k) ? psi.col(r).segment(ol, dl)
                                                  : share.col(r).segment(ol, dl);
                pos += dl;
            }
            w.col(r).segment(net.offset(k), net.dim(k)) =
                project_with_weights(net, *ws, k, stack);
        }
        return;
    }
    w.col(r) = ps->p * psi.col(r) + ps->p_minus * noise.col(r) - ps->f;
}

void accumulate_run(const Network& net, const std::vector<Edge>& edges, Algo algo,
                    bool collect, int batch, int batches, const Mat& wo,
                    const Mat& psi, const Mat& share, const Mat& w, int r,
                    double& msd, std::vector<MomentAcc>& edge_acc,
                    std::vector<MomentAcc>& single_acc) {
    msd += (wo.col(r) - w.col(r)).squaredNorm();
    if (!collect) return;
    for (std::size_t e = 0; e < edges.size(); ++e)
        edge_acc[e].add(edge_sample(net, algo, edges[e], wo, psi, share, w, r));
    if (algo == Algo::nocoop) return;
    for (int k = 0; k < net.n_agents(); ++k) {
        const int o = net.offset(k), d = net.dim(k);
        Vec y(2 * d);
        y << wo.col(r).segment(o, d), share.col(r).segment(o, d);
        single_acc[static_cast<std::size_t>(k) * batches + batch].add(y);
    }
}

// Shared per-iteration bookkeeping once the merged accumulators are in hand.
struct IterationTotals {
    double msd = 0.0;
    Vec pow_report;
    std::vector<MomentAcc> edges;
    std::vector<MomentAcc> single;  // agent * batches + batch
};

void finalize_iteration(const Network& net, const std::vector<Edge>& edges,
                        const MonteCarloPlan& plan, int iter,
                        const std::vector<double>& batch_counts,
                        const IterationTotals& tot, RunRecord& rec) {
    rec.msd.push_back(tot.msd / (static_cast<double>(plan.runs) * net.n_agents()));
    rec.powers.push_back(tot.pow_report);
    if (!plan.collect_privacy) return;
    bool ridged = false;
    rec.privacy.xi.push_back(
        finalize_xi(net, edges, tot.edges, plan.runs, &ridged));
    if (plan.algo != Algo::nocoop) {
        const int nb = plan.batches;
        for (int k = 0; k < net.n_agents(); ++k) {
            const int d = net.dim(k);
            MomentAcc full;
            full.init(2 * d);
            double mean = 0.0;
            std::vector<double> errs(nb);
            for (int b = 0; b < nb; ++b) {
                const MomentAcc& part = tot.single[static_cast<std::size_t>(k) * nb + b];
                full.merge(part);
                // Batch-level ridges only widen the standard error, so they
                // do not raise the record-level flag.
                errs[b] = plugin_error(part, batch_counts[b], d, nullptr);
                mean += errs[b];
            }
            mean /= nb;
            double var = 0.0;
            for (double e : errs) var += (e - mean) * (e - mean);
            rec.privacy.single_share(k, iter) = plugin_error(full, plan.runs, d, &ridged);
            rec.privacy.single_share_se(k, iter) =
                std::sqrt(var / (nb - 1)) / std::sqrt(static_cast<double>(nb));
        }
    }
    rec.privacy.ridge_flagged = rec.privacy.ridge_flagged || ridged;
}

template <typename F>
void run_blocks(int nblocks, bool parallel, F&& f) {
#ifdef _OPENMP
    if (parallel) {
        std::exception_ptr err = nullptr;
#pragma omp parallel for schedule(static)
        for (int b = 0; b < nblocks; ++b) {
            try {
                f(b);
            } catch (...) {
#pragma omp critical
                {
                    if (!err) err = std::current_exception();
                }
            }
        }
        if (err) std::rethrow_exception(err);
        return;
    }
#else
    (void)parallel;
#endif
    for (int b = 0; b < nblocks; ++b) f(b);
}

class BlockEngine {
public:
    BlockEngine(const Network& net, const SignalModel& model, const TaskPrior& prior,
                const MonteCarloPlan& plan, bool parallel)
        : net_(net), model_(model), prior_(prior), plan_(plan), parallel_(parallel) {
        // The baselines never inject noise; normalizing here keeps a single
        // code path and makes plain shares bitwise equal to noisy ones at
        // zero power.
        if (plan_.algo != Algo::noisy) {
            plan_.noise = MonteCarloPlan::Noise::schedule;
            plan_.schedule.assign(1, Vec::Zero(net_.n_agents()));
        }
    }

    RunRecord run();

private:
    struct BlockAcc {
        double msd = 0.0;
        Vec pow_sum;
        std::vector<Mat> ens;           // per agent, ensemble share moment
        std::vector<MomentAcc> edges;
        std::vector<MomentAcc> single;  // agent * batches + batch
    };

    int nblocks() const { return (plan_.runs + kBlockRuns - 1) / kBlockRuns; }
    int block_begin(int b) const { return b * kBlockRuns; }
    int block_end(int b) const { return std::min((b + 1) * kBlockRuns, plan_.runs); }
    int batch_of(int r) const {
        return static_cast<int>(static_cast<long long>(r) * plan_.batches / plan_.runs);
    }
    bool per_run() const { return plan_.noise == MonteCarloPlan::Noise::adaptive_per_run; }
    bool ensemble() const {
        return plan_.noise == MonteCarloPlan::Noise::adaptive_ensemble;
    }

    void draw_tasks(const TaskPrior& prior, std::uint64_t ordinal);
    void adapt_block(int b, int iter);
    void exchange_project_block(int b, int iter, const Vec& powers,
                                const ProjectionSet* ps);
    Vec resolve_powers(int iter);

    const Network& net_;
    const SignalModel& model_;
    const TaskPrior& prior_;
    MonteCarloPlan plan_;
    bool parallel_;

    Mat wo_, w_, psi_, noise_, share_;
    std::vector<Vec> mean_k_;
    std::vector<AdaptiveNoiseState> run_states_;  // run * n_agents + k
    std::vector<AdaptiveNoiseState> ens_states_;  // per agent
    std::vector<Edge> edges_;
    std::vector<BlockAcc> acc_;
};

void BlockEngine::draw_tasks(const TaskPrior& prior, std::uint64_t ordinal) {
    run_blocks(nblocks(), parallel_, [&](int b) {
        for (int r = block_begin(b); r < block_end(b); ++r) {
            Rng g(plan_.seed, r, 0, StreamKind::task, ordinal);
            wo_.col(r) = prior.sample(g);
        }
    });
}

void BlockEngine::adapt_block(int b, int iter) {
    BlockAcc& a = acc_[b];
    a.msd = 0.0;
    if (per_run()) a.pow_sum.setZero();
    if (ensemble())
        for (Mat& m : a.ens) m.setZero();
    for (MomentAcc& m : a.edges) m.reset();
    for (MomentAcc& m : a.single) m.reset();

    const int n = net_.n_agents();
    for (int r = block_begin(b); r < block_end(b); ++r) {
        adapt_run(net_, model_, plan_.seed, r, iter, wo_, w_, psi_);
        if (per_run()) {
            for (int k = 0; k < n; ++k)
                run_states_[static_cast<std::size_t>(r) * n + k].update(
                    Vec(psi_.col(r).segment(net_.offset(k), net_.dim(k))), mean_k_[k]);
        } else if (ensemble()) {
            for (int k = 0; k < n; ++k) {
                Vec x = psi_.col(r).segment(net_.offset(k), net_.dim(k)) - mean_k_[k];
                a.ens[k].noalias() += x * x.transpose();
            }
        }
    }
}

Vec BlockEngine::resolve_powers(int iter) {
    const int n = net_.n_agents();
    if (plan_.noise == MonteCarloPlan::Noise::schedule)
        return plan_.schedule[std::min<std::size_t>(iter, plan_.schedule.size() - 1)];
    Vec powers = Vec::Zero(n);
    if (ensemble()) {
        for (int k = 0; k < n; ++k) {
            Mat rbar = Mat::Zero(net_.dim(k), net_.dim(k));
            for (int b = 0; b < nblocks(); ++b) rbar += acc_[b].ens[k];
            rbar /= static_cast<double>(plan_.runs);
            ens_states_[k].update_traces(rbar.trace(), rbar.squaredNorm());
            powers[k] = ens_states_[k].power;
        }
    }
    return powers;  // per-run powers live in run_states_; mean reported later
}

void BlockEngine::exchange_project_block(int b, int iter, const Vec& powers,
                                         const ProjectionSet* ps) {
    BlockAcc& a = acc_[b];
    const int n = net_.n_agents();
    Vec prun;
    WeightSet ws;
    for (int r = block_begin(b); r < block_end(b); ++r) {
        const WeightSet* run_ws = nullptr;
        if (per_run()) {
            prun = Vec(n);
            for (int k = 0; k < n; ++k) {
                prun[k] = run_states_[static_cast<std::size_t>(r) * n + k].power;
                a.pow_sum[k] += prun[k];
            }
            ws = compute_weights(net_, prun);
            run_ws = &ws;
        }
        exchange_run(net_, plan_.seed, r, iter, per_run() ? prun : powers, psi_,
                     noise_, share_);
        project_run(net_, plan_.algo, ps, run_ws, psi_, noise_, share_, w_, r);
        accumulate_run(net_, edges_, plan_.algo, plan_.collect_privacy, batch_of(r),
                       plan_.batches, wo_, psi_, share_, w_, r, a.msd, a.edges,
                       a.single);
    }
}

RunRecord BlockEngine::run() {
    validate_plan(net_, plan_);
    const int n = net_.n_agents();
    const int m = net_.total_dim();
    const int runs = plan_.runs;
    const int iters = plan_.iters;

    wo_ = Mat::Zero(m, runs);
    w_ = Mat::Zero(m, runs);
    psi_ = Mat::Zero(m, runs);
    noise_ = Mat::Zero(m, runs);
    share_ = Mat::Zero(m, runs);
    mean_k_.resize(n);
    for (int k = 0; k < n; ++k) mean_k_[k] = prior_.mean_k(k);
    edges_ = directed_edges(net_);

    Vec delta(n);
    for (int k = 0; k < n; ++k) delta[k] = plan_.rho * prior_.wkk(k).trace();
    if (per_run()) {
        run_states_.reserve(static_cast<std::size_t>(runs) * n);
        for (int r = 0; r < runs; ++r)
            for (int k = 0; k < n; ++k)
                run_states_.emplace_back(delta[k], plan_.alpha);
    } else if (ensemble()) {
        for (int k = 0; k < n; ++k) ens_states_.emplace_back(delta[k], plan_.alpha);
    }

    acc_.resize(nblocks());
    for (BlockAcc& a : acc_) {
        a.pow_sum = Vec::Zero(n);
        if (ensemble()) {
            a.ens.resize(n);
            for (int k = 0; k < n; ++k) a.ens[k] = Mat::Zero(net_.dim(k), net_.dim(k));
        }
        if (plan_.collect_privacy) {
            a.edges.resize(edges_.size());
            for (std::size_t e = 0; e < edges_.size(); ++e)
                a.edges[e].init(edge_sample_dim(net_, plan_.algo, edges_[e]));
            a.single.resize(static_cast<std::size_t>(n) * plan_.batches);
            for (int k = 0; k < n; ++k)
                for (int bt = 0; bt < plan_.batches; ++bt)
                    a.single[static_cast<std::size_t>(k) * plan_.batches + bt].init(
                        2 * net_.dim(k));
        }
    }

    std::vector<double> batch_counts(plan_.batches, 0.0);
    for (int r = 0; r < runs; ++r) batch_counts[batch_of(r)] += 1.0;

    RunRecord rec;
    rec.msd.reserve(iters);
    rec.powers.reserve(iters);
    if (plan_.collect_privacy) {
        rec.privacy.xi.reserve(iters);
        rec.privacy.single_share = Mat::Zero(n, iters);
        rec.privacy.single_share_se = Mat::Zero(n, iters);
    }

    TaskPrior scaled;
    if (plan_.tracking)
        scaled = make_task_prior(net_, Mat(prior_.latent_cov * plan_.tracking->factor),
                                 prior_.latent_mean);

    draw_tasks(prior_, 0);

    const ProjectionSet ident = identity_projection(net_);
    ProjectionSet cached;
    Vec cached_powers;
    bool have_cache = false;

    IterationTotals tot;
    tot.edges.resize(edges_.size());
    tot.single.resize(plan_.collect_privacy ? static_cast<std::size_t>(n) * plan_.batches
                                            : 0);
    if (plan_.collect_privacy) {
        for (std::size_t e = 0; e < edges_.size(); ++e)
            tot.edges[e].init(edge_sample_dim(net_, plan_.algo, edges_[e]));
        for (int k = 0; k < n; ++k)
            for (int bt = 0; bt < plan_.batches; ++bt)
                tot.single[static_cast<std::size_t>(k) * plan_.batches + bt].init(
                    2 * net_.dim(k));
    }

    for (int i = 0; i < iters; ++i) {
        if (plan_.tracking && i == plan_.tracking->index) draw_tasks(scaled, 1);

        run_blocks(nblocks(), parallel_, [&](int b) { adapt_block(b, i); });

        Vec powers = resolve_powers(i);
        const ProjectionSet* ps = nullptr;
        if (plan_.algo == Algo::nocoop) {
            ps = &ident;
        } else if (!per_run()) {
            const bool same = have_cache && cached_powers.size() == powers.size() &&
                              (cached_powers.array() == powers.array()).all();
            if (!same) {
                cached = build_projection(net_, compute_weights(net_, powers));
                cached_powers = powers;
                have_cache = true;
            }
            ps = &cached;
        }

        run_blocks(nblocks(), parallel_,
                   [&](int b) { exchange_project_block(b, i, powers, ps); });

        // Ascending-block merges keep sums independent of worker count.
        tot.msd = 0.0;
        for (int b = 0; b < nblocks(); ++b) tot.msd += acc_[b].msd;
        if (per_run()) {
            Vec sum = Vec::Zero(n);
            for (int b = 0; b < nblocks(); ++b) sum += acc_[b].pow_sum;
            tot.pow_report = sum / static_cast<double>(runs);
        } else {
            tot.pow_report = powers;
        }
        if (plan_.collect_privacy) {
            for (std::size_t e = 0; e < edges_.size(); ++e) {
                tot.edges[e].reset();
                for (int b = 0; b < nblocks(); ++b) tot.edges[e].merge(acc_[b].edges[e]);
            }
            for (std::size_t s = 0; s < tot.single.size(); ++s) {
                tot.single[s].reset();
                for (int b = 0; b < nblocks(); ++b) tot.single[s].merge(acc_[b].single[s]);
            }
        }
        finalize_iteration(net_, edges_, plan_, i, batch_counts, tot, rec);
    }
    return rec;
}

}  // namespace

Vec adapt_step(const Vec& w, const Vec& u, double d, double mu) {
    return w + mu * (d - u.dot(w)) * u;
}

double empirical_llmse(const Mat& target, const Mat& obs, bool* ridged) {
    if (target.cols() != obs.cols())
        throw ConfigError("empirical_llmse: sample counts differ");
    if (target.cols() < 2) throw ConfigError("empirical_llmse: need at least 2 samples");
    MomentAcc acc;
    acc.init(target.rows() + obs.rows());
    Vec y(target.rows() + obs.rows());
    for (Eigen::Index j = 0; j < target.cols(); ++j) {
        y << target.col(j), obs.col(j);
        acc.add(y);
    }
    return plugin_error(acc, static_cast<double>(target.cols()),
                        static_cast<int>(target.rows()), ridged);
}

RunRecord run_monte_carlo(const Network& net, const SignalModel& model,
                          const TaskPrior& prior, const MonteCarloPlan& plan) {
    return BlockEngine(net, model, prior, plan, true).run();
}

RunRecord run_monte_carlo_serial(const Network& net, const SignalModel& model,
                                 const TaskPrior& prior, const MonteCarloPlan& plan) {
    MonteCarloPlan p = plan;
    if (p.algo != Algo::noisy) {
        p.noise = MonteCarloPlan::Noise::schedule;
        p.schedule.assign(1, Vec::Zero(net.n_agents()));
    }
    validate_plan(net, p);
    const int n = net.n_agents();
    const int m = net.total_dim();
    const bool per_run = p.noise == MonteCarloPlan::Noise::adaptive_per_run;
    const bool ensemble = p.noise == MonteCarloPlan::Noise::adaptive_ensemble;

    Mat wo = Mat::Zero(m, p.runs), w = Mat::Zero(m, p.runs), psi = Mat::Zero(m, p.runs);
    Mat noise = Mat::Zero(m, p.runs), share = Mat::Zero(m, p.runs);
    std::vector<Vec> mean_k(n);
    for (int k = 0; k < n; ++k) mean_k[k] = prior.mean_k(k);
    const std::vector<Edge> edges = directed_edges(net);

    Vec delta(n);
    for (int k = 0; k < n; ++k) delta[k] = p.rho * prior.wkk(k).trace();
    std::vector<AdaptiveNoiseState> run_states;
    std::vector<AdaptiveNoiseState> ens_states;
    if (per_run)
        for (int r = 0; r < p.runs; ++r)
            for (int k = 0; k < n; ++k) run_states.emplace_back(delta[k], p.alpha);
    if (ensemble)
        for (int k = 0; k < n; ++k) ens_states.emplace_back(delta[k], p.alpha);

    std::vector<double> batch_counts(p.batches, 0.0);
    auto batch_of = [&](int r) {
        return static_cast<int>(static_cast<long long>(r) * p.batches / p.runs);
    };
    for (int r = 0; r < p.runs; ++r) batch_counts[batch_of(r)] += 1.0;

    RunRecord rec;
    if (p.collect_privacy) {
        rec.privacy.single_share = Mat::Zero(n, p.iters);
        rec.privacy.single_share_se = Mat::Zero(n, p.iters);
    }

    TaskPrior scaled;
    if (p.tracking)
        scaled = make_task_prior(net, Mat(prior.latent_cov * p.tracking->factor),
                                 prior.latent_mean);
    for (int r = 0; r < p.runs; ++r) {
        Rng g(p.seed, r, 0, StreamKind::task, 0);
        wo.col(r) = prior.sample(g);
    }

    const ProjectionSet ident = identity_projection(net);
    ProjectionSet cached;
    Vec cached_powers;
    bool have_cache = false;

    IterationTotals tot;
    tot.edges.resize(edges.size());
    tot.single.resize(p.collect_privacy ? static_cast<std::size_t>(n) * p.batches : 0);
    if (p.collect_privacy) {
        for (std::size_t e = 0; e < edges.size(); ++e)
            tot.edges[e].init(edge_sample_dim(net, p.algo, edges[e]));
        for (int k = 0; k < n; ++k)
            for (int bt = 0; bt < p.batches; ++bt)
                tot.single[static_cast<std::size_t>(k) * p.batches + bt].init(2 * net.dim(k));
    }

    std::vector<Mat> ens_sum(ensemble ? n : 0);
    for (int i = 0; i < p.iters; ++i) {
        if (p.tracking && i == p.tracking->index)
            for (int r = 0; r < p.runs; ++r) {
                Rng g(p.seed, r, 0, StreamKind::task, 1);
                wo.col(r) = scaled.sample(g);
            }

        if (ensemble)
            for (int k = 0; k < n; ++k) ens_sum[k] = Mat::Zero(net.dim(k), net.dim(k));
        for (int r = 0; r < p.runs; ++r) {
            adapt_run(net, model, p.seed, r, i, wo, w, psi);
            if (per_run) {
                for (int k = 0; k < n; ++k)
                    run_states[static_cast<std::size_t>(r) * n + k].update(
                        Vec(psi.col(r).segment(net.offset(k), net.dim(k))), mean_k[k]);
            } else if (ensemble) {
                for (int k = 0; k < n; ++k) {
                    Vec x = psi.col(r).segment(net.offset(k), net.dim(k)) - mean_k[k];
                    ens_sum[k].noalias() += x * x.transpose();
                }
            }
        }

        Vec powers = Vec::Zero(n);
        if (p.noise == MonteCarloPlan::Noise::schedule) {
            powers = p.schedule[std::min<std::size_t>(i, p.schedule.size() - 1)];
        } else if (ensemble) {
            for (int k = 0; k < n; ++k) {
                Mat rbar = ens_sum[k] / static_cast<double>(p.runs);
                ens_states[k].update_traces(rbar.trace(), rbar.squaredNorm());
                powers[k] = ens_states[k].power;
            }
        }

        const ProjectionSet* ps = nullptr;
        if (p.algo == Algo::nocoop) {
            ps = &ident;
        } else if (!per_run) {
            const bool same = have_cache && cached_powers.size() == powers.size() &&
                              (cached_powers.array() == powers.array()).all();
            if (!same) {
                cached = build_projection(net, compute_weights(net, powers));
                cached_powers = powers;
                have_cache = true;
            }
            ps = &cached;
        }

        tot.msd = 0.0;
        for (std::size_t e = 0; e < tot.edges.size(); ++e) tot.edges[e].reset();
        for (std::size_t s = 0; s < tot.single.size(); ++s) tot.single[s].reset();
        Vec pow_sum = Vec::Zero(n);
        Vec prun;
        WeightSet ws;
        for (int r = 0; r < p.runs; ++r) {
            const WeightSet* run_ws = nullptr;
            if (per_run) {
                prun = Vec(n);
                for (int k = 0; k < n; ++k) {
                    prun[k] = run_states[static_cast<std::size_t>(r) * n + k].power;
                    pow_sum[k] += prun[k];
                }
                ws = compute_weights(net, prun);
                run_ws = &ws;
            }
            exchange_run(net, p.seed, r, i, per_run ? prun : powers, psi, noise, share);
            project_run(net, p.algo, ps, run_ws, psi, noise, share, w, r);
            accumulate_run(net, edges, p.algo, p.collect_privacy, batch_of(r), p.batches,
                           wo, psi, share, w, r, tot.msd, tot.edges, tot.single);
        }
        tot.pow_report = per_run ? Vec(pow_sum / static_cast<double>(p.runs)) : powers;
        finalize_iteration(net, edges, p, i, batch_counts, tot, rec);
    }
    return rec;
}

}  // namespace plms
