#include "plms/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "plms/privacy.hpp"
#include "plms/projection.hpp"
#include "plms/rng.hpp"

namespace plms {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Per-iteration moment recursions stay cheap well past this, but the cap
// keeps a mistyped config from silently burning hours.
constexpr int kTheoryDimCap = 128;

// Horizon for settling the post-change steady level of a tracking scenario.
constexpr int kStageTwoBurn = 400;

const std::set<std::string>& noise_sources() {
    static const std::set<std::string> s = {"closed_form", "steady", "adaptive",
                                            "adaptive_per_run"};
    return s;
}

bool adaptive_source(const std::string& s) {
    return s == "adaptive" || s == "adaptive_per_run";
}

Vec steady_powers(const TaskPrior& prior, double rho) {
    const int n = static_cast<int>(prior.dims.size());
    Vec out(n);
    for (int k = 0; k < n; ++k) {
        Mat wkk = prior.wkk(k);
        out[k] = steady_state_power(wkk, rho * wkk.trace());
    }
    return out;
}

struct TheoryOut {
    std::vector<double> msd, xi;
    std::vector<Vec> pows;
    bool ridged = false;
};

TheoryOut collect_theory(const Scenario& sc, double rho, Algo algo,
                         const NoisePolicy& pol, int t) {
    TheoryOut out;
    TheoryRun run(sc.net, sc.model, sc.prior, rho, algo, pol);
    out.msd.reserve(t);
    out.xi.reserve(t);
    out.pows.reserve(t);
    for (int i = 0; i < t; ++i) {
        TheoryStep s = run.step();
        out.msd.push_back(s.msd);
        out.xi.push_back(s.xi);
        out.pows.push_back(s.powers);
    }
    out.ridged = run.ridge_flagged();
    return out;
}

std::string fmt_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string db_cell(double v) {
    return std::isnan(v) ? "nan" : fmt_num(to_db(v));
}

std::string lin_cell(double v) { return std::isnan(v) ? "nan" : fmt_num(v); }

nlohmann::json num_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

void write_file(const std::string& path, const std::string& body) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << body;
    f.flush();
    if (!f) throw IoError("write failed: " + path);
}

struct Series {
    std::string label;
    const std::vector<double>* y = nullptr;
    std::string color;
    bool dashed = false;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                          "#9467bd", "#ff7f0e", "#8c564b"};

std::string line_chart(const std::string& title, const std::string& ylabel,
                       const std::vector<Series>& series) {
    const double w = 760, h = 480, l = 64, r = 16, top = 34, bot = 44;
    std::size_t n = 0;
    double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
    for (const Series& s : series) {
        n = std::max(n, s.y->size());
        for (double v : *s.y)
            if (std::isfinite(v)) {
                ymin = std::min(ymin, v);
                ymax = std::max(ymax, v);
            }
    }
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\""
      << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"14\">"
      << title << "</text>\n";
    if (n < 2 || !std::isfinite(ymin)) {
        o << "<text x=\"" << w / 2 << "\" y=\"" << h / 2
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
             "no finite data</text>\n</svg>\n";
        return o.str();
    }
    if (ymax - ymin < 1e-12) {
        ymax += 1.0;
        ymin -= 1.0;
    }
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    auto xat = [&](double i) { return l + (w - l - r) * i / (n - 1.0); };
    auto yat = [&](double v) {
        return h - bot - (h - top - bot) * (v - ymin) / (ymax - ymin);
    };
    o << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#444\">\n";
    for (int t = 0; t <= 5; ++t) {
        double yv = ymin + (ymax - ymin) * t / 5.0;
        double xv = (n - 1.0) * t / 5.0;
        char lab[32];
        o << "<line x1=\"" << l << "\" y1=\"" << yat(yv) << "\" x2=\"" << w - r
          << "\" y2=\"" << yat(yv) << "\" stroke=\"#ddd\"/>\n";
        std::snprintf(lab, sizeof(lab), "%.4g", yv);
        o << "<text x=\"" << l - 6 << "\" y=\"" << yat(yv) + 4
          << "\" text-anchor=\"end\">" << lab << "</text>\n";
        std::snprintf(lab, sizeof(lab), "%.0f", xv);
        o << "<text x=\"" << xat(xv) << "\" y=\"" << h - bot + 16
          << "\" text-anchor=\"middle\">" << lab << "</text>\n";
    }
    o << "<text x=\"" << (l + w - r) / 2 << "\" y=\"" << h - 8
      << "\" text-anchor=\"middle\">iteration</text>\n"
      << "<text x=\"14\" y=\"" << (top + h - bot) / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << (top + h - bot) / 2 << ")\">" << ylabel << "</text>\n</g>\n"
      << "<rect x=\"" << l << "\" y=\"" << top << "\" width=\"" << w - l - r
      << "\" height=\"" << h - top - bot << "\" fill=\"none\" stroke=\"#888\"/>\n";
    for (const Series& s : series) {
        o << "<path fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.4\"";
        if (s.dashed) o << " stroke-dasharray=\"6 4\"";
        o << " d=\"";
        bool pen_up = true;
        for (std::size_t i = 0; i < s.y->size(); ++i) {
            double v = (*s.y)[i];
            if (!std::isfinite(v)) {
                pen_up = true;
                continue;
            }
            o << (pen_up ? "M" : "L") << xat(static_cast<double>(i)) << " " << yat(v)
              << " ";
            pen_up = false;
        }
        o << "\"/>\n";
    }
    double ly = top + 14;
    for (const Series& s : series) {
        o << "<line x1=\"" << w - r - 150 << "\" y1=\"" << ly << "\" x2=\""
          << w - r - 120 << "\" y2=\"" << ly << "\" stroke=\"" << s.color
          << "\" stroke-width=\"1.4\"";
        if (s.dashed) o << " stroke-dasharray=\"6 4\"";
        o << "/>\n<text x=\"" << w - r - 114 << "\" y=\"" << ly + 4
          << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label
          << "</text>\n";
        ly += 16;
    }
    o << "</svg>\n";
    return o.str();
}

std::vector<double> db_curve(const std::vector<double>& linear) {
    std::vector<double> out(linear.size(), kNan);
    for (std::size_t i = 0; i < linear.size(); ++i)
        if (!std::isnan(linear[i])) out[i] = to_db(linear[i]);
    return out;
}

}  // namespace

void ScenarioConfig::check() const {
    if (kind != "line" && kind != "dense" && kind != "custom")
        throw ConfigError("unknown network kind: " + kind);
    if (agents < 2) throw ConfigError("need at least two agents");
    if (dim < 1) throw ConfigError("agent dimension must be positive");
    if (wide_constraints < 1) throw ConfigError("constraint count must be positive");
    if (!(coeff_lo > 0.0 && coeff_hi >= coeff_lo))
        throw ConfigError("coefficient magnitude range must satisfy 0 < lo <= hi");
    if (!(eig_lo > 0.0 && eig_hi >= eig_lo))
        throw ConfigError("regressor eigenvalue range must satisfy 0 < lo <= hi");
    if (!(latent_lo > 0.0 && latent_hi >= latent_lo))
        throw ConfigError("prior eigenvalue range must satisfy 0 < lo <= hi");
    if (!std::isfinite(snr_lo_db) || !std::isfinite(snr_hi_db))
        throw ConfigError("target SNR must be finite");
    if (!(mu > 0.0)) throw ConfigError("step size must be positive");
    if (!(rho >= 0.0 && rho < 1.0))
        throw ConfigError("privacy fraction rho must lie in [0, 1)");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("forgetting factor alpha must lie in (0, 1)");
    if (algos.empty()) throw ConfigError("need at least one algorithm");
    std::set<std::string> seen;
    for (const std::string& a : algos) {
        algo_from_name(a);
        if (!seen.insert(a).second) throw ConfigError("duplicate algorithm: " + a);
    }
    if (!noise_sources().count(noise_source))
        throw ConfigError("unknown noise source: " + noise_source);
    if (runs < 1 || iters < 1) throw ConfigError("runs and iters must be positive");
    if (batches < 2) throw ConfigError("need at least two batches");
    if (tracking) {
        if (tracking->index < 0 || tracking->index >= iters)
            throw ConfigError("tracking change index outside [0, iters)");
        if (!(tracking->factor > 0.0))
            throw ConfigError("tracking scale factor must be positive");
        if (!adaptive_source(noise_source))
            throw ConfigError(
                "tracking scenarios need an adaptive noise source; fixed schedules "
                "cannot react to the statistics change");
    }
}

ScenarioConfig preset_config(const std::string& name) {
    ScenarioConfig c;
    c.preset = name;
    if (name == "line") return c;
    if (name == "dense") {
        c.kind = "dense";
        return c;
    }
    if (name == "tracking") {
        c.agents = 6;
        c.dim = 2;
        c.rho = 0.6;
        c.iters = 150;
        c.noise_source = "adaptive";
        c.tracking = TrackingChange{75, 4.0};
        return c;
    }
    throw ConfigError("unknown preset: " + name + " (line, dense, tracking)");
}

ScenarioConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config document must be a JSON object");
    ScenarioConfig c;
    if (j.contains("preset")) c = preset_config(j.at("preset").get<std::string>());
    try {
        for (const auto& [key, val] : j.items()) {
            if (key == "preset") {
            } else if (key == "kind") {
                c.kind = val.get<std::string>();
            } else if (key == "agents") {
                c.agents = val.get<int>();
            } else if (key == "dim") {
                c.dim = val.get<int>();
            } else if (key == "wide_constraints") {
                c.wide_constraints = val.get<int>();
            } else if (key == "coeff_lo") {
                c.coeff_lo = val.get<double>();
            } else if (key == "coeff_hi") {
                c.coeff_hi = val.get<double>();
            } else if (key == "eig_lo") {
                c.eig_lo = val.get<double>();
            } else if (key == "eig_hi") {
                c.eig_hi = val.get<double>();
            } else if (key == "latent_lo") {
                c.latent_lo = val.get<double>();
            } else if (key == "latent_hi") {
                c.latent_hi = val.get<double>();
            } else if (key == "snr_lo_db") {
                c.snr_lo_db = val.get<double>();
            } else if (key == "snr_hi_db") {
                c.snr_hi_db = val.get<double>();
            } else if (key == "mu") {
                c.mu = val.get<double>();
            } else if (key == "rho") {
                c.rho = val.get<double>();
            } else if (key == "alpha") {
                c.alpha = val.get<double>();
            } else if (key == "algos") {
                c.algos = val.get<std::vector<std::string>>();
            } else if (key == "noise_source") {
                c.noise_source = val.get<std::string>();
            } else if (key == "runs") {
                c.runs = val.get<int>();
            } else if (key == "iters") {
                c.iters = val.get<int>();
            } else if (key == "seed") {
                c.seed = val.get<std::uint64_t>();
            } else if (key == "tracking") {
                if (val.is_null()) {
                    c.tracking.reset();
                } else {
                    TrackingChange t;
                    t.index = val.at("index").get<int>();
                    t.factor = val.at("factor").get<double>();
                    for (const auto& [tk, tv] : val.items()) {
                        (void)tv;
                        if (tk != "index" && tk != "factor")
                            throw ConfigError("unknown tracking key: " + tk);
                    }
                    c.tracking = t;
                }
            } else if (key == "privacy") {
                c.privacy = val.get<bool>();
            } else if (key == "batches") {
                c.batches = val.get<int>();
            } else {
                throw ConfigError("unknown config key: " + key);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config value: ") + e.what());
    }
    c.check();
    return c;
}

ScenarioConfig load_config(const std::string& name_or_path) {
    if (std::filesystem::exists(name_or_path)) {
        std::ifstream f(name_or_path);
        if (!f) throw IoError("cannot read config: " + name_or_path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(f);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config parse error in " + name_or_path + ": " + e.what());
        }
        return config_from_json(j);
    }
    return preset_config(name_or_path);
}

nlohmann::json config_to_json(const ScenarioConfig& c) {
    nlohmann::json j;
    if (!c.preset.empty()) j["preset"] = c.preset;
    j["kind"] = c.kind;
    j["agents"] = c.agents;
    j["dim"] = c.dim;
    j["wide_constraints"] = c.wide_constraints;
    j["coeff_lo"] = c.coeff_lo;
    j["coeff_hi"] = c.coeff_hi;
    j["eig_lo"] = c.eig_lo;
    j["eig_hi"] = c.eig_hi;
    j["latent_lo"] = c.latent_lo;
    j["latent_hi"] = c.latent_hi;
    j["snr_lo_db"] = c.snr_lo_db;
    j["snr_hi_db"] = c.snr_hi_db;
    j["mu"] = c.mu;
    j["rho"] = c.rho;
    j["alpha"] = c.alpha;
    j["algos"] = c.algos;
    j["noise_source"] = c.noise_source;
    j["runs"] = c.runs;
    j["iters"] = c.iters;
    j["seed"] = c.seed;
    if (c.tracking)
        j["tracking"] = {{"index", c.tracking->index}, {"factor", c.tracking->factor}};
    else
        j["tracking"] = nullptr;
    j["privacy"] = c.privacy;
    j["batches"] = c.batches;
    return j;
}

namespace {

Scenario finish_scenario(const ScenarioConfig& cfg, Network net, Rng& rng) {
    const int nd = net.total_dim() - rank_of(net.global_d());
    if (nd <= 0)
        throw ConfigError("constraints leave the task prior no degrees of freedom");
    Mat lat_cov = random_spd(nd, cfg.latent_lo, cfg.latent_hi, rng);
    Vec lat_mean(nd);
    for (int i = 0; i < nd; ++i) lat_mean[i] = rng.uniform(-1.0, 1.0);
    TaskPrior prior = make_task_prior(net, lat_cov, lat_mean);

    const int n = net.n_agents();
    std::vector<double> snr(n), mu(n, cfg.mu);
    for (int k = 0; k < n; ++k)
        snr[k] = cfg.snr_lo_db +
                 (cfg.snr_hi_db - cfg.snr_lo_db) * (n == 1 ? 0.0 : k / (n - 1.0));
    SignalModel model = make_signal_model(net, prior, cfg.eig_lo, cfg.eig_hi, snr, mu, rng);
    return Scenario{std::move(net), std::move(prior), std::move(model)};
}

}  // namespace

Scenario build_scenario(const ScenarioConfig& cfg) {
    cfg.check();
    Rng rng(cfg.seed, 0, 0, StreamKind::scenario, 0);
    if (cfg.kind == "line") {
        Network net = line_network(cfg.agents, cfg.dim, rng, cfg.coeff_lo, cfg.coeff_hi);
        return finish_scenario(cfg, std::move(net), rng);
    }
    if (cfg.kind == "dense") {
        Network net = dense_network(cfg.agents, cfg.dim, cfg.wide_constraints, rng,
                                    cfg.coeff_lo, cfg.coeff_hi);
        return finish_scenario(cfg, std::move(net), rng);
    }
    throw ConfigError("custom scenarios need an explicit network");
}

Scenario build_scenario(const ScenarioConfig& cfg, const Network& net) {
    cfg.check();
    Rng rng(cfg.seed, 0, 0, StreamKind::scenario, 0);
    return finish_scenario(cfg, net, rng);
}

double steady_mean(const std::vector<double>& curve, double frac) {
    if (curve.empty()) return kNan;
    const std::size_t n = curve.size();
    const std::size_t tail =
        std::max<std::size_t>(1, static_cast<std::size_t>(n * frac));
    double sum = 0.0;
    for (std::size_t i = n - tail; i < n; ++i) sum += curve[i];
    return sum / tail;
}

GainToLoss gain_to_loss(const AlgoCurves& noisy, const AlgoCurves& baseline) {
    auto pick = [](const AlgoCurves& c, bool privacy_curve) -> const std::vector<double>& {
        if (privacy_curve)
            return (c.has_sim && c.has_privacy) ? c.xi_emp : c.xi_th;
        return c.has_sim ? c.msd_emp : c.msd_th;
    };
    GainToLoss g;
    g.gain_db = to_db(steady_mean(pick(noisy, true))) -
                to_db(steady_mean(pick(baseline, true)));
    g.loss_db = to_db(steady_mean(pick(noisy, false))) -
                to_db(steady_mean(pick(baseline, false)));
    if (g.loss_db == 0.0 && g.gain_db == 0.0) {
        g.degenerate = true;
    } else if (g.loss_db == 0.0) {
        g.infinite = true;
        g.ratio = std::numeric_limits<double>::infinity();
    } else {
        g.ratio = std::abs(g.gain_db) / std::abs(g.loss_db);
    }
    return g;
}

namespace {

MonteCarloPlan base_plan(const ScenarioConfig& cfg, Algo algo) {
    MonteCarloPlan plan;
    plan.runs = cfg.runs;
    plan.iters = cfg.iters;
    plan.seed = cfg.seed;
    plan.algo = algo;
    plan.rho = cfg.rho;
    plan.alpha = cfg.alpha;
    plan.tracking = cfg.tracking;
    plan.collect_privacy = cfg.privacy;
    plan.batches = cfg.batches;
    return plan;
}

void fill_from_record(const ScenarioConfig& cfg, const RunRecord& rec, AlgoCurves& c) {
    c.has_sim = true;
    c.has_privacy = cfg.privacy;
    c.msd_emp = rec.msd;
    c.xi_emp = cfg.privacy ? rec.privacy.xi
                           : std::vector<double>(cfg.iters, kNan);
    c.ridge_flagged = c.ridge_flagged || rec.privacy.ridge_flagged;
    c.sigma_mean.resize(cfg.iters, kNan);
    for (int i = 0; i < cfg.iters; ++i) c.sigma_mean[i] = rec.powers[i].mean();
}

void fill_from_theory(const ScenarioConfig& cfg, const TheoryOut& th, AlgoCurves& c) {
    c.has_theory = true;
    c.msd_th = th.msd;
    c.xi_th = th.xi;
    c.ridge_flagged = c.ridge_flagged || th.ridged;
    if (!c.has_sim) {
        c.sigma_mean.assign(cfg.iters, kNan);
        for (int i = 0; i < cfg.iters; ++i) c.sigma_mean[i] = th.pows[i].mean();
    }
}

AlgoCurves standard_curves(const ScenarioConfig& cfg, const Scenario& sc, Algo algo,
                           bool theory_ok, bool with_sim,
                           std::vector<std::string>& notices) {
    AlgoCurves c;
    c.algo = algo;
    c.msd_emp.assign(cfg.iters, kNan);
    c.msd_th.assign(cfg.iters, kNan);
    c.xi_emp.assign(cfg.iters, kNan);
    c.xi_th.assign(cfg.iters, kNan);
    c.sigma_mean.assign(cfg.iters, kNan);

    const bool adaptive = adaptive_source(cfg.noise_source);
    const bool sim_leads = adaptive && algo == Algo::noisy && with_sim;

    TheoryOut th;
    bool have_th = false;
    if (theory_ok && !sim_leads) {
        NoisePolicy pol;
        if (cfg.noise_source == "steady")
            pol.source = NoisePolicy::Source::steady_constant;
        if (adaptive && algo == Algo::noisy)
            notices.push_back(
                "theory-only adaptive noise replaced by the recomputed power "
                "recursion for " +
                algo_name(algo));
        th = collect_theory(sc, cfg.rho, algo, pol, cfg.iters);
        have_th = true;
    }

    if (with_sim) {
        MonteCarloPlan plan = base_plan(cfg, algo);
        if (algo == Algo::noisy) {
            if (cfg.noise_source == "adaptive") {
                plan.noise = MonteCarloPlan::Noise::adaptive_ensemble;
            } else if (cfg.noise_source == "adaptive_per_run") {
                plan.noise = MonteCarloPlan::Noise::adaptive_per_run;
            } else if (have_th) {
                plan.schedule = th.pows;
            } else {
                if (cfg.noise_source == "closed_form")
                    notices.push_back(
                        "theory recursions unavailable; injecting limiting powers "
                        "instead of the per-iteration closed form");
                plan.schedule.assign(1, steady_powers(sc.prior, cfg.rho));
            }
        }
        RunRecord rec = run_monte_carlo(sc.net, sc.model, sc.prior, plan);
        fill_from_record(cfg, rec, c);
        if (sim_leads && theory_ok) {
            NoisePolicy pol;
            pol.source = NoisePolicy::Source::schedule;
            pol.schedule = rec.powers;
            th = collect_theory(sc, cfg.rho, algo, pol, cfg.iters);
            have_th = true;
        }
    }
    if (have_th) fill_from_theory(cfg, th, c);
    return c;
}

AlgoCurves tracking_curves(const ScenarioConfig& cfg, const Scenario& sc, Algo algo,
                           bool theory_ok, bool with_sim,
                           std::vector<std::string>& notices) {
    AlgoCurves c;
    c.algo = algo;
    c.msd_emp.assign(cfg.iters, kNan);
    c.msd_th.assign(cfg.iters, kNan);
    c.xi_emp.assign(cfg.iters, kNan);
    c.xi_th.assign(cfg.iters, kNan);
    c.sigma_mean.assign(cfg.iters, kNan);

    const int i0 = cfg.tracking->index;
    const double factor = cfg.tracking->factor;

    RunRecord rec;
    if (with_sim) {
        MonteCarloPlan plan = base_plan(cfg, algo);
        if (algo == Algo::noisy)
            plan.noise = cfg.noise_source == "adaptive_per_run"
                             ? MonteCarloPlan::Noise::adaptive_per_run
                             : MonteCarloPlan::Noise::adaptive_ensemble;
        rec = run_monte_carlo(sc.net, sc.model, sc.prior, plan);
        fill_from_record(cfg, rec, c);
    }

    if (!theory_ok) return c;

    // First stage: moment recursions under the initial prior, fed the powers
    // the simulation actually injected when available.
    TheoryOut s1;
    if (i0 > 0) {
        NoisePolicy pol;
        if (with_sim && algo == Algo::noisy) {
            pol.source = NoisePolicy::Source::schedule;
            pol.schedule = rec.powers;
        }
        s1 = collect_theory(sc, cfg.rho, algo, pol, i0);
    }

    // Second stage: the statistics change discards the tracked moments, so
    // the recursion restarts under the scaled prior and only its settled
    // level is meaningful. The thresholds stay pinned to the first-stage
    // covariances, which the uniform latent scaling maps to rho / factor.
    double lvl_msd = kNan, lvl_xi = kNan, lvl_pow = kNan;
    if (cfg.rho / factor < 1.0) {
        Scenario sc2{sc.net,
                     make_task_prior(sc.net, Mat(sc.prior.latent_cov * factor),
                                     sc.prior.latent_mean),
                     sc.model};
        TheoryOut s2 = collect_theory(sc2, cfg.rho / factor, algo, NoisePolicy{},
                                      kStageTwoBurn);
        lvl_msd = s2.msd.back();
        lvl_xi = s2.xi.back();
        lvl_pow = s2.pows.back().mean();
        c.ridge_flagged = c.ridge_flagged || s2.ridged;
    } else {
        notices.push_back(
            "post-change thresholds exceed the scaled task covariance; second-stage "
            "theory level omitted");
    }

    c.has_theory = true;
    c.ridge_flagged = c.ridge_flagged || s1.ridged;
    for (int i = 0; i < cfg.iters; ++i) {
        if (i < i0) {
            c.msd_th[i] = s1.msd[i];
            c.xi_th[i] = s1.xi[i];
            if (!c.has_sim) c.sigma_mean[i] = s1.pows[i].mean();
        } else {
            c.msd_th[i] = lvl_msd;
            c.xi_th[i] = lvl_xi;
            if (!c.has_sim) c.sigma_mean[i] = lvl_pow;
        }
    }
    return c;
}

}  // namespace

ExperimentBundle run_experiment(const ScenarioConfig& cfg, const Scenario& sc,
                                bool with_sim, bool force) {
    cfg.check();
    ExperimentBundle b;
    b.config = cfg;
    b.network = sc.net.validate();
    b.null_dim = b.network.null_dim;

    if (!b.network.pass()) {
        if (!force)
            throw ConfigError(
                "network assumptions fail (feasibility or local constraint rank); "
                "rerun with force to proceed anyway");
        b.notices.push_back("network assumption gate bypassed by force");
    }
    if (b.network.any_own_block_col_deficient)
        b.notices.push_back(
            "some agents' own constraint blocks are column deficient; the "
            "projector-norm lower bound may not be tight");

    {
        Vec sp = steady_powers(sc.prior, cfg.rho);
        ProjectionSet ps = build_projection(sc.net, compute_weights(sc.net, sp));
        b.stability = stability_bounds(sc.model, ps);
    }
    if (!b.stability.mu_inside)
        b.notices.push_back("configured step size lies outside the sufficient band");
    if (!b.stability.all_hypothesis_ok)
        b.notices.push_back(
            "regressor spread violates the band-existence hypothesis for some agent");
    if (b.stability.rho_a > 1.0)
        b.notices.push_back("mean transition is unstable at the configured step size");

    const bool theory_ok = sc.net.total_dim() <= kTheoryDimCap;
    if (!theory_ok)
        b.notices.push_back(
            "stacked dimension " + std::to_string(sc.net.total_dim()) +
            " exceeds the theory cap " + std::to_string(kTheoryDimCap) +
            "; theory curves skipped");

    for (const std::string& name : cfg.algos) {
        Algo algo = algo_from_name(name);
        b.curves.push_back(cfg.tracking
                               ? tracking_curves(cfg, sc, algo, theory_ok, with_sim,
                                                 b.notices)
                               : standard_curves(cfg, sc, algo, theory_ok, with_sim,
                                                 b.notices));
    }

    const AlgoCurves* noisy = nullptr;
    const AlgoCurves* plain = nullptr;
    for (const AlgoCurves& c : b.curves) {
        if (c.algo == Algo::noisy) noisy = &c;
        if (c.algo == Algo::plain) plain = &c;
    }
    if (noisy && plain) b.ratio = gain_to_loss(*noisy, *plain);
    return b;
}

ExperimentBundle run_experiment(const ScenarioConfig& cfg, bool with_sim, bool force) {
    Scenario sc = build_scenario(cfg);
    return run_experiment(cfg, sc, with_sim, force);
}

namespace {

nlohmann::json network_json(const ValidationReport& rep) {
    nlohmann::json net;
    net["feasible"] = rep.feasible;
    net["feasibility_residual"] = rep.feas_residual;
    net["global_full_row_rank"] = rep.global_full_row_rank;
    net["null_dim"] = rep.null_dim;
    bool local_ok = true;
    std::vector<int> deficient;
    for (std::size_t k = 0; k < rep.local.size(); ++k) {
        local_ok = local_ok && rep.local_full_row_rank[k];
        if (rep.own_block_col_deficient[k]) deficient.push_back(static_cast<int>(k));
    }
    net["local_full_row_rank"] = local_ok;
    net["own_block_col_deficient_agents"] = deficient;
    net["pass"] = rep.pass();
    return net;
}

nlohmann::json stability_json(const StabilityReport& st) {
    nlohmann::json out;
    out["mu_lo"] = std::vector<double>(st.mu_lo.data(), st.mu_lo.data() + st.mu_lo.size());
    out["mu_hi"] = std::vector<double>(st.mu_hi.data(), st.mu_hi.data() + st.mu_hi.size());
    out["mu_inside"] = st.mu_inside;
    out["band_hypothesis_ok"] = st.all_hypothesis_ok;
    out["projector_norm"] = st.p_norm;
    out["mean_transition_radius"] = st.rho_a;
    return out;
}

}  // namespace

nlohmann::json summary_json(const ExperimentBundle& b) {
    nlohmann::json j;
    j["config"] = config_to_json(b.config);
    j["artifact_defaults"] = {"runs",   "iters",      "eig_lo",    "eig_hi",
                              "latent_lo", "latent_hi", "snr_lo_db", "snr_hi_db",
                              "alpha",  "batches"};
    j["network"] = network_json(b.network);
    j["stability"] = stability_json(b.stability);

    nlohmann::json ss;
    for (const AlgoCurves& c : b.curves) {
        nlohmann::json a;
        a["msd_emp_db"] = c.has_sim ? num_or_null(to_db(steady_mean(c.msd_emp)))
                                    : nlohmann::json(nullptr);
        a["msd_th_db"] = c.has_theory ? num_or_null(to_db(steady_mean(c.msd_th)))
                                      : nlohmann::json(nullptr);
        a["xi_emp_db"] = (c.has_sim && c.has_privacy)
                             ? num_or_null(to_db(steady_mean(c.xi_emp)))
                             : nlohmann::json(nullptr);
        a["xi_th_db"] = c.has_theory ? num_or_null(to_db(steady_mean(c.xi_th)))
                                     : nlohmann::json(nullptr);
        a["sigma_mean"] = num_or_null(steady_mean(c.sigma_mean));
        a["theory"] = c.has_theory;
        a["simulated"] = c.has_sim;
        a["ridge_flagged"] = c.ridge_flagged;
        ss[algo_name(c.algo)] = a;
    }
    j["steady_state"] = ss;

    if (b.ratio) {
        nlohmann::json g;
        g["ratio"] = num_or_null(b.ratio->ratio);
        g["gain_db"] = num_or_null(b.ratio->gain_db);
        g["loss_db"] = num_or_null(b.ratio->loss_db);
        g["infinite"] = b.ratio->infinite;
        g["degenerate"] = b.ratio->degenerate;
        g["baseline"] = algo_name(Algo::plain);
        j["gain_to_loss"] = g;
    } else {
        j["gain_to_loss"] = nullptr;
    }
    j["notices"] = b.notices;
    return j;
}

nlohmann::json validate_json(const ScenarioConfig& cfg) {
    Scenario sc = build_scenario(cfg);
    ValidationReport rep = sc.net.validate();
    nlohmann::json j;
    j["config"] = config_to_json(cfg);
    j["network"] = network_json(rep);

    std::vector<std::string> notices;
    if (rep.any_own_block_col_deficient)
        notices.push_back(
            "some agents' own constraint blocks are column deficient; the "
            "projector-norm lower bound may not be tight");
    if (rep.pass()) {
        Vec sp = steady_powers(sc.prior, cfg.rho);
        ProjectionSet ps = build_projection(sc.net, compute_weights(sc.net, sp));
        StabilityReport st = stability_bounds(sc.model, ps);
        j["stability"] = stability_json(st);
        if (!st.mu_inside)
            notices.push_back("configured step size lies outside the sufficient band");
        if (!st.all_hypothesis_ok)
            notices.push_back(
                "regressor spread violates the band-existence hypothesis for some "
                "agent");
        if (st.rho_a > 1.0)
            notices.push_back("mean transition is unstable at the configured step size");
    } else {
        j["stability"] = nullptr;
        notices.push_back("network assumptions fail; stability bounds not computed");
    }
    j["notices"] = notices;
    return j;
}

void emit(const ExperimentBundle& b, const std::string& dir, bool svg) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());

    for (const AlgoCurves& c : b.curves) {
        std::ostringstream o;
        o << "iter,msd_emp_db,msd_th_db,xi_emp_db,xi_th_db,sigma_mean\n";
        for (std::size_t i = 0; i < c.msd_emp.size(); ++i)
            o << i << ',' << db_cell(c.msd_emp[i]) << ',' << db_cell(c.msd_th[i]) << ','
              << db_cell(c.xi_emp[i]) << ',' << db_cell(c.xi_th[i]) << ','
              << lin_cell(c.sigma_mean[i]) << '\n';
        write_file(dir + "/curves_" + algo_name(c.algo) + ".csv", o.str());
    }

    write_file(dir + "/summary.json", summary_json(b).dump(2) + "\n");

    if (!svg) return;
    std::vector<std::vector<double>> keep;
    keep.reserve(b.curves.size() * 4);
    std::vector<Series> msd_series, xi_series;
    int ci = 0;
    for (const AlgoCurves& c : b.curves) {
        const std::string name = algo_name(c.algo);
        const char* color = kPalette[ci++ % 6];
        if (c.has_sim) {
            keep.push_back(db_curve(c.msd_emp));
            msd_series.push_back({name, &keep.back(), color, false});
        }
        if (c.has_theory) {
            keep.push_back(db_curve(c.msd_th));
            msd_series.push_back({name + " theory", &keep.back(), color, true});
        }
        if (c.has_sim && c.has_privacy) {
            keep.push_back(db_curve(c.xi_emp));
            xi_series.push_back({name, &keep.back(), color, false});
        }
        if (c.has_theory) {
            keep.push_back(db_curve(c.xi_th));
            xi_series.push_back({name + " theory", &keep.back(), color, true});
        }
    }
    write_file(dir + "/msd.svg", line_chart("Network MSD", "MSD (dB)", msd_series));
    write_file(dir + "/privacy.svg",
               line_chart("Network inference privacy", "error (dB)", xi_series));
}

}  // namespace plms
