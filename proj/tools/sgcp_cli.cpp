// Command-line surface for Cox-process intensity fitting: dataset
// simulation, model fitting, metric evaluation, the multi-seed experiment
// pipeline, and a library selftest.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "sgcp/sgcp.hpp"

using namespace sgcp;

namespace {

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    try {
        return json::parse(io::read_text(path));
    } catch (const json::exception& e) {
        throw config_error("config JSON parse error in " + path + ": " + e.what());
    } catch (const data_error& e) {
        throw config_error(e.what());
    }
}

int run_selftest() {
    int failures = 0;
    const auto check = [&](const char* name, bool ok) {
        std::printf("selftest: %-44s %s\n", name, ok ? "ok" : "FAIL");
        if (!ok) ++failures;
    };

    {
        Vec lo(1), hi(1);
        lo << 0.0;
        hi << 7.0;
        const BoxDomain dom(lo, hi);
        Rng rng(1);
        const IntegrationSet g = grid(dom, 100);
        const IntegrationSet s = sample_uniform(dom, 333, rng);
        check("integration weights recover the volume",
              std::fabs(g.weight * g.count() - 7.0) < 1e-12 && std::fabs(s.weight * s.count() - 7.0) < 1e-12);
    }
    {
        Mat z(3, 1);
        z << 0.5, 2.0, 4.0;
        const InducingSet Z(z);
        const KernelParams k(1.0, 1.0);
        const GaussianVar q = prior_var(Z, k);
        check("KL(q(u)||p(u)) vanishes at the prior", std::fabs(kl_gaussian(q, Z, k)) < 1e-10);
        check("KL(q(lam)||q(lam)) vanishes", std::fabs(kl_gamma(GammaVar(3, 2), GammaVar(3, 2))) < 1e-12);
    }
    {
        Vec lo(1), hi(1);
        lo << 0.0;
        hi << 2.0;
        Mat z(2, 1);
        z << 0.5, 1.5;
        const Problem prob(BoxDomain(lo, hi), KernelParams(0.7, 1.0), InducingSet(z), GammaVar(4, 1), 2);
        Rng rng(2);
        bool ok = true;
        for (int rep = 0; rep < 50 && ok; ++rep) {
            Vec raw(prob.layout.total);
            for (int i = 0; i < raw.size(); ++i) raw[i] = rng.normal();
            const ModelState st = unpack(prob, raw);
            ok = (pack(st).values - raw).cwiseAbs().maxCoeff() == 0.0 &&
                 std::fabs(st.mixture.weights.sum() - 1.0) < 1e-12;
        }
        check("pack/unpack identity and simplex weights", ok);
    }
    {
        const SyntheticSetting s = synthetic_intensity("2");
        Rng ra(3), rb(3);
        const EventSet cand = sample_homogeneous(s.intensity.upper_bound, s.domain, ra);
        const auto [kept, thin] = sample_thinned(s.intensity, s.domain, rb);
        check("thinning complementarity", kept.count() + thin.count() == cand.count());
    }
    {
        Rng rng(4);
        bool ok = true;
        for (int rep = 0; rep < 50 && ok; ++rep) {
            CountDistribution dist;
            dist.samples.resize(60);
            for (auto& v : dist.samples) v = static_cast<std::int64_t>(rng.poisson(25.0));
            const auto cov =
                empirical_coverage(dist, static_cast<std::int64_t>(rng.poisson(25.0)), {10, 30, 50, 70, 90});
            int prev = 0;
            for (const int lv : {10, 30, 50, 70, 90}) {
                if (cov.at(lv) < prev) ok = false;
                prev = cov.at(lv);
            }
        }
        check("credible intervals nest across levels", ok);
    }
    {
        Vec lo(1), hi(1);
        lo << 0.0;
        hi << 2.0;
        const BoxDomain dom(lo, hi);
        Mat z(2, 1);
        z << 0.5, 1.5;
        const Problem prob(dom, KernelParams(0.7, 1.0), InducingSet(z), GammaVar(4, 1), 2);
        Mat pts(3, 1);
        pts << 0.3, 1.0, 1.7;
        const EventSet events(pts, dom, EventSet::Label::observed);
        const ModelState st = unpack(prob, Vec::Zero(prob.layout.total));
        McConfig mc;
        mc.mu_x_points = 100;
        mc.t3_pairs = 16;
        mc.t5_samples = 16;
        mc.data_term_draws = 4;
        Rng r1(5), r2(5);
        const double a = elbo(st, events, mc, r1).total;
        const double b = elbo(st, events, mc, r2).total;
        check("bound evaluation is deterministic per seed", a == b && std::isfinite(a));

        const detail::ElboFixed fx =
            detail::make_elbo_fixed(dom, prob.kernel, prob.Z, prob.prior_lambda, pts);
        Vec raw = Vec::Zero(prob.layout.total);
        const Vec g = detail::grad_raw(fx, prob.layout, mc, raw, 9).grad;
        Vec plus = raw, minus = raw;
        plus[0] += 1e-4;
        minus[0] -= 1e-4;
        const double fd = (detail::elbo_value_raw(fx, prob.layout, mc, plus, 9) -
                           detail::elbo_value_raw(fx, prob.layout, mc, minus, 9)) /
                          2e-4;
        check("gradient agrees with finite differences", std::fabs(g[0] - fd) < 1e-4 * std::max(1.0, std::fabs(fd)));
    }
    std::printf("selftest: %s\n", failures == 0 ? "all checks passed" : "FAILURES detected");
    return failures == 0 ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sigmoidal Gaussian Cox process intensity estimation (structured variational inference)"};
    app.require_subcommand(1);

    std::string config_path, out_path, setting = "2", events_path, state_path, truth_setting;
    std::uint64_t seed = 1;
    int jobs = 0;

    auto* sim = app.add_subcommand("simulate", "Simulate a synthetic event set to CSV (+ JSON sidecar)");
    sim->add_option("--setting", setting, "Synthetic intensity id: 1, 1a, 2 or 3");
    sim->add_option("--seed", seed, "Simulation seed");
    sim->add_option("--out", out_path, "Output CSV path")->required();

    auto* fitc = app.add_subcommand("fit", "Fit the model to an events CSV");
    fitc->add_option("--events", events_path, "Training events CSV")->required();
    fitc->add_option("--config", config_path, "Config JSON");
    fitc->add_option("--setting", setting, "Setting id (overrides config)");
    fitc->add_option("--seed", seed, "Training seed (overrides config)");
    fitc->add_option("--out", out_path, "Output directory")->required();

    auto* eval = app.add_subcommand("evaluate", "Evaluate a fitted state against a test events CSV");
    eval->add_option("--state", state_path, "Fitted state JSON")->required();
    eval->add_option("--events", events_path, "Test events CSV")->required();
    eval->add_option("--truth", truth_setting, "Synthetic truth id for the l2 metric");
    eval->add_option("--config", config_path, "Config JSON (metric sizes)");
    eval->add_option("--seed", seed, "Evaluation seed");
    std::int64_t n_train = -1;
    eval->add_option("--train-count", n_train, "Training event count for NLPL / coverage");
    eval->add_option("--out", out_path, "Report JSON path");

    auto* exp = app.add_subcommand("experiment", "Run the full multi-seed experiment pipeline");
    exp->add_option("--config", config_path, "Config JSON")->required();
    exp->add_option("--out", out_path, "Output directory (overrides config)");
    exp->add_option("--jobs", jobs, "Parallel train-seed workers");
    exp->add_option("--setting", setting, "Setting id (overrides config)");

    auto* self = app.add_subcommand("selftest", "Run the built-in invariant checks");
    (void)self;

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            if (!sim->count("--setting")) setting = "2";
            const SimulateOutput out = cmd_simulate(setting, seed, out_path);
            std::printf("simulated %lld events (setting %s, seed %llu) -> %s\n",
                        static_cast<long long>(out.events.count()), setting.c_str(),
                        static_cast<unsigned long long>(seed), out_path.c_str());
            std::printf("true intensity integral: %.4f\n", out.true_integral);
            return 0;
        }
        if (fitc->parsed()) {
            json cj = load_config(config_path);
            if (fitc->count("--setting")) cj["setting"] = setting;
            ExperimentConfig cfg = parse_experiment_config(cj);
            if (fitc->count("--seed")) cfg.train.seed = seed;
            const EventSet events = io::read_events_csv(events_path, *cfg.domain);
            if (events.count() < 1) throw data_error("training CSV contains no events");
            const FitResult fr = cmd_fit(events, cfg, out_path);
            std::printf("fit complete: %zu iterations, final bound %.4f -> %s/state.json\n", fr.trace.rows.size(),
                        fr.trace.rows.empty() ? 0.0 : fr.trace.rows.back().elbo, out_path.c_str());
            return 0;
        }
        if (eval->parsed()) {
            const json cj = load_config(config_path);
            ExperimentConfig cfg;
            if (!cj.empty()) cfg = parse_experiment_config(cj);
            const ModelState state = io::state_from_json(json::parse(io::read_text(state_path)));
            const EventSet test = io::read_events_csv(events_path, state.domain);
            Rng rng(seed);
            const std::optional<std::string> truth =
                truth_setting.empty() ? std::nullopt : std::optional<std::string>(truth_setting);
            const MetricReport rep = cmd_evaluate(state, n_train >= 0 ? n_train : test.count(), test, truth,
                                                  cfg.metrics, rng);
            const json rj = io::metric_report_to_json(rep);
            if (!out_path.empty()) {
                io::write_text(out_path, rj.dump(2) + "\n");
                io::write_text(out_path + ".csv", io::metric_report_to_csv(rep));
            } else {
                std::printf("%s\n", rj.dump(2).c_str());
            }
            return 0;
        }
        if (exp->parsed()) {
            json cj = load_config(config_path);
            if (exp->count("--setting")) cj["setting"] = setting;
            if (!out_path.empty()) cj["out_dir"] = out_path;
            if (jobs > 0) cj["jobs"] = jobs;
            ExperimentConfig cfg = parse_experiment_config(cj);
            const ResultBundle bundle = cmd_experiment(cfg);
            std::printf("experiment complete: %lld/%lld seeds, results under %s\n",
                        static_cast<long long>(bundle.completed_seeds),
                        static_cast<long long>(cfg.train_seeds), cfg.out_dir.c_str());
            std::printf("l2 %.3f (%.3f)  ell_test %.3f (%.3f)  nlpl %.3f (%.3f)  cpu %.1fs\n", bundle.l2.mean,
                        bundle.l2.sd, bundle.ell_test.mean, bundle.ell_test.sd, bundle.nlpl.mean, bundle.nlpl.sd,
                        bundle.cpu_time_s);
            for (const auto& s : bundle.seeds)
                if (!s.completed) std::fprintf(stderr, "seed %lld failed: %s\n", (long long)s.index, s.error.c_str());
            return bundle.completed_seeds > 0 ? 0 : 4;
        }
        if (self->parsed()) return run_selftest();
    } catch (const config_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const data_error& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const numeric_error& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
