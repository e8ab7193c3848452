#pragma once

// Stochastic gradient ascent on the surrogate bound over the unconstrained
// parameter vector. Gradients are reverse-mode sweeps of elbo_core<ad::Var>
// on noise shared with the matching value evaluation, so a finite-difference
// pair at one seed sees the same deterministic function.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sgcp/autodiff.hpp"
#include "sgcp/elbo.hpp"
#include "sgcp/model.hpp"

namespace sgcp {

struct TrainConfig {
    double step_size = 5e-3;
    std::int64_t iterations = 5000;
    double decay_factor = 0.3;
    std::vector<double> decay_points = {0.6, 0.85};  // fractions of the iteration budget
    McConfig mc;
    std::uint64_t seed = 1;
    std::int64_t window = 200;  // moving-average window for early stopping
    double tolerance = 0.0;     // improvement threshold; <= 0 disables early stop

    void validate() const {
        if (iterations < 0) throw config_error("iterations must be >= 0");
        if (!(step_size > 0.0)) throw config_error("step_size must be positive");
        if (window < 1) throw config_error("window must be >= 1");
    }
};

struct TrainTrace {
    struct Row {
        std::int64_t iter;
        double elbo;
        double grad_norm;
        double seconds;
    };
    std::vector<Row> rows;
    std::int64_t retried_steps = 0;  // non-finite steps recovered by halving
};

namespace detail {

enum class GradTarget { total, kl_u };

struct GradResult {
    double value = 0.0;
    Vec grad;
};

inline GradResult grad_raw(const ElboFixed& fx, const ParamLayout& lay, const McConfig& mc, const Vec& raw,
                           std::uint64_t seed, GradTarget target = GradTarget::total) {
    Rng rng(seed);
    const ElboNoise ns = draw_elbo_noise(fx, lay, mc, rng);

    thread_local ad::Tape tape;
    tape.clear();
    std::vector<ad::Var> leaves(lay.total);
    for (int i = 0; i < lay.total; ++i) leaves[i] = ad::make_leaf(tape, raw[i]);

    const VParams<ad::Var> p = unpack_params(std::span<const ad::Var>(leaves.data(), leaves.size()), lay, fx.domain, fx.lzz);
    const auto terms = elbo_core<ad::Var>(fx, lay, p, ns);
    const ad::Var& out = (target == GradTarget::total) ? terms.total : terms.kl_u;

    const std::vector<double> adj = tape.backward(out.idx);
    GradResult res;
    res.value = out.v;
    res.grad.resize(lay.total);
    for (int i = 0; i < lay.total; ++i) res.grad[i] = adj[leaves[i].idx];

    if (!std::isfinite(res.value)) throw numeric_error("non-finite objective value");
    for (int i = 0; i < lay.total; ++i)
        if (!std::isfinite(res.grad[i]))
            throw numeric_error("non-finite gradient at coordinate " + std::to_string(i));
    return res;
}

// Deterministic value with the same noise a grad_raw call at this seed uses.
inline double elbo_value_raw(const ElboFixed& fx, const ParamLayout& lay, const McConfig& mc, const Vec& raw,
                             std::uint64_t seed) {
    Rng rng(seed);
    const ElboNoise ns = draw_elbo_noise(fx, lay, mc, rng);
    const VParams<double> p =
        unpack_params(std::span<const double>(raw.data(), raw.size()), lay, fx.domain, fx.lzz);
    return elbo_core<double>(fx, lay, p, ns).total;
}

}  // namespace detail

// Gradient of the surrogate bound with respect to the unconstrained
// coordinates, pathwise through every Monte Carlo expectation.
inline Vec grad_elbo(const Problem& prob, const EventSet& events, const Vec& raw, const McConfig& mc,
                     std::uint64_t seed) {
    if (events.count() < 1) throw data_error("grad_elbo requires at least one event");
    const detail::ElboFixed fx =
        detail::make_elbo_fixed(prob.domain, prob.kernel, prob.Z, prob.prior_lambda, events.points);
    return detail::grad_raw(fx, prob.layout, mc, raw, seed).grad;
}

struct FitResult {
    TrainTrace trace;
    Vec raw;
    ModelState state;
};

inline FitResult fit(const EventSet& events, const Problem& prob, const TrainConfig& config) {
    config.validate();
    if (events.count() < 1) throw data_error("fit requires at least one event");
    if (!(events.domain == prob.domain)) throw data_error("fit requires events on the problem domain");

    const detail::ElboFixed fx =
        detail::make_elbo_fixed(prob.domain, prob.kernel, prob.Z, prob.prior_lambda, events.points);
    const ParamLayout& lay = prob.layout;

    Vec raw = initial_params(prob);
    TrainTrace trace;
    trace.rows.reserve(config.iterations);

    Vec adam_m = Vec::Zero(lay.total), adam_v = Vec::Zero(lay.total);
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const auto t0 = std::chrono::steady_clock::now();

    double lr = config.step_size;
    std::vector<std::int64_t> decay_at;
    for (double frac : config.decay_points)
        decay_at.push_back(static_cast<std::int64_t>(frac * static_cast<double>(config.iterations)));

    Vec before_step = raw;  // iterate preceding the most recent update
    for (std::int64_t it = 0; it < config.iterations; ++it) {
        for (std::int64_t boundary : decay_at)
            if (it == boundary && it > 0) lr *= config.decay_factor;

        detail::GradResult g;
        int attempt = 0;
        for (;;) {
            try {
                g = detail::grad_raw(fx, lay, config.mc, raw, derive_seed(config.seed, it, attempt));
                break;
            } catch (const numeric_error&) {
                if (attempt >= 5) throw;
                // re-take the update that produced this iterate at half length
                raw = before_step + 0.5 * (raw - before_step);
                ++attempt;
                ++trace.retried_steps;
            }
        }

        before_step = raw;
        const double t1c = 1.0 - std::pow(b1, static_cast<double>(it + 1));
        const double t2c = 1.0 - std::pow(b2, static_cast<double>(it + 1));
        for (int i = 0; i < lay.total; ++i) {
            adam_m[i] = b1 * adam_m[i] + (1.0 - b1) * g.grad[i];
            adam_v[i] = b2 * adam_v[i] + (1.0 - b2) * g.grad[i] * g.grad[i];
            raw[i] += lr * (adam_m[i] / t1c) / (std::sqrt(adam_v[i] / t2c) + eps);
        }

        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        trace.rows.push_back({it, g.value, g.grad.norm(), secs});

        // early stop on a stalled moving average
        if (config.tolerance > 0.0 && it + 1 >= 2 * config.window) {
            double recent = 0.0, previous = 0.0;
            for (std::int64_t j = 0; j < config.window; ++j) {
                recent += trace.rows[it - j].elbo;
                previous += trace.rows[it - config.window - j].elbo;
            }
            if ((recent - previous) / static_cast<double>(config.window) < config.tolerance) break;
        }
    }

    return FitResult{std::move(trace), raw, unpack(prob, raw)};
}

// Posterior intensity draws lambda = lambda* sigma(f) at the given points.
inline Mat intensity_posterior(const ModelState& state, const Eigen::Ref<const Mat>& points, std::int64_t draws,
                               Rng& rng) {
    if (draws < 1) throw std::invalid_argument("intensity_posterior requires draws >= 1");
    const GpProjection proj = project(points, state.Z, state.kernel, state.q_u);
    const Vec sd = proj.post_var_diag.cwiseMax(0.0).cwiseSqrt();
    Mat out(draws, points.rows());
    for (std::int64_t s = 0; s < draws; ++s) {
        const double lam = rng.gamma(state.q_lambda.alpha, state.q_lambda.beta);
        for (Eigen::Index i = 0; i < points.rows(); ++i)
            out(s, i) = lam * sigmoid(proj.mean[i] + sd[i] * rng.normal());
    }
    return out;
}

}  // namespace sgcp
