#pragma once

// Evaluation metrics: l2 distance to a known intensity, test log likelihood,
// negative log predicted likelihood, and empirical coverage of simulated
// count distributions. Intensity paths are sampled at a fixed quadrature set
// with the diagonal q(f), matching the bound module's treatment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "sgcp/common.hpp"
#include "sgcp/domain.hpp"
#include "sgcp/events.hpp"
#include "sgcp/model.hpp"
#include "sgcp/rng.hpp"
#include "sgcp/simulate.hpp"
#include "sgcp/special.hpp"
#include "sgcp/train.hpp"

namespace sgcp {

struct CountDistribution {
    enum class Kind { in_sample, out_of_sample };
    std::vector<std::int64_t> samples;
    Kind kind = Kind::in_sample;
};

struct MetricReport {
    std::optional<double> l2;
    double ell_test = 0.0;
    bool ell_test_floored = false;
    double nlpl = 0.0;
    std::map<int, double> ec_in;   // CI level (percent) -> coverage
    std::map<int, double> ec_out;
    std::int64_t seeds = 1;
};

// One joint draw of lambda(x) at a fixed point set. The posterior-backed
// sampler shares a single (lambda*, f) draw across all points of one path.
using LambdaPathFn = std::function<Vec(Rng&)>;

inline LambdaPathFn posterior_path_sampler(const ModelState& state, const Mat& points) {
    const GpProjection proj = project(points, state.Z, state.kernel, state.q_u);
    const Vec sd = proj.post_var_diag.cwiseMax(0.0).cwiseSqrt();
    const Vec mean = proj.mean;
    const GammaVar q = state.q_lambda;
    return [sd, mean, q](Rng& rng) {
        const double lam = rng.gamma(q.alpha, q.beta);
        Vec out(mean.size());
        for (Eigen::Index i = 0; i < mean.size(); ++i) out[i] = lam * sigmoid(mean[i] + sd[i] * rng.normal());
        return out;
    };
}

inline LambdaPathFn deterministic_path_sampler(const IntensityFn& fn, const Mat& points) {
    Vec vals(points.rows());
    for (Eigen::Index i = 0; i < points.rows(); ++i) vals[i] = fn.evaluator(points.row(i).transpose());
    return [vals](Rng&) { return vals; };
}

// Integral of (truth - posterior mean)^2 over the quadrature set; the
// sigmoid expectation uses >= 500 f draws per point.
inline double l2_distance(const IntensityFn& truth, const ModelState& state, const IntegrationSet& quad,
                          std::int64_t f_draws, Rng& rng) {
    if (f_draws < 1) throw std::invalid_argument("l2_distance requires f_draws >= 1");
    const GpProjection proj = project(quad.points, state.Z, state.kernel, state.q_u);
    const Vec sd = proj.post_var_diag.cwiseMax(0.0).cwiseSqrt();
    const double e_lambda = state.q_lambda.mean();
    double acc = 0.0;
    for (Eigen::Index j = 0; j < quad.count(); ++j) {
        double mean_sig = 0.0;
        for (std::int64_t d = 0; d < f_draws; ++d) mean_sig += sigmoid(proj.mean[j] + sd[j] * rng.normal());
        mean_sig /= static_cast<double>(f_draws);
        const double bar = e_lambda * mean_sig;
        const double diff = truth.evaluator(quad.points.row(j).transpose()) - bar;
        acc += diff * diff;
    }
    return acc * quad.weight;
}

namespace detail {

struct EllTestResult {
    double value = 0.0;
    bool floored = false;
};

inline EllTestResult ell_test_core(const LambdaPathFn& path, Eigen::Index n_quad, double weight,
                                   Eigen::Index n_test, std::int64_t draws, Rng& rng) {
    constexpr double kLogFloor = -690.77552789821369;  // log(1e-300)
    EllTestResult res;
    double acc = 0.0;
    for (std::int64_t s = 0; s < draws; ++s) {
        const Vec lam = path(rng);
        double integral = 0.0;
        for (Eigen::Index j = 0; j < n_quad; ++j) integral += lam[j];
        integral *= weight;
        double ll = -integral;
        for (Eigen::Index t = 0; t < n_test; ++t) {
            const double v = lam[n_quad + t];
            if (v < 1e-300) {
                ll += kLogFloor;
                res.floored = true;
            } else {
                ll += std::log(v);
            }
        }
        acc += ll;
    }
    res.value = acc / static_cast<double>(draws);
    return res;
}

}  // namespace detail

inline detail::EllTestResult test_loglik(const ModelState& state, const EventSet& test_events,
                                         const IntegrationSet& quad, std::int64_t draws, Rng& rng) {
    if (!(test_events.domain == state.domain)) throw data_error("test events must share the model domain");
    Mat pts(quad.count() + test_events.count(), state.domain.dim());
    pts.topRows(quad.count()) = quad.points;
    pts.bottomRows(test_events.count()) = test_events.points;
    const LambdaPathFn path = posterior_path_sampler(state, pts);
    return detail::ell_test_core(path, quad.count(), quad.weight, test_events.count(), draws, rng);
}

// NLPL of the training count under sampled integrated intensities.
inline double nlpl(const ModelState& state, std::int64_t n_train, const IntegrationSet& quad, std::int64_t s_draws,
                   Rng& rng) {
    if (s_draws < 1) throw std::invalid_argument("nlpl requires s_draws >= 1");
    const LambdaPathFn path = posterior_path_sampler(state, quad.points);
    const double n = static_cast<double>(n_train);
    double acc = 0.0;
    for (std::int64_t s = 0; s < s_draws; ++s) {
        const Vec lam = path(rng);
        double integral = 0.0;
        for (Eigen::Index j = 0; j < lam.size(); ++j) integral += lam[j];
        integral *= quad.weight;
        integral = std::max(integral, 1e-300);
        acc -= n * std::log(integral) - integral - std::lgamma(n + 1.0);
    }
    return acc / static_cast<double>(s_draws);
}

struct RescaleCounts {
    std::int64_t n_train = 0;
    std::int64_t n_test = 0;
};

// Simulated posterior (or rescaled predictive) count distribution: each
// sample integrates one lambda path and draws a Poisson count.
inline CountDistribution count_distribution(const ModelState& state, const IntegrationSet& quad,
                                            std::int64_t n_samples, CountDistribution::Kind kind,
                                            std::optional<RescaleCounts> rescale, Rng& rng) {
    if (n_samples < 100) throw std::invalid_argument("count_distribution requires n_samples >= 100");
    const LambdaPathFn path = posterior_path_sampler(state, quad.points);
    const double shift =
        rescale ? (static_cast<double>(rescale->n_test) - static_cast<double>(rescale->n_train)) /
                      state.domain.volume()
                : 0.0;
    CountDistribution dist;
    dist.kind = kind;
    dist.samples.resize(n_samples);
    for (std::int64_t s = 0; s < n_samples; ++s) {
        const Vec lam = path(rng);
        double integral = 0.0;
        for (Eigen::Index j = 0; j < lam.size(); ++j) integral += std::max(lam[j] + shift, 0.0);
        integral *= quad.weight;
        dist.samples[s] = static_cast<std::int64_t>(rng.poisson(integral));
    }
    return dist;
}

// Nearest-rank quantile of sorted samples.
inline std::int64_t nearest_rank(const std::vector<std::int64_t>& sorted, double p) {
    const std::int64_t n = static_cast<std::int64_t>(sorted.size());
    std::int64_t idx = static_cast<std::int64_t>(std::ceil(p * static_cast<double>(n)));
    idx = std::max<std::int64_t>(1, std::min(n, idx));
    return sorted[idx - 1];
}

// Indicator per CI level that the observed count falls in the central
// credible interval of the sample distribution.
inline std::map<int, int> empirical_coverage(const CountDistribution& dist, std::int64_t observed,
                                             const std::vector<int>& levels) {
    if (dist.samples.empty()) throw std::invalid_argument("empirical_coverage requires a nonempty distribution");
    for (int level : levels)
        if (level < 10 || level > 90) throw std::invalid_argument("coverage levels must lie in {10,...,90}");
    std::vector<std::int64_t> sorted = dist.samples;
    std::sort(sorted.begin(), sorted.end());
    std::map<int, int> out;
    for (int level : levels) {
        const double c = static_cast<double>(level) / 100.0;
        const std::int64_t lo = nearest_rank(sorted, (1.0 - c) / 2.0);
        const std::int64_t hi = nearest_rank(sorted, (1.0 + c) / 2.0);
        out[level] = (observed >= lo && observed <= hi) ? 1 : 0;
    }
    return out;
}

}  // namespace sgcp
