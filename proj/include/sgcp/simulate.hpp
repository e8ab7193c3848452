#pragma once

// Ground-truth simulation: homogeneous sampling, thinning against an upper
// bound, superposition, and the three synthetic intensities plus the "1a"
// variant with a decaying first term.

#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "sgcp/common.hpp"
#include "sgcp/domain.hpp"
#include "sgcp/events.hpp"
#include "sgcp/gp.hpp"
#include "sgcp/rng.hpp"
#include "sgcp/special.hpp"

namespace sgcp {

struct IntensityFn {
    std::function<double(const Vec&)> evaluator;
    double upper_bound = 0.0;
    std::string name;

    IntensityFn(std::function<double(const Vec&)> eval, double upper, std::string id, const BoxDomain& domain)
        : evaluator(std::move(eval)), upper_bound(upper), name(std::move(id)) {
        Rng rng(0xC0FFEE);
        for (int i = 0; i < 10000; ++i) {
            Vec x(domain.dim());
            for (int d = 0; d < domain.dim(); ++d) x[d] = rng.uniform(domain.lower()[d], domain.upper()[d]);
            const double v = evaluator(x);
            if (!(v >= 0.0) || v > upper_bound * (1.0 + 1e-12))
                throw data_error("intensity '" + name + "' violates [0, upper_bound] at a sampled point");
        }
    }
};

struct SyntheticSetting {
    IntensityFn intensity;
    BoxDomain domain;
};

inline SyntheticSetting synthetic_intensity(const std::string& id) {
    const auto box = [](double hi) {
        Vec l(1), u(1);
        l << 0.0;
        u << hi;
        return BoxDomain(l, u);
    };
    if (id == "1") {
        // constant first term, exactly as printed
        const BoxDomain dom = box(50.0);
        const double c = 2.0 * std::exp(-1.0 / 15.0);
        return {IntensityFn([c](const Vec& x) { return c + std::exp(-std::pow((x[0] - 15.0) / 10.0, 2)); }, c + 1.0,
                            "lambda1", dom),
                dom};
    }
    if (id == "1a") {
        // decaying-first-term variant
        const BoxDomain dom = box(50.0);
        return {IntensityFn(
                    [](const Vec& x) {
                        return 2.0 * std::exp(-x[0] / 15.0) + std::exp(-std::pow((x[0] - 15.0) / 10.0, 2));
                    },
                    2.0 + std::exp(-2.25), "lambda1a", dom),
                dom};
    }
    if (id == "2") {
        const BoxDomain dom = box(5.0);
        return {IntensityFn([](const Vec& x) { return 5.0 * std::sin(x[0] * x[0]) + 6.0; }, 11.0, "lambda2", dom),
                dom};
    }
    if (id == "3") {
        const BoxDomain dom = box(100.0);
        return {IntensityFn(
                    [](const Vec& x) {
                        static const double xs[] = {0.0, 25.0, 50.0, 75.0, 100.0};
                        static const double ys[] = {20.0, 3.0, 1.0, 2.5, 3.0};
                        const double v = x[0];
                        for (int i = 0; i < 4; ++i) {
                            if (v <= xs[i + 1]) {
                                const double t = (v - xs[i]) / (xs[i + 1] - xs[i]);
                                return ys[i] + t * (ys[i + 1] - ys[i]);
                            }
                        }
                        return ys[4];
                    },
                    20.0, "lambda3", dom),
                dom};
    }
    throw config_error("unknown synthetic intensity id '" + id + "'");
}

inline EventSet sample_homogeneous(double rate, const BoxDomain& domain, Rng& rng) {
    if (!(rate > 0.0)) throw std::invalid_argument("sample_homogeneous requires rate > 0");
    const double expected = rate * domain.volume();
    if (expected > 1e7) throw numeric_error("sample_homogeneous refuses expected count above 1e7");
    const std::uint64_t n = rng.poisson(expected);
    Mat pts(n, domain.dim());
    for (std::uint64_t i = 0; i < n; ++i)
        for (int d = 0; d < domain.dim(); ++d) pts(i, d) = rng.uniform(domain.lower()[d], domain.upper()[d]);
    return EventSet(std::move(pts), domain, EventSet::Label::simulated);
}

// Lewis-Shedler thinning: candidates at the upper bound, keep with
// probability intensity/upper_bound.
inline std::pair<EventSet, EventSet> sample_thinned(const IntensityFn& intensity, const BoxDomain& domain, Rng& rng) {
    const EventSet candidates = sample_homogeneous(intensity.upper_bound, domain, rng);
    std::vector<Eigen::Index> keep, drop;
    for (Eigen::Index i = 0; i < candidates.count(); ++i) {
        const double p = intensity.evaluator(candidates.points.row(i).transpose()) / intensity.upper_bound;
        (rng.uniform() < p ? keep : drop).push_back(i);
    }
    Mat kept(keep.size(), domain.dim()), thinned(drop.size(), domain.dim());
    for (size_t i = 0; i < keep.size(); ++i) kept.row(i) = candidates.points.row(keep[i]);
    for (size_t i = 0; i < drop.size(); ++i) thinned.row(i) = candidates.points.row(drop[i]);
    return {EventSet(std::move(kept), domain, EventSet::Label::observed),
            EventSet(std::move(thinned), domain, EventSet::Label::thinned)};
}

inline EventSet superpose(const EventSet& a, const EventSet& b) {
    if (!(a.domain == b.domain)) throw data_error("superpose requires matching domains");
    Mat pts(a.count() + b.count(), a.domain.dim());
    pts.topRows(a.count()) = a.points;
    pts.bottomRows(b.count()) = b.points;
    return EventSet(std::move(pts), a.domain, EventSet::Label::simulated);
}

using FSampler = std::function<Vec(const Mat&, Rng&)>;

inline FSampler gp_path_sampler(const KernelParams& params) {
    return [params](const Mat& pts, Rng& rng) { return sample_gp_path(pts, params, rng); };
}

// Generative model: candidates at rate lambda*, observed with probability
// sigma(f), thinned with probability sigma(-f).
inline std::pair<EventSet, EventSet> sgcp_generate(double lambda_star, const FSampler& f_sampler,
                                                   const BoxDomain& domain, Rng& rng) {
    if (!(lambda_star > 0.0)) throw std::invalid_argument("sgcp_generate requires lambda_star > 0");
    const EventSet candidates = sample_homogeneous(lambda_star, domain, rng);
    const Vec f = candidates.count() > 0 ? f_sampler(candidates.points, rng) : Vec();
    std::vector<Eigen::Index> keep, drop;
    for (Eigen::Index i = 0; i < candidates.count(); ++i)
        (rng.uniform() < sigmoid(f[i]) ? keep : drop).push_back(i);
    Mat kept(keep.size(), domain.dim()), thinned(drop.size(), domain.dim());
    for (size_t i = 0; i < keep.size(); ++i) kept.row(i) = candidates.points.row(keep[i]);
    for (size_t i = 0; i < drop.size(); ++i) thinned.row(i) = candidates.points.row(drop[i]);
    return {EventSet(std::move(kept), domain, EventSet::Label::observed),
            EventSet(std::move(thinned), domain, EventSet::Label::thinned)};
}

}  // namespace sgcp
