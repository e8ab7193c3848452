#pragma once

// Non-GP factors of the structured posterior: the Gamma law on the intensity
// bound, the truncated-Gaussian mixture over thinned-event locations and the
// mu(u) functionals feeding the bound terms.

#include <cmath>
#include <tuple>

#include "sgcp/common.hpp"
#include "sgcp/domain.hpp"
#include "sgcp/gp.hpp"
#include "sgcp/rng.hpp"
#include "sgcp/special.hpp"
#include "sgcp/truncnorm.hpp"

namespace sgcp {

struct GammaVar {
    double alpha;  // shape
    double beta;   // rate

    GammaVar(double a, double b) : alpha(a), beta(b) {
        if (!(alpha > 0.0) || !(beta > 0.0)) throw config_error("GammaVar requires positive shape and rate");
    }

    double mean() const { return alpha / beta; }
};

// Prior over the intensity upper bound: mean 2r and sd r with r the
// homogeneous-process rate N/V, hence shape 4 and rate 2V/N.
inline GammaVar lambda_prior(const BoxDomain& domain, std::int64_t n_observed) {
    if (n_observed < 1) throw std::invalid_argument("lambda_prior requires n_observed >= 1");
    return GammaVar(4.0, 2.0 * domain.volume() / static_cast<double>(n_observed));
}

struct GammaMoments {
    double mean;          // E[lambda]
    double mean_log;      // E[log lambda]
    double mean_lambda_log;  // E[lambda log lambda]
};

inline GammaMoments gamma_moments(const GammaVar& g) {
    const double mean = g.alpha / g.beta;
    return {mean, digamma(g.alpha) - std::log(g.beta), mean * (digamma(g.alpha + 1.0) - std::log(g.beta))};
}

inline double kl_gamma(const GammaVar& q, const GammaVar& p) {
    return (q.alpha - p.alpha) * digamma(q.alpha) - std::lgamma(q.alpha) + std::lgamma(p.alpha) +
           p.alpha * (std::log(q.beta) - std::log(p.beta)) + q.alpha * (p.beta - q.beta) / q.beta;
}

// Mixture of per-dimension factorized truncated normals on the domain box.
struct TruncMixture {
    Vec weights;  // length S, simplex
    Mat means;    // S x D
    Mat stds;     // S x D
    BoxDomain domain;

    TruncMixture(Vec w, Mat mu, Mat sd, BoxDomain dom)
        : weights(std::move(w)), means(std::move(mu)), stds(std::move(sd)), domain(std::move(dom)) {
        const Eigen::Index s = weights.size();
        if (s < 1 || means.rows() != s || stds.rows() != s || means.cols() != domain.dim() ||
            stds.cols() != domain.dim())
            throw config_error("TruncMixture shape mismatch");
        if (weights.minCoeff() < 0.0 || std::fabs(weights.sum() - 1.0) > 1e-12)
            throw config_error("TruncMixture weights must be a simplex vector");
        if (!(stds.minCoeff() > 0.0)) throw config_error("TruncMixture stds must be positive");
    }

    Eigen::Index components() const { return weights.size(); }
};

// Ancestral sampling: component by CDF scan, then per-dimension inverse CDF.
inline Mat mixture_sample(const TruncMixture& mix, std::int64_t count, Rng& rng) {
    if (count < 0) throw std::invalid_argument("mixture_sample requires count >= 0");
    const int dim = mix.domain.dim();
    Mat out(count, dim);
    for (std::int64_t i = 0; i < count; ++i) {
        const double u = rng.uniform();
        Eigen::Index s = 0;
        double acc = mix.weights[0];
        while (u > acc && s + 1 < mix.components()) acc += mix.weights[++s];
        for (int d = 0; d < dim; ++d)
            out(i, d) = trunc_normal_quantile(rng.uniform_pos(), mix.means(s, d), mix.stds(s, d),
                                              mix.domain.lower()[d], mix.domain.upper()[d]);
    }
    return out;
}

inline double mixture_logpdf(const TruncMixture& mix, const Eigen::Ref<const Vec>& point) {
    if (!mix.domain.contains(point)) throw std::invalid_argument("mixture_logpdf requires a point inside the domain");
    double mx = -std::numeric_limits<double>::infinity();
    Vec comp_log(mix.components());
    for (Eigen::Index s = 0; s < mix.components(); ++s) {
        double lp = std::log(mix.weights[s]);
        for (int d = 0; d < mix.domain.dim(); ++d)
            lp += trunc_normal_logpdf(point[d], mix.means(s, d), mix.stds(s, d), mix.domain.lower()[d],
                                      mix.domain.upper()[d]);
        comp_log[s] = lp;
        mx = std::max(mx, lp);
    }
    double acc = 0.0;
    for (Eigen::Index s = 0; s < mix.components(); ++s) acc += std::exp(comp_log[s] - mx);
    return mx + std::log(acc);
}

// Monte Carlo estimates of U = E_q(u)[mu(u)] and W = E_q(u)[mu(u) log mu(u)],
// with u(x) the conditional mean K_xz K_zz^-1 u at a q(u) draw. W is paired
// with U on the same integration points.
struct MuEstimate {
    double U = 0.0;
    double W = 0.0;
    std::int64_t samples_u = 0;
    std::int64_t samples_x = 0;
};

inline MuEstimate mu_functionals(const GaussianVar& q_u, const InducingSet& Z, const KernelParams& params,
                                 const BoxDomain& domain, std::int64_t n_u_samples, std::int64_t n_x_points,
                                 Rng& rng) {
    if (n_u_samples < 1 || n_x_points < 1)
        throw std::invalid_argument("mu_functionals requires n_u_samples >= 1 and n_x_points >= 1");
    const IntegrationSet xs = sample_uniform(domain, n_x_points, rng);
    const Mat kxz = gram(xs.points, Z.Z, params);
    const Mat lzz = chol_with_jitter(gram(Z.Z, Z.Z, params)).L;
    Mat at = lzz.triangularView<Eigen::Lower>().solve(kxz.transpose());
    lzz.transpose().triangularView<Eigen::Upper>().solveInPlace(at);  // at = K_zz^-1 K_zx

    MuEstimate est;
    est.samples_u = n_u_samples;
    est.samples_x = n_x_points;
    const Eigen::Index k = q_u.size();
    Vec xi(k);
    for (std::int64_t i = 0; i < n_u_samples; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) xi[j] = rng.normal();
        const Vec u = q_u.m + q_u.L.triangularView<Eigen::Lower>() * xi;
        const Vec ux = at.transpose() * u;
        double mu_hat = 0.0;
        for (Eigen::Index j = 0; j < ux.size(); ++j) mu_hat += sigmoid(-ux[j]);
        mu_hat *= xs.weight;
        est.U += mu_hat;
        est.W += mu_hat * std::log(mu_hat);
    }
    est.U /= static_cast<double>(n_u_samples);
    est.W /= static_cast<double>(n_u_samples);
    return est;
}

// Expected thinned count E_Q[M] = (alpha/beta) * U.
inline double poisson_eta(const MuEstimate& mu, const GammaVar& g) { return g.mean() * mu.U; }

}  // namespace sgcp
