#pragma once

// Sparse-GP machinery: variational Gaussian over inducing values, predictive
// projection q(f) with diagonal covariance, reparameterized sampling and the
// Gaussian KL against the inducing prior.

#include <cmath>

#include "sgcp/common.hpp"
#include "sgcp/kernel.hpp"
#include "sgcp/rng.hpp"

namespace sgcp {

// q(u) = N(m, L L^T) with L lower-triangular and strictly positive diagonal.
struct GaussianVar {
    Vec m;
    Mat L;

    GaussianVar(Vec mean, Mat chol_factor) : m(std::move(mean)), L(std::move(chol_factor)) {
        if (m.size() != L.rows() || L.rows() != L.cols())
            throw config_error("GaussianVar requires m of length K and L of shape K x K");
        for (Eigen::Index k = 0; k < L.rows(); ++k)
            if (!(L(k, k) > 0.0)) throw config_error("GaussianVar requires strictly positive diagonal in L");
    }

    Eigen::Index size() const { return m.size(); }
    Mat covariance() const { return L * L.transpose(); }
};

inline GaussianVar prior_var(const InducingSet& Z, const KernelParams& params) {
    const Mat kzz = gram(Z.Z, Z.Z, params);
    return GaussianVar(Vec::Zero(Z.count()), chol_with_jitter(kzz).L);
}

struct GpProjection {
    Mat A;               // P x K, K_xz K_zz^-1
    Vec prior_var_diag;  // diag(K_xx - A K_zx), clamped at 0
    Vec mean;            // A m
    Vec post_var_diag;   // prior_var_diag + diag(A S A^T)
    int clamped = 0;     // entries of prior_var_diag clamped to 0
    bool clamp_warning = false;  // raised when more than 1% of points clamp
};

inline GpProjection project(const Eigen::Ref<const Mat>& points, const InducingSet& Z, const KernelParams& params,
                            const GaussianVar& q_u) {
    const Mat kxz = gram(points, Z.Z, params);
    const Mat lzz = chol_with_jitter(gram(Z.Z, Z.Z, params)).L;

    GpProjection proj;
    // A^T = K_zz^-1 K_zx via two triangular solves against the factor.
    Mat at = lzz.triangularView<Eigen::Lower>().solve(kxz.transpose());
    proj.prior_var_diag = Vec::Constant(points.rows(), params.variance) - at.colwise().squaredNorm().transpose();
    lzz.transpose().triangularView<Eigen::Upper>().solveInPlace(at);
    proj.A = at.transpose();

    for (Eigen::Index i = 0; i < proj.prior_var_diag.size(); ++i) {
        if (proj.prior_var_diag[i] < 0.0) {
            proj.prior_var_diag[i] = 0.0;
            ++proj.clamped;
        }
    }
    proj.clamp_warning = proj.clamped * 100 > points.rows();

    proj.mean = proj.A * q_u.m;
    const Mat al = proj.A * q_u.L;
    proj.post_var_diag = proj.prior_var_diag + al.rowwise().squaredNorm();
    return proj;
}

// Diagonal reparameterization: one standard normal per (draw, point).
inline Mat sample_f(const GpProjection& proj, std::int64_t draws, Rng& rng) {
    if (draws < 1) throw std::invalid_argument("sample_f requires draws >= 1");
    const Eigen::Index p = proj.mean.size();
    Mat out(draws, p);
    const Vec sd = proj.post_var_diag.cwiseMax(0.0).cwiseSqrt();
    for (std::int64_t s = 0; s < draws; ++s)
        for (Eigen::Index i = 0; i < p; ++i) out(s, i) = proj.mean[i] + sd[i] * rng.normal();
    return out;
}

// KL(q(u) || N(0, K_zz)); the prior uses the same jittered factorization as
// every other consumer of K_zz.
inline double kl_gaussian(const GaussianVar& q_u, const InducingSet& Z, const KernelParams& params) {
    const Eigen::Index k = q_u.size();
    const Mat lzz = chol_with_jitter(gram(Z.Z, Z.Z, params)).L;

    const Mat w = lzz.triangularView<Eigen::Lower>().solve(q_u.L);  // K_zz^-1/2 L
    const double trace_term = w.squaredNorm();
    const Vec v = lzz.triangularView<Eigen::Lower>().solve(q_u.m);
    const double maha = v.squaredNorm();
    double logdet_kzz = 0.0, logdet_s = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
        logdet_kzz += 2.0 * std::log(lzz(i, i));
        logdet_s += 2.0 * std::log(q_u.L(i, i));
    }
    return 0.5 * (trace_term + maha - static_cast<double>(k) + logdet_kzz - logdet_s);
}

// One joint GP prior draw at an arbitrary finite point set (used by the
// ground-truth simulator).
inline Vec sample_gp_path(const Eigen::Ref<const Mat>& points, const KernelParams& params, Rng& rng) {
    if (points.rows() == 0) return Vec();
    const Mat l = chol_with_jitter(gram(points, points, params)).L;
    Vec eps(points.rows());
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
    return l.triangularView<Eigen::Lower>() * eps;
}

}  // namespace sgcp
