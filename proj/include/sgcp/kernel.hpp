#pragma once

// Squared-exponential kernel, Gram assembly and the jittered Cholesky used
// everywhere a kernel matrix has to be factorized.

#include <cmath>
#include <string>

#include "sgcp/common.hpp"

namespace sgcp {

struct KernelParams {
    double lengthscale = 1.0;  // shared across input dimensions
    double variance = 1.0;     // signal variance sigma_f^2

    KernelParams() = default;
    KernelParams(double l, double var) : lengthscale(l), variance(var) {
        if (!(lengthscale > 0.0) || !(variance > 0.0))
            throw config_error("kernel requires positive lengthscale and variance");
    }
};

struct InducingSet {
    Mat Z;  // K x D

    explicit InducingSet(Mat z) : Z(std::move(z)) {
        if (Z.rows() < 1) throw config_error("inducing set requires K >= 1");
        for (Eigen::Index i = 0; i < Z.rows(); ++i)
            for (Eigen::Index j = i + 1; j < Z.rows(); ++j)
                if ((Z.row(i) - Z.row(j)).norm() == 0.0)
                    throw config_error("inducing inputs must be pairwise distinct");
    }

    Eigen::Index count() const { return Z.rows(); }
    int dim() const { return static_cast<int>(Z.cols()); }
};

inline double kernel_eval(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& x2,
                          const KernelParams& params) {
    const double d2 = (x - x2).squaredNorm();
    return params.variance * std::exp(-0.5 * d2 / (params.lengthscale * params.lengthscale));
}

inline Mat gram(const Eigen::Ref<const Mat>& points_a, const Eigen::Ref<const Mat>& points_b,
                const KernelParams& params) {
    Mat out(points_a.rows(), points_b.rows());
    const double inv2l2 = 0.5 / (params.lengthscale * params.lengthscale);
    for (Eigen::Index i = 0; i < points_a.rows(); ++i)
        for (Eigen::Index j = 0; j < points_b.rows(); ++j)
            out(i, j) = params.variance * std::exp(-(points_a.row(i) - points_b.row(j)).squaredNorm() * inv2l2);
    return out;
}

struct CholResult {
    Mat L;          // lower-triangular factor of M + jitter * I
    double jitter;  // final jitter actually added (0 if none was needed)
};

// Escalates jitter from 1e-8 * mean(diag) by factors of 10 up to 1e-2 * mean(diag).
inline CholResult chol_with_jitter(const Eigen::Ref<const Mat>& M) {
    if (M.rows() != M.cols()) throw numeric_error("chol_with_jitter requires a square matrix");
    const double mean_diag = M.diagonal().mean();
    const double scale = (mean_diag > 0.0) ? mean_diag : 1.0;

    Eigen::LLT<Mat> llt(M);
    if (llt.info() == Eigen::Success) return {Mat(llt.matrixL()), 0.0};

    for (double rel = 1e-8; rel <= 1e-2 * (1.0 + 1e-12); rel *= 10.0) {
        const double jitter = rel * scale;
        Mat Mj = M;
        Mj.diagonal().array() += jitter;
        llt.compute(Mj);
        if (llt.info() == Eigen::Success) return {Mat(llt.matrixL()), jitter};
    }
    throw numeric_error("matrix is numerically singular (cholesky failed at jitter " +
                        std::to_string(1e-2 * scale) + ")");
}

}  // namespace sgcp
