#pragma once

// Variational parameter state and its unconstrained coordinates. The maps
// from free coordinates to constrained parameters are templated on the scalar
// type; the gradient path instantiates them with ad::Var.
//
// The q(u) block is whitened: the free coordinates hold (m~, L~) and the
// model parameters are m = L_zz m~ and L = L_zz L~. K_zz is severely
// ill-conditioned for long lengthscales on dense inducing grids, and
// unwhitened coordinates let the KL gradient K_zz^-1 m grow by the condition
// number, which destabilizes the optimizer. Whitening preconditions exactly
// that term: KL(q||p) = (|L~|_F^2 + |m~|^2 - K)/2 - sum log L~_kk.

#include <cmath>
#include <span>
#include <vector>

#include "sgcp/common.hpp"
#include "sgcp/domain.hpp"
#include "sgcp/gp.hpp"
#include "sgcp/kernel.hpp"
#include "sgcp/variational.hpp"

namespace sgcp {

// Offsets into the flat unconstrained vector:
//   m (K), lower triangle of L row-major with log-diagonal (K(K+1)/2),
//   log alpha, log beta, S-1 weight logits, S*D mean logits, S*D log-stds.
struct ParamLayout {
    int K = 0, S = 0, D = 0;
    int m_off = 0, l_off = 0, alpha_off = 0, beta_off = 0, w_off = 0, mean_off = 0, std_off = 0, total = 0;

    ParamLayout() = default;
    ParamLayout(int k, int s, int d) : K(k), S(s), D(d) {
        m_off = 0;
        l_off = K;
        alpha_off = l_off + K * (K + 1) / 2;
        beta_off = alpha_off + 1;
        w_off = beta_off + 1;
        mean_off = w_off + (S - 1);
        std_off = mean_off + S * D;
        total = std_off + S * D;
    }

    static int ltri(int i, int j) { return i * (i + 1) / 2 + j; }
};

struct FlatParams {
    Vec values;
    ParamLayout layout;
};

template <class T>
struct VParams {
    std::vector<T> m;          // K, materialized L_zz m~
    std::vector<T> L;          // packed lower triangle, row-major, L_zz L~
    std::vector<T> m_white;    // K, whitened coordinates
    std::vector<T> L_white;    // packed lower triangle of L~
    T alpha, beta;
    std::vector<T> weights;    // S
    std::vector<T> mix_means;  // S*D row-major
    std::vector<T> mix_stds;   // S*D
};

namespace detail {

inline double dot_cv(std::span<const double> c, std::span<const double> v) {
    double acc = 0.0;
    for (size_t i = 0; i < v.size(); ++i) acc += c[i] * v[i];
    return acc;
}

inline double dot_vv(std::span<const double> a, std::span<const double> b) { return dot_cv(a, b); }

inline double squared_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return acc;
}

inline double sum(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc;
}

// exp with a hard range so unpacking stays total for any finite coordinates
template <class T>
T exp_bounded(const T& x) {
    using std::exp;
    const double v = value_of(x);
    if (v > 300.0) return T(exp(300.0));
    if (v < -300.0) return T(exp(-300.0));
    return exp(x);
}

template <class T>
VParams<T> unpack_params(std::span<const T> raw, const ParamLayout& lay, const BoxDomain& domain,
                         const RowMat& lzz) {
    using std::exp;
    using std::log;
    VParams<T> p;
    p.m_white.assign(raw.begin() + lay.m_off, raw.begin() + lay.m_off + lay.K);

    p.L_white.resize(lay.K * (lay.K + 1) / 2);
    for (int i = 0; i < lay.K; ++i) {
        for (int j = 0; j <= i; ++j) {
            const T& r = raw[lay.l_off + ParamLayout::ltri(i, j)];
            p.L_white[ParamLayout::ltri(i, j)] = (i == j) ? exp_bounded(r) : r;
        }
    }

    // materialize m = L_zz m~ and L = L_zz L~ (both lower triangular)
    p.m.resize(lay.K);
    p.L.resize(lay.K * (lay.K + 1) / 2);
    for (int i = 0; i < lay.K; ++i) {
        p.m[i] = dot_cv(std::span<const double>(&lzz(i, 0), i + 1), std::span<const T>(p.m_white.data(), i + 1));
        for (int j = 0; j <= i; ++j) {
            // sum_{k=j..i} lzz(i,k) * Lw(k,j)
            T acc(0.0);
            for (int k = j; k <= i; ++k) acc = acc + lzz(i, k) * p.L_white[ParamLayout::ltri(k, j)];
            p.L[ParamLayout::ltri(i, j)] = acc;
        }
    }

    p.alpha = exp_bounded(raw[lay.alpha_off]);
    p.beta = exp_bounded(raw[lay.beta_off]);

    // softmax with the last logit pinned at zero
    p.weights.resize(lay.S);
    double mx = 0.0;
    for (int s = 0; s + 1 < lay.S; ++s) mx = std::max(mx, value_of(raw[lay.w_off + s]));
    T denom(0.0);
    std::vector<T> num(lay.S);
    for (int s = 0; s < lay.S; ++s) {
        const T logit = (s + 1 < lay.S) ? raw[lay.w_off + s] : T(0.0);
        num[s] = exp(logit - mx);
        denom = denom + num[s];
    }
    for (int s = 0; s < lay.S; ++s) p.weights[s] = num[s] / denom;

    p.mix_means.resize(lay.S * lay.D);
    p.mix_stds.resize(lay.S * lay.D);
    for (int s = 0; s < lay.S; ++s) {
        for (int d = 0; d < lay.D; ++d) {
            const double lo = domain.lower()[d], hi = domain.upper()[d];
            const T t = raw[lay.mean_off + s * lay.D + d];
            p.mix_means[s * lay.D + d] = lo + (hi - lo) * sigmoid(t);
            p.mix_stds[s * lay.D + d] = exp_bounded(raw[lay.std_off + s * lay.D + d]);
        }
    }
    return p;
}

}  // namespace detail

// Everything held fixed during one fit.
struct Problem {
    BoxDomain domain;
    KernelParams kernel;
    InducingSet Z;
    GammaVar prior_lambda;
    ParamLayout layout;
    RowMat lzz;  // chol factor of the jittered K_zz, the whitening map

    Problem(BoxDomain dom, KernelParams k, InducingSet z, GammaVar prior, int mixture_components)
        : domain(std::move(dom)),
          kernel(k),
          Z(std::move(z)),
          prior_lambda(prior),
          layout(static_cast<int>(Z.count()), mixture_components, domain.dim()) {
        if (mixture_components < 1) throw config_error("mixture_components must be >= 1");
        if (Z.dim() != domain.dim()) throw config_error("inducing inputs and domain dimension mismatch");
        lzz = chol_with_jitter(gram(Z.Z, Z.Z, kernel)).L;
    }
};

struct ModelState {
    GaussianVar q_u;
    GammaVar q_lambda;
    TruncMixture mixture;
    KernelParams kernel;
    InducingSet Z;
    GammaVar prior_lambda;
    BoxDomain domain;
    Vec raw;  // unconstrained coordinates this state came from; empty if hand-built
};

inline ModelState unpack(const Problem& prob, const Vec& raw) {
    if (raw.size() != prob.layout.total) throw config_error("flat parameter vector has wrong length");
    const auto p = detail::unpack_params(std::span<const double>(raw.data(), raw.size()), prob.layout, prob.domain,
                                         prob.lzz);
    const int k = prob.layout.K, s = prob.layout.S, d = prob.layout.D;

    Vec m(k);
    Mat l = Mat::Zero(k, k);
    for (int i = 0; i < k; ++i) {
        m[i] = p.m[i];
        for (int j = 0; j <= i; ++j) l(i, j) = p.L[ParamLayout::ltri(i, j)];
    }
    Vec w(s);
    Mat mu(s, d), sd(s, d);
    for (int i = 0; i < s; ++i) {
        w[i] = p.weights[i];
        for (int j = 0; j < d; ++j) {
            mu(i, j) = p.mix_means[i * d + j];
            sd(i, j) = p.mix_stds[i * d + j];
        }
    }
    ModelState state{GaussianVar(m, l),
                     GammaVar(p.alpha, p.beta),
                     TruncMixture(w, mu, sd, prob.domain),
                     prob.kernel,
                     prob.Z,
                     prob.prior_lambda,
                     prob.domain,
                     raw};
    return state;
}

inline FlatParams pack(const ModelState& state) {
    const ParamLayout lay(static_cast<int>(state.q_u.size()), static_cast<int>(state.mixture.components()),
                          state.domain.dim());
    if (state.raw.size() == lay.total) return {state.raw, lay};

    Vec raw(lay.total);
    const Mat lzz = chol_with_jitter(gram(state.Z.Z, state.Z.Z, state.kernel)).L;
    const Vec m_white = lzz.triangularView<Eigen::Lower>().solve(state.q_u.m);
    const Mat l_white = lzz.triangularView<Eigen::Lower>().solve(state.q_u.L);
    for (int i = 0; i < lay.K; ++i) {
        raw[lay.m_off + i] = m_white[i];
        for (int j = 0; j <= i; ++j) {
            const double v = l_white(i, j);
            raw[lay.l_off + ParamLayout::ltri(i, j)] = (i == j) ? std::log(v) : v;
        }
    }
    raw[lay.alpha_off] = std::log(state.q_lambda.alpha);
    raw[lay.beta_off] = std::log(state.q_lambda.beta);
    for (int s = 0; s + 1 < lay.S; ++s)
        raw[lay.w_off + s] = std::log(state.mixture.weights[s] / state.mixture.weights[lay.S - 1]);
    for (int s = 0; s < lay.S; ++s) {
        for (int d = 0; d < lay.D; ++d) {
            const double lo = state.domain.lower()[d], hi = state.domain.upper()[d];
            const double frac = (state.mixture.means(s, d) - lo) / (hi - lo);
            raw[lay.mean_off + s * lay.D + d] = std::log(frac / (1.0 - frac));
            raw[lay.std_off + s * lay.D + d] = std::log(state.mixture.stds(s, d));
        }
    }
    return {raw, lay};
}

// Prior-centered initialization: m = 0, L = 0.1 * chol(K_zz) (the whitened
// identity scaled by 0.1), (alpha, beta) at the prior, mixture means on a
// uniform lattice with stds a quarter of each side length, uniform weights.
inline Vec initial_params(const Problem& prob) {
    const ParamLayout& lay = prob.layout;
    Vec raw = Vec::Zero(lay.total);

    for (int i = 0; i < lay.K; ++i)
        raw[lay.l_off + ParamLayout::ltri(i, i)] = std::log(0.1);

    raw[lay.alpha_off] = std::log(prob.prior_lambda.alpha);
    raw[lay.beta_off] = std::log(prob.prior_lambda.beta);

    int per_dim = 1;
    while (std::pow(per_dim, lay.D) < lay.S) ++per_dim;
    const IntegrationSet lattice = grid(prob.domain, per_dim);
    for (int s = 0; s < lay.S; ++s) {
        const Eigen::Index pick = (s * lattice.count()) / lay.S;
        for (int d = 0; d < lay.D; ++d) {
            const double lo = prob.domain.lower()[d], hi = prob.domain.upper()[d];
            const double frac = (lattice.points(pick, d) - lo) / (hi - lo);
            raw[lay.mean_off + s * lay.D + d] = std::log(frac / (1.0 - frac));
            raw[lay.std_off + s * lay.D + d] = std::log(0.25 * (hi - lo));
        }
    }
    return raw;
}

}  // namespace sgcp
