#pragma once

// Shared oracle machinery for the test suites. Everything here is independent
// of the library code paths it is used to check: quadrature, chi-square
// goodness of fit, Gauss-Hermite quadrature, and exact Poisson series.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace testsup {

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
    double se = 0.0;
};

inline MeanSd mean_sd(const std::vector<double>& xs) {
    MeanSd out;
    const double n = static_cast<double>(xs.size());
    for (double x : xs) out.mean += x;
    out.mean /= n;
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.sd = std::sqrt(ss / std::max(1.0, n - 1.0));
    out.se = out.sd / std::sqrt(n);
    return out;
}

// 1-D midpoint-rule integral, independent of the library's IntegrationSet.
inline double integrate_midpoint(const std::function<double(double)>& f, double lo, double hi, int n = 200000) {
    const double h = (hi - lo) / n;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += f(lo + (i + 0.5) * h);
    return acc * h;
}

// Regularized lower incomplete gamma P(a, x) via series / continued fraction.
inline double gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    if (x == 0.0) return 0.0;
    const double gln = std::lgamma(a);
    if (x < a + 1.0) {
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
        }
        return sum * std::exp(-x + a * std::log(x) - gln);
    }
    double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::fabs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return 1.0 - std::exp(-x + a * std::log(x) - gln) * h;
}

inline double chi_square_sf(double stat, int dof) { return 1.0 - gamma_p(dof / 2.0, stat / 2.0); }

inline double poisson_pmf(int k, double mean) {
    return std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0));
}

// Chi-square GOF of integer samples against Poisson(mean); bins are merged so
// each expected count is at least 5. Returns the p-value.
inline double poisson_gof_pvalue(const std::vector<int>& samples, double mean) {
    const int kmax = static_cast<int>(mean + 12.0 * std::sqrt(mean) + 20.0);
    std::vector<double> expected(kmax + 2, 0.0);
    std::vector<double> observed(kmax + 2, 0.0);
    for (int k = 0; k <= kmax; ++k) expected[k] = poisson_pmf(k, mean) * samples.size();
    double tail = static_cast<double>(samples.size());
    for (int k = 0; k <= kmax; ++k) tail -= expected[k];
    expected[kmax + 1] = std::max(tail, 0.0);
    for (int s : samples) observed[std::min(s, kmax + 1)] += 1.0;

    // merge low-expectation bins left to right
    std::vector<double> eb, ob;
    double ce = 0.0, co = 0.0;
    for (size_t k = 0; k < expected.size(); ++k) {
        ce += expected[k];
        co += observed[k];
        if (ce >= 5.0) {
            eb.push_back(ce);
            ob.push_back(co);
            ce = co = 0.0;
        }
    }
    if (ce > 0.0 && !eb.empty()) {
        eb.back() += ce;
        ob.back() += co;
    }
    double stat = 0.0;
    for (size_t i = 0; i < eb.size(); ++i) stat += (ob[i] - eb[i]) * (ob[i] - eb[i]) / eb[i];
    const int dof = static_cast<int>(eb.size()) - 1;
    return chi_square_sf(stat, std::max(dof, 1));
}

// Kolmogorov-Smirnov statistic against a given CDF.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max(d, std::fabs(f - (i + 1) / n));
        d = std::max(d, std::fabs(f - i / n));
    }
    return d;
}

// Gauss-Hermite nodes/weights by Golub-Welsch on the Jacobi matrix; computes
// E[g(X)] for X ~ N(mean, var).
struct GaussHermite {
    Eigen::VectorXd nodes, weights;

    explicit GaussHermite(int n) {
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
        for (int i = 1; i < n; ++i) {
            const double off = std::sqrt(i / 2.0);
            jac(i, i - 1) = off;
            jac(i - 1, i) = off;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
        nodes = es.eigenvalues();
        weights.resize(n);
        const double sqrt_pi = std::sqrt(M_PI);
        for (int i = 0; i < n; ++i) {
            const double v0 = es.eigenvectors()(0, i);
            weights[i] = sqrt_pi * v0 * v0;
        }
    }

    double expect(const std::function<double(double)>& g, double mean, double var) const {
        const double scale = std::sqrt(2.0 * var);
        double acc = 0.0;
        for (int i = 0; i < nodes.size(); ++i) acc += weights[i] * g(mean + scale * nodes[i]);
        return acc / std::sqrt(M_PI);
    }
};

// Exact E[M log M] for M ~ Poisson(eta), series truncated at tail mass < 1e-12.
inline double poisson_m_log_m(double eta) {
    double pmf = std::exp(-eta);  // m = 0
    double cum = pmf;
    double acc = 0.0;
    for (int m = 1; m < 100000; ++m) {
        pmf *= eta / m;
        cum += pmf;
        if (m >= 2) acc += pmf * m * std::log(static_cast<double>(m));
        if (1.0 - cum < 1e-12 && m > eta + 5.0) break;
    }
    return acc;
}

// Exact E[log M!] for M ~ Poisson(eta), same truncation rule.
inline double poisson_mean_log_factorial(double eta) {
    double pmf = std::exp(-eta);
    double cum = pmf;
    double acc = 0.0;
    for (int m = 1; m < 100000; ++m) {
        pmf *= eta / m;
        cum += pmf;
        acc += pmf * std::lgamma(m + 1.0);
        if (1.0 - cum < 1e-12 && m > eta + 5.0) break;
    }
    return acc;
}

}  // namespace testsup
