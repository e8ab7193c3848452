#pragma once

// Truncated-normal primitives, templated on the scalar type so the same
// formulas serve plain evaluation and reverse-mode gradients. Sampling is by
// inverse CDF (no rejection) to keep draws reparameterizable in (mu, sd).

#include <algorithm>
#include <cmath>

#include "sgcp/special.hpp"

namespace sgcp {

inline double value_of(double x) { return x; }

namespace detail {

// Clamp a CDF value into the range where AS 241 and 1/phi stay finite.
inline constexpr double kQuantilePMin = 1e-290;
inline constexpr double kQuantilePMax = 1.0 - 1e-15;

}  // namespace detail

// Quantile of N(mu, sd^2) truncated to [lo, hi], evaluated at v in (0,1).
template <class T>
T trunc_normal_quantile(double v, const T& mu, const T& sd, double lo, double hi) {
    using std::max;
    using std::min;
    const T a = (lo - mu) / sd;
    const T b = (hi - mu) / sd;
    const T fa = normal_cdf(a);
    const T fb = normal_cdf(b);
    T p = fa + v * (fb - fa);
    if (value_of(p) < detail::kQuantilePMin) p = p + (detail::kQuantilePMin - value_of(p));
    if (value_of(p) > detail::kQuantilePMax) p = p - (value_of(p) - detail::kQuantilePMax);
    const T z = normal_quantile(p);
    T y = mu + sd * z;
    // roundoff guard; v in (0,1) already keeps y strictly interior
    if (!(value_of(y) > lo)) y = y + (std::nextafter(lo, hi) - value_of(y));
    if (!(value_of(y) < hi)) y = y - (value_of(y) - std::nextafter(hi, lo));
    return y;
}

// log density at x of N(mu, sd^2) truncated to [lo, hi].
template <class T, class X>
auto trunc_normal_logpdf(const X& x, const T& mu, const T& sd, double lo, double hi) {
    using std::log;
    const auto z = (x - mu) / sd;
    const T a = (lo - mu) / sd;
    const T b = (hi - mu) / sd;
    const T norm = normal_cdf(b) - normal_cdf(a);
    return normal_logpdf(z) - log(sd) - log(norm);
}

}  // namespace sgcp
