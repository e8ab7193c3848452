#pragma once

// Axis-aligned observation window plus the fixed point sets used by the
// Monte Carlo and midpoint-rule integrators.

#include <cstdint>
#include <string>

#include "sgcp/common.hpp"
#include "sgcp/rng.hpp"

namespace sgcp {

class BoxDomain {
   public:
    BoxDomain(Vec lower, Vec upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
        if (lower_.size() == 0 || lower_.size() != upper_.size())
            throw data_error("domain bounds must be nonempty and of equal dimension");
        for (Eigen::Index d = 0; d < lower_.size(); ++d) {
            if (!(lower_[d] < upper_[d]))
                throw data_error("domain requires lower[d] < upper[d] at dimension " + std::to_string(d));
        }
        volume_ = (upper_ - lower_).prod();
        if (!std::isfinite(volume_) || volume_ <= 0.0) throw data_error("domain volume must be finite and positive");
    }

    int dim() const { return static_cast<int>(lower_.size()); }
    const Vec& lower() const { return lower_; }
    const Vec& upper() const { return upper_; }
    double volume() const { return volume_; }

    bool contains(const Eigen::Ref<const Vec>& x) const {
        if (x.size() != lower_.size()) return false;
        for (Eigen::Index d = 0; d < lower_.size(); ++d)
            if (x[d] < lower_[d] || x[d] > upper_[d]) return false;
        return true;
    }

    bool operator==(const BoxDomain& o) const { return lower_ == o.lower_ && upper_ == o.upper_; }

   private:
    Vec lower_, upper_;
    double volume_ = 0.0;
};

// J locations with the single shared weight volume/J, so that integrating the
// constant 1 recovers the volume exactly.
struct IntegrationSet {
    Mat points;     // J x D
    double weight;  // volume / J

    Eigen::Index count() const { return points.rows(); }
};

inline double volume(const BoxDomain& domain) { return domain.volume(); }

inline IntegrationSet sample_uniform(const BoxDomain& domain, std::int64_t count, Rng& rng) {
    if (count < 1) throw std::invalid_argument("sample_uniform requires count >= 1");
    Mat pts(count, domain.dim());
    for (std::int64_t j = 0; j < count; ++j)
        for (int d = 0; d < domain.dim(); ++d) pts(j, d) = rng.uniform(domain.lower()[d], domain.upper()[d]);
    return IntegrationSet{std::move(pts), domain.volume() / static_cast<double>(count)};
}

// Midpoint lattice with per_dim points along every axis.
inline IntegrationSet grid(const BoxDomain& domain, std::int64_t per_dim) {
    if (per_dim < 1) throw std::invalid_argument("grid requires per_dim >= 1");
    const int dim = domain.dim();
    std::int64_t total = 1;
    for (int d = 0; d < dim; ++d) {
        if (total > (std::int64_t{1} << 40) / per_dim)
            throw std::invalid_argument("grid size per_dim^D is not representable");
        total *= per_dim;
    }
    Mat pts(total, dim);
    for (std::int64_t j = 0; j < total; ++j) {
        std::int64_t rem = j;
        for (int d = 0; d < dim; ++d) {
            const std::int64_t idx = rem % per_dim;
            rem /= per_dim;
            const double step = (domain.upper()[d] - domain.lower()[d]) / static_cast<double>(per_dim);
            pts(j, d) = domain.lower()[d] + (static_cast<double>(idx) + 0.5) * step;
        }
    }
    return IntegrationSet{std::move(pts), domain.volume() / static_cast<double>(total)};
}

}  // namespace sgcp
