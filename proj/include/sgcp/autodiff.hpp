#pragma once

// Minimal reverse-mode tape over scalars. The ELBO estimator is written as a
// template over its scalar type; instantiating it with ad::Var records every
// operation here and one backward sweep yields the full parameter gradient.
// Partials are computed at forward time, so backward is a single CSR pass.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "sgcp/special.hpp"

namespace sgcp::ad {

class Tape {
   public:
    Tape() { edge_start_.push_back(0); }

    std::int32_t size() const { return static_cast<std::int32_t>(edge_start_.size()) - 1; }

    void clear() {
        edge_start_.clear();
        edge_start_.push_back(0);
        parents_.clear();
        partials_.clear();
    }

    std::int32_t leaf() {
        edge_start_.push_back(static_cast<std::uint32_t>(parents_.size()));
        return size() - 1;
    }

    std::int32_t node1(std::int32_t p, double d) {
        if (p >= 0) {
            parents_.push_back(p);
            partials_.push_back(d);
        }
        edge_start_.push_back(static_cast<std::uint32_t>(parents_.size()));
        return size() - 1;
    }

    std::int32_t node2(std::int32_t p0, double d0, std::int32_t p1, double d1) {
        if (p0 >= 0) {
            parents_.push_back(p0);
            partials_.push_back(d0);
        }
        if (p1 >= 0) {
            parents_.push_back(p1);
            partials_.push_back(d1);
        }
        edge_start_.push_back(static_cast<std::uint32_t>(parents_.size()));
        return size() - 1;
    }

    // n-ary node: stage edges with add_edge, then seal with end_node.
    void add_edge(std::int32_t p, double d) {
        if (p >= 0) {
            parents_.push_back(p);
            partials_.push_back(d);
        }
    }

    std::int32_t end_node() {
        edge_start_.push_back(static_cast<std::uint32_t>(parents_.size()));
        return size() - 1;
    }

    // Adjoints of every node with respect to the output node.
    std::vector<double> backward(std::int32_t output) const {
        std::vector<double> adj(size(), 0.0);
        adj[output] = 1.0;
        for (std::int32_t i = output; i >= 0; --i) {
            const double a = adj[i];
            if (a == 0.0) continue;
            for (std::uint32_t e = edge_start_[i]; e < edge_start_[i + 1]; ++e) adj[parents_[e]] += a * partials_[e];
        }
        return adj;
    }

   private:
    std::vector<std::uint32_t> edge_start_;
    std::vector<std::int32_t> parents_;
    std::vector<double> partials_;
};

struct Var {
    double v = 0.0;
    std::int32_t idx = -1;  // -1 marks a constant
    Tape* tape = nullptr;

    Var() = default;
    Var(double value) : v(value) {}
    Var(double value, std::int32_t i, Tape* t) : v(value), idx(i), tape(t) {}

    bool is_const() const { return idx < 0; }
};

inline double value_of(const Var& x) { return x.v; }

inline Var make_leaf(Tape& tape, double value) { return Var(value, tape.leaf(), &tape); }

namespace detail {
inline Tape* tape_of(const Var& a, const Var& b) { return a.tape ? a.tape : b.tape; }
}  // namespace detail

inline Var operator+(const Var& a, const Var& b) {
    Tape* t = detail::tape_of(a, b);
    if (!t) return Var(a.v + b.v);
    return Var(a.v + b.v, t->node2(a.idx, 1.0, b.idx, 1.0), t);
}
inline Var operator+(const Var& a, double b) {
    if (!a.tape) return Var(a.v + b);
    return Var(a.v + b, a.tape->node1(a.idx, 1.0), a.tape);
}
inline Var operator+(double a, const Var& b) { return b + a; }

inline Var operator-(const Var& a, const Var& b) {
    Tape* t = detail::tape_of(a, b);
    if (!t) return Var(a.v - b.v);
    return Var(a.v - b.v, t->node2(a.idx, 1.0, b.idx, -1.0), t);
}
inline Var operator-(const Var& a, double b) {
    if (!a.tape) return Var(a.v - b);
    return Var(a.v - b, a.tape->node1(a.idx, 1.0), a.tape);
}
inline Var operator-(double a, const Var& b) {
    if (!b.tape) return Var(a - b.v);
    return Var(a - b.v, b.tape->node1(b.idx, -1.0), b.tape);
}
inline Var operator-(const Var& a) { return 0.0 - a; }

inline Var operator*(const Var& a, const Var& b) {
    Tape* t = detail::tape_of(a, b);
    if (!t) return Var(a.v * b.v);
    return Var(a.v * b.v, t->node2(a.idx, b.v, b.idx, a.v), t);
}
inline Var operator*(const Var& a, double b) {
    if (!a.tape) return Var(a.v * b);
    return Var(a.v * b, a.tape->node1(a.idx, b), a.tape);
}
inline Var operator*(double a, const Var& b) { return b * a; }

inline Var operator/(const Var& a, const Var& b) {
    Tape* t = detail::tape_of(a, b);
    if (!t) return Var(a.v / b.v);
    const double inv = 1.0 / b.v;
    return Var(a.v * inv, t->node2(a.idx, inv, b.idx, -a.v * inv * inv), t);
}
inline Var operator/(const Var& a, double b) { return a * (1.0 / b); }
inline Var operator/(double a, const Var& b) {
    if (!b.tape) return Var(a / b.v);
    const double inv = 1.0 / b.v;
    return Var(a * inv, b.tape->node1(b.idx, -a * inv * inv), b.tape);
}

inline Var exp(const Var& x) {
    const double e = std::exp(x.v);
    if (!x.tape) return Var(e);
    return Var(e, x.tape->node1(x.idx, e), x.tape);
}

inline Var log(const Var& x) {
    const double l = std::log(x.v);
    if (!x.tape) return Var(l);
    return Var(l, x.tape->node1(x.idx, 1.0 / x.v), x.tape);
}

inline Var log1p(const Var& x) {
    const double l = std::log1p(x.v);
    if (!x.tape) return Var(l);
    return Var(l, x.tape->node1(x.idx, 1.0 / (1.0 + x.v)), x.tape);
}

inline Var sqrt(const Var& x) {
    const double s = std::sqrt(x.v);
    if (!x.tape) return Var(s);
    return Var(s, x.tape->node1(x.idx, 0.5 / s), x.tape);
}

inline Var sigmoid(const Var& x) {
    const double s = sgcp::sigmoid(x.v);
    if (!x.tape) return Var(s);
    return Var(s, x.tape->node1(x.idx, s * (1.0 - s)), x.tape);
}

inline Var softplus(const Var& x) {
    const double s = sgcp::softplus(x.v);
    if (!x.tape) return Var(s);
    return Var(s, x.tape->node1(x.idx, sgcp::sigmoid(x.v)), x.tape);
}

inline Var log_sigmoid(const Var& x) {
    const double s = sgcp::log_sigmoid(x.v);
    if (!x.tape) return Var(s);
    return Var(s, x.tape->node1(x.idx, sgcp::sigmoid(-x.v)), x.tape);
}

inline Var normal_cdf(const Var& x) {
    const double c = sgcp::normal_cdf(x.v);
    if (!x.tape) return Var(c);
    return Var(c, x.tape->node1(x.idx, sgcp::normal_pdf(x.v)), x.tape);
}

// dz/dp = 1 / phi(z); finite for p in the clamped quantile range.
inline Var normal_quantile(const Var& p) {
    const double z = sgcp::normal_quantile(p.v);
    if (!p.tape) return Var(z);
    return Var(z, p.tape->node1(p.idx, 1.0 / sgcp::normal_pdf(z)), p.tape);
}

inline Var normal_logpdf(const Var& x) { return -0.5 * x * x - 0.9189385332046727; }

inline Var digamma(const Var& x) {
    const double d = sgcp::digamma(x.v);
    if (!x.tape) return Var(d);
    return Var(d, x.tape->node1(x.idx, sgcp::trigamma(x.v)), x.tape);
}

inline Var lgamma(const Var& x) {
    const double l = std::lgamma(x.v);
    if (!x.tape) return Var(l);
    return Var(l, x.tape->node1(x.idx, sgcp::digamma(x.v)), x.tape);
}

// ---- fused multi-edge helpers ----

// dot(constants, vars)
inline Var dot_cv(std::span<const double> c, std::span<const Var> v) {
    double acc = 0.0;
    Tape* t = nullptr;
    for (size_t i = 0; i < v.size(); ++i) {
        acc += c[i] * v[i].v;
        if (v[i].tape) t = v[i].tape;
    }
    if (!t) return Var(acc);
    for (size_t i = 0; i < v.size(); ++i) t->add_edge(v[i].idx, c[i]);
    return Var(acc, t->end_node(), t);
}

inline Var dot_vv(std::span<const Var> a, std::span<const Var> b) {
    double acc = 0.0;
    Tape* t = nullptr;
    for (size_t i = 0; i < a.size(); ++i) {
        acc += a[i].v * b[i].v;
        if (a[i].tape) t = a[i].tape;
        if (b[i].tape) t = b[i].tape;
    }
    if (!t) return Var(acc);
    for (size_t i = 0; i < a.size(); ++i) {
        t->add_edge(a[i].idx, b[i].v);
        t->add_edge(b[i].idx, a[i].v);
    }
    return Var(acc, t->end_node(), t);
}

inline Var squared_norm(std::span<const Var> v) {
    double acc = 0.0;
    Tape* t = nullptr;
    for (const Var& x : v) {
        acc += x.v * x.v;
        if (x.tape) t = x.tape;
    }
    if (!t) return Var(acc);
    for (const Var& x : v) t->add_edge(x.idx, 2.0 * x.v);
    return Var(acc, t->end_node(), t);
}

inline Var sum(std::span<const Var> v) {
    double acc = 0.0;
    Tape* t = nullptr;
    for (const Var& x : v) {
        acc += x.v;
        if (x.tape) t = x.tape;
    }
    if (!t) return Var(acc);
    for (const Var& x : v) t->add_edge(x.idx, 1.0);
    return Var(acc, t->end_node(), t);
}

}  // namespace sgcp::ad
