#pragma once

// Exact group-algebra primitives for the supported stratified Lie groups:
// the Heisenberg groups H^n (step 2) and the abelian groups R^d (step 1).
// Points are stored in ambient coordinates ordered by strata; for H^n that is
// (x_1..x_n, y_1..y_n, t).

#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "carnot/errors.hpp"

namespace carnot {

enum class GroupKind { heisenberg, abelian };

struct GroupSpec {
    GroupKind kind = GroupKind::abelian;
    int param = 1;                // n for H^n, d for R^d
    std::vector<int> strata;      // stratum dimensions n_1..n_k
    int topological_dim = 1;      // sum of strata
    int homogeneous_dim = 1;      // Q = sum of i * n_i

    static GroupSpec heisenberg(int n) {
        if (n < 1) throw std::invalid_argument("heisenberg: n must be >= 1");
        GroupSpec s;
        s.kind = GroupKind::heisenberg;
        s.param = n;
        s.strata = {2 * n, 1};
        s.topological_dim = 2 * n + 1;
        s.homogeneous_dim = 2 * n + 2;
        return s;
    }

    static GroupSpec abelian(int d) {
        if (d < 1) throw std::invalid_argument("abelian: d must be >= 1");
        GroupSpec s;
        s.kind = GroupKind::abelian;
        s.param = d;
        s.strata = {d};
        s.topological_dim = d;
        s.homogeneous_dim = d;
        return s;
    }

    bool operator==(const GroupSpec& o) const {
        return kind == o.kind && param == o.param;
    }
};

inline int homogeneous_dimension(const GroupSpec& spec) { return spec.homogeneous_dim; }

using GroupPoint = std::vector<double>;

namespace detail {

inline void check_dim(const GroupSpec& spec, std::span<const double> p, const char* op) {
    if (static_cast<int>(p.size()) != spec.topological_dim)
        throw std::invalid_argument(std::string(op) + ": point has " + std::to_string(p.size()) +
                                    " coordinates, expected " + std::to_string(spec.topological_dim));
}

} // namespace detail

/// out = p o q. For H^n: (a,b,c) o (a',b',c') = (a+a', b+b', c+c' + (a.b' - b.a')/2).
inline void multiply_into(const GroupSpec& spec, std::span<const double> p,
                          std::span<const double> q, std::span<double> out) {
    detail::check_dim(spec, p, "multiply");
    detail::check_dim(spec, q, "multiply");
    detail::check_dim(spec, std::span<const double>(out.data(), out.size()), "multiply");
    const int dim = spec.topological_dim;
    if (spec.kind == GroupKind::abelian) {
        for (int i = 0; i < dim; ++i) out[i] = p[i] + q[i];
        return;
    }
    const int n = spec.param;
    double twist = 0.0;
    for (int i = 0; i < n; ++i) twist += p[i] * q[n + i] - p[n + i] * q[i];
    for (int i = 0; i < 2 * n; ++i) out[i] = p[i] + q[i];
    out[2 * n] = p[2 * n] + q[2 * n] + 0.5 * twist;
}

/// out = p^{-1} = -p (valid for both supported groups).
inline void inverse_into(const GroupSpec& spec, std::span<const double> p, std::span<double> out) {
    detail::check_dim(spec, p, "inverse");
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = -p[i];
}

/// Homogeneous quasi-norm: Koranyi gauge [(|a|^2+|b|^2)^2 + c^2]^{1/4} on H^n,
/// Euclidean norm on R^d.
inline double koranyi_norm(const GroupSpec& spec, std::span<const double> p) {
    detail::check_dim(spec, p, "koranyi_norm");
    if (spec.kind == GroupKind::abelian) {
        double s = 0.0;
        for (double v : p) s += v * v;
        return std::sqrt(s);
    }
    const int n = spec.param;
    double horiz = 0.0;
    for (int i = 0; i < 2 * n; ++i) horiz += p[i] * p[i];
    const double c = p[2 * n];
    return std::pow(horiz * horiz + c * c, 0.25);
}

/// Gauge of the left difference |q^{-1} o p| without forming intermediates.
/// This is the distance entering the fractional kernel |y^{-1}.x|^{-(Q+2s)}.
inline double gauge_of_left_difference(const GroupSpec& spec, std::span<const double> p,
                                       std::span<const double> q) {
    if (spec.kind == GroupKind::abelian) {
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double d = p[i] - q[i];
            s += d * d;
        }
        return std::sqrt(s);
    }
    const int n = spec.param;
    double horiz = 0.0;
    double twist = 0.0;
    for (int i = 0; i < n; ++i) {
        const double dx = p[i] - q[i];
        const double dy = p[n + i] - q[n + i];
        horiz += dx * dx + dy * dy;
        twist += p[i] * q[n + i] - p[n + i] * q[i];
    }
    const double tau = p[2 * n] - q[2 * n] + 0.5 * twist;
    return std::pow(horiz * horiz + tau * tau, 0.25);
}

/// Anisotropic dilation T_delta: stratum i scales by delta^i.
inline void dilate_into(const GroupSpec& spec, double delta, std::span<const double> p,
                        std::span<double> out) {
    if (!(delta > 0.0)) throw std::domain_error("dilate: delta must be positive");
    detail::check_dim(spec, p, "dilate");
    int offset = 0;
    double factor = 1.0;
    for (int stratum : spec.strata) {
        factor *= delta;
        for (int i = 0; i < stratum; ++i) out[offset + i] = factor * p[offset + i];
        offset += stratum;
    }
}

inline GroupPoint multiply(const GroupSpec& spec, const GroupPoint& p, const GroupPoint& q) {
    GroupPoint out(spec.topological_dim);
    multiply_into(spec, p, q, out);
    return out;
}

inline GroupPoint inverse(const GroupSpec& spec, const GroupPoint& p) {
    GroupPoint out(spec.topological_dim);
    inverse_into(spec, p, out);
    return out;
}

inline GroupPoint dilate(const GroupSpec& spec, double delta, const GroupPoint& p) {
    GroupPoint out(spec.topological_dim);
    dilate_into(spec, delta, p, out);
    return out;
}

inline double koranyi_norm(const GroupSpec& spec, const GroupPoint& p) {
    return koranyi_norm(spec, std::span<const double>(p));
}

/// Names a left-invariant field X_i, Y_i, Z, or the dilation generator
/// Z-bar = sum_j sum_i j * x_i^{(j)} d/dx_i^{(j)}.
struct FieldId {
    enum class Kind { x, y, z, dilation };
    Kind kind = Kind::x;
    int index = 0; // 0-based, used by x and y only

    static FieldId X(int i) { return {Kind::x, i}; }
    static FieldId Y(int i) { return {Kind::y, i}; }
    static FieldId Z() { return {Kind::z, 0}; }
    static FieldId dilation_generator() { return {Kind::dilation, 0}; }
};

/// First-order coefficient vector of the field at p in ambient coordinates.
/// On H^n: X_i = d/dx_i - (y_i/2) d/dt, Y_i = d/dy_i + (x_i/2) d/dt, Z = d/dt.
inline GroupPoint vector_field_coeffs(const GroupSpec& spec, FieldId field,
                                      std::span<const double> p) {
    detail::check_dim(spec, p, "vector_field_coeffs");
    const int dim = spec.topological_dim;
    GroupPoint coeffs(dim, 0.0);
    if (spec.kind == GroupKind::abelian) {
        switch (field.kind) {
        case FieldId::Kind::x:
            if (field.index < 0 || field.index >= spec.param)
                throw std::invalid_argument("vector_field_coeffs: X index out of range");
            coeffs[field.index] = 1.0;
            return coeffs;
        case FieldId::Kind::dilation:
            for (int i = 0; i < dim; ++i) coeffs[i] = p[i];
            return coeffs;
        default:
            throw std::invalid_argument("vector_field_coeffs: field not defined on abelian group");
        }
    }
    const int n = spec.param;
    switch (field.kind) {
    case FieldId::Kind::x:
        if (field.index < 0 || field.index >= n)
            throw std::invalid_argument("vector_field_coeffs: X index out of range");
        coeffs[field.index] = 1.0;
        coeffs[2 * n] = -0.5 * p[n + field.index];
        return coeffs;
    case FieldId::Kind::y:
        if (field.index < 0 || field.index >= n)
            throw std::invalid_argument("vector_field_coeffs: Y index out of range");
        coeffs[n + field.index] = 1.0;
        coeffs[2 * n] = 0.5 * p[field.index];
        return coeffs;
    case FieldId::Kind::z:
        coeffs[2 * n] = 1.0;
        return coeffs;
    case FieldId::Kind::dilation:
        for (int i = 0; i < 2 * n; ++i) coeffs[i] = p[i];
        coeffs[2 * n] = 2.0 * p[2 * n];
        return coeffs;
    }
    throw std::invalid_argument("vector_field_coeffs: unknown field");
}

inline GroupPoint vector_field_coeffs(const GroupSpec& spec, FieldId field, const GroupPoint& p) {
    return vector_field_coeffs(spec, field, std::span<const double>(p));
}

/// Volume of the unit gauge ball {|p| <= 1}, by Monte Carlo over the bounding
/// box with a fixed seed (1e6 samples), cached per group. The value is
/// reported, not assumed.
inline double gauge_ball_volume(const GroupSpec& spec) {
    struct Key {
        GroupKind kind;
        int param;
        bool operator<(const Key& o) const {
            return kind != o.kind ? kind < o.kind : param < o.param;
        }
    };
    static std::map<Key, double> cache;
    static std::mutex cache_mutex;
    const Key key{spec.kind, spec.param};
    {
        std::lock_guard<std::mutex> lock(cache_mutex);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    // The unit gauge ball sits inside [-1,1]^dim for both supported gauges.
    const int dim = spec.topological_dim;
    const std::size_t samples = 1'000'000;
    std::mt19937_64 rng(0x6b6f72616e7969ULL);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> p(dim);
    std::size_t inside = 0;
    for (std::size_t k = 0; k < samples; ++k) {
        for (int i = 0; i < dim; ++i) p[i] = unit(rng);
        if (koranyi_norm(spec, std::span<const double>(p)) <= 1.0) ++inside;
    }
    const double box_volume = std::pow(2.0, dim);
    const double volume = box_volume * static_cast<double>(inside) / static_cast<double>(samples);
    std::lock_guard<std::mutex> lock(cache_mutex);
    cache.emplace(key, volume);
    return volume;
}

} // namespace carnot
