#pragma once

#include <cmath>
#include <vector>

#include "orbevo/common.hpp"

namespace orbevo {

// Real spherical harmonics.
//
// Convention used throughout this library:
//   * components of an order-l segment are indexed m = -l..l (array slot m+l);
//   * m > 0 slots carry sqrt(2)*K(l,m)*cos(m phi)*P_l^m(cos theta),
//     m < 0 slots carry sqrt(2)*K(l,|m|)*sin(|m| phi)*P_l^|m|(cos theta),
//     m = 0 slots carry K(l,0)*P_l^0(cos theta);
//   * associated Legendre functions are taken without the Condon-Shortley
//     phase, K(l,m) = sqrt((2l+1)/(4 pi) * (l-m)!/(l+m)!).
// With this choice the l=1 segment of a unit vector (x,y,z) reads
// sqrt(3/(4 pi)) * (y, z, x).

namespace detail {

/// P_l^m(x) for all l <= lmax, 0 <= m <= l, without Condon-Shortley phase.
/// Result indexed [l][m].
inline std::vector<std::vector<double>> assoc_legendre(int lmax, double x) {
    std::vector<std::vector<double>> p(lmax + 1);
    for (int l = 0; l <= lmax; ++l) p[l].assign(l + 1, 0.0);
    p[0][0] = 1.0;
    if (lmax == 0) return p;
    const double s = std::sqrt(std::max(0.0, 1.0 - x * x));
    // diagonal: P_m^m = (2m-1)!! * s^m
    for (int m = 1; m <= lmax; ++m) p[m][m] = p[m - 1][m - 1] * (2 * m - 1) * s;
    for (int m = 0; m < lmax; ++m) {
        p[m + 1][m] = x * (2 * m + 1) * p[m][m];
        for (int l = m + 2; l <= lmax; ++l) {
            p[l][m] =
                ((2 * l - 1) * x * p[l - 1][m] - (l + m - 1) * p[l - 2][m]) / (l - m);
        }
    }
    return p;
}

}  // namespace detail

/// Real spherical harmonics of a direction, per order l = 0..lmax.
/// The direction is normalized internally; a zero vector is rejected.
inline std::vector<Vec> real_spherical_harmonics(const Vec3& direction, int lmax) {
    const double norm = direction.norm();
    if (norm < 1e-12)
        throw DegenerateDirectionError("real_spherical_harmonics: zero direction");
    const Vec3 u = direction / norm;
    const double ct = u.z();
    const double phi = std::atan2(u.y(), u.x());

    const auto p = detail::assoc_legendre(lmax, ct);

    std::vector<Vec> out(lmax + 1);
    for (int l = 0; l <= lmax; ++l) {
        Vec y(2 * l + 1);
        double kfac = 1.0;  // (l-m)!/(l+m)! accumulated incrementally
        y(l) = std::sqrt((2 * l + 1) / (4.0 * M_PI)) * p[l][0];
        for (int m = 1; m <= l; ++m) {
            kfac /= static_cast<double>((l - m + 1) * (l + m));
            const double k =
                std::sqrt((2 * l + 1) / (4.0 * M_PI) * kfac) * std::sqrt(2.0);
            y(l + m) = k * std::cos(m * phi) * p[l][m];
            y(l - m) = k * std::sin(m * phi) * p[l][m];
        }
        out[l] = y;
    }
    return out;
}

/// Single-order convenience wrapper.
inline Vec real_sh(const Vec3& direction, int l) {
    return real_spherical_harmonics(direction, l)[l];
}

}  // namespace orbevo
