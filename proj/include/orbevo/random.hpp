#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "orbevo/common.hpp"

namespace orbevo {

/// Deterministic RNG with fixed uniform/normal implementations so that
/// seeded runs are reproducible independently of the standard library's
/// distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t raw() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // modulo bias is irrelevant at these ranges
        return engine_() % n;
    }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    Vec3 unit_vector() {
        while (true) {
            Vec3 v(normal(), normal(), normal());
            const double n = v.norm();
            if (n > 1e-8) return v / n;
        }
    }

    /// Uniform random rotation matrix (QR of a Gaussian matrix, det fixed to +1).
    Mat3 rotation() {
        Mat3 g;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) g(i, j) = normal();
        Eigen::HouseholderQR<Mat3> qr(g);
        Mat3 q = qr.householderQ();
        Mat3 r = qr.matrixQR().triangularView<Eigen::Upper>();
        for (int i = 0; i < 3; ++i)
            if (r(i, i) < 0) q.col(i) *= -1.0;
        if (q.determinant() < 0) q.col(2) *= -1.0;
        return q;
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Rotation by `angle` radians about a coordinate axis (0=x, 1=y, 2=z).
inline Mat3 axis_rotation(int axis, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    Mat3 r = Mat3::Identity();
    const int a = (axis + 1) % 3, b = (axis + 2) % 3;
    r(a, a) = c;
    r(a, b) = -s;
    r(b, a) = s;
    r(b, b) = c;
    return r;
}

}  // namespace orbevo
