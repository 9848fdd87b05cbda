#pragma once

#include <vector>

#include "orbevo/common.hpp"
#include "orbevo/random.hpp"
#include "orbevo/spherical.hpp"

namespace orbevo {

/// Real Wigner-D block: the (2l+1)-dimensional representation of a 3D
/// rotation in the real spherical-harmonic basis of spherical.hpp.
struct WignerD {
    int l = 0;
    Mat matrix;  // (2l+1) x (2l+1), orthogonal
};

/// Computes the real Wigner-D matrix of order l for a proper rotation.
///
/// D is recovered from the defining property Y_l(R u) = D Y_l(u) by a
/// least-squares fit over sampled directions, then projected onto the
/// nearest orthogonal matrix. This ties D exactly to the library's real-SH
/// convention with no separate phase bookkeeping.
inline WignerD wigner_d(int l, const Mat3& rotation) {
    if (l < 0) throw OrbevoError("wigner_d: negative order");
    const Mat3& r = rotation;
    if ((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-10 ||
        std::abs(r.determinant() - 1.0) > 1e-10)
        throw InvalidRotationError("wigner_d: input is not a proper rotation");

    WignerD d;
    d.l = l;
    const int n = 2 * l + 1;
    if (l == 0) {
        d.matrix = Mat::Ones(1, 1);
        return d;
    }

    const int nsamp = 2 * n + 6;
    Rng rng(0x5eed00ull + static_cast<std::uint64_t>(l));
    Mat b(n, nsamp), a(n, nsamp);
    for (int k = 0; k < nsamp; ++k) {
        const Vec3 u = rng.unit_vector();
        b.col(k) = real_sh(u, l);
        a.col(k) = real_sh(r * u, l);
    }
    // D B = A  ->  B^T D^T = A^T
    Mat dt = b.transpose().colPivHouseholderQr().solve(a.transpose());
    Mat m = dt.transpose();
    // project to the orthogonal group
    Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    d.matrix = svd.matrixU() * svd.matrixV().transpose();
    return d;
}

/// Wigner-D blocks for all orders 0..lmax.
inline std::vector<Mat> wigner_d_all(int lmax, const Mat3& rotation) {
    std::vector<Mat> out;
    out.reserve(lmax + 1);
    for (int l = 0; l <= lmax; ++l) out.push_back(wigner_d(l, rotation).matrix);
    return out;
}

}  // namespace orbevo
