#pragma once

#include "orbevo/basis.hpp"
#include "orbevo/wigner.hpp"

namespace orbevo {

/// Block-diagonal Wigner-D over a molecule's orbital layout: one D_l block
/// per (atom, l, multiplicity) segment, in layout order.
inline Mat block_wigner(const BasisLayout& layout, const Mat3& rotation) {
    const int n = layout.n_orbitals();
    const auto d = wigner_d_all(2, rotation);
    Mat b = Mat::Zero(n, n);
    int o = 0;
    while (o < n) {
        const int l = layout.orbital(o).l;
        b.block(o, o, 2 * l + 1, 2 * l + 1) = d[l];
        o += 2 * l + 1;
    }
    return b;
}

}  // namespace orbevo
