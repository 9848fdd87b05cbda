#pragma once

#include <map>
#include <tuple>
#include <vector>

#include "orbevo/common.hpp"
#include "orbevo/random.hpp"
#include "orbevo/wigner.hpp"

namespace orbevo {

// Real-basis Clebsch-Gordan tables.
//
// A block for (l1, l2, l3) is stored as a (2*l3+1) x ((2*l1+1)*(2*l2+1))
// matrix Q with column index (m1+l1)*(2*l2+1) + (m2+l2). Q satisfies
//   Q (D_l1(R) kron D_l2(R)) = D_l3(R) Q        for every rotation R,
// and the stack of Q blocks over the full l3 range is orthogonal, so the
// flatten/unflatten pair below is an exact change of basis.
//
// Sign convention: within each block the entry of largest magnitude
// (first occurrence in row-major order) is made positive. Coefficients are
// obtained numerically as the invariant subspace of sampled rotations,
// then the stacked basis is polar-projected onto the orthogonal group.

class CGTable {
public:
    CGTable() = default;
    CGTable(int l1max, int l2max, int l3max) : l1max_(l1max), l2max_(l2max), l3max_(l3max) {
        if (l1max < 0 || l2max < 0 || l3max < 0) throw OrbevoError("cg_table: negative order");
        for (int l1 = 0; l1 <= l1max; ++l1)
            for (int l2 = 0; l2 <= l2max; ++l2) build_pair(l1, l2);
    }

    int l1max() const { return l1max_; }
    int l2max() const { return l2max_; }
    int l3max() const { return l3max_; }

    static bool allowed(int l1, int l2, int l3) {
        return l3 >= std::abs(l1 - l2) && l3 <= l1 + l2;
    }

    bool has(int l1, int l2, int l3) const {
        return blocks_.count({l1, l2, l3}) > 0;
    }

    const Mat& block(int l1, int l2, int l3) const {
        auto it = blocks_.find({l1, l2, l3});
        if (it == blocks_.end()) throw OrbevoError("cg block not in table");
        return it->second;
    }

    /// Coefficient C[(l1,m1),(l2,m2),(l3,m3)].
    double coeff(int l1, int l2, int l3, int m1, int m2, int m3) const {
        return block(l1, l2, l3)(m3 + l3, (m1 + l1) * (2 * l2 + 1) + (m2 + l2));
    }

private:
    void build_pair(int l1, int l2) {
        const int n12 = (2 * l1 + 1) * (2 * l2 + 1);
        const int kRot = 8;
        Rng rng(0xc9c9ull + 131 * l1 + l2);
        std::vector<Mat3> rots(kRot);
        for (auto& r : rots) r = rng.rotation();

        std::vector<Mat> d12(kRot);
        for (int k = 0; k < kRot; ++k) {
            const Mat d1 = wigner_d(l1, rots[k]).matrix;
            const Mat d2 = wigner_d(l2, rots[k]).matrix;
            d12[k] = kron(d1, d2);
        }

        // Solve each l3 block, then orthogonalize the full stack.
        Mat stack(n12, n12);
        std::vector<int> row0;
        int row = 0;
        for (int l3 = std::abs(l1 - l2); l3 <= l1 + l2; ++l3) {
            const Mat q = solve_block(l1, l2, l3, rots, d12);
            row0.push_back(row);
            stack.middleRows(row, 2 * l3 + 1) = q;
            row += 2 * l3 + 1;
        }
        Eigen::JacobiSVD<Mat> svd(stack, Eigen::ComputeThinU | Eigen::ComputeThinV);
        stack = svd.matrixU() * svd.matrixV().transpose();

        int idx = 0;
        for (int l3 = std::abs(l1 - l2); l3 <= l1 + l2; ++l3, ++idx) {
            if (l3 > l3max_) break;
            blocks_[{l1, l2, l3}] = stack.middleRows(row0[idx], 2 * l3 + 1);
        }
    }

    /// One (2*l3+1) x n12 intertwiner, unit row norm, canonical sign.
    Mat solve_block(int l1, int l2, int l3, const std::vector<Mat3>& rots,
                    const std::vector<Mat>& d12) {
        const int n12 = (2 * l1 + 1) * (2 * l2 + 1);
        const int n3 = 2 * l3 + 1;
        const int nvar = n12 * n3;
        Mat constraints(static_cast<int>(rots.size()) * nvar, nvar);
        for (std::size_t k = 0; k < rots.size(); ++k) {
            const Mat d3 = wigner_d(l3, rots[k]).matrix;
            constraints.middleRows(static_cast<int>(k) * nvar, nvar) =
                kron(d3, d12[k]) - Mat::Identity(nvar, nvar);
        }
        Eigen::BDCSVD<Mat> svd(constraints, Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        if (sv(nvar - 1) > 1e-8 || (nvar > 1 && sv(nvar - 2) < 1e-3))
            throw OrbevoError("cg_table: invariant subspace is not one-dimensional");
        Vec x = svd.matrixV().col(nvar - 1);

        Eigen::Map<Mat> xm(x.data(), n12, n3);  // column-major, matches vec()
        Mat q = xm.transpose();
        // rows of an intertwiner have equal norm; make them unit
        q /= q.row(0).norm() < 1e-14 ? q.norm() / std::sqrt(double(n3))
                                     : q.row(0).norm();
        // canonical sign: first occurrence of the max-|entry| made positive
        double best = 0.0;
        double sign = 1.0;
        for (int i = 0; i < q.rows(); ++i)
            for (int j = 0; j < q.cols(); ++j)
                if (std::abs(q(i, j)) > best + 1e-9) {
                    best = std::abs(q(i, j));
                    sign = q(i, j) > 0 ? 1.0 : -1.0;
                }
        return q * sign;
    }

    static Mat kron(const Mat& a, const Mat& b) {
        Mat out(a.rows() * b.rows(), a.cols() * b.cols());
        for (int i = 0; i < a.rows(); ++i)
            for (int j = 0; j < a.cols(); ++j)
                out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        return out;
    }

    int l1max_ = -1, l2max_ = -1, l3max_ = -1;
    std::map<std::tuple<int, int, int>, Mat> blocks_;
};

/// Shared table covering l1 <= 4, l2 <= 2, l3 <= 4 (built once). Large
/// enough for density-matrix featurization (l1, l2 <= 2, l3 <= 4) and for
/// message tensor products with edge harmonics up to l = 2.
inline const CGTable& default_cg_table() {
    static const CGTable table(4, 2, 4);
    return table;
}

// ---- tensor contraction (flatten / unflatten) ----

/// Flattens a (2*l1+1) x (2*l2+1) block into irreps vectors per l3.
/// Orthogonal change of basis; requires l1 + l2 <= table.l3max().
inline std::vector<Vec> tensor_contract_flatten(const Mat& block, int l1, int l2,
                                                const CGTable& table) {
    if (block.rows() != 2 * l1 + 1 || block.cols() != 2 * l2 + 1)
        throw ShapeError("tensor_contract_flatten: block shape mismatch");
    if (l1 + l2 > table.l3max() || l1 > table.l1max() || l2 > table.l2max())
        throw OrbevoError("tensor_contract_flatten: table does not cover orders");
    // row-major vec to match the CG column indexing
    Vec v(block.size());
    for (int m1 = 0; m1 < block.rows(); ++m1)
        for (int m2 = 0; m2 < block.cols(); ++m2)
            v(m1 * block.cols() + m2) = block(m1, m2);
    std::vector<Vec> out;
    for (int l3 = std::abs(l1 - l2); l3 <= l1 + l2; ++l3)
        out.push_back(table.block(l1, l2, l3) * v);
    return out;
}

/// Exact inverse of tensor_contract_flatten.
inline Mat tensor_contract_unflatten(const std::vector<Vec>& comps, int l1, int l2,
                                     const CGTable& table) {
    Vec v = Vec::Zero((2 * l1 + 1) * (2 * l2 + 1));
    int idx = 0;
    for (int l3 = std::abs(l1 - l2); l3 <= l1 + l2; ++l3, ++idx) {
        if (idx >= static_cast<int>(comps.size()) ||
            comps[idx].size() != 2 * l3 + 1)
            throw ShapeError("tensor_contract_unflatten: component shape mismatch");
        v += table.block(l1, l2, l3).transpose() * comps[idx];
    }
    Mat block(2 * l1 + 1, 2 * l2 + 1);
    for (int m1 = 0; m1 < block.rows(); ++m1)
        for (int m2 = 0; m2 < block.cols(); ++m2)
            block(m1, m2) = v(m1 * block.cols() + m2);
    return block;
}

/// Complex overloads: real and imaginary parts are contracted independently.
inline std::vector<CVec> tensor_contract_flatten(const CMat& block, int l1, int l2,
                                                 const CGTable& table) {
    auto re = tensor_contract_flatten(Mat(block.real()), l1, l2, table);
    auto im = tensor_contract_flatten(Mat(block.imag()), l1, l2, table);
    std::vector<CVec> out(re.size());
    for (std::size_t i = 0; i < re.size(); ++i)
        out[i] = re[i] + I_UNIT * im[i];
    return out;
}

inline CMat tensor_contract_unflatten(const std::vector<CVec>& comps, int l1, int l2,
                                      const CGTable& table) {
    std::vector<Vec> re(comps.size()), im(comps.size());
    for (std::size_t i = 0; i < comps.size(); ++i) {
        re[i] = comps[i].real();
        im[i] = comps[i].imag();
    }
    return tensor_contract_unflatten(re, l1, l2, table).cast<cplx>() +
           I_UNIT * tensor_contract_unflatten(im, l1, l2, table).cast<cplx>();
}

}  // namespace orbevo
