#pragma once

#include <array>
#include <vector>

#include "orbevo/delta.hpp"
#include "orbevo/graph.hpp"

namespace orbevo {

// Every atom is presented to the network with the same padded shell list:
// (l=0, mu=0), (l=0, mu=1), (l=1, mu=0), (l=1, mu=1), (l=2, mu=0).
// Shells a species lacks are zero-padded, so features have uniform shape.

struct PaddedSegment {
    int l;
    int mu;
};

inline const std::array<PaddedSegment, 5>& padded_segments() {
    static const std::array<PaddedSegment, 5> segs{
        {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 0}}};
    return segs;
}

/// Orbital index of (atom, l, mu, m-index), or -1 if the species lacks the
/// shell.
inline int orbital_index_or_pad(const BasisLayout& layout, int a, int l, int mu,
                                int m_index) {
    for (const auto& seg : layout.atom_shape(a).segments)
        if (seg.l == l && mu < seg.mult)
            return layout.atom_offset(a) + layout.segment_offset(a, l, mu) + m_index;
    return -1;
}

inline int pack_cond_channels(int n_tb) { return 2 * (2 * n_tb + 1); }

/// Packs one state's inputs into a (n_atoms * 9) x 2(2*N_tb+1) matrix.
/// Rows follow FeatureRows(lmax=2); columns are, per multiplicity,
/// [C(0), Re Delta(t-h..t-1), Im Delta(t-h..t-1)].
/// Inputs are expected pre-normalized (NormStats applied by the caller).
inline Mat pack_wavefunction_features(const Vec& c0_state,
                                      const std::vector<CVec>& delta_history,
                                      const BasisLayout& layout, int n_tb) {
    require(static_cast<int>(delta_history.size()) == n_tb,
            "pack_wavefunction_features: history length must equal N_tb");
    require(c0_state.size() == layout.n_orbitals(),
            "pack_wavefunction_features: layout mismatch");
    const FeatureRows rows(2);
    const int block = 2 * n_tb + 1;  // channels per multiplicity
    Mat out = Mat::Zero(layout.n_atoms() * rows.d_sph, 2 * block);
    for (int a = 0; a < layout.n_atoms(); ++a)
        for (int mu = 0; mu < 2; ++mu)
            for (int l = 0; l <= 2; ++l)
                for (int m = 0; m < 2 * l + 1; ++m) {
                    const int o = orbital_index_or_pad(layout, a, l, mu, m);
                    if (o < 0) continue;
                    const int r = rows.node_row(a, l, m);
                    out(r, mu * block) = c0_state(o);
                    for (int s = 0; s < n_tb; ++s) {
                        require(delta_history[s].size() == layout.n_orbitals(),
                                "pack_wavefunction_features: layout mismatch");
                        out(r, mu * block + 1 + s) = delta_history[s](o).real();
                        out(r, mu * block + 1 + n_tb + s) = delta_history[s](o).imag();
                    }
                }
    return out;
}

/// Inverse of the delta part of the packing: turns a (n_atoms * 9) x 4*N_tb
/// prediction into N_tb complex coefficient rows. Columns are, per
/// multiplicity, [Re Delta(1..N_tb), Im Delta(1..N_tb)]. Padded slots are
/// ignored.
inline std::vector<CVec> unpack_delta_predictions(const Mat& pred,
                                                  const BasisLayout& layout,
                                                  int n_tb) {
    const FeatureRows rows(2);
    require(pred.rows() == layout.n_atoms() * rows.d_sph && pred.cols() == 4 * n_tb,
            "unpack_delta_predictions: shape mismatch");
    std::vector<CVec> out(n_tb, CVec::Zero(layout.n_orbitals()));
    for (int a = 0; a < layout.n_atoms(); ++a)
        for (int mu = 0; mu < 2; ++mu)
            for (int l = 0; l <= 2; ++l)
                for (int m = 0; m < 2 * l + 1; ++m) {
                    const int o = orbital_index_or_pad(layout, a, l, mu, m);
                    if (o < 0) continue;
                    const int r = rows.node_row(a, l, m);
                    for (int s = 0; s < n_tb; ++s)
                        out[s](o) = cplx(pred(r, mu * 2 * n_tb + s),
                                         pred(r, mu * 2 * n_tb + n_tb + s));
                }
    return out;
}

// ---- density-matrix features ----

/// Number of (shell-pair) multiplicity channels feeding each output order.
inline const std::array<std::vector<std::pair<int, int>>, 5>& density_pair_table() {
    static const auto table = [] {
        std::array<std::vector<std::pair<int, int>>, 5> t;
        const auto& segs = padded_segments();
        for (int pa = 0; pa < 5; ++pa)
            for (int pb = 0; pb < 5; ++pb)
                for (int l3 = std::abs(segs[pa].l - segs[pb].l);
                     l3 <= segs[pa].l + segs[pb].l; ++l3)
                    t[l3].push_back({pa, pb});
        return t;
    }();
    return table;
}

inline int density_mult(int l3) {
    return static_cast<int>(density_pair_table()[l3].size());
}

/// Flattened density-difference features up to order 4: per atom (diag) and
/// per edge (offdiag), channels = pair-multiplicity x {re, im} x N_tb steps.
struct DensityBlocks {
    int n_tb = 0;
    std::array<Mat, 5> diag;     // rows: n_atoms * (2*l3+1)
    std::array<Mat, 5> offdiag;  // rows: n_edges * (2*l3+1)
};

namespace detail {

/// Density difference restricted to the given states, linear part
/// C0 (x) conj(Delta) + Delta (x) conj(C0), optional quadratic term.
inline CMat density_difference(const Mat& c0, const CMat& delta, const Vec& eta,
                               const std::vector<int>& states, bool quadratic) {
    const int n_orb = static_cast<int>(c0.cols());
    CMat d = CMat::Zero(n_orb, n_orb);
    for (int n : states) {
        const CVec c0n = c0.row(n).transpose().cast<cplx>();
        const CVec dn = delta.row(n).transpose();
        d += eta(n) * (c0n * dn.adjoint() + dn * c0n.adjoint());
        if (quadratic) d += eta(n) * dn * dn.adjoint();
    }
    return d;
}

inline void fill_density_rows(const CMat& dmat, const BasisLayout& layout, int i,
                              int j, int entry, int step, int n_tb,
                              const CGTable& table, std::array<Mat, 5>& out) {
    const auto& segs = padded_segments();
    const auto& pairs = density_pair_table();
    std::array<int, 5> chan{};  // running pair channel per l3
    for (int pa = 0; pa < 5; ++pa)
        for (int pb = 0; pb < 5; ++pb) {
            const int la = segs[pa].l, lb = segs[pb].l;
            const int oa = orbital_index_or_pad(layout, i, la, segs[pa].mu, 0);
            const int ob = orbital_index_or_pad(layout, j, lb, segs[pb].mu, 0);
            for (int l3 = std::abs(la - lb); l3 <= la + lb; ++l3) {
                const int pc = chan[l3]++;
                if (oa < 0 || ob < 0) continue;  // padded shell, leave zeros
                const CMat block = dmat.block(oa, ob, 2 * la + 1, 2 * lb + 1);
                const auto comps = tensor_contract_flatten(block, la, lb, table);
                const CVec& v = comps[l3 - std::abs(la - lb)];
                for (int m = 0; m < 2 * l3 + 1; ++m) {
                    out[l3](entry * (2 * l3 + 1) + m, pc * 2 * n_tb + step) =
                        v(m).real();
                    out[l3](entry * (2 * l3 + 1) + m, pc * 2 * n_tb + n_tb + step) =
                        v(m).imag();
                }
            }
        }
}

}  // namespace detail

/// Builds DensityBlocks from all (or a chosen subset of) states. Linearity
/// in the per-state contributions is exact: summing single-state outputs
/// equals the all-state output.
inline DensityBlocks density_matrix_features(const Mat& c0,
                                             const std::vector<CMat>& deltas,
                                             const Vec& eta,
                                             const BasisLayout& layout,
                                             const RadiusGraph& graph,
                                             const CGTable& table,
                                             bool include_quadratic = false,
                                             std::vector<int> states = {}) {
    const int n_tb = static_cast<int>(deltas.size());
    require(n_tb > 0, "density_matrix_features: empty history");
    if (states.empty())
        for (int n = 0; n < c0.rows(); ++n) states.push_back(n);

    DensityBlocks out;
    out.n_tb = n_tb;
    for (int l3 = 0; l3 <= 4; ++l3) {
        out.diag[l3] = Mat::Zero(layout.n_atoms() * (2 * l3 + 1),
                                 density_mult(l3) * 2 * n_tb);
        out.offdiag[l3] = Mat::Zero(graph.n_edges() * (2 * l3 + 1),
                                    density_mult(l3) * 2 * n_tb);
    }
    for (int s = 0; s < n_tb; ++s) {
        const CMat dmat =
            detail::density_difference(c0, deltas[s], eta, states, include_quadratic);
        for (int a = 0; a < layout.n_atoms(); ++a)
            detail::fill_density_rows(dmat, layout, a, a, a, s, n_tb, table, out.diag);
        for (int e = 0; e < graph.n_edges(); ++e)
            detail::fill_density_rows(dmat, layout, graph.src[e], graph.dst[e], e, s,
                                      n_tb, table, out.offdiag);
    }
    return out;
}

}  // namespace orbevo
