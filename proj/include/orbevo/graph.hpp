#pragma once

#include <map>
#include <memory>
#include <vector>

#include "orbevo/cg.hpp"
#include "orbevo/molecule.hpp"
#include "orbevo/spherical.hpp"

namespace orbevo {

/// Directed radius graph over atoms. Edge e carries the geometry of
/// src -> dst; messages flow from src to dst.
struct RadiusGraph {
    int n_nodes = 0;
    double cutoff = 5.0;
    std::vector<int> src;
    std::vector<int> dst;
    std::vector<double> dist;
    std::vector<Vec3> unit;                 // (r_src - r_dst) direction, normalized
    std::vector<std::vector<Vec>> harmonics;  // per edge, Y_l(unit) for l <= lmax_edge
    std::vector<int> degree;                // incoming edges per node

    int n_edges() const { return static_cast<int>(src.size()); }
};

inline RadiusGraph build_graph(const Molecule& mol, double cutoff = 5.0,
                               int lmax_edge = 2) {
    RadiusGraph g;
    g.n_nodes = mol.n_atoms();
    g.cutoff = cutoff;
    g.degree.assign(g.n_nodes, 0);
    for (int i = 0; i < g.n_nodes; ++i)
        for (int j = 0; j < g.n_nodes; ++j) {
            if (i == j) continue;
            const Vec3 dv = mol.position(i) - mol.position(j);
            const double d = dv.norm();
            if (d > cutoff) continue;
            g.src.push_back(i);
            g.dst.push_back(j);
            g.dist.push_back(d);
            g.unit.push_back(dv / d);
            g.harmonics.push_back(real_spherical_harmonics(dv, lmax_edge));
            ++g.degree[j];
        }
    return g;
}

/// Gaussian radial basis with a smooth cosine cutoff envelope; one row per
/// edge.
inline Mat radial_basis(const RadiusGraph& g, int n_basis) {
    require(n_basis >= 2, "radial_basis: need at least two centers");
    Mat out(g.n_edges(), n_basis);
    const double width = g.cutoff / (n_basis - 1);
    for (int e = 0; e < g.n_edges(); ++e) {
        const double d = g.dist[e];
        const double envelope = 0.5 * (1.0 + std::cos(M_PI * d / g.cutoff));
        for (int b = 0; b < n_basis; ++b) {
            const double mu = b * width;
            out(e, b) = envelope * std::exp(-0.5 * (d - mu) * (d - mu) / (width * width));
        }
    }
    return out;
}

/// One tensor-product path: features of order l_in contracted with the
/// l_edge harmonic of the edge direction into order l_out.
struct TPPath {
    int l_in;
    int l_edge;
    int l_out;
};

inline std::vector<TPPath> enumerate_paths(int lmax_in, int lmax_edge, int lmax_out) {
    std::vector<TPPath> paths;
    for (int li = 0; li <= lmax_in; ++li)
        for (int le = 0; le <= lmax_edge; ++le)
            for (int lo = 0; lo <= lmax_out; ++lo)
                if (CGTable::allowed(li, le, lo)) paths.push_back({li, le, lo});
    return paths;
}

/// Per-edge constant (2*l_out+1) x (2*l_in+1) contraction kernels
///   K_e[mo, mi] = sum_me CG(l_in, l_edge, l_out)[mo; mi, me] * Y_{l_edge}(u_e)[me],
/// so a message block is just K_e times the sender's l_in rows.
inline std::shared_ptr<std::vector<Mat>> path_kernels(const RadiusGraph& g,
                                                      const TPPath& p,
                                                      const CGTable& table) {
    auto out = std::make_shared<std::vector<Mat>>();
    out->reserve(g.n_edges());
    const Mat& q = table.block(p.l_in, p.l_edge, p.l_out);
    for (int e = 0; e < g.n_edges(); ++e) {
        const Vec& y = g.harmonics[e][p.l_edge];
        Mat k(2 * p.l_out + 1, 2 * p.l_in + 1);
        for (int mo = 0; mo < 2 * p.l_out + 1; ++mo)
            for (int mi = 0; mi < 2 * p.l_in + 1; ++mi) {
                double acc = 0.0;
                for (int me = 0; me < 2 * p.l_edge + 1; ++me)
                    acc += q(mo, mi * (2 * p.l_edge + 1) + me) * y(me);
                k(mo, mi) = acc;
            }
        out->push_back(std::move(k));
    }
    return out;
}

/// Row bookkeeping for node features stacked as (node * d_sph + slot) rows.
/// The slot order is l = 0..lmax, m = -l..l.
struct FeatureRows {
    int lmax = 2;
    int d_sph = 9;
    std::vector<int> l_offset;  // slot offset of each l block

    explicit FeatureRows(int lmax_) : lmax(lmax_) {
        d_sph = 0;
        for (int l = 0; l <= lmax; ++l) {
            l_offset.push_back(d_sph);
            d_sph += 2 * l + 1;
        }
    }

    int node_row(int node, int l, int m_index) const {
        return node * d_sph + l_offset[l] + m_index;
    }

    /// All rows of order l, node-major.
    std::vector<int> l_rows(int n_nodes, int l) const {
        std::vector<int> rows;
        for (int node = 0; node < n_nodes; ++node)
            for (int m = 0; m < 2 * l + 1; ++m) rows.push_back(node_row(node, l, m));
        return rows;
    }

    /// The m = 0 row of order l for every node.
    std::vector<int> m0_rows(int n_nodes, int l) const {
        std::vector<int> rows;
        for (int node = 0; node < n_nodes; ++node)
            rows.push_back(node_row(node, l, l));
        return rows;
    }
};

}  // namespace orbevo
