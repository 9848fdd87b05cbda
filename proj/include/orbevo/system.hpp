#pragma once

#include <array>
#include <vector>

#include "orbevo/block_wigner.hpp"
#include "orbevo/cg.hpp"
#include "orbevo/molecule.hpp"

namespace orbevo {

/// Parameters of the synthetic two-center construction. On-site energies
/// are in hbar/fs, distances in angstrom. Defaults put occupied-state gaps
/// in the ~0.5-5 hbar/fs range so that dynamics are visible within a few fs.
struct TwoCenterParams {
    double h_decay = 1.4;       // hopping range
    double s_decay = 1.1;       // overlap range
    double h_scale = 1.0;
    double s_scale = 0.08;
    double onsite_cross = 0.25;     // coupling between shells of equal l
    double dipole_onsite = 0.55;    // on-site l <-> l+1 transition strength
    double min_s_eigenvalue = 0.05;
};

/// Hermitian H0, positive-definite overlap S and the three dipole matrices
/// of one molecule. All blocks transform under rotation by block-Wigner-D
/// conjugation.
struct SystemMatrices {
    Mat h0;                    // real symmetric
    Mat s;                     // real SPD
    std::array<Mat, 3> dipole; // x, y, z; real symmetric
    double mean_field_strength = 0.1;
    BasisLayout layout;
};

struct GroundState {
    Mat c0;          // n_occ x n_orb, rows are S-orthonormal states
    Vec energies;    // ascending, hbar/fs
    Vec occupations; // eta_n = 2
};

namespace detail {

/// Slot of axis a within a real l=1 segment ordered (y, z, x).
inline int axis_slot(int axis) {
    static constexpr int slot[3] = {2, 0, 1};
    return slot[axis];
}

/// Deterministic per-(species, segment, segment, |m|) coupling amplitude.
/// Depends only on species and segment identity so that every molecule in
/// a dataset shares one chemistry.
inline double coupling_amp(int kind, Species sp1, int l1, int mu1, Species sp2,
                           int l2, int mu2, int absm) {
    std::uint64_t h = 0x100001b3ull * (kind + 1);
    for (int v : {static_cast<int>(sp1), l1, mu1, static_cast<int>(sp2), l2, mu2, absm})
        h = (h ^ static_cast<std::uint64_t>(v + 7)) * 0x9e3779b97f4a7c15ull;
    Rng rng(h);
    const double mag = rng.uniform(0.35, 1.0);
    return rng.uniform() < 0.5 ? -mag : mag;
}

/// Rotation taking +z to the given unit vector.
inline Mat3 z_to_direction(const Vec3& u) {
    const double c = u.z();
    if (c > 1.0 - 1e-14) return Mat3::Identity();
    if (c < -1.0 + 1e-14) return axis_rotation(0, M_PI);
    const Vec3 axis = Vec3(0, 0, 1).cross(u).normalized();
    return Eigen::AngleAxisd(std::acos(std::clamp(c, -1.0, 1.0)), axis)
        .toRotationMatrix();
}

struct SegmentRef {
    int l;
    int mu;
    int offset;  // within the atom block
};

inline std::vector<SegmentRef> atom_segments(const BasisLayout& layout, int a) {
    std::vector<SegmentRef> segs;
    int off = 0;
    for (const auto& seg : layout.atom_shape(a).segments)
        for (int mu = 0; mu < seg.mult; ++mu) {
            segs.push_back({seg.l, mu, off});
            off += 2 * seg.l + 1;
        }
    return segs;
}

/// Two-center block between atoms i < j: m-conserving magnitudes in the
/// bond frame, conjugated into the lab frame by Wigner-D of the bond
/// rotation.
inline Mat pair_block(int kind, double scale, double decay, const BasisLayout& layout,
                      int i, int j, const Vec3& ri, const Vec3& rj) {
    const Vec3 dv = rj - ri;
    const double d = dv.norm();
    const Mat3 rot = z_to_direction(dv / d);
    const auto segs_i = atom_segments(layout, i);
    const auto segs_j = atom_segments(layout, j);
    const auto dmats = wigner_d_all(2, rot);
    const double radial = scale * std::exp(-d / decay);

    Mat block = Mat::Zero(layout.atom_orbitals(i), layout.atom_orbitals(j));
    for (const auto& si : segs_i)
        for (const auto& sj : segs_j) {
            const int lmin = std::min(si.l, sj.l);
            Mat frame = Mat::Zero(2 * si.l + 1, 2 * sj.l + 1);
            for (int m = -lmin; m <= lmin; ++m)
                frame(m + si.l, m + sj.l) =
                    radial * coupling_amp(kind, layout.species(i), si.l, si.mu,
                                          layout.species(j), sj.l, sj.mu, std::abs(m));
            block.block(si.offset, sj.offset, 2 * si.l + 1, 2 * sj.l + 1) =
                dmats[si.l] * frame * dmats[sj.l].transpose();
        }
    return block;
}

inline void onsite_h_block(const BasisLayout& layout, int a, Mat& h0) {
    const int off = layout.atom_offset(a);
    const bool heavy = layout.species(a) == Species::Heavy;
    // shell energies: (l, mu) -> e
    auto energy = [&](int l, int mu) {
        if (heavy) {
            if (l == 0) return mu == 0 ? -2.2 : -0.7;
            if (l == 1) return mu == 0 ? -1.2 : 0.5;
            return 1.6;
        }
        if (l == 0) return mu == 0 ? -2.0 : -0.3;
        return 1.0;
    };
    const auto segs = atom_segments(layout, a);
    for (const auto& s : segs)
        for (int m = 0; m < 2 * s.l + 1; ++m)
            h0(off + s.offset + m, off + s.offset + m) = energy(s.l, s.mu);
    // rotation-invariant cross coupling between shells of equal l
    for (std::size_t p = 0; p < segs.size(); ++p)
        for (std::size_t q = p + 1; q < segs.size(); ++q)
            if (segs[p].l == segs[q].l)
                for (int m = 0; m < 2 * segs[p].l + 1; ++m) {
                    const double v = 0.25;
                    h0(off + segs[p].offset + m, off + segs[q].offset + m) = v;
                    h0(off + segs[q].offset + m, off + segs[p].offset + m) = v;
                }
}

/// On-site dipole transition blocks between shells with |l - l'| = 1,
/// built from CG(1, l', l) coefficients.
inline void onsite_dipole_block(const TwoCenterParams& params, const BasisLayout& layout,
                                int a, int axis, Mat& r) {
    const CGTable& cg = default_cg_table();
    const int off = layout.atom_offset(a);
    const auto segs = atom_segments(layout, a);
    for (std::size_t p = 0; p < segs.size(); ++p)
        for (std::size_t q = 0; q < segs.size(); ++q) {
            const auto& sa = segs[p];
            const auto& sb = segs[q];
            if (sa.l != sb.l + 1) continue;
            const double c = params.dipole_onsite *
                             std::abs(coupling_amp(3, layout.species(a), sa.l, sa.mu,
                                                   layout.species(a), sb.l, sb.mu, 0));
            Mat t(2 * sa.l + 1, 2 * sb.l + 1);
            for (int ma = 0; ma < 2 * sa.l + 1; ++ma)
                for (int mb = 0; mb < 2 * sb.l + 1; ++mb)
                    t(ma, mb) = c * cg.block(1, sb.l, sa.l)(
                                        ma, axis_slot(axis) * (2 * sb.l + 1) + mb);
            r.block(off + sa.offset, off + sb.offset, t.rows(), t.cols()) += t;
            r.block(off + sb.offset, off + sa.offset, t.cols(), t.rows()) +=
                t.transpose();
        }
}

}  // namespace detail

/// Builds H0, S and the dipole triple for a molecule. Off-site overlap is
/// rescaled (bounded retries) until S clears the minimum-eigenvalue floor.
inline SystemMatrices build_system(const Molecule& mol,
                                   const TwoCenterParams& params = {},
                                   double mean_field_strength = 0.1) {
    const BasisLayout& layout = mol.layout;
    const int n = layout.n_orbitals();
    const int na = mol.n_atoms();

    SystemMatrices sys;
    sys.layout = layout;
    sys.mean_field_strength = mean_field_strength;

    // overlap, with positive-definiteness retries
    double s_scale = params.s_scale;
    for (int attempt = 0;; ++attempt) {
        sys.s = Mat::Identity(n, n);
        for (int i = 0; i < na; ++i)
            for (int j = i + 1; j < na; ++j) {
                const Mat b = detail::pair_block(1, s_scale, params.s_decay, layout, i,
                                                 j, mol.position(i), mol.position(j));
                sys.s.block(layout.atom_offset(i), layout.atom_offset(j), b.rows(),
                            b.cols()) = b;
                sys.s.block(layout.atom_offset(j), layout.atom_offset(i), b.cols(),
                            b.rows()) = b.transpose();
            }
        Eigen::SelfAdjointEigenSolver<Mat> es(sys.s, Eigen::EigenvaluesOnly);
        if (es.eigenvalues()(0) > params.min_s_eigenvalue) break;
        if (attempt >= 8) throw OrbevoError("build_system: overlap not positive definite");
        s_scale *= 0.6;
    }

    // hamiltonian
    sys.h0 = Mat::Zero(n, n);
    for (int a = 0; a < na; ++a) detail::onsite_h_block(layout, a, sys.h0);
    for (int i = 0; i < na; ++i)
        for (int j = i + 1; j < na; ++j) {
            const Mat b = detail::pair_block(0, params.h_scale, params.h_decay, layout,
                                             i, j, mol.position(i), mol.position(j));
            sys.h0.block(layout.atom_offset(i), layout.atom_offset(j), b.rows(),
                         b.cols()) = b;
            sys.h0.block(layout.atom_offset(j), layout.atom_offset(i), b.cols(),
                         b.rows()) = b.transpose();
        }
    sys.h0 = 0.5 * (sys.h0 + sys.h0.transpose()).eval();

    // dipole: position-weighted overlap plus on-site transition blocks
    for (int axis = 0; axis < 3; ++axis) {
        Mat r = Mat::Zero(n, n);
        for (int i = 0; i < na; ++i)
            for (int j = 0; j < na; ++j) {
                const double w = 0.5 * (mol.position(i)(axis) + mol.position(j)(axis));
                r.block(layout.atom_offset(i), layout.atom_offset(j),
                        layout.atom_orbitals(i), layout.atom_orbitals(j)) =
                    w * sys.s.block(layout.atom_offset(i), layout.atom_offset(j),
                                    layout.atom_orbitals(i), layout.atom_orbitals(j));
            }
        for (int a = 0; a < na; ++a)
            detail::onsite_dipole_block(params, layout, a, axis, r);
        sys.dipole[axis] = 0.5 * (r + r.transpose()).eval();
    }
    return sys;
}

/// Closed-shell electron count: 4 per heavy atom, 1 per hydrogen.
inline int default_occupied_states(const Molecule& mol) {
    int electrons = 0;
    for (Species sp : mol.species) electrons += sp == Species::Heavy ? 4 : 1;
    return (electrons + 1) / 2;
}

/// Lowest-n_occ generalized eigenpairs of (H0, S), S-orthonormal rows,
/// deterministic sign fix (largest-|entry| component positive).
inline GroundState solve_ground_state(const SystemMatrices& sys, int n_occ) {
    const int n = static_cast<int>(sys.h0.rows());
    require(n_occ >= 1 && n_occ <= n, "solve_ground_state: bad n_occ");
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(sys.h0, sys.s);
    if (es.info() != Eigen::Success)
        throw OrbevoError("solve_ground_state: eigensolver failed");

    GroundState gs;
    gs.energies = es.eigenvalues().head(n_occ);
    gs.occupations = Vec::Constant(n_occ, 2.0);
    gs.c0 = Mat(n_occ, n);
    for (int k = 0; k < n_occ; ++k) {
        Vec v = es.eigenvectors().col(k);
        v /= std::sqrt(v.dot(sys.s * v));
        int best = 0;
        for (int o = 1; o < n; ++o)
            if (std::abs(v(o)) > std::abs(v(best)) + 1e-12) best = o;
        if (v(best) < 0) v = -v;
        gs.c0.row(k) = v.transpose();
    }
    return gs;
}

}  // namespace orbevo
