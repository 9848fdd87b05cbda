#pragma once

#include <array>
#include <vector>

#include "orbevo/propagator.hpp"

namespace orbevo {

/// Phase/delta decomposition of a trajectory:
///   C_n(t) = (C_n(0) + beta * Delta_n(t)) * gamma_n(t),  |gamma_n| = 1.
struct DeltaSeries {
    std::vector<CMat> delta;  // frames x n_occ x n_orb
    std::vector<CVec> gamma;  // frames x n_occ
    double beta = 1000.0;
    std::vector<int> degenerate_frames;  // only with fallback enabled

    int n_frames() const { return static_cast<int>(delta.size()); }
};

/// gamma_n(t) = <C_n(0), S C_n(t)> / |.|, Delta_n(t) = (C_n(t)/gamma_n - C_n(0))/beta.
/// An overlap magnitude below 1e-12 throws; with `fallback_on_degenerate`
/// the previous frame's phase is reused and the frame index recorded
/// (rollout mode, where a hard error would kill the whole unroll).
inline DeltaSeries delta_transform(const std::vector<CMat>& frames, const Mat& s,
                                   double beta = 1000.0,
                                   bool fallback_on_degenerate = false) {
    require(!frames.empty(), "delta_transform: empty trajectory");
    require(beta > 0.0, "delta_transform: beta must be positive");
    const CMat& c0 = frames.front();
    require(c0.imag().cwiseAbs().maxCoeff() < 1e-12,
            "delta_transform: frame 0 must be real-valued");

    const int n_occ = static_cast<int>(c0.rows());
    DeltaSeries series;
    series.beta = beta;
    const CMat sc0 = (s * c0.transpose().real()).cast<cplx>();  // n_orb x n_occ

    for (std::size_t k = 0; k < frames.size(); ++k) {
        const CMat& c = frames[k];
        require(c.rows() == c0.rows() && c.cols() == c0.cols(),
                "delta_transform: inconsistent frame shape");
        CVec gamma(n_occ);
        CMat delta(c.rows(), c.cols());
        for (int n = 0; n < n_occ; ++n) {
            const cplx overlap = sc0.col(n).dot(c.row(n).transpose());  // conj on sc0
            if (std::abs(overlap) < 1e-12) {
                if (!fallback_on_degenerate)
                    throw OrbevoError("delta_transform: degenerate phase overlap");
                gamma(n) = k == 0 ? cplx(1, 0) : series.gamma.back()(n);
                series.degenerate_frames.push_back(static_cast<int>(k));
            } else {
                gamma(n) = overlap / std::abs(overlap);
            }
            delta.row(n) = (c.row(n) / gamma(n) - c0.row(n)) / beta;
        }
        series.gamma.push_back(std::move(gamma));
        series.delta.push_back(std::move(delta));
    }
    return series;
}

inline DeltaSeries delta_transform(const Trajectory& traj, const Mat& s,
                                   double beta = 1000.0) {
    return delta_transform(traj.frames, s, beta);
}

/// Exact inverse of delta_transform.
inline std::vector<CMat> inverse_transform(const DeltaSeries& series, const CMat& c0) {
    std::vector<CMat> frames;
    frames.reserve(series.delta.size());
    for (int k = 0; k < series.n_frames(); ++k) {
        const CMat& d = series.delta[k];
        require(d.rows() == c0.rows() && d.cols() == c0.cols(),
                "inverse_transform: inconsistent shapes");
        CMat c(c0.rows(), c0.cols());
        for (int n = 0; n < c0.rows(); ++n)
            c.row(n) = (c0.row(n) + series.beta * d.row(n)) * series.gamma[k](n);
        frames.push_back(std::move(c));
    }
    return frames;
}

/// Per-segment RMS normalizers. Statistics are pooled over the m components
/// of each (species, shell) slot so that dividing by them commutes with
/// rotation; resolving individual m slots would break equivariance.
struct NormStats {
    // indexed [species][segment within the species shape]
    std::array<std::vector<double>, 2> c0_rms;
    std::array<std::vector<double>, 2> delta_rms;
    double field_max = 1.0;
    bool clamped = false;  // some slot hit the variance floor

    double c0_scale(Species sp, int segment) const {
        return c0_rms[static_cast<int>(sp)][segment];
    }
    double delta_scale(Species sp, int segment) const {
        return delta_rms[static_cast<int>(sp)][segment];
    }
};

namespace detail {

/// Segment index (flattening multiplicity) of each orbital of an atom.
inline std::vector<int> orbital_segment_index(const IrrepsShape& shape) {
    std::vector<int> idx;
    int seg = 0;
    for (const auto& s : shape.segments)
        for (int mu = 0; mu < s.mult; ++mu) {
            for (int m = 0; m < 2 * s.l + 1; ++m) idx.push_back(seg);
            ++seg;
        }
    return idx;
}

inline int species_segment_count(Species sp) {
    int n = 0;
    for (const auto& s : species_shape(sp).segments) n += s.mult;
    return n;
}

}  // namespace detail

/// Pools squared magnitudes of C(0) and of Delta (the latter over all frames
/// past the identically-zero first one) into per-(species, shell) RMS values,
/// plus the max field amplitude. Zero-variance slots are clamped to 1e-8.
inline NormStats compute_norm_stats(const std::vector<Trajectory>& trajectories,
                                    const std::vector<DeltaSeries>& series) {
    require(!trajectories.empty() && trajectories.size() == series.size(),
            "compute_norm_stats: need matching nonempty trajectory/series lists");
    std::array<std::vector<double>, 2> c0_sum{}, delta_sum{};
    std::array<std::vector<double>, 2> c0_cnt{}, delta_cnt{};
    for (int sp = 0; sp < 2; ++sp) {
        const int ns = detail::species_segment_count(static_cast<Species>(sp));
        c0_sum[sp].assign(ns, 0.0);
        delta_sum[sp].assign(ns, 0.0);
        c0_cnt[sp].assign(ns, 0.0);
        delta_cnt[sp].assign(ns, 0.0);
    }

    NormStats stats;
    stats.field_max = 0.0;
    for (std::size_t t = 0; t < trajectories.size(); ++t) {
        const Trajectory& traj = trajectories[t];
        const BasisLayout& layout = traj.molecule.layout;
        for (double e : traj.field) stats.field_max = std::max(stats.field_max, std::abs(e));

        for (int a = 0; a < traj.molecule.n_atoms(); ++a) {
            const int sp = static_cast<int>(layout.species(a));
            const auto segs = detail::orbital_segment_index(layout.atom_shape(a));
            const int off = layout.atom_offset(a);
            for (std::size_t o = 0; o < segs.size(); ++o) {
                const int col = off + static_cast<int>(o);
                for (int n = 0; n < traj.ground.c0.rows(); ++n) {
                    const double v = traj.ground.c0(n, col);
                    c0_sum[sp][segs[o]] += v * v;
                    c0_cnt[sp][segs[o]] += 1.0;
                }
                for (int k = 1; k < series[t].n_frames(); ++k) {
                    const auto& d = series[t].delta[k];
                    for (int n = 0; n < d.rows(); ++n) {
                        delta_sum[sp][segs[o]] += std::norm(d(n, col));
                        delta_cnt[sp][segs[o]] += 2.0;  // re and im components
                    }
                }
            }
        }
    }

    for (int sp = 0; sp < 2; ++sp) {
        stats.c0_rms[sp].resize(c0_sum[sp].size());
        stats.delta_rms[sp].resize(delta_sum[sp].size());
        for (std::size_t g = 0; g < c0_sum[sp].size(); ++g) {
            const double rc = c0_cnt[sp][g] > 0 ? std::sqrt(c0_sum[sp][g] / c0_cnt[sp][g]) : 0.0;
            const double rd =
                delta_cnt[sp][g] > 0 ? std::sqrt(delta_sum[sp][g] / delta_cnt[sp][g]) : 0.0;
            stats.c0_rms[sp][g] = std::max(rc, 1e-8);
            stats.delta_rms[sp][g] = std::max(rd, 1e-8);
            if (rc < 1e-8 || rd < 1e-8) stats.clamped = true;
        }
    }
    if (stats.field_max < 1e-8) {
        stats.field_max = 1e-8;
        stats.clamped = true;
    }
    return stats;
}

/// Divides each orbital column by its slot RMS (is_delta selects which
/// table). undo_normalization is the exact inverse.
template <typename MatT>
inline MatT apply_normalization(const MatT& coeffs, const BasisLayout& layout,
                                const NormStats& stats, bool is_delta) {
    require(coeffs.cols() == layout.n_orbitals(),
            "apply_normalization: column count mismatch");
    MatT out = coeffs;
    for (int a = 0; a < layout.n_atoms(); ++a) {
        const Species sp = layout.species(a);
        const auto segs = detail::orbital_segment_index(layout.atom_shape(a));
        const int off = layout.atom_offset(a);
        for (std::size_t o = 0; o < segs.size(); ++o) {
            const double sc = is_delta ? stats.delta_scale(sp, segs[o])
                                       : stats.c0_scale(sp, segs[o]);
            out.col(off + static_cast<int>(o)) /= sc;
        }
    }
    return out;
}

template <typename MatT>
inline MatT undo_normalization(const MatT& coeffs, const BasisLayout& layout,
                               const NormStats& stats, bool is_delta) {
    MatT out = coeffs;
    for (int a = 0; a < layout.n_atoms(); ++a) {
        const Species sp = layout.species(a);
        const auto segs = detail::orbital_segment_index(layout.atom_shape(a));
        const int off = layout.atom_offset(a);
        for (std::size_t o = 0; o < segs.size(); ++o) {
            const double sc = is_delta ? stats.delta_scale(sp, segs[o])
                                       : stats.c0_scale(sp, segs[o]);
            out.col(off + static_cast<int>(o)) *= sc;
        }
    }
    return out;
}

}  // namespace orbevo
