#pragma once

#include <vector>

#include "orbevo/system.hpp"

namespace orbevo {

/// Gaussian-enveloped two-frequency pulse along +z.
struct FieldPulse {
    double e0 = 0.01;   // amplitude
    double f1 = 3.66;   // fs^-1
    double f2 = 1.22;   // fs^-1
    double sigma = 0.2; // fs
    double t0 = 0.75;   // fs
};

inline double field_value(const FieldPulse& pulse, double t) {
    const double u = t - pulse.t0;
    return pulse.e0 *
           (std::cos(2.0 * M_PI * pulse.f1 * u) + std::cos(2.0 * M_PI * pulse.f2 * u)) *
           std::exp(-u * u / (2.0 * pulse.sigma * pulse.sigma));
}

/// D = sum_n eta_n C_n (x) C_n^*.
inline CMat density_matrix(const CMat& c, const Vec& eta) {
    return c.transpose() * eta.asDiagonal() * c.conjugate();
}

struct PropagationConfig {
    double total_time = 5.0;  // fs
    int n_steps = 1000;
    int downsample = 10;
    int corrector_passes = 1;
    FieldPulse pulse;
};

/// Time-indexed coefficient frames plus field samples at stored frames.
struct Trajectory {
    Molecule molecule;
    GroundState ground;
    std::vector<CMat> frames;  // n_occ x n_orb each; frame 0 is C(0)
    std::vector<double> field; // E_z at stored frame times
    double dt_fine = 0.005;    // fs
    int downsample = 10;

    int n_frames() const { return static_cast<int>(frames.size()); }
    double frame_dt() const { return dt_fine * downsample; }
};

namespace detail {

/// Indices of on-site l=0 orbitals; the mean-field term acts only there.
inline std::vector<int> s_orbital_indices(const BasisLayout& layout) {
    std::vector<int> idx;
    for (int o = 0; o < layout.n_orbitals(); ++o)
        if (layout.orbital(o).l == 0) idx.push_back(o);
    return idx;
}

/// H(t) = H0 + E_z r_z + lambda * Q[D - D0], with Q the projection of the
/// density difference onto on-site l=0 diagonal entries.
inline CMat instantaneous_hamiltonian(const SystemMatrices& sys, double e_z,
                                      const CMat& density, const CMat& density0,
                                      const std::vector<int>& s_idx) {
    CMat h = (sys.h0 + e_z * sys.dipole[2]).cast<cplx>();
    const double lambda = sys.mean_field_strength;
    if (lambda != 0.0)
        for (int o : s_idx)
            h(o, o) += lambda * (density(o, o).real() - density0(o, o).real());
    return h;
}

/// Cayley transform: C' = (S + i dt/2 H)^-1 (S - i dt/2 H) C.
inline CMat cayley_apply(const SystemMatrices& sys, const CMat& h, double dt,
                         const CMat& c) {
    const CMat sc = sys.s.cast<cplx>();
    const CMat a = sc + cplx(0, 0.5 * dt) * h;
    const CMat b = sc - cplx(0, 0.5 * dt) * h;
    Eigen::PartialPivLU<CMat> lu(a);
    if ((lu.matrixLU().diagonal().cwiseAbs().array() < 1e-14).any())
        throw OrbevoError("step_crank_nicolson: singular linear system");
    return lu.solve(b * c.transpose()).transpose();
}

}  // namespace detail

/// One Crank-Nicolson step from t to t+dt (dt may be negative for reverse
/// propagation). The midpoint Hamiltonian uses the field at t+dt/2 and a
/// predictor-corrector estimate of the midpoint density.
inline CMat step_crank_nicolson(const CMat& c, const SystemMatrices& sys,
                                const CMat& density0, const FieldPulse& pulse,
                                double t, double dt, const Vec& eta,
                                int corrector_passes = 1) {
    const auto s_idx = detail::s_orbital_indices(sys.layout);
    const double e_mid = field_value(pulse, t + 0.5 * dt);

    const CMat d_now = density_matrix(c, eta);
    CMat h = detail::instantaneous_hamiltonian(sys, e_mid, d_now, density0, s_idx);
    CMat next = detail::cayley_apply(sys, h, dt, c);
    for (int pass = 0; pass < corrector_passes; ++pass) {
        const CMat d_mid = 0.5 * (d_now + density_matrix(next, eta));
        h = detail::instantaneous_hamiltonian(sys, e_mid, d_mid, density0, s_idx);
        next = detail::cayley_apply(sys, h, dt, c);
    }
    return next;
}

/// Propagates all occupied states, storing frame 0 and every
/// `downsample`-th fine step.
inline Trajectory propagate(const Molecule& mol, const SystemMatrices& sys,
                            const GroundState& ground, const PropagationConfig& cfg) {
    require(cfg.n_steps > 0 && cfg.downsample > 0 &&
                cfg.n_steps % cfg.downsample == 0,
            "propagate: n_steps must be a positive multiple of downsample");
    Trajectory traj;
    traj.molecule = mol;
    traj.ground = ground;
    traj.dt_fine = cfg.total_time / cfg.n_steps;
    traj.downsample = cfg.downsample;

    CMat c = ground.c0.cast<cplx>();
    const CMat d0 = density_matrix(c, ground.occupations);
    traj.frames.push_back(c);
    traj.field.push_back(field_value(cfg.pulse, 0.0));
    for (int k = 0; k < cfg.n_steps; ++k) {
        c = step_crank_nicolson(c, sys, d0, cfg.pulse, k * traj.dt_fine, traj.dt_fine,
                                ground.occupations, cfg.corrector_passes);
        if ((k + 1) % cfg.downsample == 0) {
            traj.frames.push_back(c);
            traj.field.push_back(field_value(cfg.pulse, (k + 1) * traj.dt_fine));
        }
    }
    return traj;
}

}  // namespace orbevo
