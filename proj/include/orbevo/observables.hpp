#pragma once

#include <array>
#include <vector>

#include "orbevo/delta.hpp"

namespace orbevo {

inline constexpr double kBohrRadiusAngstrom = 0.529;

/// Scales each state so that C_n^dag S C_n = 1. Idempotent; a global phase
/// survives but cancels in every quadratic observable downstream.
inline std::vector<CMat> renormalize(const std::vector<CMat>& frames, const Mat& s) {
    std::vector<CMat> out;
    out.reserve(frames.size());
    const CMat sc = s.cast<cplx>();
    for (const CMat& c : frames) {
        CMat r = c;
        for (int n = 0; n < c.rows(); ++n) {
            const double nn = (c.row(n) * sc * c.row(n).adjoint())(0, 0).real();
            if (!(nn > 0.0))
                throw OrbevoError("renormalize: non-positive state norm");
            r.row(n) /= std::sqrt(nn);
        }
        out.push_back(std::move(r));
    }
    return out;
}

/// Per-molecule wavefunction error: per-state root of the squared error
/// summed over frames and orbitals, state-summed, divided by the same
/// construction on the target. A zero predictor scores exactly 1.
inline double wavefunction_nrmse(const std::vector<CMat>& pred,
                                 const std::vector<CMat>& target) {
    require(pred.size() == target.size() && !pred.empty(),
            "wavefunction_nrmse: frame count mismatch");
    const int n_states = static_cast<int>(target.front().rows());
    double num = 0.0, den = 0.0;
    for (int n = 0; n < n_states; ++n) {
        double err = 0.0, ref = 0.0;
        for (std::size_t k = 0; k < pred.size(); ++k) {
            require(pred[k].rows() == target[k].rows() &&
                        pred[k].cols() == target[k].cols(),
                    "wavefunction_nrmse: shape mismatch");
            err += (pred[k].row(n) - target[k].row(n)).squaredNorm();
            ref += target[k].row(n).squaredNorm();
        }
        num += std::sqrt(err);
        den += std::sqrt(ref);
    }
    if (den == 0.0) throw OrbevoError("wavefunction_nrmse: zero-norm target");
    return num / den;
}

/// Dipole expectation values per frame (unit e*r_B), and the difference
/// against frame 0.
struct DipoleSeries {
    std::array<Vec, 3> p;   // per axis, one value per frame
    std::array<Vec, 3> dp;  // p(t) - p(0)

    int n_frames() const { return static_cast<int>(p[0].size()); }
};

/// p_m(t) = sum_n eta_n C_n(t)^dag r_m C_n(t); frames must be renormalized
/// first. The imaginary part of the quadratic form is asserted below 1e-12.
inline DipoleSeries dipole_series(const std::vector<CMat>& frames,
                                  const std::array<Mat, 3>& r_mats, const Vec& eta) {
    require(!frames.empty(), "dipole_series: empty trajectory");
    DipoleSeries out;
    for (int axis = 0; axis < 3; ++axis) {
        const CMat r = r_mats[axis].cast<cplx>();
        Vec p(frames.size());
        for (std::size_t k = 0; k < frames.size(); ++k) {
            cplx acc = 0.0;
            for (int n = 0; n < frames[k].rows(); ++n)
                acc += eta(n) * (frames[k].row(n) * r * frames[k].row(n).adjoint())(0, 0);
            require(std::abs(acc.imag()) < 1e-12,
                    "dipole_series: non-Hermitian position matrix");
            p(static_cast<int>(k)) = acc.real() / kBohrRadiusAngstrom;
        }
        out.dp[axis] = p.array() - p(0);
        out.p[axis] = std::move(p);
    }
    return out;
}

/// Dipole response in the frequency domain. Grid points where the field
/// transform vanishes are reported as undefined rather than divided.
struct AbsorptionSpectrum {
    Vec freq;                   // ordinary frequency, fs^-1
    Vec alpha;                  // Im[ P(freq) / E(freq) ], 0 where undefined
    std::vector<bool> defined;
    double native_bin = 0.0;    // un-padded grid spacing, fs^-1
};

/// alpha_z(freq) = Im[ sum_t dp_z(t) w(t) e^{2 pi i freq t} /
///                     sum_t E_z(t) e^{2 pi i freq t} ]
/// with exponential damping w(t) = exp(-t / tau) applied to the dipole
/// (default tau = 2x trajectory length). The grid is the DFT grid of the
/// series, zero-padded `pad` times; only non-negative frequencies are kept.
/// With a real input series alpha(-freq) = -alpha(freq) under this
/// convention.
inline AbsorptionSpectrum absorption(const Vec& dp_z, const Vec& field, double dt,
                                     double tau = 0.0, int pad = 4) {
    const int n = static_cast<int>(dp_z.size());
    require(n >= 2 && field.size() == n, "absorption: need matching series");
    require(dt > 0.0 && pad >= 1, "absorption: bad grid parameters");
    if (tau <= 0.0) tau = 2.0 * (n - 1) * dt;

    const int n_pad = pad * n;
    AbsorptionSpectrum out;
    const int n_freq = n_pad / 2 + 1;
    out.freq = Vec(n_freq);
    out.alpha = Vec::Zero(n_freq);
    out.defined.assign(n_freq, false);
    out.native_bin = 1.0 / (n * dt);

    for (int k = 0; k < n_freq; ++k) {
        const double nu = static_cast<double>(k) / (n_pad * dt);
        out.freq(k) = nu;
        cplx num = 0.0, den = 0.0;
        for (int t = 0; t < n; ++t) {
            const cplx ph = std::exp(cplx(0.0, 2.0 * M_PI * nu * t * dt));
            num += dp_z(t) * std::exp(-t * dt / tau) * ph;
            den += field(t) * ph;
        }
        if (std::abs(den) < 1e-12) continue;
        out.defined[k] = true;
        out.alpha(k) = (num / den).imag();
    }
    return out;
}

/// Frequency (fs^-1) of the largest |alpha| among defined grid points.
inline double absorption_peak(const AbsorptionSpectrum& spec) {
    int best = -1;
    for (int k = 0; k < spec.freq.size(); ++k)
        if (spec.defined[k] &&
            (best < 0 || std::abs(spec.alpha(k)) > std::abs(spec.alpha(best))))
            best = k;
    require(best >= 0, "absorption_peak: spectrum undefined everywhere");
    return spec.freq(best);
}

struct DipoleScores {
    double nrmse_all = 0.0;
    double nrmse_z = 0.0;
};

/// Relative Euclidean errors of the dipole differences over frames 1..T.
inline DipoleScores dipole_scores(const DipoleSeries& pred,
                                  const DipoleSeries& target) {
    require(pred.n_frames() == target.n_frames(), "dipole_scores: length mismatch");
    double num_all = 0.0, den_all = 0.0, num_z = 0.0, den_z = 0.0;
    for (int t = 1; t < target.n_frames(); ++t)
        for (int axis = 0; axis < 3; ++axis) {
            const double d = pred.dp[axis](t) - target.dp[axis](t);
            num_all += d * d;
            den_all += target.dp[axis](t) * target.dp[axis](t);
            if (axis == 2) {
                num_z += d * d;
                den_z += target.dp[axis](t) * target.dp[axis](t);
            }
        }
    if (den_all == 0.0 || den_z == 0.0)
        throw OrbevoError("dipole_scores: zero-norm target series");
    return {std::sqrt(num_all / den_all), std::sqrt(num_z / den_z)};
}

/// Relative error of the spectra over grid points defined in both.
inline double absorption_score(const AbsorptionSpectrum& pred,
                               const AbsorptionSpectrum& target) {
    require(pred.freq.size() == target.freq.size(), "absorption_score: grid mismatch");
    double num = 0.0, den = 0.0;
    for (int k = 0; k < target.freq.size(); ++k) {
        if (!pred.defined[k] || !target.defined[k]) continue;
        const double d = pred.alpha(k) - target.alpha(k);
        num += d * d;
        den += target.alpha(k) * target.alpha(k);
    }
    if (den == 0.0) throw OrbevoError("absorption_score: zero-norm target spectrum");
    return std::sqrt(num / den);
}

inline double pearson_correlation(const Vec& a, const Vec& b) {
    require(a.size() == b.size() && a.size() >= 2, "pearson_correlation: bad input");
    const Vec ac = a.array() - a.mean();
    const Vec bc = b.array() - b.mean();
    const double den = ac.norm() * bc.norm();
    if (den == 0.0) return 0.0;
    return ac.dot(bc) / den;
}

/// Split by molecule size: train <= train_max atoms, val in
/// [val_min, val_max], test >= test_min. Every bucket must be nonempty.
struct OodThresholds {
    int train_max = 20;
    int val_min = 21;
    int val_max = 22;
    int test_min = 23;
};

struct SplitIndices {
    std::vector<int> train, val, test;
};

inline SplitIndices ood_split(const std::vector<int>& atom_counts,
                              const OodThresholds& th = {}) {
    require(!atom_counts.empty(), "ood_split: empty dataset");
    SplitIndices s;
    for (std::size_t i = 0; i < atom_counts.size(); ++i) {
        const int n = atom_counts[i];
        if (n <= th.train_max) s.train.push_back(static_cast<int>(i));
        else if (n >= th.val_min && n <= th.val_max) s.val.push_back(static_cast<int>(i));
        else if (n >= th.test_min) s.test.push_back(static_cast<int>(i));
    }
    if (s.train.empty() || s.val.empty() || s.test.empty())
        throw OrbevoError("ood_split: empty split bucket");
    return s;
}

}  // namespace orbevo
