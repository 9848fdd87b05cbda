#pragma once

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "orbevo/model.hpp"
#include "orbevo/observables.hpp"

namespace orbevo {

struct TrainConfig {
    enum class Corruption { Pushforward, NoiseInject, Onestep };
    Corruption corruption = Corruption::Pushforward;
    double pushforward_prob = 0.5;
    int warmup_iters = 1000;
    bool warmup_enabled = true;
    int state_sample = 0;  // 0 = supervise all states
    int batch_size = 4;
    int iterations = 2000;
    bool eval_mode_unroll = false;       // run the corruption unroll without dropout
    bool fixed_pushforward_count = false;  // corrupt a fixed half of each batch
    double noise_sigma = 0.1;
    double first_target_weight = 2.0;  // weight of samples with no preceding bundle
    int val_interval = 200;
    std::uint64_t seed = 0;
    ad::AdamWConfig adamw{};
    double lr_max = 1e-3;
    double lr_min = 1e-6;
    int lr_warmup = 100;
};

/// One molecule's training-ready data: normalized ground-state coefficients,
/// normalized delta frames and normalized field samples.
struct MoleculeRecord {
    Molecule molecule;
    GroundState ground;
    Mat s;  // overlap matrix, kept for metric computations
    std::array<Mat, 3> dipole;
    Mat c0_norm;
    std::vector<CMat> delta_norm;  // frame 0 is zero
    std::vector<double> field_norm;
    double frame_dt = 0.05;
    double beta = 1000.0;

    int n_frames() const { return static_cast<int>(delta_norm.size()); }
    int n_states() const { return static_cast<int>(ground.c0.rows()); }
};

inline MoleculeRecord prepare_record(const Trajectory& traj,
                                     const SystemMatrices& sys,
                                     const DeltaSeries& series,
                                     const NormStats& stats) {
    MoleculeRecord rec;
    rec.molecule = traj.molecule;
    rec.ground = traj.ground;
    rec.s = sys.s;
    rec.dipole = sys.dipole;
    rec.frame_dt = traj.frame_dt();
    rec.beta = series.beta;
    rec.c0_norm = apply_normalization(Mat(traj.ground.c0), traj.molecule.layout, stats,
                                      false);
    for (const CMat& d : series.delta)
        rec.delta_norm.push_back(
            apply_normalization(d, traj.molecule.layout, stats, true));
    for (double e : traj.field) rec.field_norm.push_back(e / stats.field_max);
    return rec;
}

struct TrainingSet {
    std::vector<MoleculeRecord> train;
    std::vector<MoleculeRecord> val;
    NormStats stats;
};

// ---- sampling and corruption ----

/// Uniform sample of k state indices without replacement (sorted). k <= 0 or
/// k >= n_occ selects every state; an oversized k is clamped and reported.
inline std::vector<int> sample_states(int n_occ, int k, Rng& rng,
                                      bool* clamped = nullptr) {
    if (clamped) *clamped = false;
    if (k <= 0 || k >= n_occ) {
        if (clamped && k > n_occ) *clamped = true;
        std::vector<int> all(n_occ);
        for (int n = 0; n < n_occ; ++n) all[n] = n;
        return all;
    }
    std::vector<int> pool(n_occ);
    for (int n = 0; n < n_occ; ++n) pool[n] = n;
    for (int i = 0; i < k; ++i)
        std::swap(pool[i], pool[i + static_cast<int>(rng.below(n_occ - i))]);
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

/// Conditioning window Delta(t-h .. t-1); indices at or before frame 0 are
/// identically zero.
inline std::vector<CMat> conditioning_window(const MoleculeRecord& rec, int t,
                                             int n_tb) {
    require(t >= 1 && t + n_tb - 1 < rec.n_frames(),
            "conditioning_window: start index out of range");
    std::vector<CMat> cond;
    for (int i = t - n_tb; i < t; ++i)
        cond.push_back(i <= 0 ? CMat::Zero(rec.ground.c0.rows(),
                                           rec.molecule.n_orbitals())
                              : rec.delta_norm[i]);
    return cond;
}

/// Normalized field at the frames of the conditioning and target windows
/// (2 * N_tb values); pre-trajectory times carry zero field.
inline Vec field_window(const MoleculeRecord& rec, int t, int n_tb) {
    Vec f(2 * n_tb);
    for (int i = 0; i < 2 * n_tb; ++i) {
        const int frame = t - n_tb + i;
        f(i) = frame < 0 ? 0.0 : rec.field_norm[frame];
    }
    return f;
}

/// Adds zero-mean Gaussian noise of scale sigma to the (normalized)
/// conditioning; slot RMS of normalized deltas is one, so sigma is the
/// noise-to-signal ratio directly.
inline void noise_inject(std::vector<CMat>& cond, double sigma, Rng& rng) {
    if (sigma <= 0.0) return;
    for (CMat& c : cond)
        for (int i = 0; i < c.rows(); ++i)
            for (int j = 0; j < c.cols(); ++j)
                c(i, j) += sigma * cplx(rng.normal(), rng.normal());
}

/// conditioning + warmup * (predicted - actual): the push-forward input
/// corruption. Predictions enter as plain values, so no gradient can flow
/// back through the unroll that produced them.
inline std::vector<CMat> corrupt_conditioning(const std::vector<CMat>& actual,
                                              const std::vector<CMat>& predicted,
                                              double warmup) {
    require(actual.size() == predicted.size(), "corrupt_conditioning: size mismatch");
    std::vector<CMat> out;
    for (std::size_t i = 0; i < actual.size(); ++i)
        out.push_back(actual[i] + warmup * (predicted[i] - actual[i]));
    return out;
}

// ---- loss ----

/// 1 at prediction slots whose orbital exists for the atom, 0 at pads.
inline Mat prediction_mask(const BasisLayout& layout, int n_tb) {
    const FeatureRows rows(2);
    Mat mask = Mat::Zero(layout.n_atoms() * rows.d_sph, 4 * n_tb);
    for (int a = 0; a < layout.n_atoms(); ++a)
        for (int mu = 0; mu < 2; ++mu)
            for (int l = 0; l <= 2; ++l)
                for (int m = 0; m < 2 * l + 1; ++m) {
                    if (orbital_index_or_pad(layout, a, l, mu, m) < 0) continue;
                    mask.row(rows.node_row(a, l, m))
                        .segment(mu * 2 * n_tb, 2 * n_tb)
                        .setOnes();
                }
    return mask;
}

/// Target bundle in the network's output layout: per multiplicity,
/// [Re Delta(t..t+f-1), Im Delta(t..t+f-1)].
inline Mat pack_delta_targets(const MoleculeRecord& rec, int state, int t, int n_tb) {
    const BasisLayout& layout = rec.molecule.layout;
    const FeatureRows rows(2);
    Mat out = Mat::Zero(layout.n_atoms() * rows.d_sph, 4 * n_tb);
    for (int a = 0; a < layout.n_atoms(); ++a)
        for (int mu = 0; mu < 2; ++mu)
            for (int l = 0; l <= 2; ++l)
                for (int m = 0; m < 2 * l + 1; ++m) {
                    const int o = orbital_index_or_pad(layout, a, l, mu, m);
                    if (o < 0) continue;
                    const int r = rows.node_row(a, l, m);
                    for (int s = 0; s < n_tb; ++s) {
                        const cplx v = rec.delta_norm[t + s](state, o);
                        out(r, mu * 2 * n_tb + s) = v.real();
                        out(r, mu * 2 * n_tb + n_tb + s) = v.imag();
                    }
                }
    return out;
}

/// Per-atom l2 error of one sample, meaned over atoms, states and bundle
/// steps, as a differentiable scalar. Pad slots are masked out.
inline ad::Tensor bundle_l2_mae(const std::vector<ad::Tensor>& preds,
                                const std::vector<Mat>& targets, const Mat& mask,
                                int n_atoms, int n_tb) {
    require(!preds.empty() && preds.size() == targets.size(),
            "bundle_l2_mae: state count mismatch");
    const int d_sph = 9;
    Mat row_agg = Mat::Zero(n_atoms, n_atoms * d_sph);
    for (int a = 0; a < n_atoms; ++a)
        row_agg.row(a).segment(a * d_sph, d_sph).setOnes();
    Mat col_sel = Mat::Zero(4 * n_tb, n_tb);
    for (int s = 0; s < n_tb; ++s)
        for (int mu = 0; mu < 2; ++mu) {
            col_sel(mu * 2 * n_tb + s, s) = 1.0;
            col_sel(mu * 2 * n_tb + n_tb + s, s) = 1.0;
        }
    const ad::Tensor ra = ad::Tensor::constant(row_agg);
    const ad::Tensor cs = ad::Tensor::constant(col_sel);
    const ad::Tensor mk = ad::Tensor::constant(mask);

    ad::Tensor acc;
    for (std::size_t n = 0; n < preds.size(); ++n) {
        ad::Tensor diff =
            ad::hadamard(ad::sub(preds[n], ad::Tensor::constant(targets[n])), mk);
        ad::Tensor sq = ad::hadamard(diff, diff);
        // n_atoms x n_tb matrix of per-(atom, step) squared norms
        ad::Tensor per = ad::matmul(ad::matmul(ra, sq), cs);
        ad::Tensor norms = ad::pow_scalar(per, 0.5, 1e-16);
        ad::Tensor m = ad::mean_all(norms);
        acc = acc.defined() ? ad::add(acc, m) : m;
    }
    return ad::scale(acc, 1.0 / static_cast<double>(preds.size()));
}

/// Plain-value variant for metrics: per-frame mean over (atom, state) of the
/// atom's complex coefficient error norm, averaged over the bundle frames.
inline double l2_mae_loss(const std::vector<CMat>& pred,
                          const std::vector<CMat>& target,
                          const BasisLayout& layout) {
    require(!pred.empty() && pred.size() == target.size(), "l2_mae_loss: empty batch");
    double total = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        const CMat& p = pred[k];
        const CMat& t = target[k];
        require(p.rows() == t.rows() && p.cols() == t.cols(),
                "l2_mae_loss: shape mismatch");
        double frame = 0.0;
        for (int n = 0; n < p.rows(); ++n)
            for (int a = 0; a < layout.n_atoms(); ++a)
                frame += (p.row(n).segment(layout.atom_offset(a),
                                           layout.atom_orbitals(a)) -
                          t.row(n).segment(layout.atom_offset(a),
                                           layout.atom_orbitals(a)))
                             .norm();
        total += frame / (p.rows() * layout.n_atoms());
    }
    return total / static_cast<double>(pred.size());
}

// ---- forward plumbing ----

/// Packs inputs and runs the model for the given states of one sample.
/// Density features (DM variant) are always computed from all states even
/// when only a subset traverses the network.
inline OrbEvoModel::Output forward_sample(const OrbEvoModel& model,
                                          const ModelContext& ctx,
                                          const MoleculeRecord& rec,
                                          const std::vector<CMat>& cond,
                                          const Vec& field,
                                          const std::vector<int>& states,
                                          bool training = false,
                                          Rng* dropout_rng = nullptr) {
    const int n_tb = model.config().n_tb;
    std::vector<Mat> packed;
    for (int n : states) {
        std::vector<CVec> hist;
        for (const CMat& c : cond) hist.push_back(c.row(n).transpose());
        packed.push_back(pack_wavefunction_features(rec.c0_norm.row(n).transpose(),
                                                    hist, rec.molecule.layout, n_tb));
    }
    DensityBlocks density;
    const DensityBlocks* dens = nullptr;
    if (model.config().variant == ModelConfig::Variant::DM) {
        density = density_matrix_features(rec.c0_norm, cond, rec.ground.occupations,
                                          rec.molecule.layout, ctx.graph,
                                          default_cg_table(),
                                          model.config().quadratic_density);
        dens = &density;
    }
    return model.forward(ctx, packed, dens, field, training, dropout_rng);
}

/// Value-only bundle prediction: one CMat of normalized deltas per future
/// frame, rows restricted to the given states.
inline std::vector<CMat> predict_bundle(const OrbEvoModel& model,
                                        const ModelContext& ctx,
                                        const MoleculeRecord& rec,
                                        const std::vector<CMat>& cond,
                                        const Vec& field,
                                        const std::vector<int>& states,
                                        bool training = false,
                                        Rng* dropout_rng = nullptr) {
    const int n_tb = model.config().n_tb;
    const auto out =
        forward_sample(model, ctx, rec, cond, field, states, training, dropout_rng);
    std::vector<CMat> frames(
        n_tb, CMat::Zero(static_cast<int>(states.size()), rec.molecule.n_orbitals()));
    for (std::size_t i = 0; i < states.size(); ++i) {
        const auto rows = unpack_delta_predictions(out.delta[i].val(),
                                                   rec.molecule.layout, n_tb);
        for (int s = 0; s < n_tb; ++s)
            frames[s].row(static_cast<int>(i)) = rows[s].transpose();
    }
    return frames;
}

/// Full autoregressive unroll from C(0): returns normalized delta frames
/// 0..n_frames-1 (frame 0 zero), truncated to the requested length.
inline std::vector<CMat> rollout_normalized(const OrbEvoModel& model,
                                            const ModelContext& ctx,
                                            const MoleculeRecord& rec,
                                            int n_frames) {
    const int n_tb = model.config().n_tb;
    const int n_states = rec.n_states();
    std::vector<int> all_states(n_states);
    for (int n = 0; n < n_states; ++n) all_states[n] = n;

    std::vector<CMat> frames;
    frames.push_back(CMat::Zero(n_states, rec.molecule.n_orbitals()));
    for (int t = 1; t < n_frames; t += n_tb) {
        std::vector<CMat> cond;
        for (int i = t - n_tb; i < t; ++i)
            cond.push_back(i <= 0 ? frames[0] : frames[i]);
        Vec field(2 * n_tb);
        for (int i = 0; i < 2 * n_tb; ++i) {
            const int frame = t - n_tb + i;
            field(i) = frame < 0 || frame >= static_cast<int>(rec.field_norm.size())
                           ? 0.0
                           : rec.field_norm[frame];
        }
        const auto pred = predict_bundle(model, ctx, rec, cond, field, all_states);
        for (int s = 0; s < n_tb && t + s < n_frames; ++s) frames.push_back(pred[s]);
    }
    return frames;
}

/// Unroll in physical units (normalization undone per frame).
inline std::vector<CMat> rollout_deltas(const OrbEvoModel& model,
                                        const ModelContext& ctx,
                                        const MoleculeRecord& rec,
                                        const NormStats& stats, int n_frames) {
    std::vector<CMat> out;
    for (const CMat& f : rollout_normalized(model, ctx, rec, n_frames))
        out.push_back(undo_normalization(f, rec.molecule.layout, stats, true));
    return out;
}

/// Mean full-rollout wavefunction nRMSE of the model over the given records,
/// computed on normalized deltas (frames past the zero frame).
inline double rollout_nrmse(const OrbEvoModel& model,
                            const std::vector<ModelContext>& ctxs,
                            const std::vector<MoleculeRecord>& recs) {
    require(!recs.empty() && ctxs.size() == recs.size(), "rollout_nrmse: empty set");
    double acc = 0.0;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto pred = rollout_normalized(model, ctxs[i], recs[i],
                                             recs[i].n_frames());
        std::vector<CMat> p(pred.begin() + 1, pred.end());
        std::vector<CMat> t(recs[i].delta_norm.begin() + 1,
                            recs[i].delta_norm.end());
        acc += wavefunction_nrmse(p, t);
    }
    return acc / static_cast<double>(recs.size());
}

// ---- parameter snapshots ----

inline std::map<std::string, Mat> snapshot_params(const ad::ParameterSet& params) {
    std::map<std::string, Mat> out;
    for (const auto& p : params.params()) out.emplace(p.name, p.tensor.val());
    return out;
}

inline void load_params(ad::ParameterSet& params,
                        const std::map<std::string, Mat>& values) {
    for (auto& p : params.params()) {
        const auto it = values.find(p.name);
        require(it != values.end(), "load_params: missing parameter " + p.name);
        require(it->second.rows() == p.tensor.rows() &&
                    it->second.cols() == p.tensor.cols(),
                "load_params: shape mismatch for " + p.name);
        p.tensor.val() = it->second;
    }
}

// ---- the training loop ----

struct TrainResult {
    std::map<std::string, Mat> best_params;
    double best_val = std::numeric_limits<double>::infinity();
    double final_train_loss = 0.0;
    int skipped_steps = 0;
    bool state_sample_clamped = false;
    std::vector<std::string> log_lines;  // line-delimited JSON records
};

inline TrainResult train(OrbEvoModel& model, const TrainingSet& data,
                         const TrainConfig& cfg) {
    require(!data.train.empty(), "train: empty training set");
    const int n_tb = model.config().n_tb;
    const auto& val_set = data.val.empty() ? data.train : data.val;

    std::vector<ModelContext> train_ctx, val_ctx;
    for (const auto& r : data.train) train_ctx.push_back(model.make_context(r.molecule));
    for (const auto& r : val_set) val_ctx.push_back(model.make_context(r.molecule));

    std::vector<Mat> masks;
    for (const auto& r : data.train)
        masks.push_back(prediction_mask(r.molecule.layout, n_tb));

    Rng rng(cfg.seed ^ 0x7261ull);
    Rng dropout_rng(cfg.seed ^ 0xd407ull);
    ad::AdamW opt(cfg.adamw);
    ad::CosineSchedule sched{cfg.lr_max, cfg.lr_min, cfg.lr_warmup, cfg.iterations};

    TrainResult res;
    res.best_params = snapshot_params(model.params());

    auto validate = [&]() { return rollout_nrmse(model, val_ctx, val_set); };
    auto log = [&](int iter, double loss, double lr, double val) {
        char buf[256];
        if (val >= 0.0)
            std::snprintf(buf, sizeof(buf),
                          "{\"iter\":%d,\"loss\":%.8g,\"lr\":%.6g,"
                          "\"val_rollout_nrmse\":%.8g}",
                          iter, loss, lr, val);
        else
            std::snprintf(buf, sizeof(buf), "{\"iter\":%d,\"loss\":%.8g,\"lr\":%.6g}",
                          iter, loss, lr);
        res.log_lines.push_back(buf);
    };

    if (cfg.iterations == 0) {
        res.best_val = validate();
        return res;
    }

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const double warmup =
            cfg.warmup_enabled
                ? std::min(1.0, static_cast<double>(iter) /
                                    std::max(1, cfg.warmup_iters))
                : 1.0;
        const int forced_pf =
            cfg.fixed_pushforward_count
                ? static_cast<int>(cfg.batch_size * cfg.pushforward_prob)
                : -1;

        ad::Tensor loss_acc;
        double weight_sum = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const int mi = static_cast<int>(rng.below(data.train.size()));
            const auto& rec = data.train[mi];
            const auto& ctx = train_ctx[mi];
            const int t_max = rec.n_frames() - n_tb;
            require(t_max >= 1, "train: trajectory shorter than one bundle");
            const int t = 1 + static_cast<int>(rng.below(t_max));

            bool clamped = false;
            const auto states = sample_states(rec.n_states(), cfg.state_sample, rng,
                                              &clamped);
            res.state_sample_clamped = res.state_sample_clamped || clamped;

            std::vector<CMat> cond = conditioning_window(rec, t, n_tb);
            double weight = 1.0;
            if (cfg.corruption == TrainConfig::Corruption::Pushforward) {
                const bool eligible = t >= 2 * n_tb;
                const bool chosen =
                    forced_pf >= 0 ? b < forced_pf
                                   : cfg.pushforward_prob > 0.0 &&
                                         rng.uniform() < cfg.pushforward_prob;
                if (!eligible) {
                    // compensates samples that can never be corrupted; moot
                    // when corruption is off entirely
                    if (cfg.pushforward_prob > 0.0) weight = cfg.first_target_weight;
                } else if (chosen) {
                    const auto prev_cond = conditioning_window(rec, t - n_tb, n_tb);
                    const Vec prev_field = field_window(rec, t - n_tb, n_tb);
                    std::vector<int> all(rec.n_states());
                    for (int n = 0; n < rec.n_states(); ++n) all[n] = n;
                    const auto pred = predict_bundle(
                        model, ctx, rec, prev_cond, prev_field, all,
                        !cfg.eval_mode_unroll, &dropout_rng);
                    cond = corrupt_conditioning(cond, pred, warmup);
                }
            } else if (cfg.corruption == TrainConfig::Corruption::NoiseInject) {
                noise_inject(cond, cfg.noise_sigma * warmup, rng);
            }

            const auto out = forward_sample(model, ctx, rec, cond,
                                            field_window(rec, t, n_tb), states, true,
                                            &dropout_rng);
            std::vector<Mat> targets;
            for (int n : states) targets.push_back(pack_delta_targets(rec, n, t, n_tb));
            ad::Tensor sample_loss = ad::scale(
                bundle_l2_mae(out.delta, targets, masks[mi],
                              rec.molecule.n_atoms(), n_tb),
                weight);
            loss_acc = loss_acc.defined() ? ad::add(loss_acc, sample_loss) : sample_loss;
            weight_sum += weight;
        }
        ad::Tensor loss = ad::scale(loss_acc, 1.0 / weight_sum);
        const double loss_val = loss.val()(0, 0);
        if (!std::isfinite(loss_val))
            throw OrbevoError("train: non-finite loss at iteration " +
                              std::to_string(iter));

        model.params().zero_grad();
        loss.backward();
        bool finite = true;
        for (const auto& p : model.params().params())
            if (p.trainable && !p.tensor.grad().allFinite()) finite = false;
        const double lr = sched.lr(iter);
        if (finite) opt.step(model.params(), lr);
        else ++res.skipped_steps;

        res.final_train_loss = loss_val;
        const bool do_val =
            (iter + 1) % cfg.val_interval == 0 || iter + 1 == cfg.iterations;
        if (do_val) {
            const double v = validate();
            if (v < res.best_val) {
                res.best_val = v;
                res.best_params = snapshot_params(model.params());
            }
            log(iter + 1, loss_val, lr, v);
        } else if ((iter + 1) % 50 == 0 || iter == 0) {
            log(iter + 1, loss_val, lr, -1.0);
        }
    }
    return res;
}

}  // namespace orbevo
