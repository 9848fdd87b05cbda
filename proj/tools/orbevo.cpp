// Command-line driver: dataset generation, training, rollout, evaluation,
// equivariance checks, bundle sweeps and split management.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "orbevo/io.hpp"
#include "orbevo/observables.hpp"

namespace fs = std::filesystem;
using namespace orbevo;

namespace {

// ---- shared plumbing ----

std::string default_data_dir() {
    const char* env = std::getenv("ORBEVO_DATA_DIR");
    return env ? env : "";
}

fs::path resolve_data_dir(const std::string& flag) {
    std::string dir = flag.empty() ? default_data_dir() : flag;
    if (dir.empty())
        throw OrbevoError("no dataset directory: pass --data or set ORBEVO_DATA_DIR");
    return dir;
}

RunConfig load_run_config(const std::string& path) {
    if (path.empty()) return RunConfig{};
    return run_config_from_json(json::parse(read_file(path)));
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
    workers = std::max(1, std::min(workers, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) fn(i);
        });
    for (auto& t : pool) t.join();
}

struct LoadedDataset {
    fs::path dir;
    DatasetManifest manifest;
    std::vector<Trajectory> trajs;
    std::vector<SystemMatrices> sys;
};

LoadedDataset load_dataset(const fs::path& dir) {
    LoadedDataset ds;
    ds.dir = dir;
    ds.manifest = load_manifest(dir);
    const int n = static_cast<int>(ds.manifest.molecules.size());
    ds.trajs.resize(n);
    ds.sys.resize(n);
    for (int i = 0; i < n; ++i)
        ds.trajs[i] = load_molecule_trajectory(dir, ds.manifest, i, &ds.sys[i]);
    return ds;
}

std::vector<int> split_indices(const DatasetManifest& m, const std::string& split) {
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(m.molecules.size()); ++i)
        if (m.molecules[i].split == split) idx.push_back(i);
    return idx;
}

MoleculeRecord record_for(const LoadedDataset& ds, int i) {
    const auto series =
        delta_transform(ds.trajs[i], ds.sys[i].s, ds.manifest.beta);
    return prepare_record(ds.trajs[i], ds.sys[i], series, ds.manifest.stats);
}

TrainingSet make_training_set(const LoadedDataset& ds) {
    TrainingSet set;
    set.stats = ds.manifest.stats;
    for (int i : split_indices(ds.manifest, "train"))
        set.train.push_back(record_for(ds, i));
    for (int i : split_indices(ds.manifest, "val"))
        set.val.push_back(record_for(ds, i));
    return set;
}

/// Autoregressive unroll in physical units. With the phase head enabled the
/// predicted per-state phases are merged back into the frames; otherwise the
/// phases are taken as 1 (every downstream density observable is invariant
/// to them anyway).
std::vector<CMat> rollout_physical(const OrbEvoModel& model, const ModelContext& ctx,
                                   const MoleculeRecord& rec, const NormStats& stats,
                                   int n_frames) {
    const int n_tb = model.config().n_tb;
    const int n_states = rec.n_states();
    std::vector<int> all_states(n_states);
    for (int n = 0; n < n_states; ++n) all_states[n] = n;

    const CMat c0 = rec.ground.c0.cast<cplx>();
    std::vector<CMat> norm_frames{CMat::Zero(n_states, rec.molecule.n_orbitals())};
    std::vector<CMat> frames{c0};
    for (int t = 1; t < n_frames; t += n_tb) {
        std::vector<CMat> cond;
        for (int i = t - n_tb; i < t; ++i)
            cond.push_back(i <= 0 ? norm_frames[0] : norm_frames[i]);
        Vec field(2 * n_tb);
        for (int i = 0; i < 2 * n_tb; ++i) {
            const int frame = t - n_tb + i;
            field(i) = frame < 0 || frame >= static_cast<int>(rec.field_norm.size())
                           ? 0.0
                           : rec.field_norm[frame];
        }
        const auto out =
            forward_sample(model, ctx, rec, cond, field, all_states);
        for (int s = 0; s < n_tb && t + s < n_frames; ++s)
            norm_frames.push_back(CMat::Zero(n_states, rec.molecule.n_orbitals()));
        for (int n = 0; n < n_states; ++n) {
            const auto rows = unpack_delta_predictions(out.delta[n].val(),
                                                       rec.molecule.layout, n_tb);
            for (int s = 0; s < n_tb && t + s < n_frames; ++s)
                norm_frames[t + s].row(n) = rows[s].transpose();
        }
        for (int s = 0; s < n_tb && t + s < n_frames; ++s) {
            const CMat delta = undo_normalization(norm_frames[t + s],
                                                  rec.molecule.layout, stats, true);
            CMat c = c0 + rec.beta * delta;
            if (model.config().phase_head)
                for (int n = 0; n < n_states; ++n) {
                    const Mat& ph = out.phase[n].val();
                    const cplx g(ph(0, s), ph(0, n_tb + s));
                    c.row(n) *= std::abs(g) < 1e-12 ? cplx(1, 0) : g / std::abs(g);
                }
            frames.push_back(std::move(c));
        }
    }
    return frames;
}

struct MoleculeScores {
    int index = 0;
    double wf_nrmse = 0.0;
    DipoleScores dipole;
    double pearson_z = 0.0;
    double absorption_nrmse = 0.0;
    double peak_pred = 0.0, peak_target = 0.0, native_bin = 0.0;
};

/// Full per-molecule evaluation of predicted frames against the reference
/// trajectory. Writes the dipole and spectrum artifacts when `out` is set.
MoleculeScores score_molecule(const LoadedDataset& ds, int i,
                              const std::vector<CMat>& pred_frames,
                              double damping_tau, const fs::path* out) {
    const Trajectory& traj = ds.trajs[i];
    const SystemMatrices& sys = ds.sys[i];
    const double dt = traj.frame_dt();

    const auto pred = renormalize(pred_frames, sys.s);
    const auto target = renormalize(traj.frames, sys.s);

    MoleculeScores sc;
    sc.index = i;
    sc.wf_nrmse = wavefunction_nrmse(pred, target);
    const auto dp = dipole_series(pred, sys.dipole, traj.ground.occupations);
    const auto dtg = dipole_series(target, sys.dipole, traj.ground.occupations);
    sc.dipole = dipole_scores(dp, dtg);
    sc.pearson_z = pearson_correlation(dp.dp[2].tail(dp.n_frames() - 1),
                                       dtg.dp[2].tail(dtg.n_frames() - 1));

    Vec field(traj.n_frames());
    for (int k = 0; k < traj.n_frames(); ++k) field(k) = traj.field[k];
    const auto sp = absorption(dp.dp[2], field, dt, damping_tau);
    const auto st = absorption(dtg.dp[2], field, dt, damping_tau);
    sc.absorption_nrmse = absorption_score(sp, st);
    sc.peak_pred = absorption_peak(sp);
    sc.peak_target = absorption_peak(st);
    sc.native_bin = st.native_bin;

    if (out) {
        char tag[16];
        std::snprintf(tag, sizeof(tag), "%03d", i);
        std::vector<std::vector<double>> rows;
        for (int k = 0; k < traj.n_frames(); ++k)
            rows.push_back({k * dt, dp.p[0](k), dp.p[1](k), dp.p[2](k), dtg.p[0](k),
                            dtg.p[1](k), dtg.p[2](k)});
        write_csv(*out / ("dipole_" + std::string(tag) + ".csv"),
                  {"t", "px", "py", "pz", "target_px", "target_py", "target_pz"},
                  rows);
        rows.clear();
        for (int k = 0; k < sp.freq.size(); ++k)
            if (sp.defined[k] && st.defined[k])
                rows.push_back({sp.freq(k), sp.alpha(k), st.alpha(k)});
        write_csv(*out / ("absorption_" + std::string(tag) + ".csv"),
                  {"freq", "alpha", "target_alpha"}, rows);
        Vec t(traj.n_frames());
        for (int k = 0; k < traj.n_frames(); ++k) t(k) = k * dt;
        write_svg_lineplot(*out / ("dipole_z_" + std::string(tag) + ".svg"), t,
                           {dp.dp[2], dtg.dp[2]}, {"predicted", "reference"});
    }
    return sc;
}

json scores_to_json(const std::vector<MoleculeScores>& scores) {
    json mols = json::array();
    double wf = 0, all = 0, z = 0, pear = 0, abs_sc = 0;
    int peak_hits = 0;
    for (const auto& s : scores) {
        mols.push_back({{"index", s.index},
                        {"wf_nrmse", s.wf_nrmse},
                        {"dipole_nrmse_all", s.dipole.nrmse_all},
                        {"dipole_nrmse_z", s.dipole.nrmse_z},
                        {"pearson_z", s.pearson_z},
                        {"absorption_nrmse", s.absorption_nrmse},
                        {"peak_pred", s.peak_pred},
                        {"peak_target", s.peak_target},
                        {"native_bin", s.native_bin}});
        wf += s.wf_nrmse;
        all += s.dipole.nrmse_all;
        z += s.dipole.nrmse_z;
        pear += s.pearson_z;
        abs_sc += s.absorption_nrmse;
        if (std::abs(s.peak_pred - s.peak_target) <= s.native_bin) ++peak_hits;
    }
    const double n = std::max<std::size_t>(scores.size(), 1);
    return {{"molecules", mols},
            {"mean",
             {{"wf_nrmse", wf / n},
              {"dipole_nrmse_all", all / n},
              {"dipole_nrmse_z", z / n},
              {"pearson_z", pear / n},
              {"absorption_nrmse", abs_sc / n},
              {"peak_within_bin_fraction", peak_hits / n}}}};
}

// ---- subcommands ----

int cmd_generate(const RunConfig& rc_in, const fs::path& out, int workers) {
    RunConfig rc = rc_in;
    const int n = rc.system.n_molecules;
    require(n >= 1, "generate: need at least one molecule");

    Rng size_rng(rc.system.master_seed ^ 0x5eedull);
    std::vector<MoleculeEntry> entries(n);
    for (int i = 0; i < n; ++i) {
        entries[i].seed =
            rc.system.master_seed ^ (0x9e3779b97f4a7c15ull * (i + 1));
        entries[i].n_heavy =
            rc.system.n_heavy_min +
            static_cast<int>(size_rng.below(
                rc.system.n_heavy_max - rc.system.n_heavy_min + 1));
        entries[i].n_hydrogen =
            rc.system.n_hydrogen_min +
            static_cast<int>(size_rng.below(
                rc.system.n_hydrogen_max - rc.system.n_hydrogen_min + 1));
    }
    const int n_train =
        std::max(1, static_cast<int>(std::lround(rc.system.train_fraction * n)));
    const int n_val = std::max(
        n > n_train ? 1 : 0,
        static_cast<int>(std::lround(rc.system.val_fraction * n)));
    for (int i = 0; i < n; ++i)
        entries[i].split = i < n_train ? "train" : i < n_train + n_val ? "val" : "test";

    std::vector<Trajectory> trajs(n);
    std::vector<SystemMatrices> sys(n);
    parallel_for(n, workers, [&](int i) {
        const Molecule mol = generate_molecule(entries[i].n_heavy,
                                               entries[i].n_hydrogen,
                                               entries[i].seed);
        sys[i] = build_system(mol, {}, rc.mean_field_strength);
        const GroundState gs = solve_ground_state(sys[i], default_occupied_states(mol));
        trajs[i] = propagate(mol, sys[i], gs, rc.propagation);
    });

    std::vector<Trajectory> train_trajs;
    std::vector<DeltaSeries> train_series;
    for (int i = 0; i < n; ++i)
        if (entries[i].split == "train") {
            train_trajs.push_back(trajs[i]);
            train_series.push_back(delta_transform(trajs[i], sys[i].s, rc.beta));
        }
    require(!train_trajs.empty(), "generate: empty train split");

    DatasetManifest m;
    m.propagation = rc.propagation;
    m.mean_field_strength = rc.mean_field_strength;
    m.beta = rc.beta;
    m.stats = compute_norm_stats(train_trajs, train_series);
    for (int i = 0; i < n; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "traj_%03d.bin", i);
        const std::string bytes = encode_trajectory_frames(trajs[i].frames);
        write_file_atomic(out / name, bytes);
        entries[i].file = name;
        entries[i].checksum = fnv1a(bytes);
        m.molecules.push_back(entries[i]);
    }
    save_manifest(out, m);
    write_file_atomic(out / "config.json", run_config_to_json(rc).dump(2) + "\n");
    std::cout << "generated " << n << " molecules (" << n_train << " train) in "
              << out << "\n";
    return 0;
}

int cmd_train(const RunConfig& rc, const fs::path& data, const fs::path& out,
              const std::string& resume) {
    const auto ds = load_dataset(data);
    const auto set = make_training_set(ds);
    OrbEvoModel model(rc.model);
    if (!resume.empty()) {
        const auto [cfg, params] = load_checkpoint(resume);
        load_params(model.params(), params);
    }
    const TrainResult res = train(model, set, rc.training);

    save_checkpoint(out / "checkpoint", rc.model, res.best_params);
    std::string log;
    for (const auto& line : res.log_lines) log += line + "\n";
    write_file_atomic(out / "log.jsonl", log);
    write_file_atomic(out / "config.json", run_config_to_json(rc).dump(2) + "\n");
    const json summary = {{"best_val_rollout_nrmse", res.best_val},
                          {"final_train_loss", res.final_train_loss},
                          {"skipped_steps", res.skipped_steps},
                          {"state_sample_clamped", res.state_sample_clamped}};
    write_file_atomic(out / "train_summary.json", summary.dump(2) + "\n");
    std::cout << "trained: best val rollout nrmse " << res.best_val << "\n";
    return 0;
}

int cmd_rollout(const fs::path& data, const std::string& checkpoint,
                const fs::path& out, const std::string& split) {
    const auto ds = load_dataset(data);
    const auto [cfg, params] = load_checkpoint(checkpoint);
    OrbEvoModel model(cfg);
    load_params(model.params(), params);

    json index = json::array();
    for (int i : split_indices(ds.manifest, split)) {
        const auto rec = record_for(ds, i);
        const auto ctx = model.make_context(rec.molecule);
        const auto frames =
            rollout_physical(model, ctx, rec, ds.manifest.stats, rec.n_frames());
        char name[32];
        std::snprintf(name, sizeof(name), "pred_%03d.bin", i);
        const std::string bytes = encode_trajectory_frames(frames);
        write_file_atomic(out / name, bytes);
        index.push_back(
            {{"index", i}, {"file", name}, {"checksum", fnv1a(bytes)}});
    }
    require(!index.empty(), "rollout: split '" + split + "' is empty");
    write_file_atomic(out / "predictions.json",
                      json{{"split", split}, {"files", index}}.dump(2) + "\n");
    std::cout << "rolled out " << index.size() << " molecules to " << out << "\n";
    return 0;
}

int cmd_eval(const fs::path& data, const fs::path& pred, const fs::path& out,
             double damping_tau) {
    const auto ds = load_dataset(data);
    const json idx = json::parse(read_file(pred / "predictions.json"));
    std::vector<MoleculeScores> scores;
    for (const auto& e : idx.at("files")) {
        const int i = e.at("index").get<int>();
        const std::string bytes = read_file(pred / e.at("file").get<std::string>());
        require(fnv1a(bytes) == e.at("checksum").get<std::uint64_t>(),
                "eval: prediction checksum mismatch");
        scores.push_back(score_molecule(ds, i, decode_trajectory_frames(bytes),
                                        damping_tau, &out));
    }
    const json summary = scores_to_json(scores);
    write_file_atomic(out / "scores.json", summary.dump(2) + "\n");
    std::cout << summary.at("mean").dump(2) << "\n";
    return 0;
}

int cmd_equiv_test(const RunConfig& rc, const std::string& checkpoint,
                   const fs::path& out, std::uint64_t seed) {
    const double angle = rc.evaluation.rotation_deg * M_PI / 180.0;
    const Mat3 r = axis_rotation(2, angle);

    const Molecule mol = generate_molecule(rc.system.n_heavy_min,
                                           rc.system.n_hydrogen_min, seed);
    const Molecule rot = mol.rotated(r);
    const Mat b = block_wigner(mol.layout, r);

    auto run = [&](const Molecule& m, SystemMatrices& sys) {
        sys = build_system(m, {}, rc.mean_field_strength);
        const GroundState gs = solve_ground_state(sys, default_occupied_states(m));
        return propagate(m, sys, gs, rc.propagation);
    };
    SystemMatrices sys, sys_rot;
    const Trajectory traj = run(mol, sys);
    const Trajectory traj_rot = run(rot, sys_rot);

    // reference dynamics: rotating the molecule must conjugate every frame
    // by the block Wigner matrix (up to per-state phase/sign of the ground
    // eigenvectors, removed by comparing state density matrices)
    std::vector<std::vector<double>> rows;
    const CMat bc = b.cast<cplx>();
    for (int k = 0; k < traj.n_frames(); ++k) {
        double d = 0.0;
        for (int n = 0; n < traj.frames[k].rows(); ++n) {
            const CMat dm = traj.frames[k].row(n).transpose() *
                            traj.frames[k].row(n).conjugate();
            const CMat dm_rot = traj_rot.frames[k].row(n).transpose() *
                                traj_rot.frames[k].row(n).conjugate();
            d = std::max(d, (dm_rot - bc * dm * bc.transpose())
                                .cwiseAbs()
                                .maxCoeff());
        }
        rows.push_back({k * traj.frame_dt(), d});
    }
    write_csv(out / "equiv_data.csv", {"t", "discrepancy"}, rows);
    double data_max = 0.0;
    for (const auto& row : rows) data_max = std::max(data_max, row[1]);

    double model_max = -1.0;
    if (!checkpoint.empty()) {
        const auto [cfg, params] = load_checkpoint(checkpoint);
        OrbEvoModel model(cfg);
        load_params(model.params(), params);

        // per-state phases differ between the two eigensolves; align the
        // rotated ground state to the Wigner-rotated original before
        // comparing model outputs
        Trajectory aligned = traj;
        aligned.molecule = rot;
        aligned.ground.c0 = traj.ground.c0 * b.transpose();
        for (auto& f : aligned.frames) f = f * bc.transpose();

        auto predict = [&](const Trajectory& t, const SystemMatrices& s) {
            const auto series = delta_transform(t, s.s, rc.beta);
            NormStats stats = compute_norm_stats({t}, {series});
            const auto rec = prepare_record(t, s, series, stats);
            const auto ctx = model.make_context(rec.molecule);
            return rollout_physical(model, ctx, rec, stats,
                                    std::min(rec.n_frames(),
                                             1 + model.config().n_tb));
        };
        const auto base = predict(traj, sys);
        const auto rotp = predict(aligned, sys_rot);
        rows.clear();
        for (std::size_t k = 0; k < base.size(); ++k) {
            double d = 0.0;
            for (int n = 0; n < base[k].rows(); ++n) {
                const CMat dm = base[k].row(n).transpose() *
                                base[k].row(n).conjugate();
                const CMat dm_rot = rotp[k].row(n).transpose() *
                                    rotp[k].row(n).conjugate();
                d = std::max(d, (dm_rot - bc * dm * bc.transpose())
                                    .cwiseAbs()
                                    .maxCoeff());
            }
            rows.push_back({static_cast<double>(k), d});
            model_max = std::max(model_max, d);
        }
        write_csv(out / "equiv_model.csv", {"frame", "discrepancy"}, rows);
    }

    json summary = {{"rotation_deg", rc.evaluation.rotation_deg},
                    {"data_max_discrepancy", data_max}};
    if (model_max >= 0.0) summary["model_max_discrepancy"] = model_max;
    write_file_atomic(out / "equiv_summary.json", summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_sweep_bundles(const RunConfig& rc_in, const fs::path& data,
                      const fs::path& out, const std::vector<int>& bundles) {
    const auto ds = load_dataset(data);
    const auto val_idx = split_indices(ds.manifest, "val");
    require(!val_idx.empty(), "sweep-bundles: dataset has no val split");

    std::vector<std::vector<double>> rows;
    for (int n_tb : bundles) {
        RunConfig rc = rc_in;
        rc.model.n_tb = n_tb;
        const auto set = make_training_set(ds);
        OrbEvoModel model(rc.model);
        const TrainResult res = train(model, set, rc.training);
        load_params(model.params(), res.best_params);

        double dip_z = 0.0, absn = 0.0;
        for (int i : val_idx) {
            const auto rec = record_for(ds, i);
            const auto ctx = model.make_context(rec.molecule);
            const auto frames = rollout_physical(model, ctx, rec,
                                                 ds.manifest.stats, rec.n_frames());
            const auto sc =
                score_molecule(ds, i, frames, rc.evaluation.damping_tau, nullptr);
            dip_z += sc.dipole.nrmse_z;
            absn += sc.absorption_nrmse;
        }
        rows.push_back({static_cast<double>(n_tb), res.final_train_loss,
                        res.best_val, dip_z / val_idx.size(),
                        absn / val_idx.size()});
        std::cout << "n_tb=" << n_tb << " train_loss=" << res.final_train_loss
                  << " val_rollout_nrmse=" << res.best_val << "\n";
    }
    write_csv(out / "sweep.csv",
              {"n_tb", "train_loss", "val_rollout_nrmse", "dipole_nrmse_z",
               "absorption_nrmse"},
              rows);
    return 0;
}

int cmd_ood_split(const fs::path& data) {
    DatasetManifest m = load_manifest(data);
    std::vector<int> sizes;
    for (const auto& e : m.molecules) sizes.push_back(e.n_heavy + e.n_hydrogen);
    const SplitIndices s = ood_split(sizes);
    for (int i : s.train) m.molecules[i].split = "train";
    for (int i : s.val) m.molecules[i].split = "val";
    for (int i : s.test) m.molecules[i].split = "test";
    save_manifest(data, m);
    std::cout << "split by atom count: " << s.train.size() << " train, "
              << s.val.size() << " val, " << s.test.size() << " test\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic electron-dynamics surrogate toolkit"};
    app.require_subcommand(1);

    std::string config_path, data_flag, checkpoint, split = "test";
    std::string out_str = ".";
    std::uint64_t seed = 0;
    bool seed_given = false;
    int workers = 1;
    double damping_tau = 0.0;
    std::vector<int> bundles{1, 2, 4, 8};
    std::string pred_str;

    auto add_common = [&](CLI::App* sub, bool with_data) {
        sub->add_option("--config", config_path, "run configuration JSON");
        sub->add_option("--out", out_str, "output directory");
        sub->add_option("--seed", seed, "seed override")
            ->each([&](const std::string&) { seed_given = true; });
        sub->add_option("--workers", workers, "worker threads");
        if (with_data) sub->add_option("--data", data_flag, "dataset directory");
    };

    auto* gen = app.add_subcommand("generate", "propagate a synthetic dataset");
    add_common(gen, false);
    auto* tr = app.add_subcommand("train", "fit a surrogate on a dataset");
    add_common(tr, true);
    tr->add_option("--checkpoint", checkpoint, "resume from checkpoint");
    auto* ro = app.add_subcommand("rollout", "autoregressive unroll of a checkpoint");
    add_common(ro, true);
    ro->add_option("--checkpoint", checkpoint, "checkpoint base path")->required();
    ro->add_option("--split", split, "dataset split to unroll");
    auto* ev = app.add_subcommand("eval", "score predictions against references");
    add_common(ev, true);
    ev->add_option("--pred", pred_str, "predictions directory")->required();
    ev->add_option("--tau", damping_tau, "spectrum damping time (0 = auto)");
    auto* eq = app.add_subcommand("equiv-test", "rotation consistency protocol");
    add_common(eq, false);
    eq->add_option("--checkpoint", checkpoint, "optional checkpoint to test");
    auto* sw = app.add_subcommand("sweep-bundles", "train across bundle sizes");
    add_common(sw, true);
    sw->add_option("--bundles", bundles, "bundle sizes to sweep");
    auto* od = app.add_subcommand("ood-split", "reassign splits by atom count");
    od->add_option("--data", data_flag, "dataset directory");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig rc = load_run_config(config_path);
        if (seed_given) {
            rc.system.master_seed = seed;
            rc.model.seed = seed;
            rc.training.seed = seed;
        }
        const fs::path out = out_str;
        if (gen->parsed()) return cmd_generate(rc, out, workers);
        if (tr->parsed())
            return cmd_train(rc, resolve_data_dir(data_flag), out, checkpoint);
        if (ro->parsed())
            return cmd_rollout(resolve_data_dir(data_flag), checkpoint, out, split);
        if (ev->parsed())
            return cmd_eval(resolve_data_dir(data_flag), pred_str, out, damping_tau);
        if (eq->parsed()) return cmd_equiv_test(rc, checkpoint, out, seed);
        if (sw->parsed())
            return cmd_sweep_bundles(rc, resolve_data_dir(data_flag), out, bundles);
        if (od->parsed()) return cmd_ood_split(resolve_data_dir(data_flag));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
