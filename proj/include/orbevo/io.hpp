#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "orbevo/model.hpp"
#include "orbevo/training.hpp"

namespace orbevo {

using json = nlohmann::json;

// ---- low-level file plumbing ----

inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw OrbevoError("read_file: cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    return bytes;
}

/// Writes through a temp file and renames, so a crash cannot leave a
/// half-written artifact under the final name.
inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& bytes) {
    std::filesystem::create_directories(path.parent_path().empty()
                                            ? std::filesystem::path(".")
                                            : path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw OrbevoError("write_file_atomic: cannot open " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw OrbevoError("write_file_atomic: short write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

namespace detail_io {

static_assert(sizeof(double) == 8);

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
    require(pos + 4 <= in.size(), "trajectory decode: truncated header");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i]))
             << (8 * i);
    pos += 4;
    return v;
}

inline void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double get_f64(const std::string& in, std::size_t& pos) {
    require(pos + 8 <= in.size(), "decode: truncated payload");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i]))
                << (8 * i);
    pos += 8;
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace detail_io

// ---- trajectory binary format ----
// header: magic 'ORBT', version, n_occ, n_orb, n_frames (u32 LE each);
// payload: per frame, the real plane then the imaginary plane, row-major
// f64 LE.

inline constexpr std::uint32_t kTrajectoryMagic = 0x5442524fu;  // "ORBT"
inline constexpr std::uint32_t kTrajectoryVersion = 1;

inline std::string encode_trajectory_frames(const std::vector<CMat>& frames) {
    require(!frames.empty(), "encode_trajectory_frames: empty trajectory");
    const int n_occ = static_cast<int>(frames.front().rows());
    const int n_orb = static_cast<int>(frames.front().cols());
    std::string out;
    out.reserve(20 + frames.size() * n_occ * n_orb * 16);
    detail_io::put_u32(out, kTrajectoryMagic);
    detail_io::put_u32(out, kTrajectoryVersion);
    detail_io::put_u32(out, static_cast<std::uint32_t>(n_occ));
    detail_io::put_u32(out, static_cast<std::uint32_t>(n_orb));
    detail_io::put_u32(out, static_cast<std::uint32_t>(frames.size()));
    for (const CMat& c : frames) {
        require(c.rows() == n_occ && c.cols() == n_orb,
                "encode_trajectory_frames: inconsistent frame shapes");
        for (int i = 0; i < n_occ; ++i)
            for (int j = 0; j < n_orb; ++j) detail_io::put_f64(out, c(i, j).real());
        for (int i = 0; i < n_occ; ++i)
            for (int j = 0; j < n_orb; ++j) detail_io::put_f64(out, c(i, j).imag());
    }
    return out;
}

inline std::vector<CMat> decode_trajectory_frames(const std::string& bytes) {
    std::size_t pos = 0;
    require(detail_io::get_u32(bytes, pos) == kTrajectoryMagic,
            "decode_trajectory_frames: bad magic");
    require(detail_io::get_u32(bytes, pos) == kTrajectoryVersion,
            "decode_trajectory_frames: unsupported version");
    const int n_occ = static_cast<int>(detail_io::get_u32(bytes, pos));
    const int n_orb = static_cast<int>(detail_io::get_u32(bytes, pos));
    const int n_frames = static_cast<int>(detail_io::get_u32(bytes, pos));
    std::vector<CMat> frames;
    for (int k = 0; k < n_frames; ++k) {
        CMat c(n_occ, n_orb);
        for (int i = 0; i < n_occ; ++i)
            for (int j = 0; j < n_orb; ++j) c(i, j) = detail_io::get_f64(bytes, pos);
        for (int i = 0; i < n_occ; ++i)
            for (int j = 0; j < n_orb; ++j)
                c(i, j) += cplx(0.0, detail_io::get_f64(bytes, pos));
        frames.push_back(std::move(c));
    }
    require(pos == bytes.size(), "decode_trajectory_frames: trailing bytes");
    return frames;
}

// ---- json codecs with unknown-key rejection ----

inline void check_known_keys(const json& obj, const std::set<std::string>& known,
                             const std::string& where) {
    require(obj.is_object(), where + ": expected a JSON object");
    for (const auto& [key, value] : obj.items())
        if (!known.count(key))
            throw OrbevoError(where + ": unknown key '" + key + "'");
}

template <typename T>
inline void maybe_get(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

inline json pulse_to_json(const FieldPulse& p) {
    return {{"e0", p.e0}, {"f1", p.f1}, {"f2", p.f2}, {"sigma", p.sigma},
            {"t0", p.t0}};
}

inline FieldPulse pulse_from_json(const json& j) {
    check_known_keys(j, {"e0", "f1", "f2", "sigma", "t0"}, "pulse");
    FieldPulse p;
    maybe_get(j, "e0", p.e0);
    maybe_get(j, "f1", p.f1);
    maybe_get(j, "f2", p.f2);
    maybe_get(j, "sigma", p.sigma);
    maybe_get(j, "t0", p.t0);
    return p;
}

inline json propagation_to_json(const PropagationConfig& c) {
    return {{"total_time", c.total_time},
            {"n_steps", c.n_steps},
            {"downsample", c.downsample},
            {"corrector_passes", c.corrector_passes},
            {"pulse", pulse_to_json(c.pulse)}};
}

inline PropagationConfig propagation_from_json(const json& j) {
    check_known_keys(j, {"total_time", "n_steps", "downsample", "corrector_passes",
                         "pulse"},
                     "propagation");
    PropagationConfig c;
    maybe_get(j, "total_time", c.total_time);
    maybe_get(j, "n_steps", c.n_steps);
    maybe_get(j, "downsample", c.downsample);
    maybe_get(j, "corrector_passes", c.corrector_passes);
    if (j.contains("pulse")) c.pulse = pulse_from_json(j.at("pulse"));
    return c;
}

inline json model_to_json(const ModelConfig& c) {
    return {{"variant", c.variant == ModelConfig::Variant::DM ? "dm" : "wf"},
            {"n_tb", c.n_tb},
            {"d_emb", c.d_emb},
            {"lmax_layers", c.lmax_layers},
            {"n_heads", c.n_heads},
            {"n_radial", c.n_radial},
            {"lmax_edge", c.lmax_edge},
            {"cutoff", c.cutoff},
            {"phase_head", c.phase_head},
            {"quadratic_density", c.quadratic_density},
            {"attn_dropout", c.attn_dropout},
            {"drop_path", c.drop_path},
            {"seed", c.seed}};
}

inline ModelConfig model_from_json(const json& j) {
    check_known_keys(j, {"variant", "n_tb", "d_emb", "lmax_layers", "n_heads",
                         "n_radial", "lmax_edge", "cutoff", "phase_head",
                         "quadratic_density", "attn_dropout", "drop_path", "seed"},
                     "model");
    std::string variant = "dm";
    maybe_get(j, "variant", variant);
    require(variant == "dm" || variant == "wf", "model: variant must be dm or wf");
    int n_tb = 4;
    maybe_get(j, "n_tb", n_tb);
    ModelConfig c = ModelConfig::defaults(
        variant == "dm" ? ModelConfig::Variant::DM : ModelConfig::Variant::WF, n_tb);
    maybe_get(j, "d_emb", c.d_emb);
    maybe_get(j, "lmax_layers", c.lmax_layers);
    maybe_get(j, "n_heads", c.n_heads);
    maybe_get(j, "n_radial", c.n_radial);
    maybe_get(j, "lmax_edge", c.lmax_edge);
    maybe_get(j, "cutoff", c.cutoff);
    maybe_get(j, "phase_head", c.phase_head);
    maybe_get(j, "quadratic_density", c.quadratic_density);
    maybe_get(j, "attn_dropout", c.attn_dropout);
    maybe_get(j, "drop_path", c.drop_path);
    maybe_get(j, "seed", c.seed);
    return c;
}

inline json training_to_json(const TrainConfig& c) {
    const char* mode = c.corruption == TrainConfig::Corruption::Pushforward
                           ? "pushforward"
                           : c.corruption == TrainConfig::Corruption::NoiseInject
                                 ? "noise"
                                 : "onestep";
    return {{"corruption", mode},
            {"pushforward_prob", c.pushforward_prob},
            {"warmup_iters", c.warmup_iters},
            {"warmup_enabled", c.warmup_enabled},
            {"state_sample", c.state_sample},
            {"batch_size", c.batch_size},
            {"iterations", c.iterations},
            {"eval_mode_unroll", c.eval_mode_unroll},
            {"fixed_pushforward_count", c.fixed_pushforward_count},
            {"noise_sigma", c.noise_sigma},
            {"first_target_weight", c.first_target_weight},
            {"val_interval", c.val_interval},
            {"seed", c.seed},
            {"weight_decay", c.adamw.weight_decay},
            {"lr_max", c.lr_max},
            {"lr_min", c.lr_min},
            {"lr_warmup", c.lr_warmup}};
}

inline TrainConfig training_from_json(const json& j) {
    check_known_keys(j, {"corruption", "pushforward_prob", "warmup_iters",
                         "warmup_enabled", "state_sample", "batch_size", "iterations",
                         "eval_mode_unroll", "fixed_pushforward_count", "noise_sigma",
                         "first_target_weight", "val_interval", "seed", "weight_decay",
                         "lr_max", "lr_min", "lr_warmup"},
                     "training");
    TrainConfig c;
    std::string mode = "pushforward";
    maybe_get(j, "corruption", mode);
    if (mode == "pushforward") c.corruption = TrainConfig::Corruption::Pushforward;
    else if (mode == "noise") c.corruption = TrainConfig::Corruption::NoiseInject;
    else if (mode == "onestep") c.corruption = TrainConfig::Corruption::Onestep;
    else throw OrbevoError("training: unknown corruption mode " + mode);
    maybe_get(j, "pushforward_prob", c.pushforward_prob);
    maybe_get(j, "warmup_iters", c.warmup_iters);
    maybe_get(j, "warmup_enabled", c.warmup_enabled);
    maybe_get(j, "state_sample", c.state_sample);
    maybe_get(j, "batch_size", c.batch_size);
    maybe_get(j, "iterations", c.iterations);
    maybe_get(j, "eval_mode_unroll", c.eval_mode_unroll);
    maybe_get(j, "fixed_pushforward_count", c.fixed_pushforward_count);
    maybe_get(j, "noise_sigma", c.noise_sigma);
    maybe_get(j, "first_target_weight", c.first_target_weight);
    maybe_get(j, "val_interval", c.val_interval);
    maybe_get(j, "seed", c.seed);
    maybe_get(j, "weight_decay", c.adamw.weight_decay);
    maybe_get(j, "lr_max", c.lr_max);
    maybe_get(j, "lr_min", c.lr_min);
    maybe_get(j, "lr_warmup", c.lr_warmup);
    return c;
}

inline json norm_stats_to_json(const NormStats& s) {
    return {{"c0_rms", {s.c0_rms[0], s.c0_rms[1]}},
            {"delta_rms", {s.delta_rms[0], s.delta_rms[1]}},
            {"field_max", s.field_max},
            {"clamped", s.clamped}};
}

inline NormStats norm_stats_from_json(const json& j) {
    check_known_keys(j, {"c0_rms", "delta_rms", "field_max", "clamped"}, "norm_stats");
    NormStats s;
    for (int sp = 0; sp < 2; ++sp) {
        s.c0_rms[sp] = j.at("c0_rms").at(sp).get<std::vector<double>>();
        s.delta_rms[sp] = j.at("delta_rms").at(sp).get<std::vector<double>>();
    }
    s.field_max = j.at("field_max").get<double>();
    maybe_get(j, "clamped", s.clamped);
    return s;
}

// ---- dataset manifest ----

struct MoleculeEntry {
    std::uint64_t seed = 0;
    int n_heavy = 1;
    int n_hydrogen = 0;
    std::string file;      // trajectory file, relative to the dataset dir
    std::uint64_t checksum = 0;
    std::string split = "train";  // train | val | test
};

struct DatasetManifest {
    int version = 1;
    std::vector<MoleculeEntry> molecules;
    PropagationConfig propagation;
    double mean_field_strength = 0.1;
    double beta = 1000.0;
    NormStats stats;
};

inline json manifest_to_json(const DatasetManifest& m) {
    json mols = json::array();
    for (const auto& e : m.molecules)
        mols.push_back({{"seed", e.seed},
                        {"n_heavy", e.n_heavy},
                        {"n_hydrogen", e.n_hydrogen},
                        {"file", e.file},
                        {"checksum", e.checksum},
                        {"split", e.split}});
    return {{"version", m.version},
            {"molecules", mols},
            {"propagation", propagation_to_json(m.propagation)},
            {"mean_field_strength", m.mean_field_strength},
            {"beta", m.beta},
            {"norm_stats", norm_stats_to_json(m.stats)}};
}

inline DatasetManifest manifest_from_json(const json& j) {
    check_known_keys(j, {"version", "molecules", "propagation",
                         "mean_field_strength", "beta", "norm_stats"},
                     "manifest");
    DatasetManifest m;
    m.version = j.at("version").get<int>();
    require(m.version == 1, "manifest: unsupported version");
    for (const auto& e : j.at("molecules")) {
        check_known_keys(e, {"seed", "n_heavy", "n_hydrogen", "file", "checksum",
                             "split"},
                         "manifest molecule");
        MoleculeEntry entry;
        entry.seed = e.at("seed").get<std::uint64_t>();
        entry.n_heavy = e.at("n_heavy").get<int>();
        entry.n_hydrogen = e.at("n_hydrogen").get<int>();
        entry.file = e.at("file").get<std::string>();
        entry.checksum = e.at("checksum").get<std::uint64_t>();
        entry.split = e.at("split").get<std::string>();
        m.molecules.push_back(std::move(entry));
    }
    m.propagation = propagation_from_json(j.at("propagation"));
    maybe_get(j, "mean_field_strength", m.mean_field_strength);
    maybe_get(j, "beta", m.beta);
    m.stats = norm_stats_from_json(j.at("norm_stats"));
    return m;
}

inline void save_manifest(const std::filesystem::path& dir,
                          const DatasetManifest& m) {
    write_file_atomic(dir / "manifest.json", manifest_to_json(m).dump(2) + "\n");
}

inline DatasetManifest load_manifest(const std::filesystem::path& dir) {
    return manifest_from_json(json::parse(read_file(dir / "manifest.json")));
}

/// Loads one molecule's trajectory, verifying its checksum, and regenerates
/// its deterministic system matrices and ground state.
inline Trajectory load_molecule_trajectory(const std::filesystem::path& dir,
                                           const DatasetManifest& m, int index,
                                           SystemMatrices* sys_out = nullptr) {
    const MoleculeEntry& e = m.molecules.at(index);
    const std::string bytes = read_file(dir / e.file);
    require(fnv1a(bytes) == e.checksum,
            "load_molecule_trajectory: checksum mismatch for " + e.file);
    Trajectory traj;
    traj.molecule = generate_molecule(e.n_heavy, e.n_hydrogen, e.seed);
    const SystemMatrices sys =
        build_system(traj.molecule, {}, m.mean_field_strength);
    traj.ground = solve_ground_state(sys, default_occupied_states(traj.molecule));
    traj.frames = decode_trajectory_frames(bytes);
    traj.dt_fine = m.propagation.total_time / m.propagation.n_steps;
    traj.downsample = m.propagation.downsample;
    for (int k = 0; k < traj.n_frames(); ++k)
        traj.field.push_back(
            field_value(m.propagation.pulse, k * traj.frame_dt()));
    if (sys_out) *sys_out = sys;
    return traj;
}

// ---- checkpoints ----
// <path>.json holds the model config and a parameter index; <path>.bin holds
// all parameter values concatenated as f64 LE.

inline void save_checkpoint(const std::filesystem::path& path_base,
                            const ModelConfig& cfg,
                            const std::map<std::string, Mat>& params) {
    json index = json::array();
    std::string blob;
    std::size_t offset = 0;
    for (const auto& [name, val] : params) {
        index.push_back({{"name", name},
                         {"rows", val.rows()},
                         {"cols", val.cols()},
                         {"offset", offset}});
        for (int i = 0; i < val.rows(); ++i)
            for (int j = 0; j < val.cols(); ++j) detail_io::put_f64(blob, val(i, j));
        offset += static_cast<std::size_t>(val.size());
    }
    const json head = {{"version", 1},
                       {"model", model_to_json(cfg)},
                       {"params", index},
                       {"blob_checksum", fnv1a(blob)}};
    write_file_atomic(path_base.string() + ".json", head.dump(2) + "\n");
    write_file_atomic(path_base.string() + ".bin", blob);
}

inline std::pair<ModelConfig, std::map<std::string, Mat>> load_checkpoint(
    const std::filesystem::path& path_base) {
    const json head = json::parse(read_file(path_base.string() + ".json"));
    check_known_keys(head, {"version", "model", "params", "blob_checksum"},
                     "checkpoint");
    require(head.at("version").get<int>() == 1, "checkpoint: unsupported version");
    const std::string blob = read_file(path_base.string() + ".bin");
    require(fnv1a(blob) == head.at("blob_checksum").get<std::uint64_t>(),
            "checkpoint: blob checksum mismatch");
    std::map<std::string, Mat> params;
    for (const auto& e : head.at("params")) {
        const int rows = e.at("rows").get<int>();
        const int cols = e.at("cols").get<int>();
        std::size_t pos = e.at("offset").get<std::size_t>() * 8;
        Mat m(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) m(i, j) = detail_io::get_f64(blob, pos);
        params.emplace(e.at("name").get<std::string>(), std::move(m));
    }
    return {model_from_json(head.at("model")), std::move(params)};
}

// ---- run configuration ----

struct SystemSection {
    int n_molecules = 8;
    int n_heavy_min = 1, n_heavy_max = 3;
    int n_hydrogen_min = 1, n_hydrogen_max = 4;
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    std::uint64_t master_seed = 0;
};

struct EvaluationSection {
    double damping_tau = 0.0;  // 0 = 2x trajectory length
    int pad = 4;
    double rotation_deg = 35.0;
};

struct RunConfig {
    SystemSection system;
    PropagationConfig propagation;
    double mean_field_strength = 0.1;
    double beta = 1000.0;
    ModelConfig model = ModelConfig::defaults(ModelConfig::Variant::DM);
    TrainConfig training;
    EvaluationSection evaluation;
};

inline json run_config_to_json(const RunConfig& c) {
    return {{"system",
             {{"n_molecules", c.system.n_molecules},
              {"n_heavy_min", c.system.n_heavy_min},
              {"n_heavy_max", c.system.n_heavy_max},
              {"n_hydrogen_min", c.system.n_hydrogen_min},
              {"n_hydrogen_max", c.system.n_hydrogen_max},
              {"train_fraction", c.system.train_fraction},
              {"val_fraction", c.system.val_fraction},
              {"master_seed", c.system.master_seed}}},
            {"propagation", propagation_to_json(c.propagation)},
            {"mean_field_strength", c.mean_field_strength},
            {"beta", c.beta},
            {"model", model_to_json(c.model)},
            {"training", training_to_json(c.training)},
            {"evaluation",
             {{"damping_tau", c.evaluation.damping_tau},
              {"pad", c.evaluation.pad},
              {"rotation_deg", c.evaluation.rotation_deg}}}};
}

inline RunConfig run_config_from_json(const json& j) {
    check_known_keys(j, {"system", "propagation", "mean_field_strength", "beta",
                         "model", "training", "evaluation"},
                     "run config");
    RunConfig c;
    if (j.contains("system")) {
        const json& s = j.at("system");
        check_known_keys(s, {"n_molecules", "n_heavy_min", "n_heavy_max",
                             "n_hydrogen_min", "n_hydrogen_max", "train_fraction",
                             "val_fraction", "master_seed"},
                         "system");
        maybe_get(s, "n_molecules", c.system.n_molecules);
        maybe_get(s, "n_heavy_min", c.system.n_heavy_min);
        maybe_get(s, "n_heavy_max", c.system.n_heavy_max);
        maybe_get(s, "n_hydrogen_min", c.system.n_hydrogen_min);
        maybe_get(s, "n_hydrogen_max", c.system.n_hydrogen_max);
        maybe_get(s, "train_fraction", c.system.train_fraction);
        maybe_get(s, "val_fraction", c.system.val_fraction);
        maybe_get(s, "master_seed", c.system.master_seed);
    }
    if (j.contains("propagation")) c.propagation = propagation_from_json(j.at("propagation"));
    maybe_get(j, "mean_field_strength", c.mean_field_strength);
    maybe_get(j, "beta", c.beta);
    if (j.contains("model")) c.model = model_from_json(j.at("model"));
    if (j.contains("training")) c.training = training_from_json(j.at("training"));
    if (j.contains("evaluation")) {
        const json& e = j.at("evaluation");
        check_known_keys(e, {"damping_tau", "pad", "rotation_deg"}, "evaluation");
        maybe_get(e, "damping_tau", c.evaluation.damping_tau);
        maybe_get(e, "pad", c.evaluation.pad);
        maybe_get(e, "rotation_deg", c.evaluation.rotation_deg);
    }
    return c;
}

// ---- tabular artifacts ----

inline void write_csv(const std::filesystem::path& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i)
        out += (i ? "," : "") + header[i];
    out += "\n";
    char buf[32];
    for (const auto& row : rows) {
        require(row.size() == header.size(), "write_csv: ragged row");
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.12g", row[i]);
            out += (i ? "," : "") + std::string(buf);
        }
        out += "\n";
    }
    write_file_atomic(path, out);
}

/// Minimal multi-series line plot; a convenience artifact, not consumed by
/// any test.
inline void write_svg_lineplot(const std::filesystem::path& path, const Vec& x,
                               const std::vector<Vec>& series,
                               const std::vector<std::string>& labels) {
    require(!series.empty() && series.size() == labels.size(),
            "write_svg_lineplot: series/label mismatch");
    const int w = 640, h = 400, m = 45;
    double ymin = 1e300, ymax = -1e300;
    for (const Vec& s : series) {
        ymin = std::min(ymin, s.minCoeff());
        ymax = std::max(ymax, s.maxCoeff());
    }
    if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
    const double xmin = x.minCoeff(), xmax = std::max(x.maxCoeff(), xmin + 1e-12);
    auto px = [&](double v) { return m + (v - xmin) / (xmax - xmin) * (w - 2 * m); };
    auto py = [&](double v) { return h - m - (v - ymin) / (ymax - ymin) * (h - 2 * m); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                      std::to_string(w) + "\" height=\"" + std::to_string(h) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    char buf[64];
    for (std::size_t s = 0; s < series.size(); ++s) {
        svg += "<polyline fill=\"none\" stroke=\"";
        svg += colors[s % 4];
        svg += "\" stroke-width=\"1.3\" points=\"";
        for (int i = 0; i < x.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", px(x(i)), py(series[s](i)));
            svg += buf;
        }
        svg += "\"/>\n";
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%d\" font-size=\"12\" fill=\"%s\">",
                      w - m - 120, m + 16 * static_cast<int>(s), colors[s % 4]);
        svg += buf + labels[s] + "</text>\n";
    }
    svg += "</svg>\n";
    write_file_atomic(path, svg);
}

}  // namespace orbevo
