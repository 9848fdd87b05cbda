#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "orbevo/features.hpp"
#include "orbevo/optimizer.hpp"

namespace orbevo {

struct ModelConfig {
    enum class Variant { WF, DM };
    Variant variant = Variant::DM;
    int n_tb = 4;
    int d_emb = 32;
    std::vector<int> lmax_layers;  // per-block feature order; filled by defaults()
    int n_heads = 4;
    int n_radial = 64;
    int lmax_edge = 2;
    double cutoff = 5.0;
    bool phase_head = false;
    bool quadratic_density = false;
    double attn_dropout = 0.1;
    double drop_path = 0.05;
    std::uint64_t seed = 0;

    static ModelConfig defaults(Variant v, int n_tb = 4) {
        ModelConfig c;
        c.variant = v;
        c.n_tb = n_tb;
        c.lmax_layers = v == Variant::DM ? std::vector<int>{4, 4, 2, 2}
                                         : std::vector<int>{2, 2, 2, 2};
        return c;
    }

    int n_layers() const { return static_cast<int>(lmax_layers.size()); }
    int density_layers() const {
        // density edge features feed the first two blocks of the DM variant
        return variant == Variant::DM ? std::min(2, n_layers()) : 0;
    }
};

/// Equivariant LayerNorm over a stacked feature matrix: standard LayerNorm
/// on l = 0 rows, RMS normalization (no centering) over (m, channel) for
/// l > 0. s[l] scales channels; b[l] is added at the m = 0 slot only.
inline ad::Tensor so2_layer_norm(const ad::Tensor& x, int lmax, int n_nodes,
                                 const std::vector<ad::Tensor>& s,
                                 const std::vector<ad::Tensor>& b) {
    const FeatureRows rows(lmax);
    require(x.rows() == n_nodes * rows.d_sph, "so2_layer_norm: row count mismatch");
    ad::Tensor acc;
    for (int l = 0; l <= lmax; ++l) {
        const auto lr = rows.l_rows(n_nodes, l);
        ad::Tensor xl = ad::gather_rows(x, lr);
        ad::Tensor normed;
        if (l == 0) {
            ad::Tensor mu = ad::col_mean(xl);
            ad::Tensor centered = ad::sub(
                xl, ad::matmul(mu, ad::Tensor::constant(Mat::Ones(1, xl.cols()))));
            ad::Tensor var = ad::col_mean(ad::hadamard(centered, centered));
            normed = ad::row_scale(centered, ad::pow_scalar(var, -0.5, 1e-6));
        } else {
            ad::Tensor sq = ad::hadamard(xl, xl);
            ad::Tensor ms = ad::col_mean(ad::group_mean_rows(sq, 2 * l + 1));
            normed = ad::row_scale(
                xl, ad::repeat_rows(ad::pow_scalar(ms, -0.5, 1e-6), 2 * l + 1));
        }
        normed =
            ad::hadamard(normed, ad::repeat_rows(s[l], static_cast<int>(lr.size())));
        ad::Tensor placed = ad::scatter_add_rows(normed, lr, n_nodes * rows.d_sph);
        ad::Tensor b_nodes = ad::repeat_rows(b[l], n_nodes);
        placed = ad::add(placed, ad::scatter_add_rows(b_nodes, rows.m0_rows(n_nodes, l),
                                                      n_nodes * rows.d_sph));
        acc = acc.defined() ? ad::add(acc, placed) : placed;
    }
    return acc;
}

namespace detail_model {

/// Per-(lmax_in, lmax_out) precomputed contraction kernels and row indices.
struct PairIndex {
    std::vector<TPPath> paths;
    std::vector<std::shared_ptr<std::vector<Mat>>> kernels;
    std::vector<std::vector<int>> src_rows;  // per path: sender gather offsets
    std::vector<std::vector<int>> dst_rows;  // per path: receiver gather offsets
    std::map<int, std::vector<int>> scatter_rows;  // per l_out: edge -> node rows
};

}  // namespace detail_model

/// Everything molecule-specific and parameter-independent, built once and
/// reused across training samples of the same molecule.
struct ModelContext {
    BasisLayout layout;
    RadiusGraph graph;
    Mat radial;  // n_edges x n_radial
    std::vector<int> edge_dst;  // receiver node per edge (softmax segments)
    std::map<std::pair<int, int>, detail_model::PairIndex> pairs;
    std::map<int, FeatureRows> rows;  // keyed by lmax
    Mat species_onehot;               // n_nodes x 2
    std::map<int, Mat> degree_harmonic;  // per l: (n_nodes*(2l+1)) x 1

    const FeatureRows& feature_rows(int lmax) const { return rows.at(lmax); }
    int n_nodes() const { return graph.n_nodes; }
};

/// The learned propagator surrogate (wavefunction and density-matrix
/// variants) built on the minimal diff engine.
class OrbEvoModel {
public:
    explicit OrbEvoModel(const ModelConfig& cfg) : cfg_(cfg), rng_(cfg.seed ^ 0x0d31ull) {
        require(cfg_.n_layers() >= 1, "OrbEvoModel: need at least one layer");
        require(cfg_.n_heads >= 1 && cfg_.d_emb % cfg_.n_heads == 0,
                "OrbEvoModel: d_emb must divide into heads");
        build_parameters();
    }

    const ModelConfig& config() const { return cfg_; }
    ad::ParameterSet& params() { return params_; }
    const ad::ParameterSet& params() const { return params_; }

    ModelContext make_context(const Molecule& mol) const {
        ModelContext ctx;
        ctx.layout = mol.layout;
        ctx.graph = build_graph(mol, cfg_.cutoff, cfg_.lmax_edge);
        ctx.radial = radial_basis(ctx.graph, cfg_.n_radial);
        ctx.edge_dst = ctx.graph.dst;

        std::vector<int> lmaxes = cfg_.lmax_layers;
        lmaxes.push_back(2);  // readout block order
        for (int lm : lmaxes)
            if (!ctx.rows.count(lm)) ctx.rows.emplace(lm, FeatureRows(lm));
        if (!ctx.rows.count(2)) ctx.rows.emplace(2, FeatureRows(2));

        auto add_pair = [&](int lin, int lout) {
            const auto key = std::make_pair(lin, lout);
            if (ctx.pairs.count(key)) return;
            detail_model::PairIndex pi;
            pi.paths = enumerate_paths(lin, cfg_.lmax_edge, lout);
            const FeatureRows& rin = ctx.rows.at(lin);
            const FeatureRows& rout = ctx.rows.at(lout);
            // offsets index into the per-order gathered stack (2l+1 rows/node)
            for (const TPPath& p : pi.paths) {
                pi.kernels.push_back(path_kernels(ctx.graph, p, default_cg_table()));
                std::vector<int> src_off, dst_off;
                for (int e = 0; e < ctx.graph.n_edges(); ++e) {
                    src_off.push_back(ctx.graph.src[e] * (2 * p.l_in + 1));
                    dst_off.push_back(ctx.graph.dst[e] * (2 * p.l_in + 1));
                }
                pi.src_rows.push_back(std::move(src_off));
                pi.dst_rows.push_back(std::move(dst_off));
            }
            (void)rin;
            for (int lo = 0; lo <= lout; ++lo) {
                std::vector<int> rows;
                for (int e = 0; e < ctx.graph.n_edges(); ++e)
                    for (int m = 0; m < 2 * lo + 1; ++m)
                        rows.push_back(ctx.graph.dst[e] * rout.d_sph +
                                       rout.l_offset[lo] + m);
                pi.scatter_rows[lo] = std::move(rows);
            }
            ctx.pairs.emplace(key, std::move(pi));
        };
        for (int k = 0; k < cfg_.n_layers(); ++k) {
            const int lin = cfg_.lmax_layers[k];
            const int lout = k + 1 < cfg_.n_layers() ? cfg_.lmax_layers[k + 1] : 2;
            add_pair(lin, lout);
            if (cfg_.variant == ModelConfig::Variant::WF) add_pair(lout, lout);
        }
        add_pair(2, 2);  // readout block

        ctx.species_onehot = Mat::Zero(mol.n_atoms(), 2);
        for (int a = 0; a < mol.n_atoms(); ++a)
            ctx.species_onehot(a, static_cast<int>(mol.layout.species(a))) = 1.0;
        for (int l = 0; l <= cfg_.lmax_edge; ++l) {
            Mat h = Mat::Zero(mol.n_atoms() * (2 * l + 1), 1);
            for (int e = 0; e < ctx.graph.n_edges(); ++e) {
                const int d = ctx.graph.dst[e];
                for (int m = 0; m < 2 * l + 1; ++m)
                    h(d * (2 * l + 1) + m, 0) += ctx.graph.harmonics[e][l](m);
            }
            for (int a = 0; a < mol.n_atoms(); ++a) {
                const double sc = 1.0 / std::sqrt(1.0 + ctx.graph.degree[a]);
                h.middleRows(a * (2 * l + 1), 2 * l + 1) *= sc;
            }
            ctx.degree_harmonic[l] = std::move(h);
        }
        return ctx;
    }

    struct Output {
        std::vector<ad::Tensor> delta;  // per state: (n_atoms*9) x 4*N_tb
        std::vector<ad::Tensor> phase;  // per state: 1 x 2*N_tb (if enabled)
    };

    /// Full forward pass for the sampled states of one molecule. `field`
    /// holds the 2*N_tb field samples of the current and next bundles.
    /// `density` is required by the DM variant and ignored by WF.
    Output forward(const ModelContext& ctx, const std::vector<Mat>& packed,
                   const DensityBlocks* density, const Vec& field,
                   bool training = false, Rng* dropout_rng = nullptr) const {
        require(!packed.empty(), "forward: no states");
        require(field.size() == 2 * cfg_.n_tb, "forward: bad field window size");
        if (cfg_.variant == ModelConfig::Variant::DM)
            require(density != nullptr, "forward: DM variant needs density features");

        const ad::Tensor rb = ad::Tensor::constant(ctx.radial);
        const ad::Tensor field_row = ad::Tensor::constant(field.transpose());

        std::vector<ad::Tensor> x;
        for (const Mat& p : packed) x.push_back(embed(ctx, p, density));

        for (int k = 0; k < cfg_.n_layers(); ++k) {
            const int lin = cfg_.lmax_layers[k];
            const int lout = k + 1 < cfg_.n_layers() ? cfg_.lmax_layers[k + 1] : 2;
            const bool with_density =
                cfg_.variant == ModelConfig::Variant::DM && k < cfg_.density_layers();
            for (auto& xs : x)
                xs = block_forward(ctx, layers_[k], xs, lin, lout, rb, field_row,
                                   with_density ? density : nullptr, training,
                                   dropout_rng);
            if (cfg_.variant == ModelConfig::Variant::WF && k + 1 < cfg_.n_layers()) {
                // average pooling over electronic states, one global block,
                // broadcast back: the only cross-state coupling in this variant
                ad::Tensor pooled = x[0];
                for (std::size_t s = 1; s < x.size(); ++s) pooled = ad::add(pooled, x[s]);
                pooled = ad::scale(pooled, 1.0 / static_cast<double>(x.size()));
                pooled = block_forward(ctx, global_layers_[k], pooled, lout, lout, rb,
                                       field_row, nullptr, training, dropout_rng);
                for (auto& xs : x) xs = ad::add(xs, pooled);
            }
        }

        Output out;
        for (auto& xs : x) {
            ad::Tensor h = block_forward(ctx, readout_block_, xs, 2, 2, rb, field_row,
                                         nullptr, training, dropout_rng);
            out.delta.push_back(per_l_linear(ctx, h, 2, readout_w_, &readout_b0_));
            if (cfg_.phase_head) {
                const auto l0 = ctx.feature_rows(2).l_rows(ctx.n_nodes(), 0);
                ad::Tensor inv = ad::gather_rows(h, l0);
                ad::Tensor mean = ad::scale(
                    ad::matmul(ad::Tensor::constant(Mat::Ones(1, ctx.n_nodes())), inv),
                    1.0 / ctx.n_nodes());
                ad::Tensor ph =
                    ad::matmul(ad::silu(ad::matmul(mean, phase_w1_)), phase_w2_);
                out.phase.push_back(ad::rowwise_bias(ph, phase_b_));
            }
        }
        return out;
    }

private:
    struct BlockParams {
        // field-conditioning MLP and per-order LayerNorm modulation
        ad::Tensor w_cond, b_cond;
        std::vector<ad::Tensor> w_s1, w_b1, s1_base, b1_base;  // LN before attention
        std::vector<ad::Tensor> w_s2, w_b2, s2_base, b2_base;  // LN before FFN
        // attention
        ad::Tensor w_rad, b_rad;  // shared radial MLP of the block
        struct PathParams {
            ad::Tensor w_src, w_dst, w_gate;
        };
        std::vector<PathParams> paths;
        std::vector<ad::Tensor> w_density;  // per l_out (DM blocks only)
        ad::Tensor w_att;
        std::vector<ad::Tensor> w_out;  // per l_out
        // feed-forward
        std::vector<ad::Tensor> w_ffn1, w_ffn2;
        std::vector<ad::Tensor> w_gate;  // per l > 0
        ad::Tensor b_ffn1, b_ffn2;
        int lmax_in = 2, lmax_out = 2;
    };

    Mat init(int r, int c, double scale_mult = 1.0) {
        Mat m(r, c);
        const double s = scale_mult / std::sqrt(static_cast<double>(r));
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) m(i, j) = s * rng_.normal();
        return m;
    }

    BlockParams make_block(const std::string& prefix, int lin, int lout,
                           bool with_density) {
        const int c = cfg_.d_emb;
        BlockParams b;
        b.lmax_in = lin;
        b.lmax_out = lout;
        b.w_cond = params_.add(prefix + ".cond.w", init(2 * cfg_.n_tb, c));
        b.b_cond = params_.add(prefix + ".cond.b", Mat::Zero(1, c));
        auto ln_set = [&](const char* tag, int lmax, std::vector<ad::Tensor>& ws,
                          std::vector<ad::Tensor>& wb, std::vector<ad::Tensor>& sb,
                          std::vector<ad::Tensor>& bb) {
            for (int l = 0; l <= lmax; ++l) {
                const std::string p = prefix + tag + std::to_string(l);
                ws.push_back(params_.add(p + ".ws", init(c, c, 0.1)));
                wb.push_back(params_.add(p + ".wb", init(c, c, 0.1)));
                sb.push_back(params_.add(p + ".s", Mat::Ones(1, c)));
                bb.push_back(params_.add(p + ".b", Mat::Zero(1, c)));
            }
        };
        ln_set(".ln1.l", lin, b.w_s1, b.w_b1, b.s1_base, b.b1_base);
        ln_set(".ln2.l", lout, b.w_s2, b.w_b2, b.s2_base, b.b2_base);

        b.w_rad = params_.add(prefix + ".rad.w", init(cfg_.n_radial, c));
        b.b_rad = params_.add(prefix + ".rad.b", Mat::Zero(1, c));
        const auto paths = enumerate_paths(lin, cfg_.lmax_edge, lout);
        for (std::size_t p = 0; p < paths.size(); ++p) {
            const std::string pp = prefix + ".path" + std::to_string(p);
            BlockParams::PathParams pe;
            pe.w_src = params_.add(pp + ".ws", init(c, c));
            pe.w_dst = params_.add(pp + ".wd", init(c, c));
            pe.w_gate = params_.add(pp + ".wg", init(c, c, 0.5));
            b.paths.push_back(std::move(pe));
        }
        if (with_density)
            for (int lo = 0; lo <= lout; ++lo)
                b.w_density.push_back(params_.add(
                    prefix + ".dens.l" + std::to_string(lo),
                    init(density_mult(std::min(lo, 4)) * 2 * cfg_.n_tb, c, 0.5)));
        b.w_att = params_.add(prefix + ".att.w", init(c, cfg_.n_heads));
        for (int lo = 0; lo <= lout; ++lo)
            b.w_out.push_back(
                params_.add(prefix + ".out.l" + std::to_string(lo), init(c, c)));
        for (int l = 0; l <= lout; ++l) {
            b.w_ffn1.push_back(
                params_.add(prefix + ".ffn1.l" + std::to_string(l), init(c, c)));
            b.w_ffn2.push_back(
                params_.add(prefix + ".ffn2.l" + std::to_string(l), init(c, c)));
            if (l > 0)
                b.w_gate.push_back(
                    params_.add(prefix + ".gate.l" + std::to_string(l), init(c, c)));
        }
        b.b_ffn1 = params_.add(prefix + ".ffn1.b", Mat::Zero(1, c));
        b.b_ffn2 = params_.add(prefix + ".ffn2.b", Mat::Zero(1, c));
        return b;
    }

    void build_parameters() {
        const int c = cfg_.d_emb;
        const int dcond = pack_cond_channels(cfg_.n_tb);
        w_type_ = params_.add("embed.type", init(2, c));
        for (int l = 0; l <= 2; ++l) {
            w_in_.push_back(
                params_.add("embed.in.l" + std::to_string(l), init(dcond, c)));
            w_degree_.push_back(
                params_.add("embed.deg.l" + std::to_string(l), init(1, c)));
        }
        b_in_ = params_.add("embed.in.b", Mat::Zero(1, c));
        if (cfg_.variant == ModelConfig::Variant::DM)
            for (int l = 0; l <= std::min(4, cfg_.lmax_layers.front()); ++l)
                w_dens_diag_.push_back(params_.add(
                    "embed.dens.l" + std::to_string(l),
                    init(density_mult(l) * 2 * cfg_.n_tb, c, 0.5)));

        for (int k = 0; k < cfg_.n_layers(); ++k) {
            const int lin = cfg_.lmax_layers[k];
            const int lout = k + 1 < cfg_.n_layers() ? cfg_.lmax_layers[k + 1] : 2;
            const bool wd =
                cfg_.variant == ModelConfig::Variant::DM && k < cfg_.density_layers();
            layers_.push_back(make_block("layer" + std::to_string(k), lin, lout, wd));
            if (cfg_.variant == ModelConfig::Variant::WF && k + 1 < cfg_.n_layers())
                global_layers_.push_back(
                    make_block("global" + std::to_string(k), lout, lout, false));
            else if (cfg_.variant == ModelConfig::Variant::WF)
                global_layers_.push_back(BlockParams{});  // placeholder, unused
        }
        readout_block_ = make_block("readout", 2, 2, false);
        for (int l = 0; l <= 2; ++l)
            readout_w_.push_back(params_.add("readout.head.l" + std::to_string(l),
                                             init(c, 4 * cfg_.n_tb)));
        readout_b0_ = params_.add("readout.head.b", Mat::Zero(1, 4 * cfg_.n_tb));
        if (cfg_.phase_head) {
            phase_w1_ = params_.add("phase.w1", init(c, c));
            phase_w2_ = params_.add("phase.w2", init(c, 2 * cfg_.n_tb));
            phase_b_ = params_.add("phase.b", Mat::Zero(1, 2 * cfg_.n_tb));
        }
    }

    /// Per-order linear map applied to the stacked feature matrix.
    ad::Tensor per_l_linear(const ModelContext& ctx, const ad::Tensor& x, int lmax,
                            const std::vector<ad::Tensor>& w,
                            const ad::Tensor* bias_l0) const {
        const FeatureRows& rows = ctx.feature_rows(lmax);
        const int n = ctx.n_nodes();
        ad::Tensor out;
        std::vector<int> scatter(n * rows.d_sph);
        ad::Tensor acc;
        for (int l = 0; l <= lmax; ++l) {
            const auto lr = rows.l_rows(n, l);
            ad::Tensor y = ad::matmul(ad::gather_rows(x, lr), w[l]);
            if (l == 0 && bias_l0) y = ad::rowwise_bias(y, *bias_l0);
            ad::Tensor placed = ad::scatter_add_rows(y, lr, n * rows.d_sph);
            acc = acc.defined() ? ad::add(acc, placed) : placed;
        }
        return acc;
    }

    /// LayerNorm with field conditioning: per-order scale and m = 0 bias
    /// produced from the conditioning hidden state.
    ad::Tensor conditioned_layer_norm(int n_nodes, const ad::Tensor& x, int lmax,
                                      const ad::Tensor& cond_hidden,
                                      const std::vector<ad::Tensor>& w_s,
                                      const std::vector<ad::Tensor>& w_b,
                                      const std::vector<ad::Tensor>& s_base,
                                      const std::vector<ad::Tensor>& b_base) const {
        std::vector<ad::Tensor> s, b;
        for (int l = 0; l <= lmax; ++l) {
            s.push_back(ad::add(s_base[l], ad::matmul(cond_hidden, w_s[l])));
            b.push_back(ad::add(b_base[l], ad::matmul(cond_hidden, w_b[l])));
        }
        return so2_layer_norm(x, lmax, n_nodes, s, b);
    }

    ad::Tensor embed(const ModelContext& ctx, const Mat& packed,
                     const DensityBlocks* density) const {
        const int lmax0 = cfg_.lmax_layers.front();
        const FeatureRows& rows = ctx.feature_rows(lmax0);
        const FeatureRows rows_in(2);
        const int n = ctx.n_nodes();
        require(packed.rows() == n * rows_in.d_sph &&
                    packed.cols() == pack_cond_channels(cfg_.n_tb),
                "embed: packed feature shape mismatch");
        const ad::Tensor p = ad::Tensor::constant(packed);

        ad::Tensor acc;
        auto place = [&](const ad::Tensor& y, const std::vector<int>& where) {
            ad::Tensor t = ad::scatter_add_rows(y, where, n * rows.d_sph);
            acc = acc.defined() ? ad::add(acc, t) : t;
        };
        // input coefficient projection (orders 0..2), bias on l = 0
        for (int l = 0; l <= 2; ++l) {
            ad::Tensor y =
                ad::matmul(ad::gather_rows(p, rows_in.l_rows(n, l)), w_in_[l]);
            if (l == 0) y = ad::rowwise_bias(y, b_in_);
            place(y, rows.l_rows(n, l));
        }
        // atom type (invariant, l = 0)
        place(ad::matmul(ad::Tensor::constant(ctx.species_onehot), w_type_),
              rows.l_rows(n, 0));
        // degree-scaled neighbor harmonics
        for (int l = 0; l <= cfg_.lmax_edge; ++l)
            place(ad::matmul(ad::Tensor::constant(ctx.degree_harmonic.at(l)),
                             w_degree_[l]),
                  rows.l_rows(n, l));
        // diagonal density features (DM variant)
        if (cfg_.variant == ModelConfig::Variant::DM && density)
            for (int l = 0; l <= std::min(4, lmax0); ++l)
                place(ad::matmul(ad::Tensor::constant(density->diag[l]),
                                 w_dens_diag_[l]),
                      rows.l_rows(n, l));
        return acc;
    }

    ad::Tensor truncate_orders(const ModelContext& ctx, const ad::Tensor& x, int lin,
                               int lout) const {
        if (lin == lout) return x;
        require(lout < lin, "truncate_orders: can only drop orders");
        const FeatureRows& rin = ctx.feature_rows(lin);
        const FeatureRows& rout = ctx.feature_rows(lout);
        const int n = ctx.n_nodes();
        std::vector<int> keep;
        for (int node = 0; node < n; ++node)
            for (int l = 0; l <= lout; ++l)
                for (int m = 0; m < 2 * l + 1; ++m)
                    keep.push_back(rin.node_row(node, l, m));
        (void)rout;
        return ad::gather_rows(x, keep);
    }

    ad::Tensor block_forward(const ModelContext& ctx, const BlockParams& blk,
                             const ad::Tensor& x, int lin, int lout,
                             const ad::Tensor& rb, const ad::Tensor& field_row,
                             const DensityBlocks* density, bool training,
                             Rng* rng) const {
        const int n = ctx.n_nodes();
        const int e = ctx.graph.n_edges();
        const FeatureRows& rout = ctx.feature_rows(lout);
        const auto& pidx = ctx.pairs.at({lin, lout});

        if (training && rng && cfg_.drop_path > 0.0 && rng->uniform() < cfg_.drop_path)
            return truncate_orders(ctx, x, lin, lout);  // stochastic block skip

        ad::Tensor cond = ad::silu(
            ad::rowwise_bias(ad::matmul(field_row, blk.w_cond), blk.b_cond));

        ad::Tensor x1 = conditioned_layer_norm(n, x, lin, cond, blk.w_s1, blk.w_b1,
                                               blk.s1_base, blk.b1_base);

        // shared radial features of the block
        ad::Tensor radial = ad::silu(ad::rowwise_bias(ad::matmul(rb, blk.w_rad),
                                                      blk.b_rad));

        // per-order gathered views of the normalized features
        const FeatureRows& rin = ctx.feature_rows(lin);
        std::vector<ad::Tensor> xg;
        for (int l = 0; l <= lin; ++l)
            xg.push_back(ad::gather_rows(x1, rin.l_rows(n, l)));

        // messages per output order
        std::map<int, ad::Tensor> msg;
        for (std::size_t pi = 0; pi < pidx.paths.size(); ++pi) {
            const TPPath& path = pidx.paths[pi];
            // sender and receiver projections combined after gathering
            ad::Tensor hs = ad::matmul(xg[path.l_in], blk.paths[pi].w_src);
            ad::Tensor hd = ad::matmul(xg[path.l_in], blk.paths[pi].w_dst);
            ad::Tensor ms = ad::block_matmul_gather(hs, pidx.kernels[pi],
                                                    pidx.src_rows[pi]);
            ad::Tensor md = ad::block_matmul_gather(hd, pidx.kernels[pi],
                                                    pidx.dst_rows[pi]);
            ad::Tensor m = ad::add(ms, md);
            ad::Tensor gate = ad::matmul(radial, blk.paths[pi].w_gate);  // E x C
            m = ad::hadamard(m, ad::repeat_rows(gate, 2 * path.l_out + 1));
            auto it = msg.find(path.l_out);
            if (it == msg.end()) msg.emplace(path.l_out, m);
            else it->second = ad::add(it->second, m);
        }
        // off-diagonal density contribution (DM blocks)
        if (density)
            for (int lo = 0; lo < static_cast<int>(blk.w_density.size()); ++lo) {
                ad::Tensor dm = ad::matmul(
                    ad::Tensor::constant(density->offdiag[std::min(lo, 4)]),
                    blk.w_density[lo]);
                auto it = msg.find(lo);
                if (it == msg.end()) msg.emplace(lo, dm);
                else it->second = ad::add(it->second, dm);
            }

        // invariant attention over incoming edges, multi-head
        require(msg.count(0) > 0, "block_forward: no scalar message path");
        ad::Tensor logits = ad::matmul(ad::silu(msg.at(0)), blk.w_att);  // E x heads
        if (training && rng && cfg_.attn_dropout > 0.0) {
            Mat mask(e, cfg_.n_heads);
            for (int i = 0; i < e; ++i)
                for (int h = 0; h < cfg_.n_heads; ++h)
                    mask(i, h) = rng->uniform() < cfg_.attn_dropout ? -30.0 : 0.0;
            logits = ad::add(logits, ad::Tensor::constant(mask));
        }
        ad::Tensor alpha = ad::segment_softmax(logits, ctx.edge_dst, n);
        // expand head weights across their channel groups
        Mat expand = Mat::Zero(cfg_.n_heads, cfg_.d_emb);
        const int per_head = cfg_.d_emb / cfg_.n_heads;
        for (int h = 0; h < cfg_.n_heads; ++h)
            expand.row(h).segment(h * per_head, per_head).setOnes();
        ad::Tensor alpha_full = ad::matmul(alpha, ad::Tensor::constant(expand));

        ad::Tensor attended;
        for (auto& [lo, m] : msg) {
            ad::Tensor weighted =
                ad::hadamard(m, ad::repeat_rows(alpha_full, 2 * lo + 1));
            ad::Tensor agg = ad::scatter_add_rows(weighted, pidx.scatter_rows.at(lo),
                                                  n * rout.d_sph);
            ad::Tensor proj = per_l_place(ctx, agg, lout, lo, blk.w_out[lo]);
            attended = attended.defined() ? ad::add(attended, proj) : proj;
        }
        ad::Tensor x2 = ad::add(truncate_orders(ctx, x, lin, lout), attended);

        // feed-forward with invariant gates for l > 0
        ad::Tensor x3 = conditioned_layer_norm(n, x2, lout, cond, blk.w_s2, blk.w_b2,
                                               blk.s2_base, blk.b2_base);
        ad::Tensor ff;
        ad::Tensor l0_in = ad::gather_rows(x3, rout.l_rows(n, 0));
        for (int l = 0; l <= lout; ++l) {
            const auto lr = rout.l_rows(n, l);
            ad::Tensor h = ad::matmul(ad::gather_rows(x3, lr), blk.w_ffn1[l]);
            if (l == 0) {
                h = ad::silu(ad::rowwise_bias(h, blk.b_ffn1));
            } else {
                ad::Tensor g = ad::sigmoid(ad::matmul(l0_in, blk.w_gate[l - 1]));
                h = ad::hadamard(h, ad::repeat_rows(g, 2 * l + 1));
            }
            ad::Tensor y = ad::matmul(h, blk.w_ffn2[l]);
            if (l == 0) y = ad::rowwise_bias(y, blk.b_ffn2);
            ad::Tensor placed = ad::scatter_add_rows(y, lr, n * rout.d_sph);
            ff = ff.defined() ? ad::add(ff, placed) : placed;
        }
        return ad::add(x2, ff);
    }

    /// Projects the rows of one order within a full stack and re-places them.
    ad::Tensor per_l_place(const ModelContext& ctx, const ad::Tensor& stacked,
                           int lmax, int l, const ad::Tensor& w) const {
        const FeatureRows& rows = ctx.feature_rows(lmax);
        const int n = ctx.n_nodes();
        const auto lr = rows.l_rows(n, l);
        ad::Tensor y = ad::matmul(ad::gather_rows(stacked, lr), w);
        return ad::scatter_add_rows(y, lr, n * rows.d_sph);
    }

    ModelConfig cfg_;
    mutable Rng rng_;
    ad::ParameterSet params_;

    ad::Tensor w_type_, b_in_;
    std::vector<ad::Tensor> w_in_, w_degree_, w_dens_diag_;
    std::vector<BlockParams> layers_;
    std::vector<BlockParams> global_layers_;
    BlockParams readout_block_;
    std::vector<ad::Tensor> readout_w_;
    ad::Tensor readout_b0_;
    ad::Tensor phase_w1_, phase_w2_, phase_b_;
};

}  // namespace orbevo
