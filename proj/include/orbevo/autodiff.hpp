#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "orbevo/common.hpp"

namespace orbevo::ad {

/// One dense real matrix in the backward graph. Nodes are created in
/// forward order, so creation ids give a valid reverse topological order.
struct Node {
    Mat val;
    Mat grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;  // scatter own grad into parents
    std::uint64_t id = 0;

    void ensure_grad() {
        if (grad.size() == 0) grad = Mat::Zero(val.rows(), val.cols());
    }
};

/// Value handle. Copies share the underlying node.
class Tensor {
public:
    Tensor() = default;

    static Tensor constant(Mat v) { return Tensor(std::move(v), false); }
    static Tensor param(Mat v) { return Tensor(std::move(v), true); }

    const Mat& val() const { return node_->val; }
    Mat& val() { return node_->val; }
    Mat& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    Eigen::Index rows() const { return node_->val.rows(); }
    Eigen::Index cols() const { return node_->val.cols(); }
    const std::shared_ptr<Node>& node() const { return node_; }
    bool defined() const { return static_cast<bool>(node_); }

    /// Reverse pass from this node; seeds d(this)/d(this) = 1 (scalar) or the
    /// given seed matrix.
    void backward(const Mat& seed = Mat()) const {
        require(node_ != nullptr, "backward: empty tensor");
        node_->ensure_grad();
        if (seed.size() == 0) {
            require(node_->val.size() == 1, "backward: non-scalar output needs a seed");
            node_->grad(0, 0) += 1.0;
        } else {
            require(seed.rows() == node_->val.rows() && seed.cols() == node_->val.cols(),
                    "backward: seed shape mismatch");
            node_->grad += seed;
        }
        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        collect(node_.get(), order, seen);
        std::sort(order.begin(), order.end(),
                  [](const Node* a, const Node* b) { return a->id > b->id; });
        for (Node* n : order)
            if (n->backward) {
                for (auto& p : n->parents)
                    if (p->requires_grad) p->ensure_grad();
                n->backward(*n);
            }
    }

    static Tensor make(Mat v, std::vector<Tensor> parents,
                       std::function<void(Node&)> backward) {
        Tensor t(std::move(v), false);
        for (const Tensor& p : parents) {
            t.node_->parents.push_back(p.node_);
            t.node_->requires_grad = t.node_->requires_grad || p.requires_grad();
        }
        if (t.node_->requires_grad) t.node_->backward = std::move(backward);
        return t;
    }

private:
    Tensor(Mat v, bool req) : node_(std::make_shared<Node>()) {
        node_->val = std::move(v);
        node_->requires_grad = req;
        node_->id = next_id();
    }

    static std::uint64_t next_id() {
        static std::uint64_t counter = 0;
        return ++counter;
    }

    static void collect(Node* n, std::vector<Node*>& order,
                        std::unordered_set<Node*>& seen) {
        if (!n->requires_grad || !seen.insert(n).second) return;
        order.push_back(n);
        for (auto& p : n->parents) collect(p.get(), order, seen);
    }

    std::shared_ptr<Node> node_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), std::string(op) +
                                                              ": shape mismatch");
}

// ---- elementwise ----

inline Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    return Tensor::make(a.val() + b.val(), {a, b}, [a, b](Node& n) mutable {
        if (a.requires_grad()) a.grad() += n.grad;
        if (b.requires_grad()) b.grad() += n.grad;
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    return Tensor::make(a.val() - b.val(), {a, b}, [a, b](Node& n) mutable {
        if (a.requires_grad()) a.grad() += n.grad;
        if (b.requires_grad()) b.grad() -= n.grad;
    });
}

inline Tensor scale(const Tensor& a, double c) {
    return Tensor::make(c * a.val(), {a}, [a, c](Node& n) mutable {
        if (a.requires_grad()) a.grad() += c * n.grad;
    });
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "hadamard");
    return Tensor::make(a.val().cwiseProduct(b.val()), {a, b}, [a, b](Node& n) mutable {
        if (a.requires_grad()) a.grad() += n.grad.cwiseProduct(b.val());
        if (b.requires_grad()) b.grad() += n.grad.cwiseProduct(a.val());
    });
}

inline Tensor sigmoid(const Tensor& a) {
    Mat y = (1.0 + (-a.val().array()).exp()).inverse();
    return Tensor::make(std::move(y), {a}, [a](Node& n) mutable {
        if (a.requires_grad())
            a.grad() += (n.grad.array() * n.val.array() * (1.0 - n.val.array())).matrix();
    });
}

inline Tensor silu(const Tensor& a) {
    Mat sg = (1.0 + (-a.val().array()).exp()).inverse();
    Mat y = a.val().cwiseProduct(sg);
    Mat ds = sg.array() * (1.0 + a.val().array() * (1.0 - sg.array()));
    return Tensor::make(std::move(y), {a}, [a, ds](Node& n) mutable {
        if (a.requires_grad()) a.grad() += n.grad.cwiseProduct(ds);
    });
}

/// (x + eps)^p, defined for x + eps > 0.
inline Tensor pow_scalar(const Tensor& a, double p, double eps = 0.0) {
    require((a.val().array() + eps > 0.0).all(), "pow_scalar: domain violation");
    Mat y = (a.val().array() + eps).pow(p);
    return Tensor::make(std::move(y), {a, }, [a, p, eps](Node& n) mutable {
        if (a.requires_grad())
            a.grad() += (n.grad.array() * p * (a.val().array() + eps).pow(p - 1.0))
                            .matrix();
    });
}

inline Tensor abs_smooth(const Tensor& a, double eps = 1e-12) {
    Mat y = (a.val().array().square() + eps).sqrt();
    return Tensor::make(std::move(y), {a}, [a](Node& n) mutable {
        if (a.requires_grad())
            a.grad() += (n.grad.array() * a.val().array() / n.val.array()).matrix();
    });
}

// ---- linear algebra ----

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
    return Tensor::make(a.val() * b.val(), {a, b}, [a, b](Node& n) mutable {
        if (a.requires_grad()) a.grad() += n.grad * b.val().transpose();
        if (b.requires_grad()) b.grad() += a.val().transpose() * n.grad;
    });
}

/// Adds a 1 x C bias row to every row of x.
inline Tensor rowwise_bias(const Tensor& x, const Tensor& b) {
    require(b.rows() == 1 && b.cols() == x.cols(), "rowwise_bias: bad bias shape");
    Mat y = x.val().rowwise() + b.val().row(0);
    return Tensor::make(std::move(y), {x, b}, [x, b](Node& n) mutable {
        if (x.requires_grad()) x.grad() += n.grad;
        if (b.requires_grad()) b.grad() += n.grad.colwise().sum();
    });
}

/// Scales row r of x by s(r, 0).
inline Tensor row_scale(const Tensor& x, const Tensor& s) {
    require(s.rows() == x.rows() && s.cols() == 1, "row_scale: bad scale shape");
    Mat y = s.val().col(0).asDiagonal() * x.val();
    return Tensor::make(std::move(y), {x, s}, [x, s](Node& n) mutable {
        if (x.requires_grad()) x.grad() += s.val().col(0).asDiagonal() * n.grad;
        if (s.requires_grad())
            s.grad() += n.grad.cwiseProduct(x.val()).rowwise().sum();
    });
}

// ---- shape / indexing ----

inline Tensor gather_rows(const Tensor& x, std::vector<int> idx) {
    Mat y(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        require(idx[k] >= 0 && idx[k] < x.rows(), "gather_rows: index out of range");
        y.row(static_cast<Eigen::Index>(k)) = x.val().row(idx[k]);
    }
    return Tensor::make(std::move(y), {x}, [x, idx = std::move(idx)](Node& n) mutable {
        if (!x.requires_grad()) return;
        for (std::size_t k = 0; k < idx.size(); ++k)
            x.grad().row(idx[k]) += n.grad.row(static_cast<Eigen::Index>(k));
    });
}

/// out.row(idx[k]) += x.row(k); out has n_out rows.
inline Tensor scatter_add_rows(const Tensor& x, std::vector<int> idx, int n_out) {
    require(static_cast<Eigen::Index>(idx.size()) == x.rows(),
            "scatter_add_rows: one index per row required");
    Mat y = Mat::Zero(n_out, x.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        require(idx[k] >= 0 && idx[k] < n_out, "scatter_add_rows: index out of range");
        y.row(idx[k]) += x.val().row(static_cast<Eigen::Index>(k));
    }
    return Tensor::make(std::move(y), {x}, [x, idx = std::move(idx)](Node& n) mutable {
        if (!x.requires_grad()) return;
        for (std::size_t k = 0; k < idx.size(); ++k)
            x.grad().row(static_cast<Eigen::Index>(k)) += n.grad.row(idx[k]);
    });
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require(a.rows() == b.rows(), "concat_cols: row mismatch");
    Mat y(a.rows(), a.cols() + b.cols());
    y << a.val(), b.val();
    return Tensor::make(std::move(y), {a, b}, [a, b](Node& n) mutable {
        if (a.requires_grad()) a.grad() += n.grad.leftCols(a.cols());
        if (b.requires_grad()) b.grad() += n.grad.rightCols(b.cols());
    });
}

inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
    require(a.cols() == b.cols(), "concat_rows: column mismatch");
    Mat y(a.rows() + b.rows(), a.cols());
    y << a.val(), b.val();
    return Tensor::make(std::move(y), {a, b}, [a, b](Node& n) mutable {
        if (a.requires_grad()) a.grad() += n.grad.topRows(a.rows());
        if (b.requires_grad()) b.grad() += n.grad.bottomRows(b.rows());
    });
}

/// Mean over consecutive groups of g rows: (R/g) x C output.
inline Tensor group_mean_rows(const Tensor& x, int g) {
    require(g > 0 && x.rows() % g == 0, "group_mean_rows: rows not divisible");
    const Eigen::Index ng = x.rows() / g;
    Mat y = Mat::Zero(ng, x.cols());
    for (Eigen::Index k = 0; k < ng; ++k)
        y.row(k) = x.val().middleRows(k * g, g).colwise().mean();
    return Tensor::make(std::move(y), {x}, [x, g, ng](Node& n) mutable {
        if (!x.requires_grad()) return;
        for (Eigen::Index k = 0; k < ng; ++k)
            x.grad().middleRows(k * g, g).rowwise() += n.grad.row(k) / g;
    });
}

/// Repeats every row g times (inverse broadcast of group_mean_rows).
inline Tensor repeat_rows(const Tensor& x, int g) {
    require(g > 0, "repeat_rows: bad factor");
    Mat y(x.rows() * g, x.cols());
    for (Eigen::Index k = 0; k < x.rows(); ++k)
        y.middleRows(k * g, g) = x.val().row(k).replicate(g, 1);
    return Tensor::make(std::move(y), {x}, [x, g](Node& n) mutable {
        if (!x.requires_grad()) return;
        for (Eigen::Index k = 0; k < x.rows(); ++k)
            x.grad().row(k) += n.grad.middleRows(k * g, g).colwise().sum();
    });
}

/// Row-wise mean over columns: R x C -> R x 1.
inline Tensor col_mean(const Tensor& x) {
    Mat y = x.val().rowwise().mean();
    return Tensor::make(std::move(y), {x}, [x](Node& n) mutable {
        if (x.requires_grad())
            x.grad() += (n.grad.col(0) / x.cols()).replicate(1, x.cols());
    });
}

inline Tensor mean_all(const Tensor& x) {
    Mat y(1, 1);
    y(0, 0) = x.val().mean();
    return Tensor::make(std::move(y), {x}, [x](Node& n) mutable {
        if (x.requires_grad())
            x.grad().array() += n.grad(0, 0) / static_cast<double>(x.val().size());
    });
}

inline Tensor sum_all(const Tensor& x) {
    Mat y(1, 1);
    y(0, 0) = x.val().sum();
    return Tensor::make(std::move(y), {x}, [x](Node& n) mutable {
        if (x.requires_grad()) x.grad().array() += n.grad(0, 0);
    });
}

inline Tensor stop_grad(const Tensor& x) { return Tensor::constant(x.val()); }

// ---- segmented ops ----

/// Column-independent softmax over rows within segments given per row.
inline Tensor segment_softmax(const Tensor& logits, std::vector<int> seg, int n_seg) {
    require(static_cast<Eigen::Index>(seg.size()) == logits.rows(),
            "segment_softmax: one segment id per row");
    const Eigen::Index nc = logits.cols();
    Mat mx = Mat::Constant(n_seg, nc, -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < seg.size(); ++k)
        mx.row(seg[k]) =
            mx.row(seg[k]).cwiseMax(logits.val().row(static_cast<Eigen::Index>(k)));
    Mat y(logits.rows(), nc);
    Mat denom = Mat::Zero(n_seg, nc);
    for (std::size_t k = 0; k < seg.size(); ++k) {
        y.row(static_cast<Eigen::Index>(k)) =
            (logits.val().row(static_cast<Eigen::Index>(k)) - mx.row(seg[k]))
                .array()
                .exp();
        denom.row(seg[k]) += y.row(static_cast<Eigen::Index>(k));
    }
    for (std::size_t k = 0; k < seg.size(); ++k)
        y.row(static_cast<Eigen::Index>(k)).array() /= denom.row(seg[k]).array();
    return Tensor::make(
        std::move(y), {logits},
        [logits, seg = std::move(seg), n_seg, nc](Node& n) mutable {
            if (!logits.requires_grad()) return;
            // dL/dz_k = y_k (g_k - sum_j in segment y_j g_j), per column
            Mat dot = Mat::Zero(n_seg, nc);
            for (std::size_t k = 0; k < seg.size(); ++k)
                dot.row(seg[k]) += n.val.row(static_cast<Eigen::Index>(k))
                                       .cwiseProduct(n.grad.row(static_cast<Eigen::Index>(k)));
            for (std::size_t k = 0; k < seg.size(); ++k)
                logits.grad().row(static_cast<Eigen::Index>(k)) +=
                    n.val.row(static_cast<Eigen::Index>(k))
                        .cwiseProduct(n.grad.row(static_cast<Eigen::Index>(k)) -
                                      dot.row(seg[k]));
        });
}

inline Tensor segment_mean_rows(const Tensor& x, const std::vector<int>& seg,
                                int n_seg) {
    require(static_cast<Eigen::Index>(seg.size()) == x.rows(),
            "segment_mean_rows: one segment id per row");
    std::vector<double> count(n_seg, 0.0);
    for (int s : seg) count[s] += 1.0;
    Tensor summed = scatter_add_rows(x, seg, n_seg);
    Mat inv(n_seg, 1);
    for (int s = 0; s < n_seg; ++s) inv(s, 0) = count[s] > 0 ? 1.0 / count[s] : 0.0;
    return row_scale(summed, Tensor::constant(inv));
}

// ---- block tensor-product op ----

/// For each block e: out.middleRows(e*ro, ro) = blocks[e] * x.middleRows(src[e], ci).
/// The blocks are fixed geometric constants (CG coefficients contracted with
/// edge harmonics); only x carries gradient.
inline Tensor block_matmul_gather(const Tensor& x,
                                  const std::shared_ptr<std::vector<Mat>>& blocks,
                                  std::vector<int> src) {
    require(blocks && !blocks->empty(), "block_matmul_gather: no blocks");
    require(blocks->size() == src.size(), "block_matmul_gather: size mismatch");
    const Eigen::Index ro = (*blocks)[0].rows();
    const Eigen::Index ci = (*blocks)[0].cols();
    Mat y(static_cast<Eigen::Index>(blocks->size()) * ro, x.cols());
    for (std::size_t e = 0; e < blocks->size(); ++e) {
        require(src[e] >= 0 && src[e] + ci <= x.rows(),
                "block_matmul_gather: source rows out of range");
        y.middleRows(static_cast<Eigen::Index>(e) * ro, ro).noalias() =
            (*blocks)[e] * x.val().middleRows(src[e], ci);
    }
    return Tensor::make(
        std::move(y), {x}, [x, blocks, src = std::move(src), ro, ci](Node& n) mutable {
            if (!x.requires_grad()) return;
            for (std::size_t e = 0; e < blocks->size(); ++e)
                x.grad().middleRows(src[e], ci).noalias() +=
                    (*blocks)[e].transpose() *
                    n.grad.middleRows(static_cast<Eigen::Index>(e) * ro, ro);
        });
}

}  // namespace orbevo::ad
