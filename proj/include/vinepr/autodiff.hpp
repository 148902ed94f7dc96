#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vinepr/common.hpp"

namespace vinepr::ad {

/// Dense row-major 2-D array of doubles. Scalars are 1x1.
struct Tensor {
    int rows = 0, cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}
    static Tensor scalar(double x) {
        Tensor t(1, 1);
        t.v[0] = x;
        return t;
    }

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    bool finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

/// Numerically stable logistic; relax(x, tau) = 1 / (1 + exp(-x/tau)).
inline double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double stable_softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Tape-style reverse-mode graph. Nodes are created in evaluation order, so
/// creation order is a topological order and the backward sweep visits every
/// node exactly once in reverse. Handles stay valid across growth; a Graph is
/// built per step and discarded.
class Graph {
public:
    using NodeId = int;

    NodeId leaf(Tensor t) { return add_node(std::move(t), nullptr); }

    const Tensor& value(NodeId id) const { return nodes_[check(id)].val; }
    const Tensor& grad(NodeId id) const { return nodes_[check(id)].grad; }
    std::size_t node_count() const { return nodes_.size(); }

    NodeId matmul(NodeId a, NodeId b) {
        const Tensor &A = value(a), &B = value(b);
        if (A.cols != B.rows) throw Error("ad::matmul: inner dimensions disagree");
        Tensor out(A.rows, B.cols);
        for (int i = 0; i < A.rows; ++i)
            for (int k = 0; k < A.cols; ++k) {
                const double aik = A.at(i, k);
                if (aik == 0.0) continue;
                const double* brow = &B.v[static_cast<std::size_t>(k) * B.cols];
                double* orow = &out.v[static_cast<std::size_t>(i) * out.cols];
                for (int j = 0; j < B.cols; ++j) orow[j] += aik * brow[j];
            }
        return add_node(std::move(out), [this, a, b](const Tensor& g) {
            const Tensor &A = value(a), &B = value(b);
            Tensor& ga = grad_mut(a);
            Tensor& gb = grad_mut(b);
            // dA = g * B^T
            for (int i = 0; i < A.rows; ++i)
                for (int k = 0; k < A.cols; ++k) {
                    double s = 0.0;
                    for (int j = 0; j < B.cols; ++j) s += g.at(i, j) * B.at(k, j);
                    ga.at(i, k) += s;
                }
            // dB = A^T * g
            for (int k = 0; k < B.rows; ++k)
                for (int i = 0; i < A.rows; ++i) {
                    const double aik = A.at(i, k);
                    if (aik == 0.0) continue;
                    for (int j = 0; j < B.cols; ++j) gb.at(k, j) += aik * g.at(i, j);
                }
        });
    }

    /// Broadcast-adds a 1 x n bias row to every row of a.
    NodeId add_rowvec(NodeId a, NodeId bias) {
        const Tensor &A = value(a), &B = value(bias);
        if (B.rows != 1 || B.cols != A.cols) throw Error("ad::add_rowvec: bias must be 1 x cols(a)");
        Tensor out = A;
        for (int i = 0; i < A.rows; ++i)
            for (int j = 0; j < A.cols; ++j) out.at(i, j) += B.at(0, j);
        return add_node(std::move(out), [this, a, bias](const Tensor& g) {
            Tensor& ga = grad_mut(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i];
            Tensor& gb = grad_mut(bias);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) gb.at(0, j) += g.at(i, j);
        });
    }

    NodeId add(NodeId a, NodeId b) {
        const Tensor &A = value(a), &B = value(b);
        if (!A.same_shape(B)) throw Error("ad::add: shape mismatch");
        Tensor out = A;
        for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += B.v[i];
        return add_node(std::move(out), [this, a, b](const Tensor& g) {
            Tensor& ga = grad_mut(a);
            Tensor& gb = grad_mut(b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga.v[i] += g.v[i];
                gb.v[i] += g.v[i];
            }
        });
    }

    NodeId sub(NodeId a, NodeId b) {
        const Tensor &A = value(a), &B = value(b);
        if (!A.same_shape(B)) throw Error("ad::sub: shape mismatch");
        Tensor out = A;
        for (std::size_t i = 0; i < out.size(); ++i) out.v[i] -= B.v[i];
        return add_node(std::move(out), [this, a, b](const Tensor& g) {
            Tensor& ga = grad_mut(a);
            Tensor& gb = grad_mut(b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga.v[i] += g.v[i];
                gb.v[i] -= g.v[i];
            }
        });
    }

    NodeId mul(NodeId a, NodeId b) {
        const Tensor &A = value(a), &B = value(b);
        if (!A.same_shape(B)) throw Error("ad::mul: shape mismatch");
        Tensor out = A;
        for (std::size_t i = 0; i < out.size(); ++i) out.v[i] *= B.v[i];
        return add_node(std::move(out), [this, a, b](const Tensor& g) {
            const Tensor &A = value(a), &B = value(b);
            Tensor& ga = grad_mut(a);
            Tensor& gb = grad_mut(b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga.v[i] += g.v[i] * B.v[i];
                gb.v[i] += g.v[i] * A.v[i];
            }
        });
    }

    NodeId div(NodeId a, NodeId b) {
        const Tensor &A = value(a), &B = value(b);
        if (!A.same_shape(B)) throw Error("ad::div: shape mismatch");
        Tensor out = A;
        for (std::size_t i = 0; i < out.size(); ++i) out.v[i] /= B.v[i];
        return add_node(std::move(out), [this, a, b](const Tensor& g) {
            const Tensor &A = value(a), &B = value(b);
            Tensor& ga = grad_mut(a);
            Tensor& gb = grad_mut(b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga.v[i] += g.v[i] / B.v[i];
                gb.v[i] -= g.v[i] * A.v[i] / (B.v[i] * B.v[i]);
            }
        });
    }

    NodeId scale(NodeId a, double c) {
        Tensor out = value(a);
        for (auto& x : out.v) x *= c;
        return add_node(std::move(out), [this, a, c](const Tensor& g) {
            Tensor& ga = grad_mut(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += c * g.v[i];
        });
    }

    NodeId add_const(NodeId a, double c) {
        Tensor out = value(a);
        for (auto& x : out.v) x += c;
        return add_node(std::move(out), [this, a](const Tensor& g) {
            Tensor& ga = grad_mut(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i];
        });
    }

    NodeId relu(NodeId a) {
        Tensor out = value(a);
        for (auto& x : out.v) x = x > 0.0 ? x : 0.0;
        return add_node(std::move(out), [this, a](const Tensor& g) {
            const Tensor& A = value(a);
            Tensor& ga = grad_mut(a);
            for (std::size_t i = 0; i < g.size(); ++i)
                if (A.v[i] > 0.0) ga.v[i] += g.v[i];
        });
    }

    NodeId softplus(NodeId a) {
        Tensor out = value(a);
        for (auto& x : out.v) x = stable_softplus(x);
        return add_node(std::move(out), [this, a](const Tensor& g) {
            const Tensor& A = value(a);
            Tensor& ga = grad_mut(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * stable_sigmoid(A.v[i]);
        });
    }

    /// Elementwise 1 / (1 + exp(-x/tau)).
    NodeId sigmoid(NodeId a, double tau) {
        if (!(tau > 0.0)) throw Error("ad::sigmoid: tau must be > 0");
        Tensor out = value(a);
        for (auto& x : out.v) x = stable_sigmoid(x / tau);
        const NodeId id = add_node(std::move(out), nullptr);
        nodes_[static_cast<std::size_t>(id)].back = [this, a, id, tau](const Tensor& g) {
            const Tensor& Y = value(id);
            Tensor& ga = grad_mut(a);
            for (std::size_t i = 0; i < g.size(); ++i)
                ga.v[i] += g.v[i] * Y.v[i] * (1.0 - Y.v[i]) / tau;
        };
        return id;
    }

    /// Generalized-mean pooling across rows: out_j = (mean_i a_ij^p)^(1/p).
    /// Inputs must be positive; p is a learnable 1x1 node.
    NodeId gem_pool(NodeId a, NodeId p_node) {
        const Tensor& A = value(a);
        const Tensor& P = value(p_node);
        if (P.rows != 1 || P.cols != 1) throw Error("ad::gem_pool: p must be a scalar node");
        const double p = P.v[0];
        if (!(p > 0.0)) throw NumericError("ad::gem_pool: p must be > 0");
        if (A.rows < 1) throw Error("ad::gem_pool: empty input");
        Tensor out(1, A.cols);
        for (int j = 0; j < A.cols; ++j) {
            double m = 0.0;
            for (int i = 0; i < A.rows; ++i) m += std::pow(A.at(i, j), p);
            m /= A.rows;
            out.at(0, j) = std::pow(m, 1.0 / p);
        }
        return add_node(std::move(out), [this, a, p_node](const Tensor& g) {
            const Tensor& A = value(a);
            const double p = value(p_node).v[0];
            Tensor& ga = grad_mut(a);
            Tensor& gp = grad_mut(p_node);
            const double n = A.rows;
            for (int j = 0; j < A.cols; ++j) {
                double m = 0.0, m_log = 0.0;
                for (int i = 0; i < A.rows; ++i) {
                    const double f = A.at(i, j);
                    const double fp = std::pow(f, p);
                    m += fp;
                    if (f > 0.0) m_log += fp * std::log(f);
                }
                m /= n;
                m_log /= n;
                const double out_j = std::pow(m, 1.0 / p);
                const double gj = g.at(0, j);
                if (gj == 0.0 || m <= 0.0) continue;
                const double mp = std::pow(m, 1.0 / p - 1.0);
                for (int i = 0; i < A.rows; ++i) {
                    const double f = A.at(i, j);
                    ga.at(i, j) += gj * mp * std::pow(f, p - 1.0) / n;
                }
                // d(out)/dp = out * (-log(m)/p^2 + m_log/(p*m))
                gp.v[0] += gj * out_j * (-std::log(m) / (p * p) + m_log / (p * m));
            }
        });
    }

    /// Stacks 1-row (or multi-row) nodes with equal column counts.
    NodeId concat_rows(const std::vector<NodeId>& parts) {
        if (parts.empty()) throw Error("ad::concat_rows: no parts");
        int rows = 0;
        const int cols = value(parts[0]).cols;
        for (NodeId id : parts) {
            if (value(id).cols != cols) throw Error("ad::concat_rows: column mismatch");
            rows += value(id).rows;
        }
        Tensor out(rows, cols);
        int r = 0;
        for (NodeId id : parts) {
            const Tensor& part = value(id);
            std::copy(part.v.begin(), part.v.end(),
                      out.v.begin() + static_cast<std::ptrdiff_t>(r) * cols);
            r += part.rows;
        }
        return add_node(std::move(out), [this, parts](const Tensor& g) {
            int r = 0;
            for (NodeId id : parts) {
                Tensor& gp = grad_mut(id);
                for (int i = 0; i < gp.rows; ++i)
                    for (int j = 0; j < gp.cols; ++j) gp.at(i, j) += g.at(r + i, j);
                r += gp.rows;
            }
        });
    }

    /// First m columns of a.
    NodeId slice_cols(NodeId a, int m) {
        const Tensor& A = value(a);
        if (m < 1 || m > A.cols) throw Error("ad::slice_cols: bad prefix width");
        Tensor out(A.rows, m);
        for (int i = 0; i < A.rows; ++i)
            for (int j = 0; j < m; ++j) out.at(i, j) = A.at(i, j);
        return add_node(std::move(out), [this, a, m](const Tensor& g) {
            Tensor& ga = grad_mut(a);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < m; ++j) ga.at(i, j) += g.at(i, j);
        });
    }

    /// Divides each row by its L2 norm. Throws on degenerate rows.
    NodeId l2_normalize_rows(NodeId a) {
        const Tensor& A = value(a);
        Tensor out = A;
        for (int i = 0; i < A.rows; ++i) {
            double n_sq = 0.0;
            for (int j = 0; j < A.cols; ++j) n_sq += A.at(i, j) * A.at(i, j);
            const double n = std::sqrt(n_sq);
            if (n < 1e-12)
                throw NumericError("l2_normalize_rows: degenerate (near-zero) row " +
                                   std::to_string(i));
            for (int j = 0; j < A.cols; ++j) out.at(i, j) /= n;
        }
        return add_node(std::move(out), [this, a](const Tensor& g) {
            const Tensor& A = value(a);
            Tensor& ga = grad_mut(a);
            for (int i = 0; i < A.rows; ++i) {
                double n_sq = 0.0, gx = 0.0;
                for (int j = 0; j < A.cols; ++j) {
                    n_sq += A.at(i, j) * A.at(i, j);
                    gx += g.at(i, j) * A.at(i, j);
                }
                const double n = std::sqrt(n_sq);
                const double n3 = n * n * n;
                for (int j = 0; j < A.cols; ++j)
                    ga.at(i, j) += g.at(i, j) / n - A.at(i, j) * gx / n3;
            }
        });
    }

    /// All-pairs Euclidean distances between rows: out_ij = |row_i - row_j|.
    /// The zero diagonal carries no gradient.
    NodeId pairwise_distances(NodeId a) {
        const Tensor& A = value(a);
        Tensor out(A.rows, A.rows);
        for (int i = 0; i < A.rows; ++i)
            for (int j = i + 1; j < A.rows; ++j) {
                double s = 0.0;
                for (int k = 0; k < A.cols; ++k) {
                    const double d = A.at(i, k) - A.at(j, k);
                    s += d * d;
                }
                const double dist = std::sqrt(s);
                out.at(i, j) = dist;
                out.at(j, i) = dist;
            }
        const NodeId id = add_node(std::move(out), nullptr);
        nodes_[static_cast<std::size_t>(id)].back = [this, a, id](const Tensor& g) {
            const Tensor& A = value(a);
            const Tensor& D = value(id);
            Tensor& ga = grad_mut(a);
            for (int i = 0; i < A.rows; ++i)
                for (int j = 0; j < A.rows; ++j) {
                    if (i == j) continue;
                    const double gij = g.at(i, j);
                    if (gij == 0.0) continue;
                    const double dist = D.at(i, j);
                    if (dist < 1e-15) continue;  // coincident rows: no usable direction
                    for (int k = 0; k < A.cols; ++k) {
                        const double diff = (A.at(i, k) - A.at(j, k)) / dist;
                        ga.at(i, k) += gij * diff;
                        ga.at(j, k) -= gij * diff;
                    }
                }
        };
        return id;
    }

    /// Extracts one entry as a 1x1 node.
    NodeId element(NodeId a, int r, int c) {
        const Tensor& A = value(a);
        if (r < 0 || r >= A.rows || c < 0 || c >= A.cols)
            throw Error("ad::element: index out of range");
        return add_node(Tensor::scalar(A.at(r, c)), [this, a, r, c](const Tensor& g) {
            grad_mut(a).at(r, c) += g.v[0];
        });
    }

    /// Sum of same-shaped nodes, accumulated in list order.
    NodeId add_n(const std::vector<NodeId>& xs) {
        if (xs.empty()) throw Error("ad::add_n: no terms");
        Tensor out = value(xs[0]);
        for (std::size_t t = 1; t < xs.size(); ++t) {
            const Tensor& X = value(xs[t]);
            if (!X.same_shape(out)) throw Error("ad::add_n: shape mismatch");
            for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += X.v[i];
        }
        return add_node(std::move(out), [this, xs](const Tensor& g) {
            for (NodeId x : xs) {
                Tensor& gx = grad_mut(x);
                for (std::size_t i = 0; i < g.size(); ++i) gx.v[i] += g.v[i];
            }
        });
    }

    NodeId sum_all(NodeId a) {
        const Tensor& A = value(a);
        double s = 0.0;
        for (double x : A.v) s += x;
        return add_node(Tensor::scalar(s), [this, a](const Tensor& g) {
            Tensor& ga = grad_mut(a);
            for (auto& x : ga.v) x += g.v[0];
        });
    }

    /// Reverse accumulation from a scalar loss node. Gradients of every node
    /// created so far are reset first, so a graph supports repeated backward
    /// calls from different roots.
    void backward(NodeId loss) {
        const auto id = static_cast<std::size_t>(check(loss));
        const Tensor& L = nodes_[id].val;
        if (L.rows != 1 || L.cols != 1)
            throw NumericError("ad::backward: root must be scalar, got " +
                               std::to_string(L.rows) + "x" + std::to_string(L.cols));
        for (auto& n : nodes_) std::fill(n.grad.v.begin(), n.grad.v.end(), 0.0);
        nodes_[id].grad.v[0] = 1.0;
        for (std::size_t i = id + 1; i-- > 0;)
            if (nodes_[i].back) nodes_[i].back(nodes_[i].grad);
    }

private:
    struct Node {
        Tensor val;
        Tensor grad;
        std::function<void(const Tensor&)> back;  // null for leaves
    };

    NodeId add_node(Tensor val, std::function<void(const Tensor&)> back) {
        Node n;
        n.grad = Tensor(val.rows, val.cols);
        n.val = std::move(val);
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    Tensor& grad_mut(NodeId id) { return nodes_[check(id)].grad; }

    std::size_t check(NodeId id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
            throw Error("ad: invalid node id");
        return static_cast<std::size_t>(id);
    }

    std::vector<Node> nodes_;
};

}  // namespace vinepr::ad
