#pragma once

#include <string>
#include <vector>

#include "vinepr/autodiff.hpp"
#include "vinepr/common.hpp"

namespace vinepr {

/// In-batch supervision: P(q) are the positive indices for query q, Omega(q)
/// the candidate set (everything except q itself, minus any ambiguity-buffer
/// exclusions). P(q) is always a subset of Omega(q).
struct BatchLabels {
    int n = 0;
    std::vector<std::vector<int>> positives;
    std::vector<std::vector<int>> candidates;

    void validate() const {
        if (static_cast<int>(positives.size()) != n || static_cast<int>(candidates.size()) != n)
            throw ConfigError("BatchLabels: per-query lists must match batch size");
        for (int q = 0; q < n; ++q) {
            for (int i : positives[q]) {
                if (i == q) throw ConfigError("BatchLabels: query in its own positive set");
                bool in_omega = false;
                for (int j : candidates[q]) in_omega |= (j == i);
                if (!in_omega) throw ConfigError("BatchLabels: positive not in candidate set");
            }
            for (int j : candidates[q]) {
                if (j == q) throw ConfigError("BatchLabels: query in its own candidate set");
                if (j < 0 || j >= n) throw ConfigError("BatchLabels: candidate index out of range");
            }
        }
    }

    /// Builds labels from planar ground distance: positives within
    /// positives_radius, candidates exclude the (positives_radius,
    /// negatives_min_radius) ambiguity buffer.
    static BatchLabels from_poses(const std::vector<Vec3>& poses, double positives_radius,
                                  double negatives_min_radius) {
        if (!(positives_radius > 0.0) || !(negatives_min_radius > positives_radius))
            throw ConfigError("BatchLabels: need 0 < positives_radius < negatives_min_radius");
        BatchLabels labels;
        labels.n = static_cast<int>(poses.size());
        labels.positives.resize(poses.size());
        labels.candidates.resize(poses.size());
        for (int q = 0; q < labels.n; ++q)
            for (int j = 0; j < labels.n; ++j) {
                if (j == q) continue;
                const double d = planar_distance(poses[static_cast<std::size_t>(q)],
                                                 poses[static_cast<std::size_t>(j)]);
                if (d <= positives_radius) {
                    labels.positives[static_cast<std::size_t>(q)].push_back(j);
                    labels.candidates[static_cast<std::size_t>(q)].push_back(j);
                } else if (d >= negatives_min_radius) {
                    labels.candidates[static_cast<std::size_t>(q)].push_back(j);
                }
                // buffer zone: excluded from Omega entirely
            }
        return labels;
    }
};

struct LossConfig {
    double tau = 0.01;
    std::vector<int> mrl_dims = {64, 128, 192};
    std::vector<double> mrl_weights = {1.0, 0.5, 0.25};

    void validate() const {
        if (!(tau > 0.0)) throw ConfigError("LossConfig: tau must be > 0");
        if (mrl_dims.size() != mrl_weights.size() || mrl_dims.empty())
            throw ConfigError("LossConfig: dims and weights must be same nonempty length");
        for (double w : mrl_weights)
            if (!(w >= 0.0)) throw ConfigError("LossConfig: weights must be >= 0");
        for (std::size_t i = 1; i < mrl_dims.size(); ++i)
            if (mrl_dims[i] <= mrl_dims[i - 1])
                throw ConfigError("LossConfig: dims must be strictly increasing");
    }
};

/// G(x; tau) = 1 / (1 + exp(-x/tau)), branch-stable for large |x/tau|.
inline double sigmoid_relax(double x, double tau) {
    if (!(tau > 0.0)) throw ConfigError("sigmoid_relax: tau must be > 0");
    return ad::stable_sigmoid(x / tau);
}

/// Smoothed average precision of query q over a symmetric distance matrix:
/// mean over positives i of the soft precision
///   [1 + sum_{j in P, j != i} G(d(q,i)-d(q,j))] /
///   [1 + sum_{j in Omega, j != i} G(d(q,i)-d(q,j))].
inline double smooth_ap(int q, const ad::Tensor& distances, const BatchLabels& labels, double tau) {
    if (distances.rows != distances.cols || distances.rows != labels.n)
        throw ConfigError("smooth_ap: distance matrix must be n x n");
    const auto& pos = labels.positives[static_cast<std::size_t>(q)];
    const auto& omega = labels.candidates[static_cast<std::size_t>(q)];
    if (pos.empty()) throw NumericError("smooth_ap: query has no positives");
    double ap = 0.0;
    for (int i : pos) {
        const double d_qi = distances.at(q, i);
        double num = 1.0, den = 1.0;
        for (int j : omega) {
            if (j == i) continue;
            const double g = sigmoid_relax(d_qi - distances.at(q, j), tau);
            den += g;
            bool j_positive = false;
            for (int k : pos) j_positive |= (k == j);
            if (j_positive) num += g;
        }
        ap += num / den;
    }
    return ap / static_cast<double>(pos.size());
}

struct TsapResult {
    double loss = 0.0;
    int used_queries = 0;
    int skipped_queries = 0;  // queries without in-batch positives
};

/// Batch TSAP loss over a precomputed distance matrix: mean over usable
/// queries of (1 - smooth AP). Queries with no positives are skipped and
/// counted; a batch with none is an error.
inline TsapResult tsap_from_distances(const ad::Tensor& distances, const BatchLabels& labels,
                                      double tau) {
    labels.validate();
    TsapResult r;
    double sum = 0.0;
    for (int q = 0; q < labels.n; ++q) {
        if (labels.positives[static_cast<std::size_t>(q)].empty()) {
            ++r.skipped_queries;
            continue;
        }
        sum += 1.0 - smooth_ap(q, distances, labels, tau);
        ++r.used_queries;
    }
    if (r.used_queries == 0) throw NumericError("tsap_loss: no query has an in-batch positive");
    r.loss = sum / r.used_queries;
    return r;
}

/// TSAP over prefix-normalized descriptors (rows of `descriptors`), using
/// Euclidean distances.
inline TsapResult tsap_loss(const ad::Tensor& descriptors, const BatchLabels& labels, double tau) {
    ad::Tensor d(labels.n, labels.n);
    for (int i = 0; i < descriptors.rows; ++i)
        for (int j = i + 1; j < descriptors.rows; ++j) {
            double s = 0.0;
            for (int k = 0; k < descriptors.cols; ++k) {
                const double diff = descriptors.at(i, k) - descriptors.at(j, k);
                s += diff * diff;
            }
            d.at(i, j) = d.at(j, i) = std::sqrt(s);
        }
    return tsap_from_distances(d, labels, tau);
}

struct MrlResult {
    double total = 0.0;
    std::vector<double> per_dim;  // unweighted TSAP loss at each nested dim
    int skipped_queries = 0;
};

/// Matryoshka multi-loss: sum_m w_m * TSAP(normalize(prefix_m(descriptors))).
/// `descriptors` holds the raw (unnormalized) full vectors, one row per batch
/// element.
inline MrlResult mrl_loss(const ad::Tensor& descriptors, const BatchLabels& labels,
                          const LossConfig& config) {
    config.validate();
    if (descriptors.cols < config.mrl_dims.back())
        throw ConfigError("mrl_loss: descriptor dim " + std::to_string(descriptors.cols) +
                          " < max nested dim " + std::to_string(config.mrl_dims.back()));
    MrlResult r;
    for (std::size_t t = 0; t < config.mrl_dims.size(); ++t) {
        const int m = config.mrl_dims[t];
        ad::Tensor prefix(descriptors.rows, m);
        for (int i = 0; i < descriptors.rows; ++i) {
            double n_sq = 0.0;
            for (int k = 0; k < m; ++k) n_sq += descriptors.at(i, k) * descriptors.at(i, k);
            const double n = std::sqrt(n_sq);
            if (n < 1e-12)
                throw NumericError("mrl_loss: degenerate prefix of width " + std::to_string(m));
            for (int k = 0; k < m; ++k) prefix.at(i, k) = descriptors.at(i, k) / n;
        }
        const TsapResult term = tsap_loss(prefix, labels, config.tau);
        r.per_dim.push_back(term.loss);
        r.total += config.mrl_weights[t] * term.loss;
        r.skipped_queries = term.skipped_queries;
    }
    return r;
}

struct MrlGraphResult {
    ad::Graph::NodeId total;
    std::vector<ad::Graph::NodeId> per_dim;  // unweighted term nodes
    int skipped_queries = 0;
};

namespace detail {

inline ad::Graph::NodeId tsap_graph(ad::Graph& g, ad::Graph::NodeId distmat,
                                    const BatchLabels& labels, double tau,
                                    int* skipped_out = nullptr) {
    const ad::Graph::NodeId one = g.leaf(ad::Tensor::scalar(1.0));
    std::vector<ad::Graph::NodeId> query_terms;
    int skipped = 0;
    for (int q = 0; q < labels.n; ++q) {
        const auto& pos = labels.positives[static_cast<std::size_t>(q)];
        const auto& omega = labels.candidates[static_cast<std::size_t>(q)];
        if (pos.empty()) {
            ++skipped;
            continue;
        }
        // d(q, j) pulled once per candidate
        std::vector<ad::Graph::NodeId> d_qj(static_cast<std::size_t>(labels.n), -1);
        for (int j : omega) d_qj[static_cast<std::size_t>(j)] = g.element(distmat, q, j);
        std::vector<ad::Graph::NodeId> soft_precisions;
        for (int i : pos) {
            const ad::Graph::NodeId d_qi = d_qj[static_cast<std::size_t>(i)];
            std::vector<ad::Graph::NodeId> num_terms{one}, den_terms{one};
            for (int j : omega) {
                if (j == i) continue;
                const auto s =
                    g.sigmoid(g.sub(d_qi, d_qj[static_cast<std::size_t>(j)]), tau);
                den_terms.push_back(s);
                bool j_positive = false;
                for (int k : pos) j_positive |= (k == j);
                if (j_positive) num_terms.push_back(s);
            }
            soft_precisions.push_back(g.div(g.add_n(num_terms), g.add_n(den_terms)));
        }
        const auto ap = g.scale(g.add_n(soft_precisions), 1.0 / pos.size());
        query_terms.push_back(g.sub(one, ap));
    }
    if (query_terms.empty()) throw NumericError("tsap_loss: no query has an in-batch positive");
    if (skipped_out) *skipped_out = skipped;
    return g.scale(g.add_n(query_terms), 1.0 / query_terms.size());
}

}  // namespace detail

/// Graph form of mrl_loss for training; `descriptors_node` is the stacked
/// b x output_dim raw descriptor matrix.
inline MrlGraphResult mrl_loss_graph(ad::Graph& g, ad::Graph::NodeId descriptors_node,
                                     const BatchLabels& labels, const LossConfig& config) {
    config.validate();
    labels.validate();
    if (g.value(descriptors_node).cols < config.mrl_dims.back())
        throw ConfigError("mrl_loss: descriptor dim < max nested dim");
    MrlGraphResult r{};
    std::vector<ad::Graph::NodeId> weighted;
    for (std::size_t t = 0; t < config.mrl_dims.size(); ++t) {
        const auto prefix = g.l2_normalize_rows(g.slice_cols(descriptors_node, config.mrl_dims[t]));
        const auto distances = g.pairwise_distances(prefix);
        const auto term = detail::tsap_graph(g, distances, labels, config.tau, &r.skipped_queries);
        r.per_dim.push_back(term);
        weighted.push_back(g.scale(term, config.mrl_weights[t]));
    }
    r.total = g.add_n(weighted);
    return r;
}

}  // namespace vinepr
