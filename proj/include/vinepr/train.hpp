#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vinepr/describe.hpp"
#include "vinepr/descriptor_head.hpp"
#include "vinepr/evaluate.hpp"
#include "vinepr/ranking_loss.hpp"
#include "vinepr/split.hpp"

namespace vinepr {

struct TrainConfig {
    int epochs = 200;
    int batch_size = 8;
    double positives_radius = 5.0;       // meters; mirrors the evaluation threshold
    double negatives_min_radius = 20.0;  // meters; (pos, neg) interval is ignored
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    int steps_per_epoch = 0;         // 0: ceil(train size / batch_size)
    int validate_every = 0;          // epochs; 0 disables validation checkpointing
    double quantization_size = 0.01;  // voxel size on normalized coordinates
    LossConfig loss;

    void validate() const {
        if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
        if (batch_size < 4) throw ConfigError("TrainConfig: batch_size must be >= 4");
        if (!(positives_radius > 0.0) || !(negatives_min_radius > positives_radius))
            throw ConfigError("TrainConfig: need 0 < positives_radius < negatives_min_radius");
        if (!(learning_rate >= 0.0)) throw ConfigError("TrainConfig: learning_rate must be >= 0");
        if (!(momentum >= 0.0 && momentum < 1.0))
            throw ConfigError("TrainConfig: momentum must be in [0, 1)");
        if (!(quantization_size > 0.0))
            throw ConfigError("TrainConfig: quantization_size must be > 0");
        loss.validate();
    }
};

struct SampledBatch {
    std::vector<std::size_t> record_indices;  // into the full records list
    BatchLabels labels;
};

namespace detail {

inline std::size_t pick(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>(rng() % n);
}

}  // namespace detail

/// Draws batch_size distinct train records such that every one has at least
/// one in-batch positive partner (planar distance <= positives_radius).
/// Labels exclude the (positives_radius, negatives_min_radius) ambiguity
/// buffer from the candidate sets. Deterministic given the rng state.
inline SampledBatch sample_batch(const std::vector<ScanRecord>& records,
                                 const std::vector<std::size_t>& train_indices,
                                 const TrainConfig& config, std::mt19937_64& rng) {
    config.validate();
    const auto b = static_cast<std::size_t>(config.batch_size);
    if (train_indices.size() < b)
        throw DataError("sample_batch: train set smaller than batch size");

    // partner lists within positives_radius
    std::vector<std::vector<std::size_t>> partners(train_indices.size());
    std::vector<std::size_t> seeds;  // positions with at least one partner
    for (std::size_t a = 0; a < train_indices.size(); ++a) {
        for (std::size_t c = 0; c < train_indices.size(); ++c) {
            if (a == c) continue;
            if (planar_distance(records[train_indices[a]].pose, records[train_indices[c]].pose) <=
                config.positives_radius)
                partners[a].push_back(c);
        }
        if (!partners[a].empty()) seeds.push_back(a);
    }
    if (seeds.empty())
        throw DataError("sample_batch: no train record has a positive partner within " +
                        format_double(config.positives_radius) + " m");

    std::vector<std::size_t> chosen;  // positions within train_indices
    std::vector<bool> in_batch(train_indices.size(), false);
    auto push = [&](std::size_t pos) {
        chosen.push_back(pos);
        in_batch[pos] = true;
    };
    int retries = 0;
    const int max_retries = 10000;
    while (chosen.size() < b) {
        if (++retries > max_retries)
            throw DataError("sample_batch: could not assemble a feasible batch of " +
                            std::to_string(b) + " after " + std::to_string(max_retries) +
                            " draws (train set too sparse in positives)");
        if (b - chosen.size() >= 2) {
            const std::size_t a = seeds[detail::pick(rng, seeds.size())];
            if (in_batch[a]) continue;
            const auto& ps = partners[a];
            const std::size_t p = ps[detail::pick(rng, ps.size())];
            push(a);
            if (!in_batch[p]) push(p);
        } else {
            // one slot left: it must bring its own in-batch partner
            const std::size_t a = seeds[detail::pick(rng, seeds.size())];
            if (in_batch[a]) continue;
            bool partner_in_batch = false;
            for (std::size_t p : partners[a]) partner_in_batch |= in_batch[p];
            if (!partner_in_batch) continue;
            push(a);
        }
    }

    SampledBatch batch;
    std::vector<Vec3> poses;
    for (std::size_t pos : chosen) {
        batch.record_indices.push_back(train_indices[pos]);
        poses.push_back(records[train_indices[pos]].pose);
    }
    batch.labels =
        BatchLabels::from_poses(poses, config.positives_radius, config.negatives_min_radius);
    batch.labels.validate();
    return batch;
}

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    std::vector<double> mean_terms;  // unweighted per-dim TSAP means
};

struct TrainResult {
    HeadWeights weights;  // after the last epoch
    std::vector<EpochStats> curve;
    int skipped_queries = 0;
    // populated when validate_every > 0 and the split has a test side
    std::optional<HeadWeights> best_weights;
    double best_recall_at_1 = -1.0;
    int best_epoch = -1;
};

inline std::string loss_curve_csv(const std::vector<EpochStats>& curve,
                                  const std::vector<int>& dims) {
    std::string out = "epoch,mean_loss";
    for (int d : dims) out += ",term_" + std::to_string(d);
    out += "\n";
    for (const auto& e : curve) {
        out += std::to_string(e.epoch) + "," + format_double(e.mean_loss);
        for (double t : e.mean_terms) out += "," + format_double(t);
        out += "\n";
    }
    return out;
}

namespace detail {

/// Eq.-1 normalization followed by voxel quantization, the input contract of
/// the descriptor head.
inline PointCloud preprocess_for_head(const PointCloud& filtered_cloud, double quantization_size) {
    return quantize_cloud(normalize_cloud(filtered_cloud, {}), quantization_size);
}

}  // namespace detail

/// Stochastic gradient training of the descriptor head with the Matryoshka
/// TSAP loss. The batch schedule is a fixed function of (seed, step index),
/// so a zero learning rate yields a flat loss curve and identical seeds yield
/// identical curves. Throws NumericError when a batch produces a non-finite
/// loss.
inline TrainResult train(const std::vector<ScanRecord>& records, const SplitSpec& split,
                         const TrainConfig& config, const DescriptorHeadParams& head_params,
                         unsigned threads = 1) {
    config.validate();
    head_params.validate();
    if (split.train_indices.size() < static_cast<std::size_t>(config.batch_size))
        throw DataError("train: train split smaller than batch size");

    // Preprocess every train cloud once.
    std::vector<PointCloud> clouds(records.size());
    parallel_for(split.train_indices.size(), threads, [&](std::size_t i) {
        const std::size_t idx = split.train_indices[i];
        if (records[idx].cloud.empty())
            throw DataError("train: record " + std::to_string(idx) + " has an empty cloud");
        clouds[idx] = detail::preprocess_for_head(records[idx].cloud, config.quantization_size);
    });

    TrainResult result;
    result.weights = HeadWeights::init(head_params);
    std::vector<ad::Tensor> velocity;
    for (const auto* t : result.weights.tensors()) velocity.push_back(ad::Tensor(t->rows, t->cols));

    const int steps = config.steps_per_epoch > 0
                          ? config.steps_per_epoch
                          : static_cast<int>((split.train_indices.size() + config.batch_size - 1) /
                                             config.batch_size);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        double loss_sum = 0.0;
        std::vector<double> term_sums(config.loss.mrl_dims.size(), 0.0);
        for (int step = 0; step < steps; ++step) {
            std::mt19937_64 rng(hash_combine(config.seed, static_cast<std::uint64_t>(step)));
            const SampledBatch batch = sample_batch(records, split.train_indices, config, rng);

            ad::Graph g;
            const HeadBinding binding = bind_head(g, result.weights);
            std::vector<ad::Graph::NodeId> descriptors;
            for (std::size_t idx : batch.record_indices)
                descriptors.push_back(head_forward(g, binding, result.weights, clouds[idx]));
            const auto stacked = g.concat_rows(descriptors);
            const MrlGraphResult loss = mrl_loss_graph(g, stacked, batch.labels, config.loss);
            result.skipped_queries += loss.skipped_queries;

            const double loss_value = g.value(loss.total).v[0];
            if (!std::isfinite(loss_value)) {
                std::string ids;
                for (std::size_t idx : batch.record_indices) ids += " " + std::to_string(idx);
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   " step " + std::to_string(step) + "; batch records:" + ids);
            }
            loss_sum += loss_value;
            for (std::size_t t = 0; t < loss.per_dim.size(); ++t)
                term_sums[t] += g.value(loss.per_dim[t]).v[0];

            g.backward(loss.total);
            auto tensors = result.weights.tensors();
            for (std::size_t t = 0; t < tensors.size(); ++t) {
                const ad::Tensor& grad = g.grad(binding.param_ids[t]);
                for (std::size_t k = 0; k < tensors[t]->size(); ++k) {
                    velocity[t].v[k] =
                        config.momentum * velocity[t].v[k] - config.learning_rate * grad.v[k];
                    tensors[t]->v[k] += velocity[t].v[k];
                }
            }
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = loss_sum / steps;
        for (double t : term_sums) stats.mean_terms.push_back(t / steps);
        result.curve.push_back(std::move(stats));

        if (config.validate_every > 0 && !split.test_indices.empty() &&
            (epoch % config.validate_every == 0 || epoch == config.epochs)) {
            DescribeOptions opts;
            opts.quantization_size = config.quantization_size;
            const auto db = describe_records(records, split.train_indices,
                                             DescribeMethod::learned, opts, &result.weights,
                                             threads);
            const auto queries = describe_records(records, split.test_indices,
                                                  DescribeMethod::learned, opts, &result.weights,
                                                  threads);
            const auto eval = evaluate_one(db.entries, queries.entries, head_params.output_dim,
                                           config.positives_radius,
                                           RankingMetric::euclidean_prefix, "validation", threads);
            if (eval.recall_at_1 > result.best_recall_at_1) {
                result.best_recall_at_1 = eval.recall_at_1;
                result.best_epoch = epoch;
                result.best_weights = result.weights;
            }
        }
    }
    return result;
}

}  // namespace vinepr
