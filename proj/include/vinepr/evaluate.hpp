#pragma once

#include <algorithm>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "vinepr/common.hpp"
#include "vinepr/descriptor_store.hpp"

namespace vinepr {

/// How candidates are ranked against a query descriptor.
enum class RankingMetric {
    euclidean_prefix,  // ascending Euclidean distance on L2-normalized prefixes (learned)
    cosine_full,       // descending cosine similarity on the full vector (handcrafted)
};

struct MatchTrace {
    std::string query_id;
    std::string retrieved_id;
    double ground_distance = 0.0;  // planar meters between the two poses
};

struct RecallCurvePoint {
    int n = 0;
    double value = 0.0;
};

struct RecallResult {
    std::string test_label;
    int dim = 0;
    double recall_at_1 = 0.0;
    double recall_at_1pct = 0.0;
    int n_1pct = 1;
    std::vector<RecallCurvePoint> recall_at;  // N = 1 .. min(25, |database|)
    int excluded_queries = 0;                 // queries with no valid match anywhere
    std::vector<MatchTrace> traces;           // top-1 per query
};

struct RecallReport {
    struct Meta {
        std::string dataset, split, method;
        double threshold_m = 5.0;
    } meta;
    std::vector<RecallResult> results;
};

namespace detail {

inline std::string entry_id(const DescriptorStore::Entry& e) {
    return e.sequence_id + ":" + std::to_string(e.scan_index);
}

inline std::vector<double> normalized_prefix(const std::vector<double>& v, int dim) {
    std::vector<double> out(v.begin(), v.begin() + dim);
    const double n = l2_norm(out);
    if (n < 1e-12) throw NumericError("evaluate: degenerate descriptor prefix");
    for (auto& x : out) x /= n;
    return out;
}

}  // namespace detail

/// Ranks the database for every query and accumulates Recall@N. A query
/// counts as a true positive at N when any of its top-N candidates lies
/// within `threshold` planar meters of the query pose. Queries with no
/// geometrically valid match in the whole database are excluded from the
/// denominator and reported. Ties rank by database index.
inline RecallResult evaluate_one(const std::vector<DescriptorStore::Entry>& database,
                                 const std::vector<DescriptorStore::Entry>& queries, int dim,
                                 double threshold, RankingMetric metric,
                                 const std::string& test_label, unsigned threads = 1) {
    if (database.empty()) throw DataError("evaluate: empty database");
    if (queries.empty()) throw DataError("evaluate: empty query set");
    for (const auto& e : database)
        if (static_cast<int>(e.vec.size()) < dim)
            throw DataError("evaluate: database descriptor shorter than dim " + std::to_string(dim));
    for (const auto& e : queries)
        if (static_cast<int>(e.vec.size()) < dim)
            throw DataError("evaluate: query descriptor shorter than dim " + std::to_string(dim));

    const int db_size = static_cast<int>(database.size());
    const int max_n = std::min(25, db_size);
    const int n_1pct = std::max(1, static_cast<int>(std::lround(0.01 * db_size)));

    // Precompute ranked-side vectors once.
    std::vector<std::vector<double>> db_vecs(database.size());
    for (std::size_t i = 0; i < database.size(); ++i)
        db_vecs[i] = metric == RankingMetric::euclidean_prefix
                         ? detail::normalized_prefix(database[i].vec, dim)
                         : database[i].vec;

    struct QueryOutcome {
        bool valid = false;
        int first_hit_rank = -1;  // 1-based rank of the first true positive
        bool hit_1pct = false;
        MatchTrace trace;
    };
    std::vector<QueryOutcome> outcomes(queries.size());

    parallel_for(queries.size(), threads, [&](std::size_t qi) {
        const auto& q = queries[qi];
        QueryOutcome& out = outcomes[qi];
        for (const auto& e : database)
            out.valid |= planar_distance(e.pose, q.pose) <= threshold;

        const std::vector<double> q_vec = metric == RankingMetric::euclidean_prefix
                                              ? detail::normalized_prefix(q.vec, dim)
                                              : q.vec;
        // score: lower is better for both metrics
        std::vector<std::pair<double, int>> ranked(database.size());
        for (std::size_t i = 0; i < database.size(); ++i) {
            double score;
            if (metric == RankingMetric::euclidean_prefix) {
                double s = 0.0;
                for (int k = 0; k < dim; ++k) {
                    const double d = q_vec[static_cast<std::size_t>(k)] -
                                     db_vecs[i][static_cast<std::size_t>(k)];
                    s += d * d;
                }
                score = std::sqrt(s);
            } else {
                score = -cosine_similarity(q_vec, db_vecs[i]);
            }
            ranked[i] = {score, static_cast<int>(i)};
        }
        std::sort(ranked.begin(), ranked.end());  // ties fall back to index order

        const int scan_to = std::max(max_n, n_1pct);
        for (int r = 0; r < scan_to && r < db_size; ++r) {
            const auto& cand = database[static_cast<std::size_t>(ranked[static_cast<std::size_t>(r)].second)];
            if (planar_distance(cand.pose, q.pose) <= threshold) {
                out.first_hit_rank = r + 1;
                break;
            }
        }
        out.hit_1pct = out.first_hit_rank > 0 && out.first_hit_rank <= n_1pct;
        const auto& top = database[static_cast<std::size_t>(ranked[0].second)];
        out.trace = {detail::entry_id(q), detail::entry_id(top),
                     planar_distance(top.pose, q.pose)};
    });

    RecallResult result;
    result.test_label = test_label;
    result.dim = dim;
    result.n_1pct = n_1pct;
    int valid_queries = 0, hit_1pct = 0;
    std::vector<int> hits_at(static_cast<std::size_t>(max_n) + 1, 0);
    for (const auto& out : outcomes) {
        result.traces.push_back(out.trace);
        if (!out.valid) {
            ++result.excluded_queries;
            continue;
        }
        ++valid_queries;
        if (out.first_hit_rank > 0 && out.first_hit_rank <= max_n)
            ++hits_at[static_cast<std::size_t>(out.first_hit_rank)];
        if (out.hit_1pct) ++hit_1pct;
    }
    if (valid_queries == 0)
        throw DataError("evaluate: no query has a geometrically valid match in the database");
    int cumulative = 0;
    for (int n = 1; n <= max_n; ++n) {
        cumulative += hits_at[static_cast<std::size_t>(n)];
        result.recall_at.push_back({n, static_cast<double>(cumulative) / valid_queries});
    }
    result.recall_at_1 = result.recall_at.front().value;
    result.recall_at_1pct = static_cast<double>(hit_1pct) / valid_queries;
    return result;
}

/// Full report across prefix dims (euclidean_prefix) or the single full
/// vector (cosine_full, where dims is ignored and the store dim is used).
inline RecallReport evaluate(const DescriptorStore& database, const DescriptorStore& queries,
                             const std::vector<int>& prefix_dims, double threshold,
                             RankingMetric metric, const RecallReport::Meta& meta,
                             const std::string& test_label, unsigned threads = 1) {
    if (database.descriptor_dim != queries.descriptor_dim)
        throw DataError("evaluate: dimension mismatch between stores (" +
                        std::to_string(database.descriptor_dim) + " vs " +
                        std::to_string(queries.descriptor_dim) + ")");
    RecallReport report;
    report.meta = meta;
    std::vector<int> dims = prefix_dims;
    if (metric == RankingMetric::cosine_full || dims.empty())
        dims = {static_cast<int>(database.descriptor_dim)};
    for (int dim : dims) {
        if (dim < 1 || dim > static_cast<int>(database.descriptor_dim))
            throw ConfigError("evaluate: prefix dim " + std::to_string(dim) +
                              " out of range for stores of dim " +
                              std::to_string(database.descriptor_dim));
        report.results.push_back(evaluate_one(database.entries, queries.entries, dim, threshold,
                                              metric, test_label, threads));
    }
    return report;
}

enum class ReportFormat { json, csv };

inline nlohmann::ordered_json report_to_json_value(const RecallReport& report) {
    nlohmann::ordered_json j;
    j["meta"] = {{"dataset", report.meta.dataset},
                 {"split", report.meta.split},
                 {"method", report.meta.method},
                 {"threshold_m", report.meta.threshold_m}};
    j["results"] = nlohmann::ordered_json::array();
    for (const auto& r : report.results) {
        nlohmann::ordered_json res;
        res["test_label"] = r.test_label;
        res["dim"] = r.dim;
        res["recall_at_1"] = r.recall_at_1;
        res["recall_at_1pct"] = r.recall_at_1pct;
        res["n_1pct"] = r.n_1pct;
        res["recall_at"] = nlohmann::ordered_json::array();
        for (const auto& p : r.recall_at)
            res["recall_at"].push_back({{"n", p.n}, {"value", p.value}});
        res["excluded_queries"] = r.excluded_queries;
        res["traces"] = nlohmann::ordered_json::array();
        for (const auto& t : r.traces)
            res["traces"].push_back({{"query", t.query_id},
                                     {"retrieved", t.retrieved_id},
                                     {"ground_distance", t.ground_distance}});
        j["results"].push_back(std::move(res));
    }
    return j;
}

inline RecallReport report_from_json(std::string_view bytes) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(bytes);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("report json: ") + e.what());
    }
    try {
        RecallReport report;
        report.meta.dataset = j.at("meta").at("dataset").get<std::string>();
        report.meta.split = j.at("meta").at("split").get<std::string>();
        report.meta.method = j.at("meta").at("method").get<std::string>();
        report.meta.threshold_m = j.at("meta").at("threshold_m").get<double>();
        for (const auto& res : j.at("results")) {
            RecallResult r;
            r.test_label = res.at("test_label").get<std::string>();
            r.dim = res.at("dim").get<int>();
            r.recall_at_1 = res.at("recall_at_1").get<double>();
            r.recall_at_1pct = res.at("recall_at_1pct").get<double>();
            r.n_1pct = res.at("n_1pct").get<int>();
            for (const auto& p : res.at("recall_at"))
                r.recall_at.push_back({p.at("n").get<int>(), p.at("value").get<double>()});
            r.excluded_queries = res.at("excluded_queries").get<int>();
            for (const auto& t : res.at("traces"))
                r.traces.push_back({t.at("query").get<std::string>(),
                                    t.at("retrieved").get<std::string>(),
                                    t.at("ground_distance").get<double>()});
            report.results.push_back(std::move(r));
        }
        return report;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("report json schema: ") + e.what());
    }
}

/// One CSV row per (test_label, dim) result.
inline std::string report_to_csv(const RecallReport& report) {
    std::string out =
        "test_label,dim,recall_at_1,recall_at_1pct,n_1pct,recall_at_25,excluded_queries\n";
    for (const auto& r : report.results) {
        out += r.test_label + "," + std::to_string(r.dim) + "," + format_double(r.recall_at_1) +
               "," + format_double(r.recall_at_1pct) + "," + std::to_string(r.n_1pct) + "," +
               format_double(r.recall_at.empty() ? 0.0 : r.recall_at.back().value) + "," +
               std::to_string(r.excluded_queries) + "\n";
    }
    return out;
}

inline std::string report_emit(const RecallReport& report, ReportFormat format) {
    if (format == ReportFormat::csv) return report_to_csv(report);
    return report_to_json_value(report).dump(2) + "\n";
}

}  // namespace vinepr
