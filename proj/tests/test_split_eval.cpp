#include <catch2/catch_amalgamated.hpp>
#include <random>
#include <set>

#include "vinepr/evaluate.hpp"
#include "vinepr/split.hpp"
#include "vinepr/train.hpp"

using namespace vinepr;

namespace {

ScanRecord record_at(double x, double y, const std::string& seq = "run1") {
    ScanRecord r;
    r.pose = {x, y, 0};
    r.sequence_id = seq;
    return r;
}

std::vector<ScanRecord> grid_records(int n, double spacing, unsigned seed = 0) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> d(0.0, spacing);
    std::vector<ScanRecord> out;
    for (int i = 0; i < n; ++i) out.push_back(record_at(i * spacing + d(rng) * 0.01, 0.0));
    return out;
}

void check_disjoint_exhaustive(const SplitSpec& split, std::size_t total) {
    std::set<std::size_t> seen;
    for (auto i : split.train_indices) seen.insert(i);
    for (auto i : split.test_indices) CHECK(seen.insert(i).second);
    CHECK(seen.size() == total);
}

}  // namespace

TEST_CASE("zone split boundary behavior", "[split]") {
    std::vector<ScanRecord> records{record_at(12.9, 0), record_at(13.1, 0)};
    auto split = make_zone_split(records, {{0, 0, 0}}, 13.0);
    REQUIRE(split.test_indices == std::vector<std::size_t>{0});
    REQUIRE(split.train_indices == std::vector<std::size_t>{1});
}

TEST_CASE("zone split rejects degenerate assignments", "[split]") {
    std::vector<ScanRecord> records{record_at(1, 0), record_at(2, 0)};
    CHECK_THROWS_AS(make_zone_split(records, {{0, 0, 0}}, 100.0), ConfigError);
    CHECK_THROWS_AS(make_zone_split(records, {{500, 0, 0}}, 1.0), ConfigError);
}

TEST_CASE("zone split equals brute-force point-in-disc predicate", "[split][oracle]") {
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> d(0.0, 100.0);
    std::vector<ScanRecord> records;
    for (int i = 0; i < 500; ++i) records.push_back(record_at(d(rng), d(rng)));
    const std::vector<Vec3> centers{{20, 20, 0}, {70, 30, 0}, {40, 80, 0}};
    const double radius = 13.0;
    auto split = make_zone_split(records, centers, radius);
    check_disjoint_exhaustive(split, records.size());

    std::set<std::size_t> test_set(split.test_indices.begin(), split.test_indices.end());
    for (std::size_t i = 0; i < records.size(); ++i) {
        bool inside = false;
        for (const auto& c : centers)
            inside |= std::hypot(records[i].pose.x - c.x, records[i].pose.y - c.y) <= radius;
        CHECK(test_set.count(i) == (inside ? 1u : 0u));
    }
}

TEST_CASE("interleaved split alternates by position", "[split]") {
    auto four = grid_records(4, 1.0);
    auto split = make_interleaved_split(four);
    CHECK(split.train_indices == std::vector<std::size_t>{0, 2});
    CHECK(split.test_indices == std::vector<std::size_t>{1, 3});

    auto five = grid_records(5, 1.0);
    split = make_interleaved_split(five);
    CHECK(split.train_indices == std::vector<std::size_t>{0, 2, 4});
    CHECK(split.test_indices == std::vector<std::size_t>{1, 3});
    CHECK(split.train_indices.size() - split.test_indices.size() <= 1);

    CHECK_THROWS_AS(make_interleaved_split(grid_records(1, 1.0)), ConfigError);
}

TEST_CASE("run split partitions by sequence id", "[split]") {
    std::vector<ScanRecord> records;
    for (int i = 0; i < 5; ++i) records.push_back(record_at(i, 0, "run1"));
    for (int i = 0; i < 4; ++i) records.push_back(record_at(i, 5, "run2"));
    for (int i = 0; i < 3; ++i) records.push_back(record_at(i, 9, "run3"));

    auto split = make_run_split(records, {"run2"});
    CHECK(split.test_indices.size() == 4);
    CHECK(split.train_indices.size() == 8);
    check_disjoint_exhaustive(split, records.size());
    for (auto i : split.test_indices) CHECK(records[i].sequence_id == "run2");
    for (const auto& [seq, idx] : split.test_ids) CHECK(seq == "run2");

    CHECK_THROWS_AS(make_run_split(records, {"run9"}), ConfigError);
}

TEST_CASE("splits are disjoint and exhaustive on 200-record fixtures", "[split][property]") {
    auto records = grid_records(200, 1.0, 3);
    check_disjoint_exhaustive(make_interleaved_split(records), 200);
    check_disjoint_exhaustive(make_zone_split(records, {{50, 0, 0}}, 10.0), 200);
    for (int i = 100; i < 200; ++i) records[static_cast<std::size_t>(i)].sequence_id = "run2";
    check_disjoint_exhaustive(make_run_split(records, {"run2"}), 200);
}

TEST_CASE("sample_batch keeps positives within clusters", "[batch]") {
    // two clusters 100 m apart
    std::vector<ScanRecord> records;
    for (int i = 0; i < 6; ++i) records.push_back(record_at(i * 1.5, 0));
    for (int i = 0; i < 6; ++i) records.push_back(record_at(100 + i * 1.5, 0));
    std::vector<std::size_t> train(records.size());
    for (std::size_t i = 0; i < train.size(); ++i) train[i] = i;

    TrainConfig config;
    config.batch_size = 4;
    std::mt19937_64 rng(7);
    const auto batch = sample_batch(records, train, config, rng);
    REQUIRE(batch.record_indices.size() == 4);
    for (int q = 0; q < batch.labels.n; ++q) {
        CHECK(!batch.labels.positives[static_cast<std::size_t>(q)].empty());
        const auto& q_pose = records[batch.record_indices[static_cast<std::size_t>(q)]].pose;
        for (int j : batch.labels.positives[static_cast<std::size_t>(q)]) {
            const auto& j_pose = records[batch.record_indices[static_cast<std::size_t>(j)]].pose;
            // same cluster iff both under x=50 or both over
            CHECK((q_pose.x < 50) == (j_pose.x < 50));
            CHECK(planar_distance(q_pose, j_pose) <= config.positives_radius);
        }
    }
}

TEST_CASE("sample_batch excludes the ambiguity buffer from candidates", "[batch]") {
    // pair at x ~ 0 and pair at x ~ 10: cross-pair distances land in the
    // (5, 20) m buffer, so they are neither positives nor negatives
    std::vector<ScanRecord> records{record_at(0, 0), record_at(1, 0), record_at(10, 0),
                                    record_at(10.5, 0)};
    std::vector<std::size_t> train{0, 1, 2, 3};
    TrainConfig config;
    config.batch_size = 4;
    std::mt19937_64 rng(3);
    const auto batch = sample_batch(records, train, config, rng);
    REQUIRE(batch.record_indices.size() == 4);
    int pos0 = -1, pos2 = -1;
    for (std::size_t k = 0; k < batch.record_indices.size(); ++k) {
        if (batch.record_indices[k] == 0) pos0 = static_cast<int>(k);
        if (batch.record_indices[k] == 2) pos2 = static_cast<int>(k);
    }
    REQUIRE(pos0 >= 0);
    REQUIRE(pos2 >= 0);
    for (int j : batch.labels.candidates[static_cast<std::size_t>(pos0)]) CHECK(j != pos2);
    for (int j : batch.labels.candidates[static_cast<std::size_t>(pos2)]) CHECK(j != pos0);
}

TEST_CASE("sample_batch is deterministic under a fixed seed", "[batch]") {
    auto records = grid_records(40, 2.0, 9);
    std::vector<std::size_t> train(records.size());
    for (std::size_t i = 0; i < train.size(); ++i) train[i] = i;
    TrainConfig config;
    config.batch_size = 8;
    std::mt19937_64 rng_a(42), rng_b(42);
    CHECK(sample_batch(records, train, config, rng_a).record_indices ==
          sample_batch(records, train, config, rng_b).record_indices);
}

TEST_CASE("sample_batch reports infeasibility", "[batch]") {
    auto records = grid_records(10, 50.0);  // nothing within 5 m
    std::vector<std::size_t> train(records.size());
    for (std::size_t i = 0; i < train.size(); ++i) train[i] = i;
    TrainConfig config;
    config.batch_size = 4;
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(sample_batch(records, train, config, rng), DataError);
}

namespace {

DescriptorStore::Entry entry(const std::string& seq, std::uint32_t idx, Vec3 pose,
                             std::vector<double> vec) {
    return {seq, idx, pose, std::move(vec)};
}

}  // namespace

TEST_CASE("evaluate recall formula: 2 TP and 2 FN give 0.5", "[eval]") {
    // database descriptors are unit axes; two queries copy their true match's
    // descriptor, two copy a wrong one
    std::vector<DescriptorStore::Entry> db{
        entry("db", 0, {0, 0, 0}, {1, 0, 0, 0}),
        entry("db", 1, {100, 0, 0}, {0, 1, 0, 0}),
        entry("db", 2, {200, 0, 0}, {0, 0, 1, 0}),
        entry("db", 3, {300, 0, 0}, {0, 0, 0, 1}),
    };
    std::vector<DescriptorStore::Entry> queries{
        entry("q", 0, {1, 0, 0}, {1, 0, 0, 0}),    // TP
        entry("q", 1, {101, 0, 0}, {0, 1, 0, 0}),  // TP
        entry("q", 2, {201, 0, 0}, {0, 0, 0, 1}),  // retrieves db3 -> FN
        entry("q", 3, {301, 0, 0}, {0, 0, 1, 0}),  // retrieves db2 -> FN
    };
    auto result = evaluate_one(db, queries, 4, 5.0, RankingMetric::euclidean_prefix, "t");
    CHECK(result.recall_at_1 == 0.5);
    CHECK(result.excluded_queries == 0);
}

TEST_CASE("evaluate curve is monotone and recall@1 <= recall@1pct", "[eval][property]") {
    std::mt19937 rng(19);
    std::uniform_real_distribution<double> d(-1, 1);
    std::vector<DescriptorStore::Entry> db, queries;
    for (int i = 0; i < 120; ++i) {
        std::vector<double> v(8);
        for (auto& x : v) x = d(rng);
        db.push_back(entry("db", static_cast<std::uint32_t>(i), {i * 1.0, 0, 0}, v));
    }
    for (int i = 0; i < 40; ++i) {
        std::vector<double> v(8);
        for (auto& x : v) x = d(rng);
        queries.push_back(entry("q", static_cast<std::uint32_t>(i), {i * 3.0, 0, 0}, v));
    }
    auto result = evaluate_one(db, queries, 8, 5.0, RankingMetric::euclidean_prefix, "t");
    for (std::size_t k = 1; k < result.recall_at.size(); ++k)
        CHECK(result.recall_at[k].value >= result.recall_at[k - 1].value);
    CHECK(result.recall_at_1 <= result.recall_at_1pct);
    CHECK(result.n_1pct == 1);  // round(1.2) = 1
}

TEST_CASE("evaluate with infinite threshold has perfect recall", "[eval]") {
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> d(-1, 1);
    std::vector<DescriptorStore::Entry> db, queries;
    for (int i = 0; i < 15; ++i) {
        std::vector<double> v(4);
        for (auto& x : v) x = d(rng);
        db.push_back(entry("db", static_cast<std::uint32_t>(i), {i * 50.0, 0, 0}, v));
        queries.push_back(entry("q", static_cast<std::uint32_t>(i), {i * 50.0 + 1000, 0, 0}, v));
    }
    auto result = evaluate_one(db, queries, 4, std::numeric_limits<double>::infinity(),
                               RankingMetric::euclidean_prefix, "t");
    CHECK(result.recall_at_1 == 1.0);
    CHECK(result.excluded_queries == 0);
}

TEST_CASE("evaluate matches a brute-force ranked-list oracle", "[eval][oracle]") {
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> d(-1, 1);
    std::uniform_real_distribution<double> coord(0, 60);
    std::vector<DescriptorStore::Entry> db, queries;
    for (int i = 0; i < 12; ++i) {
        std::vector<double> v(6);
        for (auto& x : v) x = d(rng);
        db.push_back(entry("db", static_cast<std::uint32_t>(i), {coord(rng), coord(rng), 0}, v));
    }
    for (int i = 0; i < 9; ++i) {
        std::vector<double> v(6);
        for (auto& x : v) x = d(rng);
        queries.push_back(entry("q", static_cast<std::uint32_t>(i), {coord(rng), coord(rng), 0}, v));
    }
    const double threshold = 20.0;
    auto result = evaluate_one(db, queries, 6, threshold, RankingMetric::euclidean_prefix, "t");

    // oracle: full sort per query on normalized descriptors
    auto normalize = [](std::vector<double> v) {
        double n = 0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        for (auto& x : v) x /= n;
        return v;
    };
    int valid = 0;
    std::vector<int> hits(26, 0);
    for (const auto& q : queries) {
        bool any = false;
        for (const auto& e : db) any |= planar_distance(e.pose, q.pose) <= threshold;
        if (!any) continue;
        ++valid;
        auto qv = normalize(q.vec);
        std::vector<std::pair<double, int>> order;
        for (std::size_t i = 0; i < db.size(); ++i) {
            auto ev = normalize(db[i].vec);
            double s = 0;
            for (std::size_t k = 0; k < qv.size(); ++k)
                s += (qv[k] - ev[k]) * (qv[k] - ev[k]);
            order.push_back({std::sqrt(s), static_cast<int>(i)});
        }
        std::sort(order.begin(), order.end());
        for (int n = 1; n <= static_cast<int>(db.size()); ++n) {
            bool hit = false;
            for (int r = 0; r < n; ++r)
                hit |= planar_distance(db[static_cast<std::size_t>(order[static_cast<std::size_t>(r)].second)].pose,
                                       q.pose) <= threshold;
            if (hit) {
                for (int m = n; m <= static_cast<int>(db.size()); ++m) ++hits[static_cast<std::size_t>(m)];
                break;
            }
        }
    }
    REQUIRE(valid > 0);
    for (const auto& p : result.recall_at)
        CHECK(p.value == Catch::Approx(static_cast<double>(hits[static_cast<std::size_t>(p.n)]) / valid));
    CHECK(result.excluded_queries == static_cast<int>(queries.size()) - valid);
}

TEST_CASE("evaluate rejects dimension mismatches and empty query sets", "[eval]") {
    DescriptorStore a, b;
    a.descriptor_dim = 4;
    b.descriptor_dim = 8;
    a.add(entry("a", 0, {0, 0, 0}, {1, 0, 0, 0}));
    b.add(entry("b", 0, {0, 0, 0}, {1, 0, 0, 0, 0, 0, 0, 0}));
    CHECK_THROWS_AS(
        evaluate(a, b, {}, 5.0, RankingMetric::euclidean_prefix, {}, "t"),
        DataError);
    CHECK_THROWS_AS(evaluate_one(a.entries, {}, 4, 5.0, RankingMetric::euclidean_prefix, "t"),
                    DataError);
}

TEST_CASE("report emission: csv shape and json byte-stable round trip", "[eval][report]") {
    RecallReport report;
    report.meta = {"synthetic", "interleaved", "learned", 5.0};
    for (int dim : {64, 128, 192}) {
        RecallResult r;
        r.test_label = "seasonal";
        r.dim = dim;
        r.recall_at_1 = 0.5 + dim / 1000.0;
        r.recall_at_1pct = 0.9;
        r.n_1pct = 2;
        r.recall_at = {{1, r.recall_at_1}, {2, 0.7}, {3, 0.9}};
        r.excluded_queries = 1;
        r.traces = {{"q:0", "db:3", 1.25}};
        report.results.push_back(r);
    }
    const std::string csv = report_to_csv(report);
    std::size_t rows = 0;
    for (char c : csv) rows += c == '\n' ? 1 : 0;
    CHECK(rows == 4);  // header + 3 entries

    const std::string json = report_emit(report, ReportFormat::json);
    const RecallReport parsed = report_from_json(json);
    CHECK(report_emit(parsed, ReportFormat::json) == json);

    // empty report still renders
    RecallReport empty;
    CHECK(report_to_csv(empty).find("test_label") == 0);
    CHECK(report_emit(report_from_json(report_emit(empty, ReportFormat::json)),
                      ReportFormat::json) == report_emit(empty, ReportFormat::json));
}
