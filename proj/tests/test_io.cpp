#include <catch2/catch_amalgamated.hpp>
#include <cstring>
#include <filesystem>
#include <random>

#include "vinepr/dataset.hpp"
#include "vinepr/descriptor_store.hpp"
#include "vinepr/pcd.hpp"

using namespace vinepr;
namespace fs = std::filesystem;

TEST_CASE("parse_pcd reads ascii values back", "[io]") {
    const std::string text =
        "# .PCD v0.7 - Point Cloud Data file format\n"
        "VERSION 0.7\n"
        "FIELDS x y z\n"
        "SIZE 4 4 4\n"
        "TYPE F F F\n"
        "COUNT 1 1 1\n"
        "WIDTH 3\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS 3\nDATA ascii\n"
        "1 2 3\n"
        "4.5 -1 0.25\n"
        "0 0 9\n";
    auto cloud = parse_pcd(text);
    REQUIRE(cloud.size() == 3);
    CHECK(cloud.points[0] == Vec3{1, 2, 3});
    CHECK(cloud.points[1] == Vec3{4.5, -1, 0.25});
    CHECK(cloud.points[2] == Vec3{0, 0, 9});
    CHECK(!cloud.has_intensity());
}

TEST_CASE("parse_pcd captures intensity and binary round trip is exact", "[io]") {
    PointCloud cloud;
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> d(-50, 50);
    for (int i = 0; i < 57; ++i) {
        cloud.points.push_back({d(rng), d(rng), d(rng)});
        cloud.intensity.push_back(std::abs(d(rng)));
    }
    auto parsed = parse_pcd(write_pcd(cloud, /*binary=*/true));
    REQUIRE(parsed.size() == cloud.size());
    REQUIRE(parsed.has_intensity());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        CHECK(parsed.points[i] == cloud.points[i]);
        CHECK(parsed.intensity[i] == cloud.intensity[i]);
    }
    // ascii writer round-trips too (shortest-representation doubles)
    auto parsed_ascii = parse_pcd(write_pcd(cloud, /*binary=*/false));
    for (std::size_t i = 0; i < cloud.size(); ++i) CHECK(parsed_ascii.points[i] == cloud.points[i]);
}

TEST_CASE("parse_pcd rejects truncated payloads with byte offsets", "[io]") {
    const std::string header =
        "VERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n"
        "WIDTH 10\nHEIGHT 1\nPOINTS 10\nDATA ascii\n";
    std::string text = header;
    for (int i = 0; i < 9; ++i) text += "1 2 3\n";
    CHECK_THROWS_WITH(parse_pcd(text), Catch::Matchers::ContainsSubstring("truncated") &&
                                           Catch::Matchers::ContainsSubstring("byte offset"));

    // binary truncation
    PointCloud small;
    small.points = {{1, 2, 3}, {4, 5, 6}};
    std::string bin = write_pcd(small, true);
    bin.resize(bin.size() - 5);
    CHECK_THROWS_WITH(parse_pcd(bin), Catch::Matchers::ContainsSubstring("truncated"));
}

TEST_CASE("parse_pcd rejects malformed headers distinctly", "[io]") {
    CHECK_THROWS_WITH(parse_pcd("VERSION 0.7\nFIELDS x y\nSIZE 4 4\nTYPE F F\nCOUNT 1 1\n"
                                "WIDTH 1\nHEIGHT 1\nPOINTS 1\nDATA ascii\n1 2\n"),
                      Catch::Matchers::ContainsSubstring("x y z"));
    CHECK_THROWS_WITH(parse_pcd("VERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n"
                                "WIDTH 3\nHEIGHT 2\nPOINTS 3\nDATA ascii\n"),
                      Catch::Matchers::ContainsSubstring("WIDTH*HEIGHT"));
    CHECK_THROWS_WITH(parse_pcd("VERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n"
                                "WIDTH 1\nHEIGHT 1\nPOINTS 1\nDATA binary_compressed\nxxxx"),
                      Catch::Matchers::ContainsSubstring("unsupported encoding"));
}

TEST_CASE("parse_raw_xyzi decodes 16-byte records", "[io]") {
    const float vals[8] = {1, 2, 3, 0.5f, 4, 5, 6, 0.1f};
    std::string bytes(reinterpret_cast<const char*>(vals), sizeof(vals));
    auto cloud = parse_raw_xyzi(bytes);
    REQUIRE(cloud.size() == 2);
    CHECK(cloud.points[0] == Vec3{1, 2, 3});
    CHECK(cloud.intensity[1] == Catch::Approx(0.1).margin(1e-7));

    CHECK(parse_raw_xyzi("").empty());
    CHECK_THROWS_AS(parse_raw_xyzi(std::string(17, 'x')), DataError);
}

TEST_CASE("pose csv parses well-formed rows", "[io]") {
    auto poses = parse_pose_csv("timestamp,x,y,z,heading\n"
                                "0.1,1,2,3,0.5\n"
                                "0.2,4,5,6,1.0\n"
                                "0.3,7,8,9,1.5\n");
    REQUIRE(poses.size() == 3);
    CHECK(poses[1].timestamp == 0.2);
    CHECK(poses[1].position == Vec3{4, 5, 6});
    CHECK(poses[2].heading == 1.5);
}

TEST_CASE("pose csv defaults missing z and heading", "[io]") {
    auto poses = parse_pose_csv("timestamp,x,y\n1,2,3\n");
    REQUIRE(poses.size() == 1);
    CHECK(poses[0].position.z == 0.0);
    CHECK(!poses[0].heading.has_value());
}

TEST_CASE("pose csv schema and cell errors", "[io]") {
    CHECK_THROWS_WITH(parse_pose_csv("timestamp,y\n1,2\n"),
                      Catch::Matchers::ContainsSubstring("must name timestamp, x and y"));
    CHECK_THROWS_WITH(parse_pose_csv("timestamp,x,y\n1,abc,3\n"),
                      Catch::Matchers::ContainsSubstring("row 2"));
}

TEST_CASE("descriptor store round trip", "[io]") {
    DescriptorStore store;
    store.method_label = "scan_context";
    store.descriptor_dim = 4;
    store.add({"run1", 0, {1, 2, 3}, {0.1, 0.2, 0.3, 0.4}});
    store.add({"run1", 1, {4, 5, 6}, {0.5, 0.6, 0.7, 0.8}});

    const std::string bytes = save_store(store);
    auto loaded = load_store(bytes);
    CHECK(loaded.method_label == store.method_label);
    CHECK(loaded.descriptor_dim == store.descriptor_dim);
    REQUIRE(loaded.entries.size() == 2);
    CHECK(loaded.entries[1].sequence_id == "run1");
    CHECK(loaded.entries[1].scan_index == 1);
    CHECK(loaded.entries[1].pose == Vec3{4, 5, 6});
    CHECK(loaded.entries[1].vec == store.entries[1].vec);

    // empty store round trip
    DescriptorStore empty;
    empty.method_label = "fpfh";
    empty.descriptor_dim = 33;
    CHECK(load_store(save_store(empty)).entries.empty());
}

TEST_CASE("descriptor store detects corruption and version mismatch", "[io]") {
    DescriptorStore store;
    store.method_label = "m";
    store.descriptor_dim = 2;
    store.add({"s", 0, {0, 0, 0}, {1.0, 2.0}});
    std::string bytes = save_store(store);
    std::string corrupted = bytes;
    corrupted[corrupted.size() - 12] ^= 0x40;  // flip a payload bit
    CHECK_THROWS_WITH(load_store(corrupted), Catch::Matchers::ContainsSubstring("checksum"));

    std::string wrong_version = bytes;
    wrong_version[8] = 9;  // version field follows the 8-byte magic
    CHECK_THROWS_WITH(load_store(wrong_version),
                      Catch::Matchers::ContainsSubstring("version mismatch"));
}

TEST_CASE("manifest parse/write round trip and validation", "[io]") {
    DatasetManifest m;
    m.name = "synthetic_field";
    m.sampling_distance = 1.0;
    m.match_threshold = 5.0;
    m.sequences.push_back({"run1", "scans/run1", "poses/run1.csv", "synthetic"});
    m.sequences.push_back({"run2", "scans/run2", "poses/run2.csv", "synthetic"});
    auto parsed = parse_manifest(write_manifest(m));
    CHECK(parsed.name == m.name);
    REQUIRE(parsed.sequences.size() == 2);
    CHECK(parsed.sequences[1].pose_file == "poses/run2.csv");

    CHECK_THROWS_AS(parse_manifest("bogus_key = 1\n"), DataError);
    CHECK_THROWS_AS(parse_manifest("sequence = a d p s\nsequence = a d p s\n"), ConfigError);
}

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("vinepr_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

PointCloud tiny_cloud(double shift) {
    PointCloud c;
    c.points = {{1 + shift, 0, 0.5}, {2 + shift, 1, 0.7}, {3 + shift, -1, 0.2}};
    return c;
}

}  // namespace

TEST_CASE("load_dataset pairs scans to poses and counts skips", "[io]") {
    TempDir dir;
    std::string poses = "timestamp,x,y\n";
    for (int i = 0; i < 10; ++i)
        poses += format_double(i * 0.1) + "," + format_double(i * 0.3) + ",0\n";
    write_file(dir.path / "poses.csv", poses);
    fs::create_directories(dir.path / "scans");
    for (int i = 0; i < 10; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%012.6f.pcd", i * 0.1);
        write_file(dir.path / "scans" / name, write_pcd(tiny_cloud(i)));
    }
    // one scan far from any pose: skipped
    write_file(dir.path / "scans" / "000099.500000.pcd", write_pcd(tiny_cloud(0)));

    DatasetManifest m;
    m.name = "t";
    m.sampling_distance = 0.0;  // disabled
    m.sequences.push_back({"run1", "scans", "poses.csv", "test"});

    auto report = load_dataset(m, dir.path);
    CHECK(report.records.size() == 10);
    CHECK(report.skipped_scans == 1);
    CHECK(report.records[3].pose.x == Catch::Approx(0.9));
    CHECK(report.records[3].sequence_id == "run1");

    // with distance subsampling at 0.5 m on a 0.3 m grid: every 2nd pose
    m.sampling_distance = 0.5;
    auto sampled = load_dataset(m, dir.path);
    CHECK(sampled.records.size() == 5);

    // determinism
    auto again = load_dataset(m, dir.path);
    REQUIRE(again.records.size() == sampled.records.size());
    for (std::size_t i = 0; i < again.records.size(); ++i) {
        CHECK(again.records[i].timestamp == sampled.records[i].timestamp);
        CHECK(again.records[i].pose == sampled.records[i].pose);
    }
}
