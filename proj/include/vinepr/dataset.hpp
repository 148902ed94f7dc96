#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vinepr/pcd.hpp"
#include "vinepr/point_cloud.hpp"

namespace vinepr {

struct PoseSample {
    double timestamp = 0.0;
    Vec3 position;
    std::optional<double> heading;
};

namespace detail {
inline std::vector<std::string> split_csv_row(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        std::string_view cell =
            comma == std::string_view::npos ? line.substr(start) : line.substr(start, comma - start);
        while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
        while (!cell.empty() &&
               (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r'))
            cell.remove_suffix(1);
        out.emplace_back(cell);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}
}  // namespace detail

/// CSV with a header naming at least timestamp, x, y; z and heading optional.
/// Missing z reads as 0, missing heading stays absent.
inline std::vector<PoseSample> parse_pose_csv(std::string_view bytes) {
    std::size_t pos = 0;
    auto next_line = [&]() -> std::optional<std::string_view> {
        if (pos >= bytes.size()) return std::nullopt;
        std::size_t eol = bytes.find('\n', pos);
        std::string_view line =
            eol == std::string_view::npos ? bytes.substr(pos) : bytes.substr(pos, eol - pos);
        pos = eol == std::string_view::npos ? bytes.size() : eol + 1;
        return line;
    };
    auto header = next_line();
    if (!header) throw DataError("pose csv: empty input");
    auto cols = detail::split_csv_row(*header);
    int c_ts = -1, c_x = -1, c_y = -1, c_z = -1, c_heading = -1;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (cols[i] == "timestamp") c_ts = static_cast<int>(i);
        else if (cols[i] == "x") c_x = static_cast<int>(i);
        else if (cols[i] == "y") c_y = static_cast<int>(i);
        else if (cols[i] == "z") c_z = static_cast<int>(i);
        else if (cols[i] == "heading") c_heading = static_cast<int>(i);
        else throw DataError("pose csv: unknown column '" + cols[i] + "'");
    }
    if (c_ts < 0 || c_x < 0 || c_y < 0)
        throw DataError("pose csv: header must name timestamp, x and y");

    std::vector<PoseSample> samples;
    std::size_t row_no = 1;  // header is row 1
    while (auto line = next_line()) {
        ++row_no;
        if (line->empty() || (line->size() == 1 && (*line)[0] == '\r')) continue;
        auto cells = detail::split_csv_row(*line);
        if (cells.size() != cols.size())
            throw DataError("pose csv: row " + std::to_string(row_no) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(cols.size()));
        auto num = [&](int c) {
            return parse_double(cells[static_cast<std::size_t>(c)],
                                "pose csv: row " + std::to_string(row_no));
        };
        PoseSample s;
        s.timestamp = num(c_ts);
        s.position = {num(c_x), num(c_y), c_z >= 0 ? num(c_z) : 0.0};
        if (c_heading >= 0) s.heading = num(c_heading);
        samples.push_back(s);
    }
    return samples;
}

inline std::string write_pose_csv(const std::vector<PoseSample>& samples) {
    bool any_heading = false;
    for (const auto& s : samples) any_heading |= s.heading.has_value();
    std::string out = any_heading ? "timestamp,x,y,z,heading\n" : "timestamp,x,y,z\n";
    for (const auto& s : samples) {
        out += format_double(s.timestamp);
        out += ',';
        out += format_double(s.position.x);
        out += ',';
        out += format_double(s.position.y);
        out += ',';
        out += format_double(s.position.z);
        if (any_heading) {
            out += ',';
            out += format_double(s.heading.value_or(0.0));
        }
        out += '\n';
    }
    return out;
}

struct SequenceSpec {
    std::string sequence_id;
    std::string scan_directory;
    std::string pose_file;
    std::string sensor_label;
};

/// Describes one dataset on disk: where its scans and poses live plus the
/// per-dataset constants (distance sampling step, match threshold).
struct DatasetManifest {
    std::string name;
    std::vector<SequenceSpec> sequences;
    double sampling_distance = 1.0;  // meters; 0 disables subsampling
    double match_threshold = 5.0;    // meters

    void validate() const {
        if (!(sampling_distance >= 0.0))
            throw ConfigError("manifest: sampling_distance must be >= 0");
        if (!(match_threshold > 0.0)) throw ConfigError("manifest: match_threshold must be > 0");
        for (std::size_t i = 0; i < sequences.size(); ++i)
            for (std::size_t j = i + 1; j < sequences.size(); ++j)
                if (sequences[i].sequence_id == sequences[j].sequence_id)
                    throw ConfigError("manifest: duplicate sequence_id '" +
                                      sequences[i].sequence_id + "'");
    }
};

/// Key-value manifest text:
///   name = my_dataset
///   sampling_distance = 1.0
///   match_threshold = 5
///   sequence = <id> <scan_directory> <pose_file> <sensor_label>
/// Unknown keys are rejected.
inline DatasetManifest parse_manifest(std::string_view bytes) {
    DatasetManifest m;
    std::size_t pos = 0, line_no = 0;
    while (pos < bytes.size()) {
        std::size_t eol = bytes.find('\n', pos);
        std::string_view line =
            eol == std::string_view::npos ? bytes.substr(pos) : bytes.substr(pos, eol - pos);
        pos = eol == std::string_view::npos ? bytes.size() : eol + 1;
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
        while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
        if (line.empty() || line[0] == '#') continue;
        std::size_t eq = line.find('=');
        if (eq == std::string_view::npos)
            throw DataError("manifest line " + std::to_string(line_no) + ": expected key = value");
        std::string key(line.substr(0, eq));
        std::string val(line.substr(eq + 1));
        while (!key.empty() && key.back() == ' ') key.pop_back();
        while (!val.empty() && val.front() == ' ') val.erase(val.begin());
        if (key == "name") {
            m.name = val;
        } else if (key == "sampling_distance") {
            m.sampling_distance = parse_double(val, "manifest sampling_distance");
        } else if (key == "match_threshold") {
            m.match_threshold = parse_double(val, "manifest match_threshold");
        } else if (key == "sequence") {
            auto tok = detail::split_ws(val);
            if (tok.size() != 4)
                throw DataError("manifest line " + std::to_string(line_no) +
                                ": sequence needs <id> <scan_dir> <pose_file> <sensor>");
            m.sequences.push_back({tok[0], tok[1], tok[2], tok[3]});
        } else {
            throw DataError("manifest line " + std::to_string(line_no) + ": unknown key '" + key +
                            "'");
        }
    }
    m.validate();
    return m;
}

inline std::string write_manifest(const DatasetManifest& m) {
    std::string out;
    out += "name = " + m.name + "\n";
    out += "sampling_distance = " + format_double(m.sampling_distance) + "\n";
    out += "match_threshold = " + format_double(m.match_threshold) + "\n";
    for (const auto& s : m.sequences)
        out += "sequence = " + s.sequence_id + " " + s.scan_directory + " " + s.pose_file + " " +
               s.sensor_label + "\n";
    return out;
}

struct LoadReport {
    std::vector<ScanRecord> records;
    std::size_t skipped_scans = 0;  // scans with no pose within the association window
};

namespace detail {

// Scans sit at ~10 Hz; half the inter-scan period bounds the pairing error.
constexpr double kPoseAssociationWindow = 0.1;  // seconds

inline std::optional<PoseSample> nearest_pose(const std::vector<PoseSample>& poses, double t) {
    std::optional<PoseSample> best;
    double best_dt = kPoseAssociationWindow;
    for (const auto& p : poses) {
        const double dt = std::abs(p.timestamp - t);
        if (dt <= best_dt) {
            // <= keeps the later of two equidistant poses; exact ties are a
            // fixture artifact, not a real sensor condition
            best_dt = dt;
            best = p;
        }
    }
    return best;
}

}  // namespace detail

/// Loads every sequence of a manifest: scans (timestamp encoded in the file
/// stem) are paired to the nearest pose within 0.1 s, range-filtered, then
/// distance-subsampled. Paths are resolved against base_dir.
inline LoadReport load_dataset(const DatasetManifest& manifest,
                               const std::filesystem::path& base_dir = ".") {
    namespace fs = std::filesystem;
    manifest.validate();
    LoadReport report;
    const NormalizationParams filter_params{};  // 60 m range, zero-point removal
    for (const auto& seq : manifest.sequences) {
        const fs::path scan_dir = base_dir / seq.scan_directory;
        if (!fs::is_directory(scan_dir))
            throw DataError("manifest sequence '" + seq.sequence_id + "': scan directory " +
                            scan_dir.string() + " not found");
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(scan_dir)) {
            if (!entry.is_regular_file()) continue;
            const auto ext = entry.path().extension();
            if (ext == ".pcd" || ext == ".xyzi") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());

        const auto poses = parse_pose_csv(read_file(base_dir / seq.pose_file));
        std::vector<ScanRecord> seq_records;
        for (const auto& file : files) {
            const double t = parse_double(file.stem().string(),
                                          "scan filename (timestamp stem) " + file.string());
            const auto pose = detail::nearest_pose(poses, t);
            if (!pose) {
                ++report.skipped_scans;
                continue;
            }
            const std::string bytes = read_file(file);
            PointCloud cloud =
                file.extension() == ".pcd" ? parse_pcd(bytes) : parse_raw_xyzi(bytes);
            ScanRecord rec;
            rec.cloud = filter_cloud(cloud, filter_params);
            rec.pose = pose->position;
            rec.heading = pose->heading;
            rec.timestamp = t;
            rec.sequence_id = seq.sequence_id;
            seq_records.push_back(std::move(rec));
        }
        if (manifest.sampling_distance > 0.0)
            seq_records = subsample_trajectory(seq_records, manifest.sampling_distance);
        for (auto& r : seq_records) report.records.push_back(std::move(r));
    }
    return report;
}

}  // namespace vinepr
