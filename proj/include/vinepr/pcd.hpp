#pragma once

#include <cstring>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vinepr/point_cloud.hpp"

namespace vinepr {

namespace detail {

struct PcdField {
    std::string name;
    int size = 4;
    char type = 'F';
    int count = 1;
};

struct PcdHeader {
    std::vector<PcdField> fields;
    std::size_t width = 0, height = 0, points = 0;
    bool binary = false;
    std::size_t data_offset = 0;  // first payload byte
};

[[noreturn]] inline void pcd_error(const std::string& what, std::size_t offset) {
    throw DataError("PCD: " + what + " (byte offset " + std::to_string(offset) + ")");
}

inline std::vector<std::string> split_ws(std::string_view line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.emplace_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline PcdHeader parse_pcd_header(std::string_view bytes) {
    PcdHeader h;
    bool saw_fields = false, saw_width = false, saw_height = false, saw_points = false,
         saw_data = false;
    std::vector<int> sizes, counts;
    std::vector<char> types;
    std::size_t pos = 0;
    while (pos < bytes.size() && !saw_data) {
        std::size_t eol = bytes.find('\n', pos);
        if (eol == std::string_view::npos) pcd_error("header not terminated", pos);
        std::string_view line = bytes.substr(pos, eol - pos);
        const std::size_t line_start = pos;
        pos = eol + 1;
        if (!line.empty() && line[0] == '#') continue;
        auto tok = split_ws(line);
        if (tok.empty()) continue;
        const std::string& key = tok[0];
        auto int_arg = [&](std::size_t i) -> long long {
            if (i >= tok.size()) pcd_error("missing argument for " + key, line_start);
            try {
                return std::stoll(tok[i]);
            } catch (...) {
                pcd_error("bad integer '" + tok[i] + "' in " + key, line_start);
            }
        };
        if (key == "VERSION") {
            if (tok.size() < 2 || (tok[1] != "0.7" && tok[1] != ".7"))
                pcd_error("unsupported version", line_start);
        } else if (key == "FIELDS") {
            for (std::size_t i = 1; i < tok.size(); ++i) h.fields.push_back({tok[i]});
            saw_fields = true;
        } else if (key == "SIZE") {
            for (std::size_t i = 1; i < tok.size(); ++i) sizes.push_back(static_cast<int>(int_arg(i)));
        } else if (key == "TYPE") {
            for (std::size_t i = 1; i < tok.size(); ++i) {
                if (tok[i].size() != 1) pcd_error("bad TYPE entry", line_start);
                types.push_back(tok[i][0]);
            }
        } else if (key == "COUNT") {
            for (std::size_t i = 1; i < tok.size(); ++i) counts.push_back(static_cast<int>(int_arg(i)));
        } else if (key == "WIDTH") {
            h.width = static_cast<std::size_t>(int_arg(1));
            saw_width = true;
        } else if (key == "HEIGHT") {
            h.height = static_cast<std::size_t>(int_arg(1));
            saw_height = true;
        } else if (key == "VIEWPOINT") {
            // pose of the capture viewpoint; not used
        } else if (key == "POINTS") {
            h.points = static_cast<std::size_t>(int_arg(1));
            saw_points = true;
        } else if (key == "DATA") {
            if (tok.size() < 2) pcd_error("missing DATA encoding", line_start);
            if (tok[1] == "ascii")
                h.binary = false;
            else if (tok[1] == "binary")
                h.binary = true;
            else
                pcd_error("unsupported encoding '" + tok[1] + "'", line_start);
            saw_data = true;
            h.data_offset = pos;
        } else {
            pcd_error("unknown header key '" + key + "'", line_start);
        }
    }
    if (!saw_data) pcd_error("missing DATA line", bytes.size());
    if (!saw_fields) pcd_error("missing FIELDS", 0);
    if (!saw_width || !saw_height || !saw_points) pcd_error("missing WIDTH/HEIGHT/POINTS", 0);
    if (sizes.size() != h.fields.size() || types.size() != h.fields.size())
        pcd_error("SIZE/TYPE arity does not match FIELDS", 0);
    if (counts.empty()) counts.assign(h.fields.size(), 1);
    if (counts.size() != h.fields.size()) pcd_error("COUNT arity does not match FIELDS", 0);
    for (std::size_t i = 0; i < h.fields.size(); ++i) {
        h.fields[i].size = sizes[i];
        h.fields[i].type = types[i];
        h.fields[i].count = counts[i];
        if (counts[i] < 1) pcd_error("COUNT must be >= 1", 0);
    }
    if (h.width * h.height != h.points) pcd_error("WIDTH*HEIGHT does not equal POINTS", 0);
    return h;
}

inline double read_le_scalar(const unsigned char* p, int size, char type, std::size_t offset) {
    if (type == 'F' && size == 4) {
        float f;
        std::memcpy(&f, p, 4);
        return static_cast<double>(f);
    }
    if (type == 'F' && size == 8) {
        double d;
        std::memcpy(&d, p, 8);
        return d;
    }
    pcd_error("unsupported field type for coordinate data", offset);
}

}  // namespace detail

/// Parses an ASCII or binary PCD v0.7 buffer. Requires at least FIELDS x y z;
/// a scalar field named "intensity" is captured when present.
inline PointCloud parse_pcd(std::string_view bytes) {
    using namespace detail;
    PcdHeader h = parse_pcd_header(bytes);

    int ix = -1, iy = -1, iz = -1, ii = -1;
    for (std::size_t f = 0; f < h.fields.size(); ++f) {
        const auto& fd = h.fields[f];
        if (fd.name == "x") ix = static_cast<int>(f);
        if (fd.name == "y") iy = static_cast<int>(f);
        if (fd.name == "z") iz = static_cast<int>(f);
        if (fd.name == "intensity" && fd.count == 1) ii = static_cast<int>(f);
    }
    if (ix < 0 || iy < 0 || iz < 0) pcd_error("FIELDS must include x y z", 0);
    for (int f : {ix, iy, iz})
        if (h.fields[static_cast<std::size_t>(f)].count != 1)
            pcd_error("x/y/z must have COUNT 1", 0);

    PointCloud cloud;
    cloud.points.reserve(h.points);
    if (ii >= 0) cloud.intensity.reserve(h.points);

    if (h.binary) {
        std::size_t stride = 0;
        std::vector<std::size_t> field_off(h.fields.size());
        for (std::size_t f = 0; f < h.fields.size(); ++f) {
            field_off[f] = stride;
            stride += static_cast<std::size_t>(h.fields[f].size) *
                      static_cast<std::size_t>(h.fields[f].count);
        }
        const std::size_t need = h.points * stride;
        if (bytes.size() - h.data_offset < need)
            pcd_error("truncated binary payload: need " + std::to_string(need) + " bytes, have " +
                          std::to_string(bytes.size() - h.data_offset),
                      bytes.size());
        const auto* base = reinterpret_cast<const unsigned char*>(bytes.data()) + h.data_offset;
        for (std::size_t n = 0; n < h.points; ++n) {
            const unsigned char* row = base + n * stride;
            const std::size_t row_off = h.data_offset + n * stride;
            auto get = [&](int f) {
                const auto& fd = h.fields[static_cast<std::size_t>(f)];
                return read_le_scalar(row + field_off[static_cast<std::size_t>(f)], fd.size, fd.type,
                                      row_off);
            };
            cloud.points.push_back({get(ix), get(iy), get(iz)});
            if (ii >= 0) cloud.intensity.push_back(get(ii));
        }
    } else {
        std::size_t tokens_per_row = 0;
        std::vector<std::size_t> field_tok(h.fields.size());
        for (std::size_t f = 0; f < h.fields.size(); ++f) {
            field_tok[f] = tokens_per_row;
            tokens_per_row += static_cast<std::size_t>(h.fields[f].count);
        }
        std::size_t pos = h.data_offset;
        for (std::size_t n = 0; n < h.points; ++n) {
            std::size_t eol = bytes.find('\n', pos);
            std::string_view line =
                eol == std::string_view::npos ? bytes.substr(pos) : bytes.substr(pos, eol - pos);
            auto tok = split_ws(line);
            if (tok.empty())
                pcd_error("truncated ascii payload: " + std::to_string(n) + " of " +
                              std::to_string(h.points) + " rows present",
                          pos);
            if (tok.size() != tokens_per_row)
                pcd_error("row has " + std::to_string(tok.size()) + " values, expected " +
                              std::to_string(tokens_per_row),
                          pos);
            auto get = [&](int f) {
                return parse_double(tok[field_tok[static_cast<std::size_t>(f)]], "PCD ascii row");
            };
            cloud.points.push_back({get(ix), get(iy), get(iz)});
            if (ii >= 0) cloud.intensity.push_back(get(ii));
            if (eol == std::string_view::npos) {
                if (n + 1 < h.points)
                    pcd_error("truncated ascii payload: " + std::to_string(n + 1) + " of " +
                                  std::to_string(h.points) + " rows present",
                              bytes.size());
                pos = bytes.size();
            } else {
                pos = eol + 1;
            }
        }
    }
    cloud.validate();
    return cloud;
}

/// Writes PCD v0.7. Binary payloads use 8-byte floats so coordinates survive
/// a round trip bit-exactly.
inline std::string write_pcd(const PointCloud& cloud, bool binary = true) {
    cloud.validate();
    const bool with_i = cloud.has_intensity();
    std::ostringstream os;
    os << "# .PCD v0.7 - Point Cloud Data file format\n";
    os << "VERSION 0.7\n";
    os << "FIELDS x y z" << (with_i ? " intensity" : "") << "\n";
    os << "SIZE 8 8 8" << (with_i ? " 8" : "") << "\n";
    os << "TYPE F F F" << (with_i ? " F" : "") << "\n";
    os << "COUNT 1 1 1" << (with_i ? " 1" : "") << "\n";
    os << "WIDTH " << cloud.size() << "\n";
    os << "HEIGHT 1\n";
    os << "VIEWPOINT 0 0 0 1 0 0 0\n";
    os << "POINTS " << cloud.size() << "\n";
    os << "DATA " << (binary ? "binary" : "ascii") << "\n";
    std::string out = os.str();
    if (binary) {
        auto put = [&out](double v) {
            char b[8];
            std::memcpy(b, &v, 8);
            out.append(b, 8);
        };
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            put(cloud.points[i].x);
            put(cloud.points[i].y);
            put(cloud.points[i].z);
            if (with_i) put(cloud.intensity[i]);
        }
    } else {
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            out += format_double(cloud.points[i].x);
            out += ' ';
            out += format_double(cloud.points[i].y);
            out += ' ';
            out += format_double(cloud.points[i].z);
            if (with_i) {
                out += ' ';
                out += format_double(cloud.intensity[i]);
            }
            out += '\n';
        }
    }
    return out;
}

/// Flat little-endian float32 records: x, y, z, intensity (16 bytes/point).
inline PointCloud parse_raw_xyzi(std::string_view bytes) {
    if (bytes.size() % 16 != 0)
        throw DataError("raw xyzi: byte length " + std::to_string(bytes.size()) +
                        " not divisible by 16");
    PointCloud cloud;
    const std::size_t n = bytes.size() / 16;
    cloud.points.reserve(n);
    cloud.intensity.reserve(n);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    for (std::size_t i = 0; i < n; ++i) {
        float f[4];
        std::memcpy(f, p + i * 16, 16);
        cloud.points.push_back({f[0], f[1], f[2]});
        cloud.intensity.push_back(f[3]);
    }
    cloud.validate();
    return cloud;
}

inline std::string write_raw_xyzi(const PointCloud& cloud) {
    cloud.validate();
    std::string out;
    out.reserve(cloud.size() * 16);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        float f[4] = {static_cast<float>(cloud.points[i].x), static_cast<float>(cloud.points[i].y),
                      static_cast<float>(cloud.points[i].z),
                      cloud.has_intensity() ? static_cast<float>(cloud.intensity[i]) : 0.0f};
        char b[16];
        std::memcpy(b, f, 16);
        out.append(b, 16);
    }
    return out;
}

}  // namespace vinepr
