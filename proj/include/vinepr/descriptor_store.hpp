#pragma once

#include <cstring>
#include <string>
#include <vector>

#include "vinepr/common.hpp"

namespace vinepr {

/// A bag of global descriptors keyed by (sequence_id, scan_index), each with
/// the ground pose it was extracted at.
struct DescriptorStore {
    struct Entry {
        std::string sequence_id;
        std::uint32_t scan_index = 0;
        Vec3 pose;
        std::vector<double> vec;
    };

    std::string method_label;
    std::uint32_t descriptor_dim = 0;
    std::vector<Entry> entries;

    void add(Entry e) {
        if (e.vec.size() != descriptor_dim)
            throw DataError("DescriptorStore: vector length " + std::to_string(e.vec.size()) +
                            " != descriptor_dim " + std::to_string(descriptor_dim));
        entries.push_back(std::move(e));
    }

    void validate() const {
        for (const auto& e : entries)
            if (e.vec.size() != descriptor_dim)
                throw DataError("DescriptorStore: inconsistent vector length for " +
                                e.sequence_id + ":" + std::to_string(e.scan_index));
    }
};

namespace detail {

constexpr char kStoreMagic[8] = {'V', 'P', 'R', 'S', 'T', 'O', 'R', 'E'};
constexpr std::uint32_t kStoreVersion = 1;

}  // namespace detail

/// Self-describing binary encoding; every entry carries an FNV checksum so
/// corruption is caught before an evaluation run consumes the store.
inline std::string save_store(const DescriptorStore& store) {
    store.validate();
    std::string out(detail::kStoreMagic, sizeof(detail::kStoreMagic));
    detail::put_u32(out, detail::kStoreVersion);
    detail::put_str(out, store.method_label);
    detail::put_u32(out, store.descriptor_dim);
    detail::put_u64(out, store.entries.size());
    for (const auto& e : store.entries) {
        std::string payload;
        detail::put_str(payload, e.sequence_id);
        detail::put_u32(payload, e.scan_index);
        detail::put_f64(payload, e.pose.x);
        detail::put_f64(payload, e.pose.y);
        detail::put_f64(payload, e.pose.z);
        for (double v : e.vec) detail::put_f64(payload, v);
        detail::put_u64(payload, fnv1a(payload.data(), payload.size()));
        out += payload;
    }
    return out;
}

inline DescriptorStore load_store(std::string_view bytes) {
    detail::ByteReader r{bytes, "descriptor store"};
    r.need(sizeof(detail::kStoreMagic), "magic");
    if (std::memcmp(bytes.data(), detail::kStoreMagic, sizeof(detail::kStoreMagic)) != 0)
        throw DataError("descriptor store: bad magic (not a store file)");
    r.pos = sizeof(detail::kStoreMagic);
    const std::uint32_t version = r.u32("version");
    if (version != detail::kStoreVersion)
        throw DataError("descriptor store: version mismatch (file " + std::to_string(version) +
                        ", supported " + std::to_string(detail::kStoreVersion) + ")");
    DescriptorStore store;
    store.method_label = r.str("method label");
    store.descriptor_dim = r.u32("descriptor dim");
    const std::uint64_t count = r.u64("entry count");
    store.entries.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::size_t entry_start = r.pos;
        DescriptorStore::Entry e;
        e.sequence_id = r.str("sequence id");
        e.scan_index = r.u32("scan index");
        e.pose.x = r.f64("pose");
        e.pose.y = r.f64("pose");
        e.pose.z = r.f64("pose");
        e.vec.resize(store.descriptor_dim);
        for (auto& v : e.vec) v = r.f64("descriptor");
        const std::uint64_t expect = fnv1a(bytes.data() + entry_start, r.pos - entry_start);
        const std::uint64_t got = r.u64("checksum");
        if (expect != got)
            throw DataError("descriptor store: checksum failure in entry " + std::to_string(i));
        store.entries.push_back(std::move(e));
    }
    store.validate();
    return store;
}

}  // namespace vinepr
