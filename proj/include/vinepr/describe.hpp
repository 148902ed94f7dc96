#pragma once

#include <string>
#include <vector>

#include "vinepr/descriptor_head.hpp"
#include "vinepr/descriptor_store.hpp"
#include "vinepr/fpfh.hpp"
#include "vinepr/point_cloud.hpp"
#include "vinepr/scan_context.hpp"

namespace vinepr {

enum class DescribeMethod { scan_context, fpfh, learned };

inline DescribeMethod parse_describe_method(const std::string& s) {
    if (s == "scan_context") return DescribeMethod::scan_context;
    if (s == "fpfh") return DescribeMethod::fpfh;
    if (s == "learned") return DescribeMethod::learned;
    throw ConfigError("unknown describe method '" + s + "' (scan_context | fpfh | learned)");
}

struct DescribeOptions {
    ScanContextParams scan_context;
    FpfhParams fpfh;
    double quantization_size = 0.01;  // learned pipeline, on normalized coordinates
};

/// Per-sequence scan indices over the full record list, in list order.
inline std::vector<std::uint32_t> sequence_scan_indices(const std::vector<ScanRecord>& records) {
    std::vector<std::uint32_t> out(records.size());
    std::vector<std::pair<std::string, std::uint32_t>> counters;
    for (std::size_t i = 0; i < records.size(); ++i) {
        bool found = false;
        for (auto& [seq, count] : counters)
            if (seq == records[i].sequence_id) {
                out[i] = count++;
                found = true;
                break;
            }
        if (!found) {
            counters.push_back({records[i].sequence_id, 1});
            out[i] = 0;
        }
    }
    return out;
}

/// One global descriptor per selected record. Records must already be
/// range-filtered (load_dataset does this); each method applies its own
/// quantization, and the learned method additionally Eq.-1 normalizes.
inline DescriptorStore describe_records(const std::vector<ScanRecord>& records,
                                        const std::vector<std::size_t>& indices,
                                        DescribeMethod method, const DescribeOptions& options,
                                        const HeadWeights* weights = nullptr,
                                        unsigned threads = 1) {
    if (indices.empty()) throw DataError("describe: no records selected");
    if (method == DescribeMethod::learned && weights == nullptr)
        throw ConfigError("describe: learned method needs a checkpoint");

    DescriptorStore store;
    switch (method) {
        case DescribeMethod::scan_context:
            store.method_label = "scan_context";
            store.descriptor_dim = static_cast<std::uint32_t>(options.scan_context.num_rings *
                                                              options.scan_context.num_sectors);
            break;
        case DescribeMethod::fpfh:
            store.method_label = "fpfh";
            store.descriptor_dim = static_cast<std::uint32_t>(3 * options.fpfh.bins_per_feature);
            break;
        case DescribeMethod::learned:
            store.method_label = "learned";
            store.descriptor_dim = static_cast<std::uint32_t>(weights->params.output_dim);
            break;
    }

    const auto scan_indices = sequence_scan_indices(records);
    store.entries.resize(indices.size());
    parallel_for(indices.size(), threads, [&](std::size_t i) {
        const ScanRecord& rec = records[indices[i]];
        if (rec.cloud.empty())
            throw DataError("describe: record " + rec.sequence_id + ":" +
                            std::to_string(scan_indices[indices[i]]) +
                            " has an empty cloud after filtering");
        std::vector<double> vec;
        switch (method) {
            case DescribeMethod::scan_context:
                vec = scan_context(quantize_cloud(rec.cloud, options.scan_context.voxel_size),
                                   options.scan_context);
                break;
            case DescribeMethod::fpfh:
                vec = fpfh_global(quantize_cloud(rec.cloud, options.fpfh.voxel_size), options.fpfh);
                break;
            case DescribeMethod::learned: {
                const PointCloud prepped = quantize_cloud(normalize_cloud(rec.cloud, {}),
                                                          options.quantization_size);
                vec = head_describe(*weights, prepped).values;
                break;
            }
        }
        store.entries[i] = {rec.sequence_id, scan_indices[indices[i]], rec.pose, std::move(vec)};
    });
    store.validate();
    return store;
}

inline DescriptorStore describe_all(const std::vector<ScanRecord>& records, DescribeMethod method,
                                    const DescribeOptions& options,
                                    const HeadWeights* weights = nullptr, unsigned threads = 1) {
    std::vector<std::size_t> indices(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) indices[i] = i;
    return describe_records(records, indices, method, options, weights, threads);
}

}  // namespace vinepr
