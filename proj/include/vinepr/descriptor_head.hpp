#pragma once

#include <span>
#include <string>
#include <vector>

#include "vinepr/autodiff.hpp"
#include "vinepr/point_cloud.hpp"

namespace vinepr {

struct EncoderLayer {
    int in_dim = 0;
    int out_dim = 0;
    bool rectify = true;
};

struct DescriptorHeadParams {
    std::vector<EncoderLayer> encoder_layers = {{3, 32}, {32, 64}, {64, 128}};
    double gem_p_init = 3.0;
    int output_dim = 192;
    std::vector<int> nested_dims = {64, 128, 192};
    std::uint64_t seed = 0;
    bool use_intensity = false;  // adds a 4th input channel

    int input_dim() const { return use_intensity ? 4 : 3; }

    void validate() const {
        if (output_dim < 1) throw ConfigError("DescriptorHeadParams: output_dim must be >= 1");
        if (encoder_layers.empty()) throw ConfigError("DescriptorHeadParams: no encoder layers");
        if (encoder_layers.front().in_dim != input_dim())
            throw ConfigError("DescriptorHeadParams: first layer in_dim must equal input dim");
        for (std::size_t i = 1; i < encoder_layers.size(); ++i)
            if (encoder_layers[i].in_dim != encoder_layers[i - 1].out_dim)
                throw ConfigError("DescriptorHeadParams: layer dims do not chain");
        if (nested_dims.empty()) throw ConfigError("DescriptorHeadParams: nested_dims empty");
        for (std::size_t i = 1; i < nested_dims.size(); ++i)
            if (nested_dims[i] <= nested_dims[i - 1])
                throw ConfigError("DescriptorHeadParams: nested_dims must be strictly increasing");
        if (nested_dims.front() < 1 || nested_dims.back() != output_dim)
            throw ConfigError("DescriptorHeadParams: last nested dim must equal output_dim");
        if (!(gem_p_init > 0.0)) throw ConfigError("DescriptorHeadParams: gem_p_init must be > 0");
    }
};

/// A fixed-length global descriptor whose leading prefixes are themselves
/// usable descriptors.
struct MatryoshkaDescriptor {
    std::vector<double> values;
    std::vector<int> nested_dims;

    std::span<const double> prefix_view(int m) const {
        bool known = false;
        for (int d : nested_dims) known |= (d == m);
        if (!known)
            throw ConfigError("MatryoshkaDescriptor: " + std::to_string(m) +
                              " is not a declared nested dimension");
        return std::span<const double>(values.data(), static_cast<std::size_t>(m));
    }
};

/// First m entries scaled to unit L2 norm. m must be a declared nested dim.
inline std::vector<double> prefix_normalize(const MatryoshkaDescriptor& d, int m) {
    const auto prefix = d.prefix_view(m);
    const double norm = l2_norm(prefix);
    if (norm < 1e-12)
        throw NumericError("prefix_normalize: degenerate prefix (norm " + format_double(norm) + ")");
    std::vector<double> out(prefix.begin(), prefix.end());
    for (auto& x : out) x /= norm;
    return out;
}

/// All trainable tensors of the head, in a fixed enumeration order.
struct HeadWeights {
    DescriptorHeadParams params;
    std::vector<ad::Tensor> encoder_w, encoder_b;
    ad::Tensor proj_w, proj_b;
    ad::Tensor gem_p;  // 1x1

    /// Seeded uniform init in +-sqrt(6/(fan_in+fan_out)) for every weight and
    /// bias. Nonzero biases keep preactivations off the rectifier kink even
    /// when a point's feature row dies in an earlier layer.
    static HeadWeights init(const DescriptorHeadParams& p) {
        p.validate();
        HeadWeights w;
        w.params = p;
        std::uint64_t state = splitmix64(p.seed ^ 0x5eedf00dULL);
        auto uniform = [&state](double a) {
            state = splitmix64(state);
            const double u = static_cast<double>(state >> 11) * 0x1.0p-53;  // [0, 1)
            return a * (2.0 * u - 1.0);
        };
        auto make_layer = [&](int in, int out, ad::Tensor& W, ad::Tensor& b) {
            const double a = std::sqrt(6.0 / (in + out));
            W = ad::Tensor(in, out);
            for (auto& x : W.v) x = uniform(a);
            b = ad::Tensor(1, out);
            for (auto& x : b.v) x = uniform(a);
        };
        for (const auto& layer : p.encoder_layers) {
            ad::Tensor W, b;
            make_layer(layer.in_dim, layer.out_dim, W, b);
            w.encoder_w.push_back(std::move(W));
            w.encoder_b.push_back(std::move(b));
        }
        make_layer(p.encoder_layers.back().out_dim, p.output_dim, w.proj_w, w.proj_b);
        w.gem_p = ad::Tensor::scalar(p.gem_p_init);
        return w;
    }

    std::vector<ad::Tensor*> tensors() {
        std::vector<ad::Tensor*> out;
        for (std::size_t i = 0; i < encoder_w.size(); ++i) {
            out.push_back(&encoder_w[i]);
            out.push_back(&encoder_b[i]);
        }
        out.push_back(&proj_w);
        out.push_back(&proj_b);
        out.push_back(&gem_p);
        return out;
    }
    std::vector<const ad::Tensor*> tensors() const {
        auto mut = const_cast<HeadWeights*>(this)->tensors();
        return {mut.begin(), mut.end()};
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto* t : tensors()) n += t->size();
        return n;
    }
};

/// Graph leaves for every head tensor; reused by all clouds of one batch so
/// gradients accumulate on shared parameters.
struct HeadBinding {
    std::vector<ad::Graph::NodeId> param_ids;  // same order as HeadWeights::tensors()

    ad::Graph::NodeId encoder_w(std::size_t layer) const { return param_ids[2 * layer]; }
    ad::Graph::NodeId encoder_b(std::size_t layer) const { return param_ids[2 * layer + 1]; }
    ad::Graph::NodeId proj_w(std::size_t layers) const { return param_ids[2 * layers]; }
    ad::Graph::NodeId proj_b(std::size_t layers) const { return param_ids[2 * layers + 1]; }
    ad::Graph::NodeId gem_p(std::size_t layers) const { return param_ids[2 * layers + 2]; }
};

inline HeadBinding bind_head(ad::Graph& g, const HeadWeights& w) {
    HeadBinding binding;
    for (const auto* t : w.tensors()) binding.param_ids.push_back(g.leaf(*t));
    return binding;
}

/// Encoder MLP per point, softplus shift, GeM pooling across points, linear
/// projection. Input must be an Eq.-1-normalized, non-empty cloud; returns the
/// unnormalized 1 x output_dim descriptor node.
inline ad::Graph::NodeId head_forward(ad::Graph& g, const HeadBinding& binding,
                                      const HeadWeights& w, const PointCloud& cloud) {
    if (cloud.empty()) throw DataError("head_forward: empty cloud");
    const auto& p = w.params;
    if (p.use_intensity && !cloud.has_intensity())
        throw DataError("head_forward: head configured for intensity but cloud has none");
    const int in_dim = p.input_dim();
    ad::Tensor input(static_cast<int>(cloud.size()), in_dim);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        input.at(static_cast<int>(i), 0) = cloud.points[i].x;
        input.at(static_cast<int>(i), 1) = cloud.points[i].y;
        input.at(static_cast<int>(i), 2) = cloud.points[i].z;
        if (p.use_intensity) input.at(static_cast<int>(i), 3) = cloud.intensity[i];
    }
    ad::Graph::NodeId h = g.leaf(std::move(input));
    const std::size_t layers = p.encoder_layers.size();
    for (std::size_t l = 0; l < layers; ++l) {
        h = g.add_rowvec(g.matmul(h, binding.encoder_w(l)), binding.encoder_b(l));
        if (p.encoder_layers[l].rectify) h = g.relu(h);
    }
    h = g.softplus(h);  // GeM needs strictly positive inputs
    h = g.gem_pool(h, binding.gem_p(layers));
    return g.add_rowvec(g.matmul(h, binding.proj_w(layers)), binding.proj_b(layers));
}

/// Value-only forward for inference paths.
inline MatryoshkaDescriptor head_describe(const HeadWeights& w, const PointCloud& cloud) {
    ad::Graph g;
    const HeadBinding binding = bind_head(g, w);
    const auto out = head_forward(g, binding, w, cloud);
    MatryoshkaDescriptor d;
    d.values = g.value(out).v;
    d.nested_dims = w.params.nested_dims;
    return d;
}

namespace detail {
constexpr char kCheckpointMagic[8] = {'V', 'P', 'R', 'H', 'E', 'A', 'D', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace detail

/// Self-describing binary checkpoint; float64 payload round-trips bit-exactly.
inline std::string save_checkpoint(const HeadWeights& w) {
    std::string out(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
    detail::put_u32(out, detail::kCheckpointVersion);
    const auto& p = w.params;
    detail::put_u32(out, p.use_intensity ? 1 : 0);
    detail::put_u32(out, static_cast<std::uint32_t>(p.encoder_layers.size()));
    for (const auto& l : p.encoder_layers) {
        detail::put_u32(out, static_cast<std::uint32_t>(l.in_dim));
        detail::put_u32(out, static_cast<std::uint32_t>(l.out_dim));
        detail::put_u32(out, l.rectify ? 1 : 0);
    }
    detail::put_u32(out, static_cast<std::uint32_t>(p.output_dim));
    detail::put_u32(out, static_cast<std::uint32_t>(p.nested_dims.size()));
    for (int d : p.nested_dims) detail::put_u32(out, static_cast<std::uint32_t>(d));
    detail::put_u64(out, p.seed);
    detail::put_f64(out, p.gem_p_init);
    for (const auto* t : w.tensors()) {
        detail::put_u32(out, static_cast<std::uint32_t>(t->rows));
        detail::put_u32(out, static_cast<std::uint32_t>(t->cols));
        for (double v : t->v) detail::put_f64(out, v);
    }
    detail::put_u64(out, fnv1a(out.data(), out.size()));
    return out;
}

inline HeadWeights load_checkpoint(std::string_view bytes) {
    detail::ByteReader r{bytes, "checkpoint"};
    r.need(sizeof(detail::kCheckpointMagic), "magic");
    if (std::memcmp(bytes.data(), detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic)) != 0)
        throw DataError("checkpoint: bad magic (not a checkpoint file)");
    if (bytes.size() < 8) throw DataError("checkpoint: truncated");
    {
        const std::uint64_t stored = [&] {
            std::uint64_t v;
            std::memcpy(&v, bytes.data() + bytes.size() - 8, 8);
            return v;
        }();
        if (fnv1a(bytes.data(), bytes.size() - 8) != stored)
            throw DataError("checkpoint: checksum failure");
    }
    r.pos = sizeof(detail::kCheckpointMagic);
    const std::uint32_t version = r.u32("version");
    if (version != detail::kCheckpointVersion)
        throw DataError("checkpoint: version mismatch (file " + std::to_string(version) + ")");
    DescriptorHeadParams p;
    p.use_intensity = r.u32("use_intensity") != 0;
    p.encoder_layers.clear();
    const std::uint32_t n_layers = r.u32("layer count");
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        EncoderLayer l;
        l.in_dim = static_cast<int>(r.u32("layer in_dim"));
        l.out_dim = static_cast<int>(r.u32("layer out_dim"));
        l.rectify = r.u32("layer rectify") != 0;
        p.encoder_layers.push_back(l);
    }
    p.output_dim = static_cast<int>(r.u32("output_dim"));
    p.nested_dims.clear();
    const std::uint32_t n_dims = r.u32("nested dim count");
    for (std::uint32_t i = 0; i < n_dims; ++i)
        p.nested_dims.push_back(static_cast<int>(r.u32("nested dim")));
    p.seed = r.u64("seed");
    p.gem_p_init = r.f64("gem_p_init");
    HeadWeights w = HeadWeights::init(p);
    for (auto* t : w.tensors()) {
        const auto rows = static_cast<int>(r.u32("tensor rows"));
        const auto cols = static_cast<int>(r.u32("tensor cols"));
        if (rows != t->rows || cols != t->cols)
            throw DataError("checkpoint: tensor shape mismatch against declared layers");
        for (auto& v : t->v) v = r.f64("tensor payload");
    }
    return w;
}

}  // namespace vinepr
