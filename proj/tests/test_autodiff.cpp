#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "vinepr/descriptor_head.hpp"
#include "vinepr/ranking_loss.hpp"

using namespace vinepr;
using ad::Graph;
using ad::Tensor;

namespace {

Tensor random_tensor(int rows, int cols, std::mt19937& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> d(-scale, scale);
    Tensor t(rows, cols);
    for (auto& v : t.v) v = d(rng);
    return t;
}

bool close_rel(double analytic, double numeric, double rel = 1e-4, double abs_floor = 1e-8) {
    const double diff = std::abs(analytic - numeric);
    return diff <= std::max(abs_floor, rel * std::max(std::abs(analytic), std::abs(numeric)));
}

/// Central finite differences of a scalar function of one tensor entry.
template <typename EvalFn>
double central_diff(Tensor& t, std::size_t k, EvalFn&& eval, double h = 1e-6) {
    const double saved = t.v[k];
    t.v[k] = saved + h;
    const double plus = eval();
    t.v[k] = saved - h;
    const double minus = eval();
    t.v[k] = saved;
    return (plus - minus) / (2.0 * h);
}

}  // namespace

TEST_CASE("loss = sum of parameters gives unit gradients", "[autodiff]") {
    Graph g;
    std::mt19937 rng(1);
    auto theta = g.leaf(random_tensor(3, 4, rng));
    auto loss = g.sum_all(theta);
    g.backward(loss);
    for (double gv : g.grad(theta).v) CHECK(gv == 1.0);
}

TEST_CASE("loss = |theta|^2 / 2 gives grad exactly theta", "[autodiff]") {
    Graph g;
    std::mt19937 rng(2);
    Tensor t = random_tensor(2, 5, rng);
    auto theta = g.leaf(t);
    auto loss = g.scale(g.sum_all(g.mul(theta, theta)), 0.5);
    g.backward(loss);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(g.grad(theta).v[i] == t.v[i]);
}

TEST_CASE("backward rejects non-scalar roots", "[autodiff]") {
    Graph g;
    auto a = g.leaf(Tensor(2, 2));
    CHECK_THROWS_AS(g.backward(a), NumericError);
}

TEST_CASE("backward can be re-run from different roots", "[autodiff]") {
    Graph g;
    auto a = g.leaf(Tensor::scalar(3.0));
    auto twice = g.scale(a, 2.0);
    auto thrice = g.scale(a, 3.0);
    g.backward(twice);
    CHECK(g.grad(a).v[0] == 2.0);
    g.backward(thrice);
    CHECK(g.grad(a).v[0] == 3.0);  // grads reset between passes
}

TEST_CASE("op-level gradients match finite differences", "[autodiff][oracle]") {
    std::mt19937 rng(7);

    SECTION("matmul + bias + softplus + sum") {
        Tensor A = random_tensor(4, 3, rng), W = random_tensor(3, 5, rng),
               b = random_tensor(1, 5, rng);
        auto eval = [&] {
            Graph g;
            auto loss = g.sum_all(g.softplus(g.add_rowvec(g.matmul(g.leaf(A), g.leaf(W)), g.leaf(b))));
            return g.value(loss).v[0];
        };
        Graph g;
        auto na = g.leaf(A), nw = g.leaf(W), nb = g.leaf(b);
        auto loss = g.sum_all(g.softplus(g.add_rowvec(g.matmul(na, nw), nb)));
        g.backward(loss);
        for (std::size_t k = 0; k < W.size(); ++k)
            CHECK(close_rel(g.grad(nw).v[k], central_diff(W, k, eval)));
        for (std::size_t k = 0; k < A.size(); ++k)
            CHECK(close_rel(g.grad(na).v[k], central_diff(A, k, eval)));
        for (std::size_t k = 0; k < b.size(); ++k)
            CHECK(close_rel(g.grad(nb).v[k], central_diff(b, k, eval)));
    }

    SECTION("gem_pool over features and p") {
        Tensor F = random_tensor(6, 4, rng);
        for (auto& v : F.v) v = std::abs(v) + 0.2;  // strictly positive
        Tensor P = Tensor::scalar(2.7);
        auto eval = [&] {
            Graph g;
            auto loss = g.sum_all(g.gem_pool(g.leaf(F), g.leaf(P)));
            return g.value(loss).v[0];
        };
        Graph g;
        auto nf = g.leaf(F), np = g.leaf(P);
        auto loss = g.sum_all(g.gem_pool(nf, np));
        g.backward(loss);
        for (std::size_t k = 0; k < F.size(); ++k)
            CHECK(close_rel(g.grad(nf).v[k], central_diff(F, k, eval)));
        CHECK(close_rel(g.grad(np).v[0], central_diff(P, 0, eval)));
    }

    SECTION("l2_normalize_rows + pairwise_distances + sigmoid") {
        Tensor X = random_tensor(4, 3, rng);
        auto eval = [&] {
            Graph g;
            auto d = g.pairwise_distances(g.l2_normalize_rows(g.leaf(X)));
            auto loss = g.sum_all(g.sigmoid(d, 0.3));
            return g.value(loss).v[0];
        };
        Graph g;
        auto nx = g.leaf(X);
        auto d = g.pairwise_distances(g.l2_normalize_rows(nx));
        auto loss = g.sum_all(g.sigmoid(d, 0.3));
        g.backward(loss);
        for (std::size_t k = 0; k < X.size(); ++k)
            CHECK(close_rel(g.grad(nx).v[k], central_diff(X, k, eval)));
    }

    SECTION("div and element") {
        Tensor A = Tensor::scalar(1.7), B = Tensor::scalar(-2.3);
        auto eval = [&] {
            Graph g;
            auto loss = g.div(g.leaf(A), g.leaf(B));
            return g.value(loss).v[0];
        };
        Graph g;
        auto na = g.leaf(A), nb = g.leaf(B);
        g.backward(g.div(na, nb));
        CHECK(close_rel(g.grad(na).v[0], central_diff(A, 0, eval)));
        CHECK(close_rel(g.grad(nb).v[0], central_diff(B, 0, eval)));
    }
}

TEST_CASE("GeM pooling reductions", "[autodiff][gem]") {
    SECTION("single point is identity for any p") {
        for (double p : {0.5, 1.0, 3.0, 17.0}) {
            Graph g;
            Tensor F(1, 4);
            F.v = {0.3, 1.7, 2.2, 0.9};
            auto out = g.gem_pool(g.leaf(F), g.leaf(Tensor::scalar(p)));
            for (int j = 0; j < 4; ++j)
                CHECK(g.value(out).at(0, j) == Catch::Approx(F.at(0, j)).epsilon(1e-12));
        }
    }

    SECTION("p = 1 equals the arithmetic mean elementwise") {
        std::mt19937 rng(3);
        Tensor F = random_tensor(30, 5, rng);
        for (auto& v : F.v) v = std::abs(v) + 0.1;
        Graph g;
        auto out = g.gem_pool(g.leaf(F), g.leaf(Tensor::scalar(1.0)));
        for (int j = 0; j < 5; ++j) {
            double mean = 0.0;
            for (int i = 0; i < 30; ++i) mean += F.at(i, j);
            mean /= 30;
            CHECK(g.value(out).at(0, j) == Catch::Approx(mean).epsilon(1e-12));
        }
    }

    SECTION("p = 64 approaches the per-feature maximum within 2%") {
        // (k/N)^(1/p) bounds the gap for k points at the max; k=35, p=64
        // gives 0.984, comfortably inside 2%
        Tensor F(100, 1);
        std::mt19937 rng(5);
        std::uniform_real_distribution<double> d(0.1, 0.8);
        for (int i = 0; i < 100; ++i) F.at(i, 0) = d(rng);
        for (int i = 0; i < 35; ++i) F.at(i, 0) = 1.0;
        double exact_max = 0.0;
        for (int i = 0; i < 100; ++i) exact_max = std::max(exact_max, F.at(i, 0));
        Graph g;
        auto out = g.gem_pool(g.leaf(F), g.leaf(Tensor::scalar(64.0)));
        CHECK(g.value(out).at(0, 0) >= 0.98 * exact_max);
        CHECK(g.value(out).at(0, 0) <= exact_max + 1e-12);
    }

    SECTION("pooled output is non-decreasing in p") {
        std::mt19937 rng(11);
        Tensor F = random_tensor(40, 1, rng);
        for (auto& v : F.v) v = std::abs(v) + 0.05;
        double prev = 0.0;
        for (double p : {1.0, 2.0, 4.0, 8.0}) {
            Graph g;
            auto out = g.gem_pool(g.leaf(F), g.leaf(Tensor::scalar(p)));
            CHECK(g.value(out).at(0, 0) >= prev);
            prev = g.value(out).at(0, 0);
        }
    }
}

namespace {

PointCloud toy_cloud(unsigned seed, std::size_t n = 5) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    PointCloud c;
    for (std::size_t i = 0; i < n; ++i) c.points.push_back({d(rng), d(rng), d(rng)});
    return c;
}

DescriptorHeadParams toy_head_params() {
    DescriptorHeadParams p;
    p.encoder_layers = {{3, 8}, {8, 10}, {10, 12}};
    p.output_dim = 12;
    p.nested_dims = {4, 8, 12};
    p.seed = 1234;
    return p;
}

}  // namespace

TEST_CASE("head forward is permutation invariant over points", "[autodiff][head]") {
    const auto params = toy_head_params();
    const HeadWeights w = HeadWeights::init(params);
    auto cloud = toy_cloud(9, 40);
    const auto base = head_describe(w, cloud);

    std::mt19937 rng(10);
    std::shuffle(cloud.points.begin(), cloud.points.end(), rng);
    const auto shuffled = head_describe(w, cloud);
    REQUIRE(base.values.size() == shuffled.values.size());
    for (std::size_t i = 0; i < base.values.size(); ++i)
        CHECK(std::abs(base.values[i] - shuffled.values[i]) < 1e-9);
}

TEST_CASE("head rejects empty clouds", "[autodiff][head]") {
    const HeadWeights w = HeadWeights::init(toy_head_params());
    CHECK_THROWS_AS(head_describe(w, PointCloud{}), DataError);
}

TEST_CASE("full pipeline gradients match central finite differences", "[autodiff][oracle]") {
    const auto params = toy_head_params();
    HeadWeights w = HeadWeights::init(params);
    const std::vector<PointCloud> clouds{toy_cloud(21), toy_cloud(22), toy_cloud(23)};
    // clouds at poses: 0 and 1 are positives, 2 is far
    BatchLabels labels = BatchLabels::from_poses({{0, 0, 0}, {3, 0, 0}, {100, 0, 0}}, 5.0, 20.0);
    LossConfig config;
    config.tau = 0.05;
    config.mrl_dims = {4, 8, 12};
    config.mrl_weights = {1.0, 0.5, 0.25};

    auto eval_loss = [&] {
        ad::Graph g;
        const HeadBinding binding = bind_head(g, w);
        std::vector<ad::Graph::NodeId> descs;
        for (const auto& c : clouds) descs.push_back(head_forward(g, binding, w, c));
        const auto loss = mrl_loss_graph(g, g.concat_rows(descs), labels, config);
        return g.value(loss.total).v[0];
    };

    ad::Graph g;
    const HeadBinding binding = bind_head(g, w);
    std::vector<ad::Graph::NodeId> descs;
    for (const auto& c : clouds) descs.push_back(head_forward(g, binding, w, c));
    const auto loss = mrl_loss_graph(g, g.concat_rows(descs), labels, config);
    g.backward(loss.total);

    auto tensors = w.tensors();
    std::size_t checked = 0;
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        const Tensor analytic = g.grad(binding.param_ids[t]);
        for (std::size_t k = 0; k < tensors[t]->size(); ++k) {
            const double numeric = central_diff(*tensors[t], k, eval_loss, 1e-5);
            CHECK(close_rel(analytic.v[k], numeric));
            ++checked;
        }
    }
    CHECK(checked == w.parameter_count());
}

TEST_CASE("gradient determinism: same seed and batch give identical bits", "[autodiff]") {
    const auto params = toy_head_params();
    const std::vector<PointCloud> clouds{toy_cloud(31), toy_cloud(32), toy_cloud(33),
                                         toy_cloud(34)};
    BatchLabels labels =
        BatchLabels::from_poses({{0, 0, 0}, {2, 0, 0}, {50, 0, 0}, {52, 0, 0}}, 5.0, 20.0);
    LossConfig config;
    config.mrl_dims = {4, 8, 12};
    config.mrl_weights = {1.0, 0.5, 0.25};

    auto run = [&] {
        HeadWeights w = HeadWeights::init(params);
        ad::Graph g;
        const HeadBinding binding = bind_head(g, w);
        std::vector<ad::Graph::NodeId> descs;
        for (const auto& c : clouds) descs.push_back(head_forward(g, binding, w, c));
        const auto loss = mrl_loss_graph(g, g.concat_rows(descs), labels, config);
        g.backward(loss.total);
        std::vector<double> flat;
        for (std::size_t t = 0; t < binding.param_ids.size(); ++t)
            for (double v : g.grad(binding.param_ids[t]).v) flat.push_back(v);
        return flat;
    };
    CHECK(run() == run());
}

TEST_CASE("prefix_normalize contract", "[autodiff][head]") {
    MatryoshkaDescriptor d;
    d.values = {3.0, 4.0, 0.0, 0.0};
    d.nested_dims = {2, 4};
    const auto out = prefix_normalize(d, 2);
    CHECK(out == std::vector<double>{0.6, 0.8});

    MatryoshkaDescriptor unit;
    unit.values = {1.0, 0.0, 0.0, 0.0};
    unit.nested_dims = {2, 4};
    CHECK(prefix_normalize(unit, 2) == std::vector<double>{1.0, 0.0});

    std::mt19937 rng(4);
    MatryoshkaDescriptor big;
    std::uniform_real_distribution<double> dist(-1, 1);
    for (int i = 0; i < 192; ++i) big.values.push_back(dist(rng));
    big.nested_dims = {64, 128, 192};
    CHECK(l2_norm(prefix_normalize(big, 64)) == Catch::Approx(1.0).margin(1e-12));

    CHECK_THROWS_AS(prefix_normalize(d, 3), ConfigError);  // not a declared dim
    MatryoshkaDescriptor zero;
    zero.values = {0.0, 0.0};
    zero.nested_dims = {2};
    CHECK_THROWS_AS(prefix_normalize(zero, 2), NumericError);
}

TEST_CASE("checkpoint round trip is bit-exact", "[autodiff][head]") {
    auto params = toy_head_params();
    params.use_intensity = false;
    HeadWeights w = HeadWeights::init(params);
    w.gem_p.v[0] = 2.34567;  // mutate away from init
    w.encoder_w[0].v[3] = -0.123456789123456789;

    const std::string bytes = save_checkpoint(w);
    const HeadWeights loaded = load_checkpoint(bytes);
    auto lhs = w.tensors();
    auto rhs = loaded.tensors();
    REQUIRE(lhs.size() == rhs.size());
    for (std::size_t t = 0; t < lhs.size(); ++t) CHECK(lhs[t]->v == rhs[t]->v);
    CHECK(loaded.params.nested_dims == params.nested_dims);
    CHECK(loaded.params.output_dim == params.output_dim);

    std::string corrupted = bytes;
    corrupted[bytes.size() / 2] ^= 0x01;
    CHECK_THROWS_WITH(load_checkpoint(corrupted), Catch::Matchers::ContainsSubstring("checksum"));
}
