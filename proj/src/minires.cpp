#include "elens/minires.hpp"

#include <cmath>

#include "elens/rng.hpp"

namespace elens {

namespace {

Blob random_blob(std::vector<int64_t> dims, float limit, uint64_t seed) {
    Blob b;
    b.dims = std::move(dims);
    b.data.resize(static_cast<size_t>(b.numel()));
    SplitMix64 rng(seed);
    for (float& v : b.data) v = rng.symmetric(limit);
    return b;
}

void add_conv(Model& m, const std::string& name, const std::string& input,
              int64_t cin, int64_t cout, int64_t k, int stride, int padding,
              uint64_t seed) {
    LayerSpec l;
    l.name = name;
    l.kind = LayerKind::Conv;
    l.inputs = {input};
    l.stride = stride;
    l.padding = padding;
    l.weight_ref = name;
    m.graph.layers.push_back(l);
    const float limit = std::sqrt(6.0f / static_cast<float>(cin * k * k));
    m.weights[name + ".weight"] =
        random_blob({cout, cin, k, k}, limit, derive_seed(seed, 1));
    m.weights[name + ".bias"] = random_blob({cout}, 0.05f, derive_seed(seed, 2));
}

void add_simple(Model& m, const std::string& name, LayerKind kind,
                std::vector<std::string> inputs, int kernel = 0, int stride = 1) {
    LayerSpec l;
    l.name = name;
    l.kind = kind;
    l.inputs = std::move(inputs);
    l.kernel = kernel;
    l.stride = stride;
    m.graph.layers.push_back(l);
}

// One residual block: a strided 3x3 branch and a strided 1x1 projection
// shortcut, both ending in relu, joined by add and a final (numerically
// inert) output relu that serves as the block's map extraction point.
void add_block(Model& m, const std::string& blk, const std::string& input,
               int64_t cin, int64_t cout, uint64_t seed) {
    add_conv(m, blk + ".conv1", input, cin, cout, 3, 2, 1, derive_seed(seed, 11));
    add_simple(m, blk + ".relu1", LayerKind::Relu, {blk + ".conv1"});
    add_conv(m, blk + ".proj", input, cin, cout, 1, 2, 0, derive_seed(seed, 12));
    add_simple(m, blk + ".projrelu", LayerKind::Relu, {blk + ".proj"});
    add_simple(m, blk + ".add", LayerKind::Add, {blk + ".relu1", blk + ".projrelu"});
    add_simple(m, blk + ".relu2", LayerKind::Relu, {blk + ".add"});
}

}  // namespace

Model build_minires(int num_classes, uint64_t seed) {
    Model m;
    ModelGraph& g = m.graph;
    g.num_classes = num_classes;
    for (int i = 0; i < num_classes; ++i) g.labels.push_back("brand_" + std::to_string(i));
    g.input_shape = {3, 64, 64};
    g.preprocess.mean = {0.5f, 0.5f, 0.5f};
    g.preprocess.std = {0.5f, 0.5f, 0.5f};
    g.target_layer_default = "blk2.relu2";

    add_simple(m, "input", LayerKind::Input, {});
    add_conv(m, "stem.conv", "input", 3, 16, 3, 1, 1, derive_seed(seed, 1));
    add_simple(m, "stem.relu", LayerKind::Relu, {"stem.conv"});
    add_simple(m, "stem.pool", LayerKind::MaxPool, {"stem.relu"}, 2, 2);

    add_block(m, "blk1", "stem.pool", 16, 32, derive_seed(seed, 2));
    add_block(m, "blk2", "blk1.relu2", 32, 32, derive_seed(seed, 3));

    add_simple(m, "head.pool", LayerKind::AvgPool, {"blk2.relu2"}, 8, 8);
    add_simple(m, "head.flatten", LayerKind::Flatten, {"head.pool"});

    LayerSpec fc;
    fc.name = "head.fc";
    fc.kind = LayerKind::Dense;
    fc.inputs = {"head.flatten"};
    fc.weight_ref = "head.fc";
    g.layers.push_back(fc);
    const float limit = std::sqrt(6.0f / 32.0f);
    m.weights["head.fc.weight"] =
        random_blob({num_classes, 32}, limit, derive_seed(seed, 41));
    m.weights["head.fc.bias"] =
        random_blob({num_classes}, 0.05f, derive_seed(seed, 42));

    validate_model(m);
    return m;
}

}  // namespace elens
