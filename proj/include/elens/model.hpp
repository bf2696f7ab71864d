#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "elens/tensor.hpp"

namespace elens {

enum class LayerKind { Input, Conv, Relu, MaxPool, AvgPool, Dense, Add, Flatten };

const char* layer_kind_name(LayerKind k);

struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::Input;
    std::vector<std::string> inputs;  // producer layer names, earlier in the list
    int stride = 1;                   // conv, maxpool, avgpool
    int padding = 0;                  // conv
    int kernel = 0;                   // maxpool, avgpool
    std::string weight_ref;           // conv, dense
};

// Rank-flexible named array for the weight store (conv weights are 4-D,
// dense weights 2-D, biases 1-D).
struct Blob {
    std::vector<int64_t> dims;
    std::vector<float> data;

    int64_t numel() const;
};

using WeightStore = std::map<std::string, Blob>;

struct Preprocess {
    std::vector<float> mean;  // per channel
    std::vector<float> std;
};

struct BrandId {
    int index = -1;
    std::string label;

    bool operator==(const BrandId&) const = default;
};

struct ModelGraph {
    std::vector<LayerSpec> layers;  // topologically ordered
    int num_classes = 0;
    std::vector<std::string> labels;  // one per class
    std::string target_layer_default;
    Preprocess preprocess;
    std::array<int64_t, 3> input_shape{};  // (C, H, W)

    int layer_index(const std::string& name) const;  // -1 when absent
    const LayerSpec& layer(const std::string& name) const;
    BrandId brand(int index) const;
    int brand_index(const std::string& label) const;  // -1 when absent
};

struct Model {
    ModelGraph graph;
    WeightStore weights;
};

// Checks every graph invariant (unique names, DAG order, weight refs
// resolve with the right ranks, add arity/shape, dense head width,
// 4-D conv/relu default target) and returns the inferred per-layer
// output shape. Throws DataError with the failed invariant.
std::map<std::string, Shape4> validate_model(const Model& model);

struct ForwardTrace {
    std::map<std::string, Tensor> activations;
    std::map<std::string, std::vector<int64_t>> argmax_indices;  // maxpool layers
    std::vector<float> logits;
    std::vector<float> posterior;
};

// Runs one preprocessed image (1, C, H, W) through the graph and records
// every layer activation.
ForwardTrace forward(const Model& model, const Tensor& image);

// Argmax of the posterior; ties break to the lowest index.
BrandId predict(const ModelGraph& graph, const ForwardTrace& trace);

// Layer names with a path to the final classifier layer (candidates for
// excitation targets).
std::vector<std::string> layers_upstream_of_head(const ModelGraph& graph);

}  // namespace elens
