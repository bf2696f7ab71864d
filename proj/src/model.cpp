#include "elens/model.hpp"

#include <algorithm>
#include <set>

#include "elens/errors.hpp"
#include "elens/kernels.hpp"

namespace elens {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Input: return "input";
        case LayerKind::Conv: return "conv";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::AvgPool: return "avgpool";
        case LayerKind::Dense: return "dense";
        case LayerKind::Add: return "add";
        case LayerKind::Flatten: return "flatten";
    }
    return "?";
}

int64_t Blob::numel() const {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
}

int ModelGraph::layer_index(const std::string& name) const {
    for (size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].name == name) return static_cast<int>(i);
    }
    return -1;
}

const LayerSpec& ModelGraph::layer(const std::string& name) const {
    const int i = layer_index(name);
    if (i < 0) throw DataError("unknown layer '" + name + "'");
    return layers[static_cast<size_t>(i)];
}

BrandId ModelGraph::brand(int index) const {
    if (index < 0 || index >= num_classes) {
        throw DataError("brand index " + std::to_string(index) + " out of range");
    }
    return BrandId{index, labels[static_cast<size_t>(index)]};
}

int ModelGraph::brand_index(const std::string& label) const {
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == label) return static_cast<int>(i);
    }
    return -1;
}

namespace {

const Blob& weight_blob(const Model& model, const LayerSpec& layer,
                        const std::string& suffix, size_t rank) {
    const std::string key = layer.weight_ref + "." + suffix;
    auto it = model.weights.find(key);
    if (it == model.weights.end()) {
        throw DataError("layer '" + layer.name + "' has dangling weight_ref '" +
                        key + "'");
    }
    if (it->second.dims.size() != rank) {
        throw DataError("weight '" + key + "' has rank " +
                        std::to_string(it->second.dims.size()) + ", expected " +
                        std::to_string(rank));
    }
    return it->second;
}

Tensor conv_weight_tensor(const Blob& b) {
    return Tensor(Shape4{b.dims[0], b.dims[1], b.dims[2], b.dims[3]}, b.data);
}

}  // namespace

std::map<std::string, Shape4> validate_model(const Model& model) {
    const ModelGraph& g = model.graph;
    if (g.layers.empty()) throw DataError("model has no layers");
    if (g.num_classes < 1) throw DataError("num_classes must be positive");
    if (static_cast<int>(g.labels.size()) != g.num_classes) {
        throw DataError("expected " + std::to_string(g.num_classes) +
                        " class labels, got " + std::to_string(g.labels.size()));
    }
    {
        std::set<std::string> uniq(g.labels.begin(), g.labels.end());
        if (static_cast<int>(uniq.size()) != g.num_classes) {
            throw DataError("class labels are not unique");
        }
    }
    if (g.preprocess.mean.size() != static_cast<size_t>(g.input_shape[0]) ||
        g.preprocess.std.size() != static_cast<size_t>(g.input_shape[0])) {
        throw DataError("preprocess constants must have one entry per input channel");
    }
    for (float s : g.preprocess.std) {
        if (s <= 0.0f) throw DataError("preprocess std must be positive");
    }

    std::map<std::string, Shape4> shapes;
    std::set<std::string> seen;
    if (g.layers.front().kind != LayerKind::Input) {
        throw DataError("first layer must be the input layer");
    }

    for (size_t li = 0; li < g.layers.size(); ++li) {
        const LayerSpec& layer = g.layers[li];
        if (layer.name.empty()) throw DataError("layer with empty name");
        if (!seen.insert(layer.name).second) {
            throw DataError("duplicate layer name '" + layer.name + "'");
        }
        for (const std::string& in : layer.inputs) {
            if (!shapes.count(in)) {
                throw DataError("graph is not a DAG in topological order: layer '" +
                                layer.name + "' consumes '" + in +
                                "' which is not defined before it");
            }
        }
        const size_t arity = layer.inputs.size();
        auto in_shape = [&](size_t i) { return shapes.at(layer.inputs[i]); };

        Shape4 out{};
        switch (layer.kind) {
            case LayerKind::Input: {
                if (li != 0 || arity != 0) {
                    throw DataError("input layer must be first and take no inputs");
                }
                out = Shape4{1, g.input_shape[0], g.input_shape[1], g.input_shape[2]};
                break;
            }
            case LayerKind::Conv: {
                if (arity != 1) throw DataError("conv takes one input");
                const Blob& w = weight_blob(model, layer, "weight", 4);
                const Blob& b = weight_blob(model, layer, "bias", 1);
                const Shape4 in = in_shape(0);
                if (w.dims[1] != in.c) {
                    throw DataError("layer '" + layer.name + "' weight expects " +
                                    std::to_string(w.dims[1]) + " channels, input has " +
                                    std::to_string(in.c));
                }
                if (b.dims[0] != w.dims[0]) {
                    throw DataError("layer '" + layer.name + "' bias length mismatch");
                }
                if (layer.stride < 1 || layer.padding < 0) {
                    throw DataError("layer '" + layer.name + "' has invalid stride/padding");
                }
                const int64_t ho = (in.h + 2 * layer.padding - w.dims[2]) / layer.stride + 1;
                const int64_t wo = (in.w + 2 * layer.padding - w.dims[3]) / layer.stride + 1;
                if (ho < 1 || wo < 1) {
                    throw DataError("layer '" + layer.name + "' output is empty");
                }
                out = Shape4{in.n, w.dims[0], ho, wo};
                break;
            }
            case LayerKind::Relu: {
                if (arity != 1) throw DataError("relu takes one input");
                out = in_shape(0);
                break;
            }
            case LayerKind::MaxPool:
            case LayerKind::AvgPool: {
                if (arity != 1) throw DataError("pool takes one input");
                const Shape4 in = in_shape(0);
                if (layer.kernel < 1 || layer.stride < 1) {
                    throw DataError("layer '" + layer.name + "' has invalid pool window");
                }
                if (layer.kernel > in.h || layer.kernel > in.w) {
                    throw DataError("layer '" + layer.name + "' pool window larger than input");
                }
                out = Shape4{in.n, in.c, (in.h - layer.kernel) / layer.stride + 1,
                             (in.w - layer.kernel) / layer.stride + 1};
                break;
            }
            case LayerKind::Dense: {
                if (arity != 1) throw DataError("dense takes one input");
                const Blob& w = weight_blob(model, layer, "weight", 2);
                const Blob& b = weight_blob(model, layer, "bias", 1);
                const Shape4 in = in_shape(0);
                if (in.h != 1 || in.w != 1) {
                    throw DataError("layer '" + layer.name +
                                    "' needs a flattened input, got " + in.str());
                }
                if (w.dims[1] != in.c) {
                    throw DataError("layer '" + layer.name + "' weight expects " +
                                    std::to_string(w.dims[1]) + " inputs, got " +
                                    std::to_string(in.c));
                }
                if (b.dims[0] != w.dims[0]) {
                    throw DataError("layer '" + layer.name + "' bias length mismatch");
                }
                out = Shape4{in.n, w.dims[0], 1, 1};
                break;
            }
            case LayerKind::Add: {
                if (arity != 2) throw DataError("add takes exactly 2 inputs");
                if (!(in_shape(0) == in_shape(1))) {
                    throw DataError("add '" + layer.name + "' input shapes differ: " +
                                    in_shape(0).str() + " vs " + in_shape(1).str());
                }
                out = in_shape(0);
                break;
            }
            case LayerKind::Flatten: {
                if (arity != 1) throw DataError("flatten takes one input");
                const Shape4 in = in_shape(0);
                out = Shape4{in.n, in.c * in.h * in.w, 1, 1};
                break;
            }
        }
        shapes[layer.name] = out;
    }

    const LayerSpec& last = g.layers.back();
    if (last.kind != LayerKind::Dense) {
        throw DataError("final layer must be dense, got " +
                        std::string(layer_kind_name(last.kind)));
    }
    if (shapes.at(last.name).c != g.num_classes) {
        throw DataError("final dense width " + std::to_string(shapes.at(last.name).c) +
                        " does not equal num_classes " + std::to_string(g.num_classes));
    }
    if (!g.target_layer_default.empty()) {
        const int ti = g.layer_index(g.target_layer_default);
        if (ti < 0) {
            throw DataError("target layer '" + g.target_layer_default + "' not in graph");
        }
        const LayerKind tk = g.layers[static_cast<size_t>(ti)].kind;
        if (tk != LayerKind::Conv && tk != LayerKind::Relu) {
            throw DataError("target layer '" + g.target_layer_default +
                            "' must be a conv or relu layer");
        }
        const Shape4 ts = shapes.at(g.target_layer_default);
        if (ts.h < 1 || ts.w < 1 || ts.c < 1) {
            throw DataError("target layer '" + g.target_layer_default +
                            "' has no 4-D output");
        }
    }
    return shapes;
}

ForwardTrace forward(const Model& model, const Tensor& image) {
    const ModelGraph& g = model.graph;
    const Shape4 want{1, g.input_shape[0], g.input_shape[1], g.input_shape[2]};
    if (!(image.shape() == want)) {
        throw ShapeError("forward input " + image.shape().str() +
                         " does not match model input " + want.str());
    }

    ForwardTrace trace;
    for (const LayerSpec& layer : g.layers) {
        auto in = [&](size_t i) -> const Tensor& {
            return trace.activations.at(layer.inputs[i]);
        };
        Tensor out;
        switch (layer.kind) {
            case LayerKind::Input:
                out = image;
                break;
            case LayerKind::Conv: {
                const Blob& w = weight_blob(model, layer, "weight", 4);
                const Blob& b = weight_blob(model, layer, "bias", 1);
                out = kernels::conv2d(in(0), conv_weight_tensor(w), b.data,
                                      layer.stride, layer.padding);
                break;
            }
            case LayerKind::Relu:
                out = kernels::relu(in(0));
                break;
            case LayerKind::MaxPool: {
                kernels::MaxPoolResult r =
                    kernels::maxpool2d(in(0), layer.kernel, layer.stride);
                trace.argmax_indices[layer.name] = std::move(r.argmax);
                out = std::move(r.output);
                break;
            }
            case LayerKind::AvgPool:
                out = kernels::avgpool2d(in(0), layer.kernel, layer.stride);
                break;
            case LayerKind::Dense: {
                const Blob& w = weight_blob(model, layer, "weight", 2);
                const Blob& b = weight_blob(model, layer, "bias", 1);
                const Tensor& x = in(0);
                std::vector<float> y = kernels::dense(x.data(), w.data, w.dims[0],
                                                      w.dims[1], b.data);
                out = Tensor(Shape4{1, w.dims[0], 1, 1}, std::move(y));
                break;
            }
            case LayerKind::Add:
                out = kernels::add(in(0), in(1));
                break;
            case LayerKind::Flatten: {
                const Tensor& x = in(0);
                out = x.reshaped(Shape4{x.shape().n, x.numel(), 1, 1});
                break;
            }
        }
        trace.activations[layer.name] = std::move(out);
    }

    const Tensor& head = trace.activations.at(g.layers.back().name);
    trace.logits.assign(head.data().begin(), head.data().end());
    trace.posterior = kernels::softmax(trace.logits);
    return trace;
}

BrandId predict(const ModelGraph& graph, const ForwardTrace& trace) {
    if (trace.posterior.empty()) throw DataError("predict on empty trace");
    size_t best = 0;
    for (size_t i = 1; i < trace.posterior.size(); ++i) {
        if (trace.posterior[i] > trace.posterior[best]) best = i;
    }
    return graph.brand(static_cast<int>(best));
}

std::vector<std::string> layers_upstream_of_head(const ModelGraph& g) {
    std::set<std::string> reach;
    reach.insert(g.layers.back().name);
    for (auto it = g.layers.rbegin(); it != g.layers.rend(); ++it) {
        if (!reach.count(it->name)) continue;
        for (const std::string& in : it->inputs) reach.insert(in);
    }
    std::vector<std::string> out;
    for (const LayerSpec& l : g.layers) {
        if (reach.count(l.name)) out.push_back(l.name);
    }
    return out;
}

}  // namespace elens
