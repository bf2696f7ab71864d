#include "elens/model_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>

#include <json.hpp>

#include "elens/errors.hpp"

namespace elens {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'E', 'B', 'N', '1'};
constexpr int kVersion = 1;

int64_t align8(int64_t v) { return (v + 7) & ~int64_t{7}; }

std::string kind_to_token(LayerKind k) { return layer_kind_name(k); }

std::optional<LayerKind> token_to_kind(const std::string& t) {
    for (LayerKind k : {LayerKind::Input, LayerKind::Conv, LayerKind::Relu,
                        LayerKind::MaxPool, LayerKind::AvgPool, LayerKind::Dense,
                        LayerKind::Add, LayerKind::Flatten}) {
        if (t == layer_kind_name(k)) return k;
    }
    return std::nullopt;
}

// Parsed file layer; "batchnorm" only exists at this stage.
struct RawLayer {
    LayerSpec spec;
    bool is_batchnorm = false;
    double eps = 0.0;
};

json layer_to_json(const LayerSpec& l) {
    json j;
    j["name"] = l.name;
    j["kind"] = kind_to_token(l.kind);
    j["inputs"] = l.inputs;
    switch (l.kind) {
        case LayerKind::Conv:
            j["stride"] = l.stride;
            j["padding"] = l.padding;
            j["weight_ref"] = l.weight_ref;
            break;
        case LayerKind::MaxPool:
        case LayerKind::AvgPool:
            j["kernel"] = l.kernel;
            j["stride"] = l.stride;
            break;
        case LayerKind::Dense:
            j["weight_ref"] = l.weight_ref;
            break;
        default:
            break;
    }
    return j;
}

RawLayer layer_from_json(const json& j) {
    RawLayer raw;
    LayerSpec& l = raw.spec;
    l.name = j.at("name").get<std::string>();
    const std::string kind = j.at("kind").get<std::string>();
    l.inputs = j.at("inputs").get<std::vector<std::string>>();
    if (kind == "batchnorm") {
        raw.is_batchnorm = true;
        l.weight_ref = j.at("weight_ref").get<std::string>();
        raw.eps = j.at("eps").get<double>();
        return raw;
    }
    auto k = token_to_kind(kind);
    if (!k) throw DataError("unknown layer kind '" + kind + "' in layer '" + l.name + "'");
    l.kind = *k;
    switch (l.kind) {
        case LayerKind::Conv:
            l.stride = j.at("stride").get<int>();
            l.padding = j.at("padding").get<int>();
            l.weight_ref = j.at("weight_ref").get<std::string>();
            break;
        case LayerKind::MaxPool:
        case LayerKind::AvgPool:
            l.kernel = j.at("kernel").get<int>();
            l.stride = j.at("stride").get<int>();
            break;
        case LayerKind::Dense:
            l.weight_ref = j.at("weight_ref").get<std::string>();
            break;
        default:
            break;
    }
    return raw;
}

const Blob& store_get(const WeightStore& store, const std::string& key,
                      const std::string& owner) {
    auto it = store.find(key);
    if (it == store.end()) {
        throw DataError("layer '" + owner + "' has dangling weight_ref '" + key + "'");
    }
    return it->second;
}

// Fold y = gamma * (x - mean) / sqrt(var + eps) + beta into the preceding
// conv. The conv must be the batch norm's only input and must have no other
// consumer.
void fold_batchnorm(std::vector<RawLayer>& layers, WeightStore& store,
                    std::string& target_layer) {
    for (size_t bi = 0; bi < layers.size();) {
        if (!layers[bi].is_batchnorm) {
            ++bi;
            continue;
        }
        const RawLayer bn = layers[bi];
        if (bn.spec.inputs.size() != 1) {
            throw DataError("batchnorm '" + bn.spec.name + "' must take exactly one input");
        }
        const std::string conv_name = bn.spec.inputs[0];
        RawLayer* conv = nullptr;
        for (RawLayer& l : layers) {
            if (l.spec.name == conv_name) conv = &l;
        }
        if (!conv || conv->is_batchnorm || conv->spec.kind != LayerKind::Conv) {
            throw DataError("batchnorm '" + bn.spec.name +
                            "' does not follow a conv layer");
        }
        for (const RawLayer& l : layers) {
            if (l.spec.name == bn.spec.name) continue;
            for (const std::string& in : l.spec.inputs) {
                if (in == conv_name) {
                    throw DataError("batchnorm '" + bn.spec.name +
                                    "' cannot be folded: conv '" + conv_name +
                                    "' has other consumers");
                }
            }
        }

        const Blob& gamma = store_get(store, bn.spec.weight_ref + ".gamma", bn.spec.name);
        const Blob& beta = store_get(store, bn.spec.weight_ref + ".beta", bn.spec.name);
        const Blob& mean = store_get(store, bn.spec.weight_ref + ".mean", bn.spec.name);
        const Blob& var = store_get(store, bn.spec.weight_ref + ".var", bn.spec.name);
        Blob& w = store.at(conv->spec.weight_ref + ".weight");
        Blob& b = store.at(conv->spec.weight_ref + ".bias");
        const int64_t cout = w.dims[0];
        if (gamma.numel() != cout || beta.numel() != cout || mean.numel() != cout ||
            var.numel() != cout) {
            throw DataError("batchnorm '" + bn.spec.name +
                            "' parameter length does not match conv channels");
        }
        const int64_t per_filter = w.numel() / cout;
        for (int64_t co = 0; co < cout; ++co) {
            const double g = static_cast<double>(gamma.data[co]) /
                             std::sqrt(static_cast<double>(var.data[co]) + bn.eps);
            for (int64_t i = 0; i < per_filter; ++i) {
                w.data[co * per_filter + i] =
                    static_cast<float>(w.data[co * per_filter + i] * g);
            }
            b.data[co] = static_cast<float>(
                (static_cast<double>(b.data[co]) - mean.data[co]) * g + beta.data[co]);
        }
        for (const std::string& suffix : {".gamma", ".beta", ".mean", ".var"}) {
            store.erase(bn.spec.weight_ref + suffix);
        }

        // Rewire consumers of the batch norm onto the conv.
        for (RawLayer& l : layers) {
            for (std::string& in : l.spec.inputs) {
                if (in == bn.spec.name) in = conv_name;
            }
        }
        if (target_layer == bn.spec.name) target_layer = conv_name;
        layers.erase(layers.begin() + static_cast<ptrdiff_t>(bi));
    }
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
    json header;
    header["version"] = kVersion;
    header["num_classes"] = model.graph.num_classes;
    header["labels"] = model.graph.labels;
    header["input_shape"] = model.graph.input_shape;
    header["preprocess"] = {{"mean", model.graph.preprocess.mean},
                            {"std", model.graph.preprocess.std}};
    header["target_layer"] = model.graph.target_layer_default;
    json layers = json::array();
    for (const LayerSpec& l : model.graph.layers) layers.push_back(layer_to_json(l));
    header["layers"] = layers;

    json tensors = json::array();
    int64_t offset = 0;
    for (const auto& [name, blob] : model.weights) {
        const int64_t nbytes = blob.numel() * 4;
        tensors.push_back({{"name", name},
                           {"dtype", "f32"},
                           {"shape", blob.dims},
                           {"offset", offset},
                           {"nbytes", nbytes}});
        offset = align8(offset + nbytes);
    }
    header["tensors"] = tensors;

    const std::string header_str = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(kMagic, 4);
    const uint64_t hlen = header_str.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    const int64_t payload_start = align8(12 + static_cast<int64_t>(hlen));
    static const char zeros[8] = {0};
    out.write(zeros, payload_start - 12 - static_cast<int64_t>(hlen));
    int64_t cursor = 0;
    for (const auto& [name, blob] : model.weights) {
        const int64_t nbytes = blob.numel() * 4;
        out.write(reinterpret_cast<const char*>(blob.data.data()), nbytes);
        const int64_t next = align8(cursor + nbytes);
        out.write(zeros, next - cursor - nbytes);
        cursor = next;
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw DataError("bad magic: '" + path + "' is not an EBN1 model file");
    }
    uint64_t hlen = 0;
    std::memcpy(&hlen, bytes.data() + 4, 8);
    if (12 + hlen > bytes.size()) {
        throw DataError("model header extends past end of file");
    }
    json header;
    try {
        header = json::parse(bytes.substr(12, hlen));
    } catch (const json::exception& e) {
        throw DataError(std::string("model header is not valid JSON: ") + e.what());
    }

    try {
        if (header.at("version").get<int>() != kVersion) {
            throw DataError("unsupported model version " +
                            header.at("version").dump());
        }

        Model model;
        ModelGraph& g = model.graph;
        g.num_classes = header.at("num_classes").get<int>();
        g.labels = header.at("labels").get<std::vector<std::string>>();
        const auto ishape = header.at("input_shape").get<std::vector<int64_t>>();
        if (ishape.size() != 3) throw DataError("input_shape must have 3 entries");
        g.input_shape = {ishape[0], ishape[1], ishape[2]};
        g.preprocess.mean = header.at("preprocess").at("mean").get<std::vector<float>>();
        g.preprocess.std = header.at("preprocess").at("std").get<std::vector<float>>();
        g.target_layer_default = header.at("target_layer").get<std::string>();

        const int64_t payload_start = align8(12 + static_cast<int64_t>(hlen));
        for (const json& t : header.at("tensors")) {
            const std::string name = t.at("name").get<std::string>();
            if (t.at("dtype").get<std::string>() != "f32") {
                throw DataError("tensor '" + name + "' has unsupported dtype");
            }
            Blob blob;
            blob.dims = t.at("shape").get<std::vector<int64_t>>();
            if (blob.dims.empty() || blob.dims.size() > 4) {
                throw DataError("tensor '" + name + "' has unsupported rank");
            }
            for (int64_t d : blob.dims) {
                if (d < 1) throw DataError("tensor '" + name + "' has non-positive dim");
            }
            const int64_t offset = t.at("offset").get<int64_t>();
            const int64_t nbytes = t.at("nbytes").get<int64_t>();
            if (offset % 8 != 0) {
                throw DataError("tensor '" + name + "' offset is not 8-byte aligned");
            }
            if (nbytes != blob.numel() * 4 ||
                payload_start + offset + nbytes > static_cast<int64_t>(bytes.size())) {
                throw DataError("payload length mismatch for tensor '" + name + "'");
            }
            blob.data.resize(static_cast<size_t>(blob.numel()));
            std::memcpy(blob.data.data(), bytes.data() + payload_start + offset,
                        static_cast<size_t>(nbytes));
            if (!model.weights.emplace(name, std::move(blob)).second) {
                throw DataError("duplicate tensor '" + name + "' in manifest");
            }
        }

        std::vector<RawLayer> raw;
        for (const json& lj : header.at("layers")) raw.push_back(layer_from_json(lj));
        fold_batchnorm(raw, model.weights, g.target_layer_default);
        for (RawLayer& r : raw) g.layers.push_back(std::move(r.spec));

        validate_model(model);
        return model;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed model header: ") + e.what());
    }
}

}  // namespace elens
