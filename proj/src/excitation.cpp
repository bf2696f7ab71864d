#include "elens/excitation.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "elens/errors.hpp"

namespace elens {

namespace {

// Layer-name -> pending mass, one double per element of that layer's output.
using Frontier = std::map<std::string, std::vector<double>>;

std::vector<double>& frontier_slot(Frontier& frontier, const std::string& name,
                                   size_t size) {
    auto [it, inserted] = frontier.try_emplace(name);
    if (inserted) it->second.assign(size, 0.0);
    return it->second;
}

const Blob& blob_of(const Model& model, const LayerSpec& layer,
                    const char* suffix) {
    return model.weights.at(layer.weight_ref + "." + suffix);
}

void route_dense(const Model& model, const LayerSpec& layer,
                 const Tensor& child_act, const std::vector<double>& parent,
                 std::vector<double>& child, double& discarded) {
    const Blob& w = blob_of(model, layer, "weight");
    const int64_t out_dim = w.dims[0];
    const int64_t in_dim = w.dims[1];
    std::span<const float> x = child_act.data();
    for (int64_t j = 0; j < out_dim; ++j) {
        const double p = parent[static_cast<size_t>(j)];
        if (p <= 0.0) continue;
        const float* row = w.data.data() + j * in_dim;
        double z = 0.0;
        for (int64_t i = 0; i < in_dim; ++i) {
            const double wp = row[i] > 0.0f ? row[i] : 0.0;
            z += wp * x[static_cast<size_t>(i)];
        }
        if (z <= kMassEpsilon) {
            discarded += p;
            continue;
        }
        const double q = p / z;
        for (int64_t i = 0; i < in_dim; ++i) {
            const double wp = row[i] > 0.0f ? row[i] : 0.0;
            if (wp != 0.0) child[static_cast<size_t>(i)] += q * wp * x[static_cast<size_t>(i)];
        }
    }
}

void route_conv(const Model& model, const LayerSpec& layer,
                const Tensor& child_act, const Tensor& parent_act,
                const std::vector<double>& parent, std::vector<double>& child,
                double& discarded) {
    const Blob& w = blob_of(model, layer, "weight");
    const int64_t cout = w.dims[0], cin = w.dims[1], kh = w.dims[2], kw = w.dims[3];
    const Shape4& cs = child_act.shape();
    const Shape4& ps = parent_act.shape();
    const float* x = child_act.ptr();
    const int64_t in_plane = cs.h * cs.w;
    const int64_t w_plane = kh * kw;

    for (int64_t co = 0; co < cout; ++co) {
        const float* w_base = w.data.data() + co * cin * w_plane;
        for (int64_t oy = 0; oy < ps.h; ++oy) {
            for (int64_t ox = 0; ox < ps.w; ++ox) {
                const double p = parent[static_cast<size_t>((co * ps.h + oy) * ps.w + ox)];
                if (p <= 0.0) continue;
                const int64_t iy0 = oy * layer.stride - layer.padding;
                const int64_t ix0 = ox * layer.stride - layer.padding;
                double z = 0.0;
                for (int64_t ci = 0; ci < cin; ++ci) {
                    const float* x_ch = x + ci * in_plane;
                    const float* w_ch = w_base + ci * w_plane;
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        const int64_t iy = iy0 + ky;
                        if (iy < 0 || iy >= cs.h) continue;
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            const int64_t ix = ix0 + kx;
                            if (ix < 0 || ix >= cs.w) continue;
                            const float wv = w_ch[ky * kw + kx];
                            if (wv > 0.0f) z += static_cast<double>(wv) * x_ch[iy * cs.w + ix];
                        }
                    }
                }
                if (z <= kMassEpsilon) {
                    discarded += p;
                    continue;
                }
                const double q = p / z;
                for (int64_t ci = 0; ci < cin; ++ci) {
                    const float* x_ch = x + ci * in_plane;
                    const float* w_ch = w_base + ci * w_plane;
                    double* c_ch = child.data() + ci * in_plane;
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        const int64_t iy = iy0 + ky;
                        if (iy < 0 || iy >= cs.h) continue;
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            const int64_t ix = ix0 + kx;
                            if (ix < 0 || ix >= cs.w) continue;
                            const float wv = w_ch[ky * kw + kx];
                            if (wv > 0.0f) {
                                c_ch[iy * cs.w + ix] +=
                                    q * static_cast<double>(wv) * x_ch[iy * cs.w + ix];
                            }
                        }
                    }
                }
            }
        }
    }
}

void route_avgpool(const LayerSpec& layer, const Tensor& child_act,
                   const Tensor& parent_act, const std::vector<double>& parent,
                   std::vector<double>& child, double& discarded) {
    const Shape4& cs = child_act.shape();
    const Shape4& ps = parent_act.shape();
    const float* x = child_act.ptr();
    const double uniform_w = 1.0 / (static_cast<double>(layer.kernel) * layer.kernel);
    int64_t o = 0;
    for (int64_t c = 0; c < ps.c; ++c) {
        const int64_t plane = c * cs.h * cs.w;
        for (int64_t oy = 0; oy < ps.h; ++oy) {
            for (int64_t ox = 0; ox < ps.w; ++ox, ++o) {
                const double p = parent[static_cast<size_t>(o)];
                if (p <= 0.0) continue;
                double z = 0.0;
                for (int64_t ky = 0; ky < layer.kernel; ++ky) {
                    const int64_t iy = oy * layer.stride + ky;
                    for (int64_t kx = 0; kx < layer.kernel; ++kx) {
                        const int64_t ix = ox * layer.stride + kx;
                        z += uniform_w * x[plane + iy * cs.w + ix];
                    }
                }
                if (z <= kMassEpsilon) {
                    discarded += p;
                    continue;
                }
                const double q = p / z;
                for (int64_t ky = 0; ky < layer.kernel; ++ky) {
                    const int64_t iy = oy * layer.stride + ky;
                    for (int64_t kx = 0; kx < layer.kernel; ++kx) {
                        const int64_t ix = ox * layer.stride + kx;
                        child[static_cast<size_t>(plane + iy * cs.w + ix)] +=
                            q * uniform_w * x[plane + iy * cs.w + ix];
                    }
                }
            }
        }
    }
}

void route_add(const Tensor& act_a, const Tensor& act_b,
               const std::vector<double>& parent, std::vector<double>& child_a,
               std::vector<double>& child_b, double& discarded) {
    const float* a = act_a.ptr();
    const float* b = act_b.ptr();
    for (size_t i = 0; i < parent.size(); ++i) {
        const double p = parent[i];
        if (p <= 0.0) continue;
        const double pa = a[i] > 0.0f ? static_cast<double>(a[i]) : 0.0;
        const double pb = b[i] > 0.0f ? static_cast<double>(b[i]) : 0.0;
        const double den = pa + pb;
        if (den <= kMassEpsilon) {
            discarded += p;
            continue;
        }
        child_a[i] += p * (pa / den);
        child_b[i] += p * (pb / den);
    }
}

}  // namespace

ExcitationMaps excitation_backprop(const Model& model, const ForwardTrace& trace,
                                   int class_index,
                                   const std::string& target_layer,
                                   std::string image_id) {
    const ModelGraph& g = model.graph;
    if (class_index < 0 || class_index >= g.num_classes) {
        throw DataError("class index " + std::to_string(class_index) +
                        " out of range [0, " + std::to_string(g.num_classes) + ")");
    }
    {
        const std::vector<std::string> upstream = layers_upstream_of_head(g);
        if (std::find(upstream.begin(), upstream.end(), target_layer) ==
                upstream.end() ||
            target_layer == g.layers.back().name) {
            throw DataError("target layer '" + target_layer +
                            "' is not on a path from the classifier head");
        }
    }
    for (const LayerSpec& l : g.layers) {
        if (!trace.activations.count(l.name)) {
            throw DataError("trace has no activation for layer '" + l.name +
                            "'; it does not belong to this graph");
        }
    }

    Frontier frontier;
    double discarded = 0.0;
    {
        std::vector<double>& head = frontier_slot(
            frontier, g.layers.back().name, static_cast<size_t>(g.num_classes));
        head[static_cast<size_t>(class_index)] = 1.0;
    }

    for (size_t step = g.layers.size(); step-- > 0;) {
        const LayerSpec& layer = g.layers[step];
        auto it = frontier.find(layer.name);
        if (it == frontier.end()) continue;
        const std::vector<double> parent = std::move(it->second);
        frontier.erase(it);

        if (layer.name == target_layer) {
            const Shape4 ts = trace.activations.at(layer.name).shape();
            ExcitationMaps maps;
            maps.num_units = ts.c;
            maps.height = ts.h;
            maps.width = ts.w;
            maps.values.resize(parent.size());
            for (size_t i = 0; i < parent.size(); ++i) {
                maps.values[i] = static_cast<float>(parent[i]);
            }
            maps.discarded_mass = discarded;
            maps.target_layer = target_layer;
            maps.image_id = std::move(image_id);
            maps.class_index = class_index;
            return maps;
        }

        switch (layer.kind) {
            case LayerKind::Input:
                // Mass can only get past the target when the target does not
                // dominate the head; it is intentionally not remapped.
                break;
            case LayerKind::Dense: {
                const Tensor& x = trace.activations.at(layer.inputs[0]);
                route_dense(model, layer, x, parent,
                            frontier_slot(frontier, layer.inputs[0],
                                          static_cast<size_t>(x.numel())),
                            discarded);
                break;
            }
            case LayerKind::Conv: {
                const Tensor& x = trace.activations.at(layer.inputs[0]);
                route_conv(model, layer, x, trace.activations.at(layer.name), parent,
                           frontier_slot(frontier, layer.inputs[0],
                                         static_cast<size_t>(x.numel())),
                           discarded);
                break;
            }
            case LayerKind::AvgPool: {
                const Tensor& x = trace.activations.at(layer.inputs[0]);
                route_avgpool(layer, x, trace.activations.at(layer.name), parent,
                              frontier_slot(frontier, layer.inputs[0],
                                            static_cast<size_t>(x.numel())),
                              discarded);
                break;
            }
            case LayerKind::MaxPool: {
                const Tensor& x = trace.activations.at(layer.inputs[0]);
                const std::vector<int64_t>& argmax = trace.argmax_indices.at(layer.name);
                std::vector<double>& child = frontier_slot(
                    frontier, layer.inputs[0], static_cast<size_t>(x.numel()));
                for (size_t o = 0; o < parent.size(); ++o) {
                    if (parent[o] > 0.0) child[static_cast<size_t>(argmax[o])] += parent[o];
                }
                break;
            }
            case LayerKind::Relu:
            case LayerKind::Flatten: {
                const Tensor& x = trace.activations.at(layer.inputs[0]);
                std::vector<double>& child = frontier_slot(
                    frontier, layer.inputs[0], static_cast<size_t>(x.numel()));
                for (size_t i = 0; i < parent.size(); ++i) child[i] += parent[i];
                break;
            }
            case LayerKind::Add: {
                const Tensor& a = trace.activations.at(layer.inputs[0]);
                const Tensor& b = trace.activations.at(layer.inputs[1]);
                std::vector<double>& ca = frontier_slot(
                    frontier, layer.inputs[0], static_cast<size_t>(a.numel()));
                std::vector<double>& cb = frontier_slot(
                    frontier, layer.inputs[1], static_cast<size_t>(b.numel()));
                route_add(a, b, parent, ca, cb, discarded);
                break;
            }
        }
    }
    throw DataError("target layer '" + target_layer + "' was never reached");
}

std::vector<float> aggregate_values(const ExcitationMaps& maps) {
    const int64_t plane = maps.height * maps.width;
    std::vector<float> agg(static_cast<size_t>(plane), 0.0f);
    for (int64_t s = 0; s < plane; ++s) {
        double acc = 0.0;
        for (int64_t k = 0; k < maps.num_units; ++k) {
            acc += maps.values[static_cast<size_t>(k * plane + s)];
        }
        agg[static_cast<size_t>(s)] = static_cast<float>(acc);
    }
    return agg;
}

Tensor aggregate_map(const ExcitationMaps& maps) {
    return Tensor(Shape4{1, 1, maps.height, maps.width}, aggregate_values(maps));
}

namespace {

template <typename T>
void write_raw(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_raw(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return in.gcount() == sizeof(T);
}

}  // namespace

void write_map_record(std::ostream& out, const ExcitationMaps& maps) {
    write_raw<uint32_t>(out, static_cast<uint32_t>(maps.image_id.size()));
    out.write(maps.image_id.data(), static_cast<std::streamsize>(maps.image_id.size()));
    write_raw<int32_t>(out, maps.class_index);
    write_raw<uint32_t>(out, static_cast<uint32_t>(maps.num_units));
    write_raw<uint32_t>(out, static_cast<uint32_t>(maps.height));
    write_raw<uint32_t>(out, static_cast<uint32_t>(maps.width));
    out.write(reinterpret_cast<const char*>(maps.values.data()),
              static_cast<std::streamsize>(maps.values.size() * sizeof(float)));
    if (!out) throw IoError("failed writing map record");
}

std::optional<MapRecord> read_map_record(std::istream& in) {
    uint32_t id_len = 0;
    if (!read_raw(in, id_len)) {
        if (in.eof() && in.gcount() == 0) return std::nullopt;
        throw DataError("truncated map record header");
    }
    MapRecord rec;
    rec.image_id.resize(id_len);
    in.read(rec.image_id.data(), id_len);
    int32_t cls = 0;
    uint32_t k = 0, h = 0, w = 0;
    if (in.gcount() != static_cast<std::streamsize>(id_len) || !read_raw(in, cls) ||
        !read_raw(in, k) || !read_raw(in, h) || !read_raw(in, w)) {
        throw DataError("truncated map record header");
    }
    rec.class_index = cls;
    rec.num_units = k;
    rec.height = h;
    rec.width = w;
    const size_t count = static_cast<size_t>(k) * h * w;
    rec.values.resize(count);
    in.read(reinterpret_cast<char*>(rec.values.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(count * sizeof(float))) {
        throw DataError("truncated map record payload");
    }
    return rec;
}

}  // namespace elens
