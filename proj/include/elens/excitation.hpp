#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "elens/model.hpp"
#include "elens/tensor.hpp"

namespace elens {

// Denominator guard for degenerate propagation steps. Mass at a parent
// whose positive-excitation denominator is <= this is moved to
// discarded_mass rather than silently renormalized away.
constexpr double kMassEpsilon = 1e-12;

/// Per-unit marginal winning-probability maps at one target layer for one
/// image. values holds K maps of h*w floats, unit-major.
struct ExcitationMaps {
    int64_t num_units = 0;
    int64_t height = 0;
    int64_t width = 0;
    std::vector<float> values;
    double discarded_mass = 0.0;
    std::string target_layer;
    std::string image_id;
    int class_index = -1;

    std::span<const float> unit_map(int64_t k) const {
        return std::span<const float>(values).subspan(
            static_cast<size_t>(k * height * width),
            static_cast<size_t>(height * width));
    }
};

// Single backward pass of probabilistic winner-take-all routing from the
// class output neuron down to target_layer, consuming the recorded forward
// trace. Per layer kind:
//   linear (dense/conv/avgpool)  child gets parent_mass * a_i w+_ij / Z_j,
//                                Z_j = sum_i a_i w+_ij; Z_j <= eps discards
//                                the parent's mass (biases never get mass)
//   relu/flatten                 identity
//   maxpool                      all mass to the recorded argmax child
//   add                          split by positive part of each branch
//                                activation; both branches <= 0 discards
// Mass conservation (sum of maps + discarded == 1) holds whenever every
// path from the classifier head to the input passes through target_layer;
// for other targets the maps capture only the mass that reaches them.
ExcitationMaps excitation_backprop(const Model& model, const ForwardTrace& trace,
                                   int class_index,
                                   const std::string& target_layer,
                                   std::string image_id = {});

// Elementwise sum over units, as a (1,1,h,w) tensor.
Tensor aggregate_map(const ExcitationMaps& maps);

// Aggregate map plus total conservation check values, shared by metrics.
std::vector<float> aggregate_values(const ExcitationMaps& maps);

// Binary map-dump records: image_id (u32 length + bytes), class_index (i32),
// K, h, w (u32 each), then K*h*w little-endian float32 map values.
struct MapRecord {
    std::string image_id;
    int class_index = -1;
    int64_t num_units = 0;
    int64_t height = 0;
    int64_t width = 0;
    std::vector<float> values;
};

void write_map_record(std::ostream& out, const ExcitationMaps& maps);
std::optional<MapRecord> read_map_record(std::istream& in);

}  // namespace elens
