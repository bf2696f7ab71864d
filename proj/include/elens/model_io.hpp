#pragma once

#include <string>

#include "elens/model.hpp"

namespace elens {

// Weight-file container ("EBN1"):
//   bytes 0..3   magic "EBN1"
//   bytes 4..11  little-endian u64 JSON header length
//   header       UTF-8 JSON: version, layers, num_classes, labels,
//                preprocess constants, input shape, tensor manifest
//   payload      raw little-endian float32 tensors, each 8-byte aligned;
//                manifest offsets are relative to the (8-aligned) payload
//                start
//
// Files may additionally contain "batchnorm" layers; load_model folds each
// one into the preceding conv's weights and bias and drops it from the
// graph, so in-memory graphs never carry batch norm.

void save_model(const Model& model, const std::string& path);

Model load_model(const std::string& path);

}  // namespace elens
