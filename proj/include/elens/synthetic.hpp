#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "elens/ingest.hpp"
#include "elens/model.hpp"

namespace elens {

// One synthetic brand and its visual strategy:
//   Logo          a single 12x12 glyph at a random spot on a noisy gray card
//   RepeatedLogo  the glyph tiled on a 10-pixel pitch with a random phase
//   NoLogo        a flat brand-color field with per-pixel noise, no glyph
struct BrandRecipe {
    std::string brand;
    VisibilityGroup family = VisibilityGroup::NoLogo;
    std::array<uint8_t, 3> color{};  // NoLogo base color; unused otherwise
};

struct SyntheticConfig {
    std::vector<BrandRecipe> brands;
    int images_per_brand = 100;
    int canvas = 64;
};

// The three-brand setup the template model is matched to.
std::vector<BrandRecipe> default_recipes();

struct SyntheticDataset {
    DatasetManifest manifest;
    AnnotationSet annotations;
    std::vector<ImageU8> images;  // aligned with manifest.entries
};

// Pure function of (config, seed); every image is derived from its own
// seed stream, so output does not depend on generation order.
SyntheticDataset generate_synthetic(const SyntheticConfig& config, uint64_t seed);

// Writes images/<id>.ppm plus manifest.csv and annotations.csv under dir.
void write_synthetic(const SyntheticDataset& dataset, const std::string& dir);

// 12x12 glyph ink mask, row-major booleans. Shared by the generator and the
// template filter so detection stays aligned with generation.
const std::array<std::array<bool, 12>, 12>& glyph_mask();

// Number of ink pixels drawn per glyph occurrence.
int glyph_ink_count();

// Hand-constructed two-channel matched-filter classifier for the default
// recipes: a glyph luminance detector and a brand-color detector, max-pooled
// to an 8x8 grid ("maps.relu", the excitation target) and linearly scored.
Model build_template_model();

}  // namespace elens
