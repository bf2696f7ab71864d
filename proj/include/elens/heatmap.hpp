#pragma once

#include <string>

#include "elens/ingest.hpp"
#include "elens/tensor.hpp"

namespace elens {

// Bilinear-upsamples an aggregate excitation map to the original image size,
// min-max normalizes it for display (a constant map renders black) and
// writes a grayscale pixmap; when overlay_path is non-empty, also writes a
// 50/50 blend with the original image. Display scaling only; metrics always
// consume the raw maps.
void render_heatmap(const Tensor& aggregate, const ImageU8& original,
                    const std::string& gray_path,
                    const std::string& overlay_path = {});

}  // namespace elens
