#include "elens/heatmap.hpp"

#include <cmath>

#include "elens/errors.hpp"

namespace elens {

void render_heatmap(const Tensor& aggregate, const ImageU8& original,
                    const std::string& gray_path, const std::string& overlay_path) {
    if (aggregate.shape().n != 1 || aggregate.shape().c != 1) {
        throw ShapeError("heatmap expects a (1,1,h,w) aggregate map, got " +
                         aggregate.shape().str());
    }
    const Tensor up = bilinear_resize(aggregate, original.height, original.width);

    float lo = up.data()[0], hi = up.data()[0];
    for (float v : up.data()) {
        lo = v < lo ? v : lo;
        hi = v > hi ? v : hi;
    }
    const float range = hi - lo;

    ImageU8 gray;
    gray.width = original.width;
    gray.height = original.height;
    gray.rgb.resize(static_cast<size_t>(gray.width) * gray.height * 3);
    for (int64_t i = 0; i < up.numel(); ++i) {
        const float norm = range > 0.0f ? (up.data()[static_cast<size_t>(i)] - lo) / range : 0.0f;
        const uint8_t b = static_cast<uint8_t>(std::lround(norm * 255.0f));
        gray.rgb[static_cast<size_t>(3 * i)] = b;
        gray.rgb[static_cast<size_t>(3 * i + 1)] = b;
        gray.rgb[static_cast<size_t>(3 * i + 2)] = b;
    }
    write_ppm(gray_path, gray);

    if (!overlay_path.empty()) {
        ImageU8 overlay = gray;
        for (size_t i = 0; i < overlay.rgb.size(); ++i) {
            overlay.rgb[i] = static_cast<uint8_t>(
                (static_cast<int>(original.rgb[i]) + static_cast<int>(gray.rgb[i])) / 2);
        }
        write_ppm(overlay_path, overlay);
    }
}

}  // namespace elens
