#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace elens {

struct Shape4 {
    int64_t n = 0;
    int64_t c = 0;
    int64_t h = 0;
    int64_t w = 0;

    int64_t numel() const { return n * c * h * w; }
    bool operator==(const Shape4&) const = default;
    std::string str() const;
};

/// Dense 4-D float32 array in NCHW layout, W fastest. The single carrier
/// for images, activations, conv weights and excitation maps.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape4 shape);  // zero-filled
    Tensor(Shape4 shape, std::vector<float> data);

    const Shape4& shape() const { return shape_; }
    int64_t numel() const { return shape_.numel(); }
    bool empty() const { return data_.empty(); }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }
    float* ptr() { return data_.data(); }
    const float* ptr() const { return data_.data(); }

    int64_t index(int64_t n, int64_t c, int64_t h, int64_t w) const {
        return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }
    float& at(int64_t n, int64_t c, int64_t h, int64_t w) {
        return data_[static_cast<size_t>(index(n, c, h, w))];
    }
    float at(int64_t n, int64_t c, int64_t h, int64_t w) const {
        return data_[static_cast<size_t>(index(n, c, h, w))];
    }

    // Same storage reinterpreted under a shape with equal element count.
    Tensor reshaped(Shape4 shape) const;

private:
    Shape4 shape_{};
    std::vector<float> data_;
};

bool all_finite(const Tensor& t);

}  // namespace elens
