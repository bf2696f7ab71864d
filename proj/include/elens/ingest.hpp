#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "elens/model.hpp"
#include "elens/tensor.hpp"

namespace elens {

struct ManifestEntry {
    std::string image_id;
    std::string path;
    std::string brand;
    std::string split;  // "train" or "test"
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;  // file order
    std::string category;

    std::vector<const ManifestEntry*> split_entries(const std::string& split) const;
};

// CSV with header image_id,path,brand,split. Duplicate ids and unknown
// split tokens are reported with their line number; tokens are matched
// case-insensitively.
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

enum class VisibilityGroup { Logo, RepeatedLogo, NoLogo };

const char* group_name(VisibilityGroup g);
constexpr std::array<VisibilityGroup, 3> kAllGroups{
    VisibilityGroup::Logo, VisibilityGroup::RepeatedLogo, VisibilityGroup::NoLogo};

struct Annotation {
    VisibilityGroup group = VisibilityGroup::NoLogo;
    int annotators = 0;
};

struct AnnotationSet {
    std::map<std::string, Annotation> by_image;
};

// CSV with header image_id,group,annotators; group in
// {logo, repeated_logo, no_logo}, case-insensitive.
AnnotationSet load_annotations(const std::string& path);
void save_annotations(const AnnotationSet& ann, const std::string& path);

// Throws DataError when an annotation references an id missing from the
// manifest (annotation ids must be a subset of manifest ids).
void check_annotations_cover(const AnnotationSet& ann, const DatasetManifest& manifest);

struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb;  // interleaved, row-major

    uint8_t* pixel(int x, int y) { return rgb.data() + 3 * (y * width + x); }
    const uint8_t* pixel(int x, int y) const { return rgb.data() + 3 * (y * width + x); }
};

// Binary portable pixmap (P6, maxval 255) decode/encode.
ImageU8 read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageU8& image);

// Routes on the file extension; only .ppm is supported.
ImageU8 load_image(const std::string& path);

// (1,3,H,W) tensor scaled to [0,1].
Tensor image_to_tensor(const ImageU8& image);

// Half-pixel-center bilinear resampling with edge clamping.
Tensor bilinear_resize(const Tensor& input, int64_t out_h, int64_t out_w);

// Decode -> [0,1] -> resize to the model's input size -> per-channel
// (x - mean) / std.
Tensor preprocess_image(const ImageU8& image, const Preprocess& pre,
                        const std::array<int64_t, 3>& input_shape);

}  // namespace elens
