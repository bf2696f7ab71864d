#include "elens/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "elens/errors.hpp"
#include "elens/format.hpp"
#include "elens/kernels.hpp"

namespace elens {

std::vector<const ManifestEntry*> DatasetManifest::split_entries(
    const std::string& split) const {
    std::vector<const ManifestEntry*> out;
    for (const ManifestEntry& e : entries) {
        if (e.split == split) out.push_back(&e);
    }
    return out;
}

namespace {

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

void expect_header(const std::vector<std::string>& got,
                   const std::vector<std::string>& want, const std::string& path) {
    if (got.size() != want.size()) {
        throw DataError("'" + path + "' has wrong column count in header");
    }
    for (size_t i = 0; i < want.size(); ++i) {
        if (lower(got[i]) != want[i]) {
            throw DataError("'" + path + "' header column " + std::to_string(i + 1) +
                            " is '" + got[i] + "', expected '" + want[i] + "'");
        }
    }
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
    const std::vector<std::string> lines = read_lines(path);
    if (lines.empty()) throw DataError("manifest '" + path + "' is empty");
    expect_header(split_csv(lines[0]), {"image_id", "path", "brand", "split"}, path);

    DatasetManifest manifest;
    std::set<std::string> seen;
    for (size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const int line_no = static_cast<int>(i + 1);
        const std::vector<std::string> f = split_csv(lines[i]);
        if (f.size() != 4) {
            throw DataError("manifest line " + std::to_string(line_no) +
                            " has " + std::to_string(f.size()) + " fields, expected 4");
        }
        ManifestEntry e{f[0], f[1], f[2], lower(f[3])};
        if (e.image_id.empty()) {
            throw DataError("manifest line " + std::to_string(line_no) + " has empty image_id");
        }
        if (!seen.insert(e.image_id).second) {
            throw DataError("duplicate image_id '" + e.image_id + "' at line " +
                            std::to_string(line_no));
        }
        if (e.split != "train" && e.split != "test") {
            throw DataError("unknown split token '" + f[3] + "' at line " +
                            std::to_string(line_no));
        }
        manifest.entries.push_back(std::move(e));
    }
    return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "image_id,path,brand,split\n";
    int line_no = 2;
    for (const ManifestEntry& e : manifest.entries) {
        check_csv_field(e.image_id, "image_id", line_no);
        check_csv_field(e.path, "path", line_no);
        check_csv_field(e.brand, "brand", line_no);
        out << e.image_id << ',' << e.path << ',' << e.brand << ',' << e.split << '\n';
        ++line_no;
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

const char* group_name(VisibilityGroup g) {
    switch (g) {
        case VisibilityGroup::Logo: return "logo";
        case VisibilityGroup::RepeatedLogo: return "repeated_logo";
        case VisibilityGroup::NoLogo: return "no_logo";
    }
    return "?";
}

AnnotationSet load_annotations(const std::string& path) {
    const std::vector<std::string> lines = read_lines(path);
    if (lines.empty()) throw DataError("annotation file '" + path + "' is empty");
    expect_header(split_csv(lines[0]), {"image_id", "group", "annotators"}, path);

    AnnotationSet ann;
    for (size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const int line_no = static_cast<int>(i + 1);
        const std::vector<std::string> f = split_csv(lines[i]);
        if (f.size() != 3) {
            throw DataError("annotation line " + std::to_string(line_no) +
                            " has " + std::to_string(f.size()) + " fields, expected 3");
        }
        Annotation a;
        const std::string token = lower(f[1]);
        bool known = false;
        for (VisibilityGroup g : kAllGroups) {
            if (token == group_name(g)) {
                a.group = g;
                known = true;
            }
        }
        if (!known) {
            throw DataError("unknown group token '" + f[1] + "' at line " +
                            std::to_string(line_no));
        }
        try {
            a.annotators = std::stoi(f[2]);
        } catch (const std::exception&) {
            throw DataError("bad annotator count '" + f[2] + "' at line " +
                            std::to_string(line_no));
        }
        if (!ann.by_image.emplace(f[0], a).second) {
            throw DataError("duplicate image_id '" + f[0] + "' at line " +
                            std::to_string(line_no));
        }
    }
    return ann;
}

void save_annotations(const AnnotationSet& ann, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "image_id,group,annotators\n";
    for (const auto& [id, a] : ann.by_image) {
        out << id << ',' << group_name(a.group) << ',' << a.annotators << '\n';
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

void check_annotations_cover(const AnnotationSet& ann,
                             const DatasetManifest& manifest) {
    std::set<std::string> ids;
    for (const ManifestEntry& e : manifest.entries) ids.insert(e.image_id);
    for (const auto& [id, a] : ann.by_image) {
        if (!ids.count(id)) {
            throw DataError("annotation references image_id '" + id +
                            "' absent from the manifest");
        }
    }
}

namespace {

// Consumes one whitespace-delimited PPM header token, skipping comments.
std::string ppm_token(std::istream& in, const std::string& path) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok += static_cast<char>(c);
    }
    if (tok.empty()) throw DataError("corrupt pixmap header in '" + path + "'");
    return tok;
}

}  // namespace

ImageU8 read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image '" + path + "'");
    if (ppm_token(in, path) != "P6") {
        throw DataError("'" + path + "' is not a binary P6 pixmap");
    }
    ImageU8 img;
    try {
        img.width = std::stoi(ppm_token(in, path));
        img.height = std::stoi(ppm_token(in, path));
        const int maxval = std::stoi(ppm_token(in, path));
        if (maxval != 255) {
            throw DataError("'" + path + "' has unsupported maxval " +
                            std::to_string(maxval));
        }
    } catch (const DataError&) {
        throw;
    } catch (const std::exception&) {
        throw DataError("corrupt pixmap header in '" + path + "'");
    }
    if (img.width < 1 || img.height < 1) {
        throw DataError("'" + path + "' has invalid dimensions");
    }
    img.rgb.resize(static_cast<size_t>(img.width) * img.height * 3);
    in.read(reinterpret_cast<char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.rgb.size())) {
        throw DataError("'" + path + "' pixel payload is truncated");
    }
    return img;
}

void write_ppm(const std::string& path, const ImageU8& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image '" + path + "'");
    out << "P6\n" << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.rgb.data()),
              static_cast<std::streamsize>(image.rgb.size()));
    if (!out) throw IoError("failed writing image '" + path + "'");
}

ImageU8 load_image(const std::string& path) {
    const size_t dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : lower(path.substr(dot));
    if (ext == ".ppm") return read_ppm(path);
    throw DataError("unsupported image format '" + ext + "' for '" + path + "'");
}

Tensor image_to_tensor(const ImageU8& image) {
    Tensor t(Shape4{1, 3, image.height, image.width});
    float* out = t.ptr();
    const int64_t plane = static_cast<int64_t>(image.width) * image.height;
    for (int64_t i = 0; i < plane; ++i) {
        out[i] = static_cast<float>(image.rgb[static_cast<size_t>(3 * i)]) / 255.0f;
        out[plane + i] = static_cast<float>(image.rgb[static_cast<size_t>(3 * i + 1)]) / 255.0f;
        out[2 * plane + i] = static_cast<float>(image.rgb[static_cast<size_t>(3 * i + 2)]) / 255.0f;
    }
    return t;
}

Tensor bilinear_resize(const Tensor& input, int64_t out_h, int64_t out_w) {
    const Shape4& in = input.shape();
    if (out_h < 1 || out_w < 1) throw ShapeError("resize target must be positive");
    if (in.h == out_h && in.w == out_w) return input;
    Tensor out(Shape4{in.n, in.c, out_h, out_w});
    const double sy = static_cast<double>(in.h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(in.w) / static_cast<double>(out_w);
    for (int64_t n = 0; n < in.n; ++n) {
        for (int64_t c = 0; c < in.c; ++c) {
            for (int64_t y = 0; y < out_h; ++y) {
                const double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
                const int64_t y0 = std::clamp<int64_t>(
                    static_cast<int64_t>(std::floor(src_y)), 0, in.h - 1);
                const int64_t y1 = std::min<int64_t>(y0 + 1, in.h - 1);
                const double fy = std::clamp(src_y - static_cast<double>(y0), 0.0, 1.0);
                for (int64_t x = 0; x < out_w; ++x) {
                    const double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
                    const int64_t x0 = std::clamp<int64_t>(
                        static_cast<int64_t>(std::floor(src_x)), 0, in.w - 1);
                    const int64_t x1 = std::min<int64_t>(x0 + 1, in.w - 1);
                    const double fx = std::clamp(src_x - static_cast<double>(x0), 0.0, 1.0);
                    const double v00 = input.at(n, c, y0, x0);
                    const double v01 = input.at(n, c, y0, x1);
                    const double v10 = input.at(n, c, y1, x0);
                    const double v11 = input.at(n, c, y1, x1);
                    const double top = v00 + (v01 - v00) * fx;
                    const double bot = v10 + (v11 - v10) * fx;
                    out.at(n, c, y, x) = static_cast<float>(top + (bot - top) * fy);
                }
            }
        }
    }
    return out;
}

Tensor preprocess_image(const ImageU8& image, const Preprocess& pre,
                        const std::array<int64_t, 3>& input_shape) {
    if (input_shape[0] != 3) {
        throw DataError("preprocess expects a 3-channel model input");
    }
    Tensor t = bilinear_resize(image_to_tensor(image), input_shape[1], input_shape[2]);
    std::vector<float> scale(3), shift(3);
    for (int c = 0; c < 3; ++c) {
        scale[static_cast<size_t>(c)] = 1.0f / pre.std[static_cast<size_t>(c)];
        shift[static_cast<size_t>(c)] =
            -pre.mean[static_cast<size_t>(c)] / pre.std[static_cast<size_t>(c)];
    }
    return kernels::affine_channels(t, scale, shift);
}

}  // namespace elens
