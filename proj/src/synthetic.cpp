#include "elens/synthetic.hpp"

#include <cmath>
#include <filesystem>

#include "elens/errors.hpp"
#include "elens/rng.hpp"

namespace elens {

namespace {

// Card stock behind glyphs, glyph ink, and the no-logo brand color. The
// template filters below are computed from these same constants.
constexpr int kCardBase = 180;
constexpr int kNoise = 12;
constexpr uint8_t kInk = 18;
constexpr std::array<uint8_t, 3> kNoLogoColor{70, 120, 210};
constexpr int kGlyphSize = 12;
// One more than the 13x13 filter reach, so tiled glyphs never intrude on a
// neighbor's matched window.
constexpr int kTilePitch = 13;
constexpr int kFilterSize = 13;

const char* const kGlyphRows[kGlyphSize] = {
    "############",
    "#..........#",
    "#..######..#",
    "#..#....#..#",
    "#..#.##.#..#",
    "#..#.##.#..#",
    "#..#.##.#..#",
    "#..#.##.#..#",
    "#..#....#..#",
    "#..######..#",
    "#..........#",
    "############",
};

std::array<std::array<bool, 12>, 12> build_mask() {
    std::array<std::array<bool, 12>, 12> m{};
    for (int y = 0; y < kGlyphSize; ++y) {
        for (int x = 0; x < kGlyphSize; ++x) {
            m[static_cast<size_t>(y)][static_cast<size_t>(x)] = kGlyphRows[y][x] == '#';
        }
    }
    return m;
}

uint8_t noisy(int base, SplitMix64& rng) {
    const int v = base + static_cast<int>(rng.below(2 * kNoise + 1)) - kNoise;
    return static_cast<uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
}

void fill_noise(ImageU8& img, const std::array<uint8_t, 3>& base, SplitMix64& rng) {
    for (size_t i = 0; i < img.rgb.size(); i += 3) {
        img.rgb[i] = noisy(base[0], rng);
        img.rgb[i + 1] = noisy(base[1], rng);
        img.rgb[i + 2] = noisy(base[2], rng);
    }
}

void draw_glyph(ImageU8& img, int ox, int oy) {
    const auto& mask = glyph_mask();
    for (int y = 0; y < kGlyphSize; ++y) {
        for (int x = 0; x < kGlyphSize; ++x) {
            if (!mask[static_cast<size_t>(y)][static_cast<size_t>(x)]) continue;
            uint8_t* p = img.pixel(ox + x, oy + y);
            p[0] = p[1] = p[2] = kInk;
        }
    }
}

ImageU8 render(const BrandRecipe& recipe, int canvas, SplitMix64& rng) {
    ImageU8 img;
    img.width = canvas;
    img.height = canvas;
    img.rgb.resize(static_cast<size_t>(canvas) * canvas * 3);
    const std::array<uint8_t, 3> card{kCardBase, kCardBase, kCardBase};
    switch (recipe.family) {
        case VisibilityGroup::Logo: {
            fill_noise(img, card, rng);
            const int span = canvas - kGlyphSize;
            const int ox = static_cast<int>(rng.below(static_cast<uint64_t>(span) + 1));
            const int oy = static_cast<int>(rng.below(static_cast<uint64_t>(span) + 1));
            draw_glyph(img, ox, oy);
            break;
        }
        case VisibilityGroup::RepeatedLogo: {
            fill_noise(img, card, rng);
            const int tiles = (canvas - kGlyphSize) / kTilePitch + 1;
            const int slack = canvas - kGlyphSize - (tiles - 1) * kTilePitch;
            const int px = static_cast<int>(rng.below(static_cast<uint64_t>(slack) + 1));
            const int py = static_cast<int>(rng.below(static_cast<uint64_t>(slack) + 1));
            for (int ty = 0; ty < tiles; ++ty) {
                for (int tx = 0; tx < tiles; ++tx) {
                    draw_glyph(img, px + tx * kTilePitch, py + ty * kTilePitch);
                }
            }
            break;
        }
        case VisibilityGroup::NoLogo: {
            fill_noise(img, recipe.color, rng);
            break;
        }
    }
    return img;
}

float preprocessed_value(int byte) {
    return (static_cast<float>(byte) / 255.0f - 0.5f) / 0.5f;
}

std::string zero_pad(int v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s = "0" + s;
    return s;
}

}  // namespace

const std::array<std::array<bool, 12>, 12>& glyph_mask() {
    static const auto mask = build_mask();
    return mask;
}

int glyph_ink_count() {
    int n = 0;
    for (const auto& row : glyph_mask()) {
        for (bool b : row) n += b ? 1 : 0;
    }
    return n;
}

std::vector<BrandRecipe> default_recipes() {
    return {
        BrandRecipe{"crestmark", VisibilityGroup::Logo, {}},
        BrandRecipe{"tilemark", VisibilityGroup::RepeatedLogo, {}},
        BrandRecipe{"driftfield", VisibilityGroup::NoLogo, kNoLogoColor},
    };
}

SyntheticDataset generate_synthetic(const SyntheticConfig& config, uint64_t seed) {
    if (config.brands.empty()) throw ConfigError("no brand recipes configured");
    if (config.images_per_brand < 1) throw ConfigError("images_per_brand must be >= 1");
    if (config.canvas < kGlyphSize + 2) throw ConfigError("canvas too small for glyph");

    SyntheticDataset ds;
    ds.manifest.category = "synthetic";
    for (size_t b = 0; b < config.brands.size(); ++b) {
        const BrandRecipe& recipe = config.brands[b];
        for (int i = 0; i < config.images_per_brand; ++i) {
            SplitMix64 rng(derive_seed(seed, b * 1000003ull + static_cast<uint64_t>(i)));
            const std::string id = recipe.brand + "_" + zero_pad(i, 4);
            ds.images.push_back(render(recipe, config.canvas, rng));
            ds.manifest.entries.push_back(
                ManifestEntry{id, "images/" + id + ".ppm", recipe.brand, "test"});
            ds.annotations.by_image[id] = Annotation{recipe.family, 5};
        }
    }
    return ds;
}

void write_synthetic(const SyntheticDataset& dataset, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "images", ec);
    if (ec) throw IoError("cannot create '" + dir + "/images': " + ec.message());
    for (size_t i = 0; i < dataset.images.size(); ++i) {
        const fs::path p = fs::path(dir) / dataset.manifest.entries[i].path;
        write_ppm(p.string(), dataset.images[i]);
    }
    save_manifest(dataset.manifest, (fs::path(dir) / "manifest.csv").string());
    save_annotations(dataset.annotations, (fs::path(dir) / "annotations.csv").string());
}

Model build_template_model() {
    Model m;
    ModelGraph& g = m.graph;
    const std::vector<BrandRecipe> recipes = default_recipes();
    g.num_classes = static_cast<int>(recipes.size());
    for (const BrandRecipe& r : recipes) g.labels.push_back(r.brand);
    g.input_shape = {3, 64, 64};
    g.preprocess.mean = {0.5f, 0.5f, 0.5f};
    g.preprocess.std = {0.5f, 0.5f, 0.5f};
    g.target_layer_default = "maps.relu";

    // Channel 0: luminance-matched glyph filter, zero-sum so flat fields
    // give no response; unit response at exact alignment on clean card.
    // Channel 1: zero-sum brand-color projection averaged over the window,
    // unit response on the no-logo field, zero on any gray.
    const int64_t K = kFilterSize;
    Blob w;
    w.dims = {2, 3, K, K};
    w.data.assign(static_cast<size_t>(w.numel()), 0.0f);
    const auto& mask = glyph_mask();
    const double v_ink = preprocessed_value(kInk);
    const double v_card = preprocessed_value(kCardBase);
    const int n_ink = glyph_ink_count();
    const int n_bg = static_cast<int>(K * K) - n_ink;
    const double a = 1.0 / (static_cast<double>(n_ink) * (v_card - v_ink));
    const double b = a * n_ink / n_bg;
    for (int y = 0; y < K; ++y) {
        for (int x = 0; x < K; ++x) {
            const bool ink = y < kGlyphSize && x < kGlyphSize &&
                             mask[static_cast<size_t>(y)][static_cast<size_t>(x)];
            const double wl = ink ? -a : b;
            for (int ch = 0; ch < 3; ++ch) {
                w.data[static_cast<size_t>(((0 * 3 + ch) * K + y) * K + x)] =
                    static_cast<float>(wl / 3.0);
            }
        }
    }
    double v_color[3], mean_color = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
        v_color[ch] = preprocessed_value(kNoLogoColor[static_cast<size_t>(ch)]);
        mean_color += v_color[ch] / 3.0;
    }
    double norm = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
        v_color[ch] -= mean_color;
        norm += v_color[ch] * v_color[ch];
    }
    for (int ch = 0; ch < 3; ++ch) {
        const double wc = v_color[ch] / (static_cast<double>(K * K) * norm);
        for (int y = 0; y < K; ++y) {
            for (int x = 0; x < K; ++x) {
                w.data[static_cast<size_t>(((1 * 3 + ch) * K + y) * K + x)] =
                    static_cast<float>(wc);
            }
        }
    }
    m.weights["feat.conv.weight"] = std::move(w);
    m.weights["feat.conv.bias"] = Blob{{2}, {-0.55f, -0.25f}};

    auto push = [&](LayerSpec l) { g.layers.push_back(std::move(l)); };
    push({.name = "input", .kind = LayerKind::Input});
    push({.name = "feat.conv",
          .kind = LayerKind::Conv,
          .inputs = {"input"},
          .stride = 1,
          .padding = 6,
          .weight_ref = "feat.conv"});
    push({.name = "feat.relu", .kind = LayerKind::Relu, .inputs = {"feat.conv"}});
    push({.name = "feat.pool",
          .kind = LayerKind::MaxPool,
          .inputs = {"feat.relu"},
          .stride = 8,
          .kernel = 8});
    push({.name = "maps.relu", .kind = LayerKind::Relu, .inputs = {"feat.pool"}});
    push({.name = "head.flatten", .kind = LayerKind::Flatten, .inputs = {"maps.relu"}});
    push({.name = "head.fc",
          .kind = LayerKind::Dense,
          .inputs = {"head.flatten"},
          .weight_ref = "head.fc"});

    // Linear scores over (sum of glyph cells f0, sum of color cells f1):
    // the logo class wins for small positive f0, the repeated class for
    // large f0 (steeper slope, negative bias), the no-logo class on f1.
    Blob fc;
    fc.dims = {3, 128};
    fc.data.assign(3 * 128, 0.0f);
    for (int cell = 0; cell < 64; ++cell) {
        fc.data[static_cast<size_t>(0 * 128 + cell)] = 4.0f;
        fc.data[static_cast<size_t>(0 * 128 + 64 + cell)] = -1.0f;
        fc.data[static_cast<size_t>(1 * 128 + cell)] = 8.0f;
        fc.data[static_cast<size_t>(1 * 128 + 64 + cell)] = -1.0f;
        fc.data[static_cast<size_t>(2 * 128 + cell)] = -1.0f;
        fc.data[static_cast<size_t>(2 * 128 + 64 + cell)] = 4.0f;
    }
    m.weights["head.fc.weight"] = std::move(fc);
    m.weights["head.fc.bias"] = Blob{{3}, {0.0f, -6.0f, 0.0f}};

    validate_model(m);
    return m;
}

}  // namespace elens
