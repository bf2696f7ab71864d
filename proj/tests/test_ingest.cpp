#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "elens/errors.hpp"
#include "elens/ingest.hpp"
#include "elens/rng.hpp"
#include "elens/synthetic.hpp"
#include "support/oracles.hpp"

using namespace elens;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
    static int counter = 0;
    fs::path p = fs::temp_directory_path() /
                 ("elens_ingest_test_" + std::to_string(::getpid()) + "_" +
                  std::to_string(counter++));
    fs::create_directories(p);
    return p;
}

fs::path write_text(const fs::path& dir, const std::string& name,
                    const std::string& content) {
    const fs::path p = dir / name;
    std::ofstream out(p, std::ios::binary);
    out << content;
    return p;
}

ImageU8 random_image(int w, int h, uint64_t seed) {
    ImageU8 img;
    img.width = w;
    img.height = h;
    img.rgb.resize(static_cast<size_t>(w) * h * 3);
    SplitMix64 rng(seed);
    for (uint8_t& b : img.rgb) b = static_cast<uint8_t>(rng.below(256));
    return img;
}

}  // namespace

TEST_CASE("manifest loads rows in file order") {
    const fs::path dir = tmp_dir();
    const fs::path p = write_text(dir, "m.csv",
                                  "image_id,path,brand,split\n"
                                  "a,im/a.ppm,acme,TEST\n"
                                  "b,im/b.ppm,acme,train\n"
                                  "c,im/c.ppm,zorg,test\n");
    const DatasetManifest m = load_manifest(p.string());
    REQUIRE(m.entries.size() == 3);
    CHECK(m.entries[0].image_id == "a");
    CHECK(m.entries[0].split == "test");  // case-insensitive token
    CHECK(m.entries[1].split == "train");
    CHECK(m.entries[2].brand == "zorg");
    CHECK(m.split_entries("test").size() == 2);
}

TEST_CASE("manifest errors carry line numbers") {
    const fs::path dir = tmp_dir();
    SUBCASE("duplicate id") {
        const fs::path p = write_text(dir, "m.csv",
                                      "image_id,path,brand,split\n"
                                      "a,x,acme,test\n"
                                      "a,y,acme,test\n");
        CHECK_THROWS_WITH_AS(load_manifest(p.string()), doctest::Contains("line 3"),
                             DataError);
    }
    SUBCASE("unknown split") {
        const fs::path p = write_text(dir, "m.csv",
                                      "image_id,path,brand,split\n"
                                      "a,x,acme,validation\n");
        CHECK_THROWS_WITH_AS(load_manifest(p.string()), doctest::Contains("line 2"),
                             DataError);
    }
    SUBCASE("wrong header") {
        const fs::path p = write_text(dir, "m.csv", "id,path,brand,split\na,x,y,test\n");
        CHECK_THROWS_AS(load_manifest(p.string()), DataError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_manifest((dir / "nope.csv").string()), IoError);
    }
}

TEST_CASE("annotations accept case-insensitive groups and reject unknown ones") {
    const fs::path dir = tmp_dir();
    const fs::path good = write_text(dir, "a.csv",
                                     "image_id,group,annotators\n"
                                     "a,LOGO,5\n"
                                     "b,repeated_logo,5\n"
                                     "c,No_Logo,4\n");
    const AnnotationSet ann = load_annotations(good.string());
    CHECK(ann.by_image.at("a").group == VisibilityGroup::Logo);
    CHECK(ann.by_image.at("b").group == VisibilityGroup::RepeatedLogo);
    CHECK(ann.by_image.at("c").group == VisibilityGroup::NoLogo);
    CHECK(ann.by_image.at("c").annotators == 4);

    const fs::path bad = write_text(dir, "b.csv",
                                    "image_id,group,annotators\n"
                                    "a,logo,5\n"
                                    "b,sticker,5\n");
    CHECK_THROWS_WITH_AS(load_annotations(bad.string()), doctest::Contains("line 3"),
                         DataError);

    const fs::path dup = write_text(dir, "c.csv",
                                    "image_id,group,annotators\n"
                                    "a,logo,5\n"
                                    "a,no_logo,5\n");
    CHECK_THROWS_AS(load_annotations(dup.string()), DataError);
}

TEST_CASE("annotation ids must be a subset of manifest ids") {
    const fs::path dir = tmp_dir();
    const DatasetManifest m = load_manifest(
        write_text(dir, "m.csv", "image_id,path,brand,split\na,x,acme,test\n").string());
    AnnotationSet ann;
    ann.by_image["a"] = {VisibilityGroup::Logo, 5};
    CHECK_NOTHROW(check_annotations_cover(ann, m));
    ann.by_image["ghost"] = {VisibilityGroup::Logo, 5};
    CHECK_THROWS_WITH_AS(check_annotations_cover(ann, m), doctest::Contains("ghost"),
                         DataError);
}

TEST_CASE("ppm round-trips bit-exactly") {
    const fs::path dir = tmp_dir();
    const ImageU8 img = random_image(13, 9, 5);
    const std::string p1 = (dir / "a.ppm").string();
    write_ppm(p1, img);
    const ImageU8 back = read_ppm(p1);
    CHECK(back.width == 13);
    CHECK(back.height == 9);
    CHECK(back.rgb == img.rgb);

    const std::string p2 = (dir / "b.ppm").string();
    write_ppm(p2, back);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), {});
    const std::string b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);
}

TEST_CASE("ppm reader accepts comments and rejects corruption") {
    const fs::path dir = tmp_dir();
    SUBCASE("comment in header") {
        std::string data = "P6\n# a comment\n2 1\n255\n";
        data += std::string("\x01\x02\x03\x04\x05\x06", 6);
        write_text(dir, "ok.ppm", data);
        const ImageU8 img = read_ppm((dir / "ok.ppm").string());
        CHECK(img.width == 2);
        CHECK(img.rgb[5] == 6);
    }
    SUBCASE("wrong magic") {
        write_text(dir, "p5.ppm", "P5\n2 1\n255\n\x01\x02");
        CHECK_THROWS_WITH_AS(read_ppm((dir / "p5.ppm").string()),
                             doctest::Contains("P6"), DataError);
    }
    SUBCASE("truncated pixels") {
        write_text(dir, "t.ppm", "P6\n4 4\n255\nxx");
        CHECK_THROWS_WITH_AS(read_ppm((dir / "t.ppm").string()),
                             doctest::Contains("truncated"), DataError);
    }
    SUBCASE("garbage header") {
        write_text(dir, "g.ppm", "P6\nxy z\n255\n");
        CHECK_THROWS_AS(read_ppm((dir / "g.ppm").string()), DataError);
    }
    SUBCASE("unsupported extension") {
        write_text(dir, "img.png", "\x89PNG");
        CHECK_THROWS_WITH_AS(load_image((dir / "img.png").string()),
                             doctest::Contains("unsupported image format"), DataError);
    }
}

TEST_CASE("preprocess maps pixels equal to the channel mean to zero") {
    ImageU8 img;
    img.width = 8;
    img.height = 8;
    img.rgb.assign(8 * 8 * 3, 102);
    Preprocess pre;
    pre.mean = {102.0f / 255.0f, 102.0f / 255.0f, 102.0f / 255.0f};
    pre.std = {0.5f, 0.5f, 0.5f};
    const Tensor t = preprocess_image(img, pre, {3, 8, 8});
    for (float v : t.data()) CHECK(v == 0.0f);
}

TEST_CASE("downscaling a 2x nearest-upsampled image reproduces the original") {
    SplitMix64 rng(3);
    Tensor orig(Shape4{1, 3, 6, 8});
    for (float& v : orig.data()) v = rng.uniform();
    Tensor up(Shape4{1, 3, 12, 16});
    for (int64_t c = 0; c < 3; ++c) {
        for (int64_t y = 0; y < 12; ++y) {
            for (int64_t x = 0; x < 16; ++x) {
                up.at(0, c, y, x) = orig.at(0, c, y / 2, x / 2);
            }
        }
    }
    const Tensor back = bilinear_resize(up, 6, 8);
    for (int64_t i = 0; i < orig.numel(); ++i) {
        CHECK(std::abs(back.data()[i] - orig.data()[i]) <= 1.0f / 255.0f);
    }
}

TEST_CASE("bilinear resize matches the sampling oracle") {
    SplitMix64 rng(15);
    Tensor src(Shape4{1, 2, 7, 5});
    for (float& v : src.data()) v = rng.uniform();
    for (auto [oh, ow] : {std::pair{14, 10}, {3, 4}, {7, 5}, {11, 2}}) {
        const Tensor out = bilinear_resize(src, oh, ow);
        const double sy = 7.0 / oh;
        const double sx = 5.0 / ow;
        for (int64_t c = 0; c < 2; ++c) {
            for (int64_t y = 0; y < oh; ++y) {
                for (int64_t x = 0; x < ow; ++x) {
                    const double want = oracle::bilinear_sample(
                        src, 0, c, (y + 0.5) * sy - 0.5, (x + 0.5) * sx - 0.5);
                    CHECK(out.at(0, c, y, x) == doctest::Approx(want).epsilon(1e-5));
                }
            }
        }
    }
}

TEST_CASE("synthetic generation is a pure function of config and seed") {
    SyntheticConfig sc;
    sc.brands = default_recipes();
    sc.images_per_brand = 6;
    const SyntheticDataset a = generate_synthetic(sc, 99);
    const SyntheticDataset b = generate_synthetic(sc, 99);
    const SyntheticDataset c = generate_synthetic(sc, 100);

    REQUIRE(a.images.size() == 18);
    for (size_t i = 0; i < a.images.size(); ++i) {
        CHECK(a.images[i].rgb == b.images[i].rgb);
        CHECK(a.manifest.entries[i].image_id == b.manifest.entries[i].image_id);
    }
    bool any_diff = false;
    for (size_t i = 0; i < a.images.size(); ++i) {
        if (a.images[i].rgb != c.images[i].rgb) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("recipes draw the advertised number of glyphs") {
    SyntheticConfig sc;
    sc.brands = default_recipes();
    sc.images_per_brand = 8;
    const SyntheticDataset ds = generate_synthetic(sc, 7);
    for (size_t i = 0; i < ds.images.size(); ++i) {
        const ManifestEntry& e = ds.manifest.entries[i];
        const int matches = oracle::count_glyph_matches(ds.images[i], glyph_mask(), 18);
        const Annotation& ann = ds.annotations.by_image.at(e.image_id);
        if (ann.group == VisibilityGroup::Logo) {
            CHECK(matches == 1);
        } else if (ann.group == VisibilityGroup::RepeatedLogo) {
            CHECK(matches == 25);
        } else {
            CHECK(matches == 0);
        }
    }
}

TEST_CASE("annotation groups equal the recipe families") {
    SyntheticConfig sc;
    sc.brands = default_recipes();
    sc.images_per_brand = 5;
    const SyntheticDataset ds = generate_synthetic(sc, 21);
    for (const ManifestEntry& e : ds.manifest.entries) {
        const VisibilityGroup want = e.brand == "crestmark" ? VisibilityGroup::Logo
                                     : e.brand == "tilemark"
                                         ? VisibilityGroup::RepeatedLogo
                                         : VisibilityGroup::NoLogo;
        CHECK(ds.annotations.by_image.at(e.image_id).group == want);
        CHECK(e.split == "test");
    }
}

TEST_CASE("written synthetic datasets load back consistently") {
    const fs::path dir = tmp_dir();
    SyntheticConfig sc;
    sc.brands = default_recipes();
    sc.images_per_brand = 3;
    const SyntheticDataset ds = generate_synthetic(sc, 5);
    write_synthetic(ds, dir.string());

    const DatasetManifest m = load_manifest((dir / "manifest.csv").string());
    const AnnotationSet ann = load_annotations((dir / "annotations.csv").string());
    CHECK(m.entries.size() == ds.manifest.entries.size());
    CHECK_NOTHROW(check_annotations_cover(ann, m));
    for (size_t i = 0; i < m.entries.size(); ++i) {
        const ImageU8 img = read_ppm((dir / m.entries[i].path).string());
        CHECK(img.rgb == ds.images[i].rgb);
    }
}
