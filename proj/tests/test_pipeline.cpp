#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "elens/errors.hpp"
#include "elens/excitation.hpp"
#include "elens/heatmap.hpp"
#include "elens/model_io.hpp"
#include "elens/parallel.hpp"
#include "elens/pipeline.hpp"
#include "elens/synthetic.hpp"
#include "support/oracles.hpp"
#include "support/schema_check.hpp"

using namespace elens;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
    static int counter = 0;
    fs::path p = fs::temp_directory_path() /
                 ("elens_pipeline_test_" + std::to_string(::getpid()) + "_" +
                  std::to_string(counter++));
    fs::create_directories(p);
    return p;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), p.string());
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

std::vector<std::string> file_lines(const fs::path& p) {
    std::istringstream ss(read_file(p));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(ss, line)) lines.push_back(line);
    return lines;
}

// Synthetic dataset + matched template model on disk.
struct Workspace {
    fs::path root;
    std::string manifest;
    std::string annotations;
    std::string model;
};

Workspace make_workspace(int images_per_brand, uint64_t seed) {
    Workspace ws;
    ws.root = tmp_dir();
    RunConfig synth;
    synth.out_dir = (ws.root / "data").string();
    synth.images_per_brand = images_per_brand;
    synth.seed = seed;
    synth.emit_model_path = (ws.root / "template.ebn1").string();
    run_synth(synth);
    ws.manifest = (ws.root / "data" / "manifest.csv").string();
    ws.annotations = (ws.root / "data" / "annotations.csv").string();
    ws.model = ws.root / "template.ebn1";
    return ws;
}

RunConfig base_config(const Workspace& ws, const std::string& out) {
    RunConfig cfg;
    cfg.model_path = ws.model;
    cfg.manifest_path = ws.manifest;
    cfg.annotations_path = ws.annotations;
    cfg.out_dir = out;
    cfg.workers = 2;
    return cfg;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(EXCITELENS_BIN) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("attribute emits consistent statistics and a lossless map dump") {
    const Workspace ws = make_workspace(6, 31);
    RunConfig cfg = base_config(ws, (ws.root / "out").string());
    const AttributionBatch batch = run_attribute(cfg);
    REQUIRE(batch.stats.size() == 18);

    // Every row satisfies strength >= threshold.
    const std::vector<std::string> lines = file_lines(fs::path(cfg.out_dir) / "stats.csv");
    REQUIRE(lines.size() == 19);
    CHECK(lines[0] ==
          "image_id,predicted_brand,strength,extent,threshold,discarded_mass");
    for (size_t i = 1; i < lines.size(); ++i) {
        std::istringstream row(lines[i]);
        std::string id, brand, s, e, t, d;
        std::getline(row, id, ',');
        std::getline(row, brand, ',');
        std::getline(row, s, ',');
        std::getline(row, e, ',');
        std::getline(row, t, ',');
        std::getline(row, d, ',');
        CHECK(std::stod(s) >= std::stod(t));
        CHECK(std::stod(d) >= 0.0);
    }

    // Conservation echo per dumped record, and lossless parse-back.
    std::ifstream dump(fs::path(cfg.out_dir) / "maps.bin", std::ios::binary);
    size_t n_records = 0;
    while (auto rec = read_map_record(dump)) {
        double total = 0.0;
        for (float v : rec->values) {
            CHECK(v >= 0.0f);
            total += v;
        }
        CHECK(total + batch.stats[n_records].discarded_mass ==
              doctest::Approx(1.0).epsilon(1e-5));
        CHECK(rec->image_id == batch.stats[n_records].image_id);
        ++n_records;
    }
    CHECK(n_records == batch.stats.size());

    // Recompute one image end to end and compare against the dump bit for bit.
    const Model model = load_model(ws.model);
    const DatasetManifest manifest = load_manifest(ws.manifest);
    const ManifestEntry& e0 = manifest.entries[0];
    const ImageU8 img = load_image(resolve_data_path(ws.manifest, e0.path));
    const ForwardTrace trace =
        forward(model, preprocess_image(img, model.graph.preprocess,
                                        model.graph.input_shape));
    const BrandId pred = predict(model.graph, trace);
    const ExcitationMaps maps = excitation_backprop(
        model, trace, pred.index, model.graph.target_layer_default, e0.image_id);
    std::ifstream dump2(fs::path(cfg.out_dir) / "maps.bin", std::ios::binary);
    const auto rec0 = read_map_record(dump2);
    REQUIRE(rec0.has_value());
    CHECK(rec0->values == maps.values);
}

TEST_CASE("predict on an empty split emits a header-only CSV") {
    const Workspace ws = make_workspace(3, 5);
    RunConfig cfg = base_config(ws, (ws.root / "out").string());
    cfg.split = "train";  // the synthetic dataset is all test
    const auto rows = run_predict(cfg);
    CHECK(rows.empty());
    const std::vector<std::string> lines =
        file_lines(fs::path(cfg.out_dir) / "predictions.csv");
    REQUIRE(lines.size() == 1);
    CHECK(lines[0] == "image_id,predicted,confidence");
}

TEST_CASE("template model predicts the generating brand on the fixture set") {
    const Workspace ws = make_workspace(8, 17);
    RunConfig cfg = base_config(ws, (ws.root / "out").string());
    const auto rows = run_predict(cfg);
    const DatasetManifest manifest = load_manifest(ws.manifest);
    REQUIRE(rows.size() == manifest.entries.size());
    int correct = 0;
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].predicted.label == manifest.entries[i].brand) ++correct;
    }
    // The matched filters should classify nearly everything correctly.
    CHECK(correct >= static_cast<int>(rows.size()) - 1);
}

TEST_CASE("report validates against the shipped schema and matches recomputation") {
    const Workspace ws = make_workspace(8, 23);
    RunConfig cfg = base_config(ws, (ws.root / "out").string());
    const ReportResult res = run_report(cfg);

    const nlohmann::json report = nlohmann::json::parse(res.report_json);
    const nlohmann::json schema = nlohmann::json::parse(
        read_file(fs::path(ELENS_SCHEMA_DIR) / "report.schema.json"));
    const std::vector<std::string> errors = oracle::schema_errors(schema, report);
    for (const std::string& e : errors) MESSAGE(e);
    CHECK(errors.empty());

    CHECK(report["brand_summaries"].size() == 3);
    CHECK(report.contains("correlations"));
    CHECK(report["correlations"]["strength"].size() == 3);
    CHECK(report["group_accuracy"].size() == 3);

    // unit_rankings.csv must equal an independent recomputation.
    const AttributionBatch batch = run_attribute(
        [&] {
            RunConfig c = cfg;
            c.out_dir = (ws.root / "out2").string();
            return c;
        }());
    const Model model = load_model(ws.model);
    std::vector<std::string> expected_lines{"brand,rank,unit,d_value"};
    for (const std::string& label : {std::string("crestmark"), std::string("driftfield"),
                                     std::string("tilemark")}) {
        const BrandId brand = model.graph.brand(model.graph.brand_index(label));
        const auto ranked = rank_units(batch.scores, brand, cfg.bins, cfg.alpha);
        for (size_t r = 0; r < ranked.size(); ++r) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%s,%zu,%d,%.10g", label.c_str(), r + 1,
                          ranked[r].unit, ranked[r].d_value);
            expected_lines.push_back(buf);
        }
    }
    CHECK(file_lines(fs::path(cfg.out_dir) / "unit_rankings.csv") == expected_lines);
}

TEST_CASE("units command writes rankings, specialists and top examples") {
    const Workspace ws = make_workspace(5, 77);
    RunConfig cfg = base_config(ws, (ws.root / "out").string());
    cfg.top_n = 1;
    cfg.top_examples = 3;
    run_units(cfg);

    const auto spec_lines = file_lines(fs::path(cfg.out_dir) / "specialist_counts.csv");
    REQUIRE(spec_lines.size() == 3);  // header + 2 units
    CHECK(spec_lines[0] == "unit,count");

    const nlohmann::json top = nlohmann::json::parse(
        read_file(fs::path(cfg.out_dir) / "top_examples.json"));
    CHECK(top["units"].size() == 2);
    CHECK(top["units"][0]["images"].size() == 3);
}

TEST_CASE("pipeline output is byte-identical across runs and worker counts") {
    const Workspace ws = make_workspace(6, 41);
    const std::vector<std::string> files{"predictions.csv", "stats.csv",
                                         "maps.bin",        "report.json",
                                         "brand_summaries.csv", "unit_rankings.csv",
                                         "specialist_counts.csv"};

    auto run_all = [&](const std::string& out, int workers) {
        RunConfig cfg = base_config(ws, out);
        cfg.workers = workers;
        run_predict(cfg);
        run_report(cfg);
    };
    run_all((ws.root / "r1").string(), 1);
    run_all((ws.root / "r2").string(), 3);
    run_all((ws.root / "r3").string(), 3);

    for (const std::string& f : files) {
        const std::string a = read_file(ws.root / "r1" / f);
        const std::string b = read_file(ws.root / "r2" / f);
        const std::string c = read_file(ws.root / "r3" / f);
        CHECK_MESSAGE(a == b, f);
        CHECK_MESSAGE(b == c, f);
    }

    // Regenerating the dataset itself is also byte-stable.
    RunConfig synth;
    synth.out_dir = (ws.root / "data_again").string();
    synth.images_per_brand = 6;
    synth.seed = 41;
    run_synth(synth);
    CHECK(read_file(ws.root / "data" / "manifest.csv") ==
          read_file(ws.root / "data_again" / "manifest.csv"));
    CHECK(read_file(ws.root / "data" / "images" / "crestmark_0002.ppm") ==
          read_file(ws.root / "data_again" / "images" / "crestmark_0002.ppm"));
}

TEST_CASE("heatmaps render normalized maps with bilinear upsampling") {
    const fs::path dir = tmp_dir();
    ImageU8 original;
    original.width = 32;
    original.height = 32;
    original.rgb.assign(32 * 32 * 3, 100);

    SUBCASE("constant map renders black") {
        const Tensor agg(Shape4{1, 1, 4, 4}, std::vector<float>(16, 0.4f));
        render_heatmap(agg, original, (dir / "h.ppm").string());
        const ImageU8 heat = read_ppm((dir / "h.ppm").string());
        for (uint8_t b : heat.rgb) CHECK(b == 0);
    }
    SUBCASE("one-hot map peaks at the upsampled location") {
        std::vector<float> v(16, 0.0f);
        v[1 * 4 + 2] = 1.0f;  // map position (y=1, x=2)
        const Tensor agg(Shape4{1, 1, 4, 4}, v);
        render_heatmap(agg, original, (dir / "h.ppm").string(),
                       (dir / "o.ppm").string());
        const ImageU8 heat = read_ppm((dir / "h.ppm").string());
        int best = 0;
        for (int i = 1; i < 32 * 32; ++i) {
            if (heat.rgb[static_cast<size_t>(3 * i)] >
                heat.rgb[static_cast<size_t>(3 * best)]) {
                best = i;
            }
        }
        const int by = best / 32, bx = best % 32;
        // Map cell (1,2) lands near (1.5*8-0.5, 2.5*8-0.5) = (11.5, 19.5).
        CHECK(by >= 11);
        CHECK(by <= 12);
        CHECK(bx >= 19);
        CHECK(bx <= 20);
        CHECK(heat.rgb[static_cast<size_t>(3 * best)] == 255);

        const ImageU8 overlay = read_ppm((dir / "o.ppm").string());
        CHECK(overlay.rgb[static_cast<size_t>(3 * best)] ==
              (100 + 255) / 2);
    }
}

TEST_CASE("run_heatmap writes gray and overlay files per image") {
    const Workspace ws = make_workspace(2, 3);
    RunConfig cfg = base_config(ws, (ws.root / "out").string());
    run_heatmap(cfg, "crestmark_0001");
    CHECK(fs::exists(fs::path(cfg.out_dir) / "heatmaps" / "crestmark_0001.ppm"));
    CHECK(fs::exists(fs::path(cfg.out_dir) / "heatmaps" / "crestmark_0001_overlay.ppm"));
    CHECK_THROWS_AS(run_heatmap(cfg, "missing_id"), DataError);
}

TEST_CASE("worker resolution honors the environment cap") {
    unsetenv("EXCITE_LENS_THREADS");
    CHECK(resolve_workers(4) == 4);
    setenv("EXCITE_LENS_THREADS", "2", 1);
    CHECK(resolve_workers(4) == 2);
    CHECK(resolve_workers(1) == 1);
    setenv("EXCITE_LENS_THREADS", "banana", 1);
    CHECK_THROWS_AS(resolve_workers(4), ConfigError);
    setenv("EXCITE_LENS_THREADS", "0", 1);
    CHECK_THROWS_AS(resolve_workers(4), ConfigError);
    unsetenv("EXCITE_LENS_THREADS");
}

TEST_CASE("parallel_for covers every index exactly once and rethrows") {
    std::vector<int> hits(257, 0);
    parallel_for(257, 3, [&](int64_t i) { hits[static_cast<size_t>(i)]++; });
    for (int h : hits) CHECK(h == 1);
    CHECK_THROWS_AS(
        parallel_for(10, 4,
                     [](int64_t i) {
                         if (i == 7) throw DataError("boom");
                     }),
        DataError);
}

TEST_CASE("config validation rejects bad values") {
    RunConfig cfg;
    cfg.model_path = "m";
    cfg.manifest_path = "x";
    cfg.out_dir = "y";
    cfg.bins = 1;
    CHECK_THROWS_AS(run_predict(cfg), ConfigError);
    cfg.bins = 32;
    cfg.alpha = 0.0;
    CHECK_THROWS_AS(run_predict(cfg), ConfigError);
    cfg.alpha = 1e-6;
    cfg.model_path.clear();
    CHECK_THROWS_AS(run_predict(cfg), ConfigError);
}

TEST_CASE("cli exit codes distinguish config, data and io failures") {
    const Workspace ws = make_workspace(2, 9);
    const fs::path out = ws.root / "cli_out";

    CHECK(run_cli("predict --model " + ws.model) == 2);  // missing required flags
    CHECK(run_cli("--kernel-backend turbo predict --model m --manifest x --out y") == 2);
    CHECK(run_cli("predict --model " + std::string(ws.root / "absent.ebn1") +
                  " --manifest " + ws.manifest + " --out " + out.string()) == 4);

    // Valid model, malformed manifest -> data error.
    const fs::path bad_manifest = ws.root / "bad.csv";
    std::ofstream(bad_manifest) << "image_id,path,brand,split\na,x,acme,nope\n";
    CHECK(run_cli("predict --model " + ws.model + " --manifest " +
                  bad_manifest.string() + " --out " + out.string()) == 3);

    CHECK(run_cli("predict --model " + ws.model + " --manifest " + ws.manifest +
                  " --out " + out.string()) == 0);
    CHECK(fs::exists(out / "predictions.csv"));

    // Config file + flag override.
    const fs::path cfg_file = ws.root / "run.cfg";
    std::ofstream(cfg_file) << "[predict]\nmodel=" << ws.model
                            << "\nmanifest=" << ws.manifest
                            << "\nout=" << (ws.root / "cfg_out").string() << "\n";
    CHECK(run_cli("predict --config " + cfg_file.string()) == 0);
    CHECK(fs::exists(ws.root / "cfg_out" / "predictions.csv"));
}
