// excitelens - top-down excitation attribution and brand-analysis CLI.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 I/O error.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "elens/errors.hpp"
#include "elens/kernels.hpp"
#include "elens/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitIo = 4;

void add_common_options(CLI::App* cmd, elens::RunConfig& config,
                        bool needs_model = true) {
    if (needs_model) {
        cmd->add_option("--model", config.model_path, "EBN1 model file")->required();
        cmd->add_option("--manifest", config.manifest_path, "dataset manifest CSV")
            ->required();
        cmd->add_option("--split", config.split, "manifest split to process")
            ->default_val("test");
        cmd->add_option("--target-layer", config.target_layer,
                        "attribution layer (default: the model's)");
    }
    cmd->add_option("--out", config.out_dir, "output directory")->required();
    cmd->add_option("--workers", config.workers,
                    "worker threads (0 = all cores; EXCITE_LENS_THREADS caps)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"top-down excitation attribution over small conv nets"};
    app.require_subcommand(1);

    elens::RunConfig config;
    std::string heatmap_image_id;
    std::string backend;

    app.add_option("--kernel-backend", backend, "force a kernel backend")
        ->check(CLI::IsMember({"scalar", "avx2"}));
    app.fallthrough();
    app.set_config("--config", "",
                   "INI config file; keys live in a [subcommand] section and "
                   "command-line flags override them");

    CLI::App* predict = app.add_subcommand("predict", "classify the split");
    add_common_options(predict, config);

    CLI::App* attribute =
        app.add_subcommand("attribute", "excitation maps + strength/extent");
    add_common_options(attribute, config);
    attribute->add_flag("--no-map-dump", "skip writing maps.bin");

    CLI::App* report = app.add_subcommand(
        "report", "brand summaries, correlations and unit rankings");
    add_common_options(report, config);
    report->add_option("--annotations", config.annotations_path,
                       "logo-visibility annotations CSV");
    report->add_option("--bins", config.bins, "histogram bins")->default_val(32);
    report->add_option("--alpha", config.alpha, "histogram smoothing")
        ->default_val(1e-6);
    report->add_option("--top-n", config.top_n, "top-N for specialist counting")
        ->default_val(10);
    report->add_flag("--group-by-predicted", config.group_by_predicted,
                     "aggregate brand summaries by predicted brand");

    CLI::App* units =
        app.add_subcommand("units", "unit rankings, specialists, top examples");
    add_common_options(units, config);
    units->add_option("--bins", config.bins, "histogram bins")->default_val(32);
    units->add_option("--alpha", config.alpha, "histogram smoothing")
        ->default_val(1e-6);
    units->add_option("--top-n", config.top_n, "top-N for specialist counting")
        ->default_val(10);
    units->add_option("--top-examples", config.top_examples,
                      "images listed per unit")
        ->default_val(5);

    CLI::App* heatmap = app.add_subcommand("heatmap", "render aggregate-map heatmaps");
    add_common_options(heatmap, config);
    heatmap->add_option("--image-id", heatmap_image_id, "render one image only");

    CLI::App* synth = app.add_subcommand("synth", "generate the synthetic dataset");
    add_common_options(synth, config, /*needs_model=*/false);
    synth->add_option("--images-per-brand", config.images_per_brand,
                      "images generated per brand")
        ->default_val(300);
    synth->add_option("--seed", config.seed, "generator seed")->default_val(7);
    synth->add_option("--emit-model", config.emit_model_path,
                      "also write the matched template model here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (!backend.empty()) {
            const auto want = backend == "avx2" ? elens::kernels::Backend::Avx2
                                                : elens::kernels::Backend::Scalar;
            if (!elens::kernels::set_backend(want)) {
                throw elens::ConfigError("kernel backend '" + backend +
                                         "' is not available on this CPU");
            }
        }
        if (predict->parsed()) {
            run_predict(config);
        } else if (attribute->parsed()) {
            config.dump_maps = attribute->count("--no-map-dump") == 0;
            run_attribute(config);
        } else if (report->parsed()) {
            run_report(config);
        } else if (units->parsed()) {
            run_units(config);
        } else if (heatmap->parsed()) {
            run_heatmap(config, heatmap_image_id);
        } else if (synth->parsed()) {
            run_synth(config);
        }
    } catch (const elens::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const elens::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const elens::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
