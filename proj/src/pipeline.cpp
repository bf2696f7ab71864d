#include "elens/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "elens/excitation.hpp"
#include "elens/format.hpp"
#include "elens/heatmap.hpp"
#include "elens/ingest.hpp"
#include "elens/model_io.hpp"
#include "elens/parallel.hpp"
#include "elens/synthetic.hpp"

namespace elens {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void ensure_out_dir(const RunConfig& config) {
    if (config.out_dir.empty()) throw ConfigError("output directory not set");
    std::error_code ec;
    fs::create_directories(config.out_dir, ec);
    if (ec) {
        throw IoError("cannot create output directory '" + config.out_dir +
                      "': " + ec.message());
    }
}

void check_common(const RunConfig& config) {
    if (config.model_path.empty()) throw ConfigError("model path not set");
    if (config.manifest_path.empty()) throw ConfigError("manifest path not set");
    if (config.bins < 2) throw ConfigError("bins must be >= 2");
    if (config.alpha <= 0.0) throw ConfigError("alpha must be positive");
    if (config.top_n < 1) throw ConfigError("top_n must be >= 1");
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write '" + p.string() + "'");
    return out;
}

struct LoadedInputs {
    Model model;
    DatasetManifest manifest;
    std::vector<const ManifestEntry*> split;
    std::string target_layer;
};

LoadedInputs load_inputs(const RunConfig& config) {
    LoadedInputs in;
    in.model = load_model(config.model_path);
    in.manifest = load_manifest(config.manifest_path);
    for (const ManifestEntry& e : in.manifest.entries) {
        if (in.model.graph.brand_index(e.brand) < 0) {
            throw DataError("manifest brand '" + e.brand +
                            "' is not a class of the model");
        }
    }
    in.split = in.manifest.split_entries(config.split);
    in.target_layer = config.target_layer.empty() ? in.model.graph.target_layer_default
                                                  : config.target_layer;
    return in;
}

Tensor load_preprocessed(const RunConfig& config, const LoadedInputs& in,
                         const ManifestEntry& entry) {
    const ImageU8 img = load_image(resolve_data_path(config.manifest_path, entry.path));
    return preprocess_image(img, in.model.graph.preprocess, in.model.graph.input_shape);
}

}  // namespace

std::string resolve_data_path(const std::string& manifest_path,
                              const std::string& entry_path) {
    const fs::path p(entry_path);
    if (p.is_absolute()) return entry_path;
    return (fs::path(manifest_path).parent_path() / p).string();
}

std::vector<PredictionRow> run_predict(const RunConfig& config) {
    check_common(config);
    ensure_out_dir(config);
    const LoadedInputs in = load_inputs(config);

    std::vector<PredictionRow> rows(in.split.size());
    parallel_for(static_cast<int64_t>(in.split.size()), resolve_workers(config.workers),
                 [&](int64_t i) {
                     const ManifestEntry& e = *in.split[static_cast<size_t>(i)];
                     const ForwardTrace trace =
                         forward(in.model, load_preprocessed(config, in, e));
                     const BrandId p = predict(in.model.graph, trace);
                     rows[static_cast<size_t>(i)] = PredictionRow{
                         e.image_id, p,
                         static_cast<double>(trace.posterior[static_cast<size_t>(p.index)])};
                 });

    std::ofstream out = open_out(fs::path(config.out_dir) / "predictions.csv");
    out << "image_id,predicted,confidence\n";
    for (const PredictionRow& r : rows) {
        out << r.image_id << ',' << r.predicted.label << ',' << fmt_g(r.confidence)
            << '\n';
    }
    return rows;
}

AttributionBatch run_attribute(const RunConfig& config) {
    check_common(config);
    ensure_out_dir(config);
    const LoadedInputs in = load_inputs(config);

    struct PerImage {
        MapStatistics stats;
        std::vector<double> unit_scores;
        std::string map_record;
    };
    std::vector<PerImage> per_image(in.split.size());

    parallel_for(
        static_cast<int64_t>(in.split.size()), resolve_workers(config.workers),
        [&](int64_t i) {
            const ManifestEntry& e = *in.split[static_cast<size_t>(i)];
            const ForwardTrace trace = forward(in.model, load_preprocessed(config, in, e));
            const BrandId p = predict(in.model.graph, trace);
            const ExcitationMaps maps =
                excitation_backprop(in.model, trace, p.index, in.target_layer, e.image_id);
            PerImage& slot = per_image[static_cast<size_t>(i)];
            slot.stats = compute_map_statistics(maps, p);
            slot.unit_scores = unit_max_scores(maps);
            if (config.dump_maps) {
                std::ostringstream rec(std::ios::binary);
                write_map_record(rec, maps);
                slot.map_record = rec.str();
            }
        });

    AttributionBatch batch;
    batch.target_layer = in.target_layer;
    batch.scores.split = config.split;
    batch.scores.num_units =
        per_image.empty() ? 0 : static_cast<int64_t>(per_image[0].unit_scores.size());
    for (size_t i = 0; i < per_image.size(); ++i) {
        batch.stats.push_back(per_image[i].stats);
        batch.scores.rows.push_back(ScoreMatrix::Row{
            in.split[i]->image_id, in.model.graph.brand_index(in.split[i]->brand)});
        batch.scores.values.insert(batch.scores.values.end(),
                                   per_image[i].unit_scores.begin(),
                                   per_image[i].unit_scores.end());
    }

    {
        std::ofstream out = open_out(fs::path(config.out_dir) / "stats.csv");
        write_stats_csv(out, batch.stats);
    }
    if (config.dump_maps) {
        std::ofstream out = open_out(fs::path(config.out_dir) / "maps.bin");
        for (const PerImage& p : per_image) {
            out.write(p.map_record.data(),
                      static_cast<std::streamsize>(p.map_record.size()));
        }
        if (!out) throw IoError("failed writing maps.bin");
    }
    return batch;
}

namespace {

json summaries_to_json(const BrandSummaryResult& res) {
    json arr = json::array();
    for (const BrandSummary& s : res.summaries) {
        arr.push_back({{"brand_index", s.brand.index},
                       {"brand", s.brand.label},
                       {"n_images", s.n_images},
                       {"median_strength", s.median_strength},
                       {"median_extent", s.median_extent},
                       {"strength_decile", s.strength_decile},
                       {"extent_decile", s.extent_decile}});
    }
    return arr;
}

void write_brand_summaries_csv(std::ostream& out, const BrandSummaryResult& res) {
    out << "brand_index,brand,n_images,median_strength,median_extent,"
           "strength_decile,extent_decile\n";
    for (const BrandSummary& s : res.summaries) {
        out << s.brand.index << ',' << s.brand.label << ',' << s.n_images << ','
            << fmt_g(s.median_strength) << ',' << fmt_g(s.median_extent) << ','
            << s.strength_decile << ',' << s.extent_decile << '\n';
    }
}

struct UnitAnalysis {
    std::map<std::string, std::vector<UnitDiscriminability>> rankings;
    std::vector<int> specialist_counts;
};

UnitAnalysis analyze_units(const RunConfig& config, const ModelGraph& graph,
                           const ScoreMatrix& scores) {
    UnitAnalysis ua;
    std::vector<BrandId> brands;
    for (int b = 0; b < graph.num_classes; ++b) {
        const BrandId brand = graph.brand(b);
        bool present = false;
        for (const ScoreMatrix::Row& r : scores.rows) {
            if (r.brand_index == b) present = true;
        }
        if (!present) continue;  // brand without scored images has no ranking
        brands.push_back(brand);
        ua.rankings[brand.label] = rank_units(scores, brand, config.bins, config.alpha);
    }
    ua.specialist_counts =
        specialist_index(scores, brands, config.top_n, config.bins, config.alpha);
    return ua;
}

}  // namespace

ReportResult run_report(const RunConfig& config) {
    const AttributionBatch batch = run_attribute(config);
    const LoadedInputs in = load_inputs(config);  // reload for graph/labels

    ReportResult result;
    result.summaries = brand_summaries(batch.stats, in.manifest, in.model.graph,
                                       config.group_by_predicted);

    json report;
    report["schema"] = "excitelens-report-v1";
    report["config"] = {{"bins", config.bins},
                        {"alpha", config.alpha},
                        {"top_n", config.top_n},
                        {"target_layer", batch.target_layer},
                        {"split", config.split},
                        {"group_by", config.group_by_predicted ? "predicted" : "label"},
                        {"correlation_encoding", "one_vs_rest"}};
    report["brand_summaries"] = summaries_to_json(result.summaries);
    report["warnings"] = result.summaries.warnings;

    if (!config.annotations_path.empty()) {
        const AnnotationSet ann = load_annotations(config.annotations_path);
        result.correlations = logo_correlation(batch.stats, in.manifest, ann);
        result.has_correlations = true;
        report["correlations"] = {{"strength", result.correlations.strength_r},
                                  {"extent", result.correlations.extent_r}};
        report["group_accuracy"] = result.correlations.accuracy;
        report["prevalence"] = result.correlations.prevalence;
        report["n_correlation_images"] = result.correlations.n_images;
    }

    UnitAnalysis ua = analyze_units(config, in.model.graph, batch.scores);
    result.rankings = std::move(ua.rankings);
    result.specialist_counts = std::move(ua.specialist_counts);

    result.report_json = report.dump(2);
    {
        std::ofstream out = open_out(fs::path(config.out_dir) / "report.json");
        out << result.report_json << '\n';
    }
    {
        std::ofstream out = open_out(fs::path(config.out_dir) / "brand_summaries.csv");
        write_brand_summaries_csv(out, result.summaries);
    }
    {
        std::ofstream out = open_out(fs::path(config.out_dir) / "unit_rankings.csv");
        write_rankings_csv(out, result.rankings);
    }
    {
        std::ofstream out = open_out(fs::path(config.out_dir) / "specialist_counts.csv");
        write_specialist_csv(out, result.specialist_counts);
    }
    return result;
}

void run_units(const RunConfig& config) {
    const AttributionBatch batch = run_attribute(config);
    const LoadedInputs in = load_inputs(config);
    UnitAnalysis ua = analyze_units(config, in.model.graph, batch.scores);

    {
        std::ofstream out = open_out(fs::path(config.out_dir) / "unit_rankings.csv");
        write_rankings_csv(out, ua.rankings);
    }
    {
        std::ofstream out = open_out(fs::path(config.out_dir) / "specialist_counts.csv");
        write_specialist_csv(out, ua.specialist_counts);
    }
    {
        const int m = std::min<int>(config.top_examples,
                                    static_cast<int>(batch.scores.rows.size()));
        json units = json::array();
        for (int u = 0; u < batch.scores.num_units; ++u) {
            units.push_back(
                {{"unit", u}, {"images", top_examples(batch.scores, u, m)}});
        }
        json doc = {{"top_examples", m}, {"units", units}};
        std::ofstream out = open_out(fs::path(config.out_dir) / "top_examples.json");
        out << doc.dump(2) << '\n';
    }
}

void run_heatmap(const RunConfig& config, const std::string& only_image_id) {
    check_common(config);
    ensure_out_dir(config);
    const LoadedInputs in = load_inputs(config);
    std::error_code ec;
    const fs::path dir = fs::path(config.out_dir) / "heatmaps";
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "'");

    std::vector<const ManifestEntry*> entries;
    for (const ManifestEntry* e : in.split) {
        if (only_image_id.empty() || e->image_id == only_image_id) entries.push_back(e);
    }
    if (!only_image_id.empty() && entries.empty()) {
        throw DataError("image_id '" + only_image_id + "' not found in split '" +
                        config.split + "'");
    }

    parallel_for(
        static_cast<int64_t>(entries.size()), resolve_workers(config.workers),
        [&](int64_t i) {
            const ManifestEntry& e = *entries[static_cast<size_t>(i)];
            const ImageU8 original =
                load_image(resolve_data_path(config.manifest_path, e.path));
            const Tensor input = preprocess_image(original, in.model.graph.preprocess,
                                                  in.model.graph.input_shape);
            const ForwardTrace trace = forward(in.model, input);
            const BrandId p = predict(in.model.graph, trace);
            const ExcitationMaps maps =
                excitation_backprop(in.model, trace, p.index, in.target_layer, e.image_id);
            render_heatmap(aggregate_map(maps), original,
                           (dir / (e.image_id + ".ppm")).string(),
                           (dir / (e.image_id + "_overlay.ppm")).string());
        });
}

void run_synth(const RunConfig& config) {
    if (config.out_dir.empty()) throw ConfigError("output directory not set");
    SyntheticConfig sc;
    sc.brands = default_recipes();
    sc.images_per_brand = config.images_per_brand;
    const SyntheticDataset ds = generate_synthetic(sc, config.seed);
    write_synthetic(ds, config.out_dir);
    if (!config.emit_model_path.empty()) {
        save_model(build_template_model(), config.emit_model_path);
    }
}

}  // namespace elens
