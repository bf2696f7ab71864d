#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "elens/analysis.hpp"
#include "elens/discriminability.hpp"
#include "elens/metrics.hpp"
#include "elens/model.hpp"

namespace elens {

struct RunConfig {
    std::string model_path;
    std::string manifest_path;
    std::string annotations_path;  // optional
    std::string out_dir;
    std::string target_layer;  // empty = model default
    std::string split = "test";
    int bins = 32;
    double alpha = 1e-6;
    int top_n = 10;
    int top_examples = 5;
    uint64_t seed = 7;
    int workers = 0;  // 0 = hardware concurrency
    bool group_by_predicted = false;
    bool dump_maps = true;
    // synth
    int images_per_brand = 300;
    std::string emit_model_path;  // optional template-model output
};

struct PredictionRow {
    std::string image_id;
    BrandId predicted;
    double confidence = 0.0;
};

// Forward + argmax over the manifest split; writes predictions.csv.
std::vector<PredictionRow> run_predict(const RunConfig& config);

struct AttributionBatch {
    std::vector<MapStatistics> stats;  // manifest order
    ScoreMatrix scores;
    std::string target_layer;
};

// Forward + excitation backprop + map statistics for every image of the
// split; writes stats.csv and (when enabled) the maps.bin dump.
AttributionBatch run_attribute(const RunConfig& config);

struct ReportResult {
    BrandSummaryResult summaries;
    bool has_correlations = false;
    CorrelationReport correlations;
    std::map<std::string, std::vector<UnitDiscriminability>> rankings;
    std::vector<int> specialist_counts;
    std::string report_json;  // what was written to report.json
};

// Composes attribution, brand-level analysis and unit discriminability;
// writes report.json, brand_summaries.csv, unit_rankings.csv and
// specialist_counts.csv.
ReportResult run_report(const RunConfig& config);

// Unit rankings, specialist counts and per-unit top examples; writes
// unit_rankings.csv, specialist_counts.csv and top_examples.json.
void run_units(const RunConfig& config);

// Grayscale + overlay heatmaps for the split (or a single id when set).
void run_heatmap(const RunConfig& config, const std::string& only_image_id = {});

// Synthetic dataset generation; optionally also writes the matched
// template model.
void run_synth(const RunConfig& config);

// Manifest image paths resolve relative to the manifest file's directory.
std::string resolve_data_path(const std::string& manifest_path,
                              const std::string& entry_path);

}  // namespace elens
