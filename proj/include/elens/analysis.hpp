#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "elens/ingest.hpp"
#include "elens/metrics.hpp"
#include "elens/model.hpp"

namespace elens {

struct BrandSummary {
    BrandId brand;
    int n_images = 0;
    double median_strength = 0.0;
    double median_extent = 0.0;
    int strength_decile = 0;  // 1..10, 10 = highest median
    int extent_decile = 0;
};

struct BrandSummaryResult {
    std::vector<BrandSummary> summaries;  // ordered by brand index
    std::vector<std::string> warnings;    // brands skipped for lack of images
};

// Medians of strength/extent per brand over the supplied per-image
// statistics, grouped by the manifest (ground-truth) brand, or by the
// predicted brand when group_by_predicted is set. Even-length medians
// average the two middle values. Deciles split the ascending median ranking
// into 10 as-equal-as-possible contiguous groups, remainders going to the
// lower deciles.
BrandSummaryResult brand_summaries(std::span<const MapStatistics> stats,
                                   const DatasetManifest& manifest,
                                   const ModelGraph& graph,
                                   bool group_by_predicted = false);

// Sample Pearson correlation. Throws DataError when fewer than two pairs or
// when either input is constant (undefined correlation).
double pearson(std::span<const double> x, std::span<const double> y);

struct CorrelationReport {
    // Keyed by visibility group name.
    std::map<std::string, double> strength_r;
    std::map<std::string, double> extent_r;
    std::map<std::string, double> accuracy;
    std::map<std::string, double> prevalence;
    int n_images = 0;
};

// One-vs-rest Pearson correlation of each visibility group's indicator
// against strength and extent over the annotated+scored overlap, plus
// per-group classifier accuracy and prevalence.
CorrelationReport logo_correlation(std::span<const MapStatistics> stats,
                                   const DatasetManifest& manifest,
                                   const AnnotationSet& annotations);

// Fraction of each group's images whose predicted brand matches the
// manifest brand.
std::map<std::string, double> group_accuracy(
    const std::map<std::string, BrandId>& predictions,
    const DatasetManifest& manifest, const AnnotationSet& annotations);

double median(std::vector<double> values);

}  // namespace elens
