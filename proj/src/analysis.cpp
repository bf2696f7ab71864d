#include "elens/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "elens/errors.hpp"

namespace elens {

double median(std::vector<double> values) {
    if (values.empty()) throw DataError("median of empty set");
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

// Ascending ranks -> deciles 1..10, as equal as possible, remainders to the
// lower deciles.
std::vector<int> decile_of_rank(size_t count) {
    std::vector<int> decile(count, 0);
    const size_t base = count / 10;
    const size_t remainder = count % 10;
    size_t rank = 0;
    for (int d = 1; d <= 10; ++d) {
        const size_t size = base + (static_cast<size_t>(d) <= remainder ? 1 : 0);
        for (size_t i = 0; i < size && rank < count; ++i, ++rank) {
            decile[rank] = d;
        }
    }
    return decile;
}

void assign_deciles(std::vector<BrandSummary>& summaries, bool use_strength) {
    std::vector<size_t> order(summaries.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        const double va = use_strength ? summaries[a].median_strength
                                       : summaries[a].median_extent;
        const double vb = use_strength ? summaries[b].median_strength
                                       : summaries[b].median_extent;
        if (va != vb) return va < vb;
        return summaries[a].brand.index < summaries[b].brand.index;
    });
    const std::vector<int> deciles = decile_of_rank(order.size());
    for (size_t rank = 0; rank < order.size(); ++rank) {
        if (use_strength) {
            summaries[order[rank]].strength_decile = deciles[rank];
        } else {
            summaries[order[rank]].extent_decile = deciles[rank];
        }
    }
}

}  // namespace

BrandSummaryResult brand_summaries(std::span<const MapStatistics> stats,
                                   const DatasetManifest& manifest,
                                   const ModelGraph& graph,
                                   bool group_by_predicted) {
    std::map<std::string, std::string> brand_of_image;
    for (const ManifestEntry& e : manifest.entries) {
        brand_of_image[e.image_id] = e.brand;
    }

    std::vector<std::vector<double>> strengths(static_cast<size_t>(graph.num_classes));
    std::vector<std::vector<double>> extents(static_cast<size_t>(graph.num_classes));
    for (const MapStatistics& s : stats) {
        int idx;
        if (group_by_predicted) {
            idx = s.brand_predicted.index;
        } else {
            auto it = brand_of_image.find(s.image_id);
            if (it == brand_of_image.end()) {
                throw DataError("statistics for image '" + s.image_id +
                                "' missing from the manifest");
            }
            idx = graph.brand_index(it->second);
            if (idx < 0) {
                throw DataError("manifest brand '" + it->second +
                                "' is not a class of the model");
            }
        }
        strengths[static_cast<size_t>(idx)].push_back(s.strength);
        extents[static_cast<size_t>(idx)].push_back(s.extent);
    }

    BrandSummaryResult result;
    for (int b = 0; b < graph.num_classes; ++b) {
        const auto& sv = strengths[static_cast<size_t>(b)];
        if (sv.empty()) {
            result.warnings.push_back("brand '" + graph.labels[static_cast<size_t>(b)] +
                                      "' has no scored test images; omitted");
            continue;
        }
        BrandSummary sum;
        sum.brand = graph.brand(b);
        sum.n_images = static_cast<int>(sv.size());
        sum.median_strength = median(sv);
        sum.median_extent = median(extents[static_cast<size_t>(b)]);
        result.summaries.push_back(std::move(sum));
    }
    assign_deciles(result.summaries, true);
    assign_deciles(result.summaries, false);
    return result;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw DataError("pearson inputs have different lengths");
    }
    const size_t n = x.size();
    if (n < 2) throw DataError("undefined correlation: fewer than 2 samples");
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw DataError("undefined correlation: constant input");
    }
    return sxy / std::sqrt(sxx * syy);
}

CorrelationReport logo_correlation(std::span<const MapStatistics> stats,
                                   const DatasetManifest& manifest,
                                   const AnnotationSet& annotations) {
    check_annotations_cover(annotations, manifest);
    std::map<std::string, std::string> brand_of_image;
    for (const ManifestEntry& e : manifest.entries) {
        brand_of_image[e.image_id] = e.brand;
    }

    // Overlap of annotated and scored images, in stats (manifest) order.
    std::vector<const MapStatistics*> rows;
    std::vector<VisibilityGroup> groups;
    for (const MapStatistics& s : stats) {
        auto it = annotations.by_image.find(s.image_id);
        if (it == annotations.by_image.end()) continue;
        rows.push_back(&s);
        groups.push_back(it->second.group);
    }
    if (rows.size() < 2) {
        throw DataError("fewer than 2 images are both annotated and scored");
    }

    std::vector<double> strength_v(rows.size()), extent_v(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        strength_v[i] = rows[i]->strength;
        extent_v[i] = rows[i]->extent;
    }

    CorrelationReport report;
    report.n_images = static_cast<int>(rows.size());
    for (VisibilityGroup g : kAllGroups) {
        std::vector<double> indicator(rows.size());
        int in_group = 0, correct = 0;
        for (size_t i = 0; i < rows.size(); ++i) {
            const bool member = groups[i] == g;
            indicator[i] = member ? 1.0 : 0.0;
            if (member) {
                ++in_group;
                if (rows[i]->brand_predicted.label ==
                    brand_of_image.at(rows[i]->image_id)) {
                    ++correct;
                }
            }
        }
        const std::string name = group_name(g);
        try {
            report.strength_r[name] = pearson(strength_v, indicator);
            report.extent_r[name] = pearson(extent_v, indicator);
        } catch (const DataError& e) {
            throw DataError("group '" + name + "': " + e.what());
        }
        report.prevalence[name] =
            static_cast<double>(in_group) / static_cast<double>(rows.size());
        report.accuracy[name] =
            in_group > 0 ? static_cast<double>(correct) / in_group : 0.0;
    }
    return report;
}

std::map<std::string, double> group_accuracy(
    const std::map<std::string, BrandId>& predictions,
    const DatasetManifest& manifest, const AnnotationSet& annotations) {
    std::map<std::string, int> total, correct;
    for (const ManifestEntry& e : manifest.entries) {
        auto ann = annotations.by_image.find(e.image_id);
        if (ann == annotations.by_image.end()) continue;
        auto pred = predictions.find(e.image_id);
        if (pred == predictions.end()) continue;
        const std::string g = group_name(ann->second.group);
        ++total[g];
        if (pred->second.label == e.brand) ++correct[g];
    }
    std::map<std::string, double> out;
    for (VisibilityGroup g : kAllGroups) {
        const std::string name = group_name(g);
        const int t = total.count(name) ? total[name] : 0;
        out[name] = t > 0 ? static_cast<double>(correct[name]) / t : 0.0;
    }
    return out;
}

}  // namespace elens
