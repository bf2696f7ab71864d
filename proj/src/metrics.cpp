#include "elens/metrics.hpp"

#include <ostream>

#include "elens/errors.hpp"
#include "elens/format.hpp"

namespace elens {

double strength(const ExcitationMaps& maps) {
    const std::vector<float> agg = aggregate_values(maps);
    if (agg.empty()) throw DataError("strength of empty map");
    float best = agg[0];
    for (float v : agg) best = v > best ? v : best;
    return static_cast<double>(best);
}

ExtentResult extent(const ExcitationMaps& maps) {
    const std::vector<float> agg = aggregate_values(maps);
    if (agg.empty()) throw DataError("extent of empty map");
    double sum = 0.0;
    for (float v : agg) sum += v;
    const double threshold = sum / static_cast<double>(agg.size());
    int64_t above = 0;
    for (float v : agg) {
        if (static_cast<double>(v) > threshold) ++above;
    }
    return ExtentResult{static_cast<double>(above) / static_cast<double>(agg.size()),
                        threshold};
}

std::vector<double> unit_max_scores(const ExcitationMaps& maps) {
    std::vector<double> scores(static_cast<size_t>(maps.num_units), 0.0);
    for (int64_t k = 0; k < maps.num_units; ++k) {
        std::span<const float> m = maps.unit_map(k);
        float best = m.empty() ? 0.0f : m[0];
        for (float v : m) best = v > best ? v : best;
        scores[static_cast<size_t>(k)] = static_cast<double>(best);
    }
    return scores;
}

MapStatistics compute_map_statistics(const ExcitationMaps& maps,
                                     const BrandId& predicted) {
    MapStatistics st;
    st.image_id = maps.image_id;
    st.brand_predicted = predicted;
    st.strength = strength(maps);
    const ExtentResult e = extent(maps);
    st.extent = e.extent;
    st.threshold = e.threshold;
    st.discarded_mass = maps.discarded_mass;
    return st;
}

void write_stats_csv(std::ostream& out, std::span<const MapStatistics> stats) {
    out << "image_id,predicted_brand,strength,extent,threshold,discarded_mass\n";
    for (const MapStatistics& s : stats) {
        out << s.image_id << ',' << s.brand_predicted.label << ','
            << fmt_g(s.strength) << ',' << fmt_g(s.extent) << ','
            << fmt_g(s.threshold) << ',' << fmt_g(s.discarded_mass) << '\n';
    }
}

}  // namespace elens
