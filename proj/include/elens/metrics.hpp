#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "elens/excitation.hpp"
#include "elens/model.hpp"

namespace elens {

struct MapStatistics {
    std::string image_id;
    BrandId brand_predicted;
    double strength = 0.0;
    double extent = 0.0;
    double threshold = 0.0;
    double discarded_mass = 0.0;
};

// Maximum of the aggregate map over locations.
double strength(const ExcitationMaps& maps);

struct ExtentResult {
    double extent = 0.0;
    double threshold = 0.0;
};

// threshold = mean of the aggregate map over locations; extent = fraction
// of locations strictly above it (0 for constant maps).
ExtentResult extent(const ExcitationMaps& maps);

// Per-unit maximum over each unit's own map.
std::vector<double> unit_max_scores(const ExcitationMaps& maps);

MapStatistics compute_map_statistics(const ExcitationMaps& maps,
                                     const BrandId& predicted);

void write_stats_csv(std::ostream& out, std::span<const MapStatistics> stats);

}  // namespace elens
