#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "elens/model.hpp"

namespace elens {

/// Images x units table of per-unit maximum excitation scores. Row order is
/// manifest order and is the tie-break order everywhere downstream.
struct ScoreMatrix {
    struct Row {
        std::string image_id;
        int brand_index = -1;
    };

    std::vector<Row> rows;
    int64_t num_units = 0;
    std::vector<double> values;  // rows.size() * num_units, row-major
    std::string split = "test";

    double at(size_t row, int64_t unit) const {
        return values[row * static_cast<size_t>(num_units) + static_cast<size_t>(unit)];
    }
};

struct Histogram {
    int bin_count = 0;
    std::vector<double> masses;  // sums to 1, every entry > 0 after smoothing
    double smoothing_alpha = 0.0;
};

struct UnitDiscriminability {
    int unit = -1;
    BrandId brand;
    double d_value = 0.0;
};

// Positive (brand) and negative (everything else) score distributions for
// one unit. Scores are first normalized by the unit's maximum over the whole
// matrix (an all-zero unit lands in bin 0), binned uniformly on [0,1], then
// Laplace-smoothed: (count + alpha) / (n + bins*alpha).
std::pair<Histogram, Histogram> build_histograms(const ScoreMatrix& scores,
                                                 int unit, const BrandId& brand,
                                                 int bins, double alpha);

// KL(P||Q) + KL(Q||P), natural log.
double symmetric_kl(const Histogram& p, const Histogram& q);

// All units sorted by descending d_value; ties break to the lower unit index.
std::vector<UnitDiscriminability> rank_units(const ScoreMatrix& scores,
                                             const BrandId& brand, int bins,
                                             double alpha);

// Per-unit count of brands for which the unit appears in the brand's top-N
// ranking. Count 1 marks a specialist, large counts mark generalists.
std::vector<int> specialist_index(const ScoreMatrix& scores,
                                  std::span<const BrandId> brands, int top_n,
                                  int bins, double alpha);

// The m image ids with the highest raw scores for one unit, descending,
// ties in matrix (manifest) order.
std::vector<std::string> top_examples(const ScoreMatrix& scores, int unit, int m);

void write_rankings_csv(std::ostream& out,
                        const std::map<std::string, std::vector<UnitDiscriminability>>&
                            rankings_by_brand);
void write_specialist_csv(std::ostream& out, std::span<const int> counts);

}  // namespace elens
