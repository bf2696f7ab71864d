#include "elens/discriminability.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "elens/errors.hpp"
#include "elens/format.hpp"

namespace elens {

namespace {

void check_config(const ScoreMatrix& scores, int unit, int bins, double alpha) {
    if (unit < 0 || unit >= scores.num_units) {
        throw DataError("unit " + std::to_string(unit) + " out of range [0, " +
                        std::to_string(scores.num_units) + ")");
    }
    if (bins < 2) throw ConfigError("histogram bins must be >= 2");
    if (alpha <= 0.0) throw ConfigError("smoothing alpha must be positive");
}

Histogram smoothed(const std::vector<int64_t>& counts, int64_t n, double alpha) {
    Histogram h;
    h.bin_count = static_cast<int>(counts.size());
    h.smoothing_alpha = alpha;
    const double denom = static_cast<double>(n) + alpha * h.bin_count;
    h.masses.resize(counts.size());
    for (size_t i = 0; i < counts.size(); ++i) {
        h.masses[i] = (static_cast<double>(counts[i]) + alpha) / denom;
    }
    return h;
}

}  // namespace

std::pair<Histogram, Histogram> build_histograms(const ScoreMatrix& scores,
                                                 int unit, const BrandId& brand,
                                                 int bins, double alpha) {
    check_config(scores, unit, bins, alpha);

    double unit_max = 0.0;
    for (size_t r = 0; r < scores.rows.size(); ++r) {
        unit_max = std::max(unit_max, scores.at(r, unit));
    }

    std::vector<int64_t> pos(static_cast<size_t>(bins), 0);
    std::vector<int64_t> neg(static_cast<size_t>(bins), 0);
    int64_t n_pos = 0, n_neg = 0;
    for (size_t r = 0; r < scores.rows.size(); ++r) {
        const double v = unit_max > 0.0 ? scores.at(r, unit) / unit_max : 0.0;
        int b = static_cast<int>(v * bins);
        if (b >= bins) b = bins - 1;
        if (b < 0) b = 0;
        if (scores.rows[r].brand_index == brand.index) {
            ++pos[static_cast<size_t>(b)];
            ++n_pos;
        } else {
            ++neg[static_cast<size_t>(b)];
            ++n_neg;
        }
    }
    if (n_pos == 0) {
        throw DataError("brand '" + brand.label + "' has no positive images");
    }
    if (n_neg == 0) {
        throw DataError("brand '" + brand.label + "' has no negative images");
    }
    return {smoothed(pos, n_pos, alpha), smoothed(neg, n_neg, alpha)};
}

double symmetric_kl(const Histogram& p, const Histogram& q) {
    if (p.bin_count != q.bin_count) {
        throw DataError("histogram bin counts differ: " + std::to_string(p.bin_count) +
                        " vs " + std::to_string(q.bin_count));
    }
    double d = 0.0;
    for (int i = 0; i < p.bin_count; ++i) {
        const double pi = p.masses[static_cast<size_t>(i)];
        const double qi = q.masses[static_cast<size_t>(i)];
        d += pi * std::log(pi / qi) + qi * std::log(qi / pi);
    }
    return d;
}

std::vector<UnitDiscriminability> rank_units(const ScoreMatrix& scores,
                                             const BrandId& brand, int bins,
                                             double alpha) {
    bool present = false;
    for (const ScoreMatrix::Row& r : scores.rows) {
        if (r.brand_index == brand.index) present = true;
    }
    if (!present) {
        throw DataError("brand '" + brand.label + "' not present in score matrix");
    }
    std::vector<UnitDiscriminability> out;
    out.reserve(static_cast<size_t>(scores.num_units));
    for (int unit = 0; unit < scores.num_units; ++unit) {
        auto [p, q] = build_histograms(scores, unit, brand, bins, alpha);
        out.push_back(UnitDiscriminability{unit, brand, symmetric_kl(p, q)});
    }
    std::sort(out.begin(), out.end(),
              [](const UnitDiscriminability& a, const UnitDiscriminability& b) {
                  if (a.d_value != b.d_value) return a.d_value > b.d_value;
                  return a.unit < b.unit;
              });
    return out;
}

std::vector<int> specialist_index(const ScoreMatrix& scores,
                                  std::span<const BrandId> brands, int top_n,
                                  int bins, double alpha) {
    if (top_n < 1) throw ConfigError("top_n must be >= 1");
    std::vector<int> counts(static_cast<size_t>(scores.num_units), 0);
    for (const BrandId& brand : brands) {
        const std::vector<UnitDiscriminability> ranked =
            rank_units(scores, brand, bins, alpha);
        const size_t take = std::min<size_t>(static_cast<size_t>(top_n), ranked.size());
        for (size_t i = 0; i < take; ++i) {
            ++counts[static_cast<size_t>(ranked[i].unit)];
        }
    }
    return counts;
}

std::vector<std::string> top_examples(const ScoreMatrix& scores, int unit, int m) {
    if (unit < 0 || unit >= scores.num_units) {
        throw DataError("unit " + std::to_string(unit) + " out of range");
    }
    if (m < 0 || static_cast<size_t>(m) > scores.rows.size()) {
        throw DataError("requested " + std::to_string(m) + " examples from " +
                        std::to_string(scores.rows.size()) + " images");
    }
    std::vector<size_t> order(scores.rows.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return scores.at(a, unit) > scores.at(b, unit);
    });
    std::vector<std::string> out;
    out.reserve(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) out.push_back(scores.rows[order[static_cast<size_t>(i)]].image_id);
    return out;
}

void write_rankings_csv(std::ostream& out,
                        const std::map<std::string, std::vector<UnitDiscriminability>>&
                            rankings_by_brand) {
    out << "brand,rank,unit,d_value\n";
    for (const auto& [brand, ranking] : rankings_by_brand) {
        for (size_t i = 0; i < ranking.size(); ++i) {
            out << brand << ',' << (i + 1) << ',' << ranking[i].unit << ','
                << fmt_g(ranking[i].d_value) << '\n';
        }
    }
}

void write_specialist_csv(std::ostream& out, std::span<const int> counts) {
    out << "unit,count\n";
    for (size_t u = 0; u < counts.size(); ++u) {
        out << u << ',' << counts[u] << '\n';
    }
}

}  // namespace elens
