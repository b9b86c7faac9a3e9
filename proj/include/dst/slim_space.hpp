#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dst/rng.hpp"

namespace dst {

// Exact positive fraction, kept in lowest terms.
struct Ratio {
    std::int64_t num = 1;
    std::int64_t den = 1;

    static Ratio make(std::int64_t num, std::int64_t den);
    // Accepts "a/b", integers, and decimals (matched to the nearest fraction
    // with denominator <= 64 within 1e-9).
    static Ratio parse(const std::string& text);

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    std::string str() const;
    // extent * num / den; throws DimensionError unless exact.
    std::size_t apply(std::size_t extent) const;

    friend bool operator==(const Ratio&, const Ratio&) = default;
    friend bool operator<(const Ratio& a, const Ratio& b) { return a.num * b.den < b.num * a.den; }
};

// Candidate widths {1/4, 1/2, 3/4, 1} x D by default.
struct WidthGrid {
    std::size_t full = 0;
    std::vector<Ratio> ratios;

    static WidthGrid standard(std::size_t full_width);
    // Resolved integer widths, ascending. Validates that each yields an
    // integral head count for `heads`.
    std::vector<std::size_t> values(std::size_t heads) const;
};

// Candidate depths {1/6, 1/3, 2/3, 1} x L by default.
struct DepthGrid {
    std::size_t full = 0;
    std::vector<Ratio> ratios;

    static DepthGrid standard(std::size_t full_depth);
    std::vector<std::size_t> values() const;
};

struct ArchDescriptor {
    std::size_t width = 0;
    std::size_t depth = 0;
    std::vector<std::size_t> kept_layers;  // 1-based, ascending
    std::size_t width_rank = 0;            // 0-based position in the width grid
    std::size_t depth_rank = 0;
    Ratio width_ratio;
    Ratio depth_ratio;

    std::string label() const;  // "(1/4D,1/3L)"
    std::string kept_layers_str() const;  // "1-6"
    friend bool operator==(const ArchDescriptor& a, const ArchDescriptor& b) {
        return a.width == b.width && a.depth == b.depth && a.kept_layers == b.kept_layers;
    }
};

// The full combination set, row-major over (width rank, depth rank).
struct ArchGrid {
    std::size_t width_count = 0;
    std::size_t depth_count = 0;
    std::vector<ArchDescriptor> archs;

    const ArchDescriptor& at(std::size_t width_rank, std::size_t depth_rank) const {
        return archs[width_rank * depth_count + depth_rank];
    }
};

// Selection status; rows are widths ascending, columns depths ascending.
struct IndicatorMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> cells;

    bool operator()(std::size_t r, std::size_t c) const { return cells[r * cols + c] != 0; }
};

enum class DepthStrategy { SlimRandom, SlimFirst, SlimLast, SlimMiddle };

const char* depth_strategy_name(DepthStrategy strategy);
DepthStrategy parse_depth_strategy(const std::string& name);

// Importance score per layer (index 0 is layer 1):
//   slim-first  i          slim-last  L + 1 - i
//   slim-middle |i - (L + 1) / 2|
//   slim-random a permutation of 1..L drawn from rng
std::vector<double> depth_scores(DepthStrategy strategy, std::size_t depth, Rng& rng);

// The `depth` highest-scoring layers, ties going to the lower index, returned
// as ascending 1-based indices.
std::vector<std::size_t> select_layers(std::span<const double> scores, std::size_t depth);

ArchGrid build_grid(const WidthGrid& widths, const DepthGrid& depths, std::size_t heads,
                    std::span<const double> layer_scores);

// Keeps a(d_i, l_j) iff j >= i.
IndicatorMatrix triangle_indicator(std::size_t width_count, std::size_t depth_count);
std::vector<ArchDescriptor> triangle_select(const ArchGrid& grid);
// Every architecture, for runs that skip the triangle filter.
std::vector<ArchDescriptor> select_all(const ArchGrid& grid);

// First and last of an ascending selection.
const ArchDescriptor& smallest_arch(std::span<const ArchDescriptor> selected);
const ArchDescriptor& largest_arch(std::span<const ArchDescriptor> selected);

}  // namespace dst
