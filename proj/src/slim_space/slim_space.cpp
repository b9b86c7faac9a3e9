#include "dst/slim_space.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dst/tensor.hpp"

namespace dst {

// ==================== Ratio ====================

Ratio Ratio::make(std::int64_t num, std::int64_t den) {
    if (num <= 0 || den <= 0) {
        throw std::invalid_argument("ratio must be positive");
    }
    const std::int64_t g = std::gcd(num, den);
    return Ratio{num / g, den / g};
}

Ratio Ratio::parse(const std::string& text) {
    const auto slash = text.find('/');
    try {
        if (slash != std::string::npos) {
            return make(std::stoll(text.substr(0, slash)), std::stoll(text.substr(slash + 1)));
        }
        if (text.find_first_of(".eE") == std::string::npos) {
            return make(std::stoll(text), 1);
        }
        const double v = std::stod(text);
        for (std::int64_t den = 1; den <= 64; ++den) {
            const double num = std::round(v * static_cast<double>(den));
            if (num > 0 && std::abs(num / static_cast<double>(den) - v) < 1e-9) {
                return make(static_cast<std::int64_t>(num), den);
            }
        }
    } catch (const std::logic_error&) {
        // fall through to the error below
    }
    throw std::invalid_argument("cannot parse ratio '" + text + "'");
}

std::string Ratio::str() const {
    return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
}

std::size_t Ratio::apply(std::size_t extent) const {
    const auto scaled = static_cast<std::int64_t>(extent) * num;
    if (scaled % den != 0 || scaled / den == 0) {
        throw DimensionError("ratio " + str() + " of " + std::to_string(extent) + " is not a positive integer");
    }
    return static_cast<std::size_t>(scaled / den);
}

// ==================== Grids ====================

namespace {

void check_ratios(const std::vector<Ratio>& ratios, const char* what) {
    if (ratios.empty()) {
        throw std::invalid_argument(std::string(what) + ": empty ratio set");
    }
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        if (ratios[i].num > ratios[i].den) {
            throw std::invalid_argument(std::string(what) + ": ratio " + ratios[i].str() + " exceeds 1");
        }
        if (i > 0 && !(ratios[i - 1] < ratios[i])) {
            throw std::invalid_argument(std::string(what) + ": ratios must be strictly ascending");
        }
    }
}

}  // namespace

WidthGrid WidthGrid::standard(std::size_t full_width) {
    return WidthGrid{full_width, {Ratio::make(1, 4), Ratio::make(1, 2), Ratio::make(3, 4), Ratio::make(1, 1)}};
}

std::vector<std::size_t> WidthGrid::values(std::size_t heads) const {
    check_ratios(ratios, "width grid");
    std::vector<std::size_t> out;
    for (const Ratio& r : ratios) {
        const std::size_t d = r.apply(full);
        r.apply(heads);  // integral head count
        out.push_back(d);
    }
    return out;
}

DepthGrid DepthGrid::standard(std::size_t full_depth) {
    return DepthGrid{full_depth, {Ratio::make(1, 6), Ratio::make(1, 3), Ratio::make(2, 3), Ratio::make(1, 1)}};
}

std::vector<std::size_t> DepthGrid::values() const {
    check_ratios(ratios, "depth grid");
    std::vector<std::size_t> out;
    for (const Ratio& r : ratios) {
        out.push_back(r.apply(full));
    }
    return out;
}

std::string ArchDescriptor::label() const {
    auto part = [](const Ratio& r, char sym) {
        return r.num == r.den ? std::string(1, sym) : r.str() + sym;
    };
    return "(" + part(width_ratio, 'D') + "," + part(depth_ratio, 'L') + ")";
}

std::string ArchDescriptor::kept_layers_str() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < kept_layers.size(); ++i) {
        os << (i ? "-" : "") << kept_layers[i];
    }
    return os.str();
}

// ==================== Depth selection ====================

const char* depth_strategy_name(DepthStrategy strategy) {
    switch (strategy) {
        case DepthStrategy::SlimRandom: return "slim-random";
        case DepthStrategy::SlimFirst: return "slim-first";
        case DepthStrategy::SlimLast: return "slim-last";
        case DepthStrategy::SlimMiddle: return "slim-middle";
    }
    return "unknown";
}

DepthStrategy parse_depth_strategy(const std::string& name) {
    for (DepthStrategy s : {DepthStrategy::SlimRandom, DepthStrategy::SlimFirst, DepthStrategy::SlimLast,
                            DepthStrategy::SlimMiddle}) {
        if (name == depth_strategy_name(s)) {
            return s;
        }
    }
    throw std::invalid_argument("unknown depth strategy '" + name + "'");
}

std::vector<double> depth_scores(DepthStrategy strategy, std::size_t depth, Rng& rng) {
    if (depth == 0) {
        throw std::invalid_argument("depth_scores: depth must be >= 1");
    }
    std::vector<double> scores(depth);
    const double center = static_cast<double>(depth + 1) / 2.0;
    for (std::size_t i = 1; i <= depth; ++i) {
        const double x = static_cast<double>(i);
        switch (strategy) {
            case DepthStrategy::SlimFirst: scores[i - 1] = x; break;
            case DepthStrategy::SlimLast: scores[i - 1] = static_cast<double>(depth + 1) - x; break;
            case DepthStrategy::SlimMiddle: scores[i - 1] = std::abs(x - center); break;
            case DepthStrategy::SlimRandom: scores[i - 1] = x; break;
        }
    }
    if (strategy == DepthStrategy::SlimRandom) {
        rng.shuffle(scores);
    }
    return scores;
}

std::vector<std::size_t> select_layers(std::span<const double> scores, std::size_t depth) {
    if (depth == 0 || depth > scores.size()) {
        throw std::out_of_range("select_layers: depth " + std::to_string(depth) + " outside [1, " +
                                std::to_string(scores.size()) + "]");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<std::size_t> kept(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(depth));
    std::sort(kept.begin(), kept.end());
    for (std::size_t& k : kept) {
        k += 1;
    }
    return kept;
}

// ==================== Architecture space ====================

ArchGrid build_grid(const WidthGrid& widths, const DepthGrid& depths, std::size_t heads,
                    std::span<const double> layer_scores) {
    const std::vector<std::size_t> wv = widths.values(heads);
    const std::vector<std::size_t> dv = depths.values();
    if (layer_scores.size() != depths.full) {
        throw std::invalid_argument("build_grid: " + std::to_string(layer_scores.size()) + " layer scores for depth " +
                                    std::to_string(depths.full));
    }
    ArchGrid grid;
    grid.width_count = wv.size();
    grid.depth_count = dv.size();
    for (std::size_t i = 0; i < wv.size(); ++i) {
        for (std::size_t j = 0; j < dv.size(); ++j) {
            ArchDescriptor a;
            a.width = wv[i];
            a.depth = dv[j];
            a.kept_layers = select_layers(layer_scores, dv[j]);
            a.width_rank = i;
            a.depth_rank = j;
            a.width_ratio = widths.ratios[i];
            a.depth_ratio = depths.ratios[j];
            grid.archs.push_back(std::move(a));
        }
    }
    return grid;
}

IndicatorMatrix triangle_indicator(std::size_t width_count, std::size_t depth_count) {
    IndicatorMatrix m{width_count, depth_count, std::vector<std::uint8_t>(width_count * depth_count, 1)};
    for (std::size_t i = 0; i < width_count; ++i) {
        for (std::size_t j = 0; j < depth_count; ++j) {
            m.cells[i * depth_count + j] = j >= i ? 1 : 0;
        }
    }
    return m;
}

std::vector<ArchDescriptor> triangle_select(const ArchGrid& grid) {
    const IndicatorMatrix keep = triangle_indicator(grid.width_count, grid.depth_count);
    std::vector<ArchDescriptor> out;
    for (const ArchDescriptor& a : grid.archs) {
        if (keep(a.width_rank, a.depth_rank)) {
            out.push_back(a);
        }
    }
    return out;
}

std::vector<ArchDescriptor> select_all(const ArchGrid& grid) { return grid.archs; }

const ArchDescriptor& smallest_arch(std::span<const ArchDescriptor> selected) {
    if (selected.empty()) {
        throw std::invalid_argument("smallest_arch: empty selection");
    }
    return selected.front();
}

const ArchDescriptor& largest_arch(std::span<const ArchDescriptor> selected) {
    if (selected.empty()) {
        throw std::invalid_argument("largest_arch: empty selection");
    }
    return selected.back();
}

}  // namespace dst
