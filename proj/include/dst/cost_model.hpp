#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "dst/backbone.hpp"

namespace dst {

// Scalar counts split by where a tensor or op sits: the layer stack, the
// slimmable glue around it (W_emb, reductions, fusion/pool), and the
// unslimmed embedders and classifier.
struct SectionCounts {
    std::uint64_t backbone = 0;
    std::uint64_t bridge = 0;
    std::uint64_t fixed = 0;

    std::uint64_t total() const { return backbone + bridge + fixed; }
    friend bool operator==(const SectionCounts&, const SectionCounts&) = default;
};

struct CostReport {
    ArchDescriptor arch;
    SectionCounts params;
    SectionCounts flops;  // one sample at the declared m, n

    std::uint64_t backbone_params() const { return params.backbone; }
    std::uint64_t fixed_params() const { return params.fixed; }
    std::uint64_t total_params() const { return params.total(); }
    std::uint64_t total_flops() const { return flops.total(); }
};

// Sum of the sliced extents of every tensor the architecture reads.
SectionCounts count_params(const ModelConfig& config, const ArchDescriptor& arch);

// Closed form of the forward pass for a single sample with question length m
// and n regions (the config's lengths when zero). 2 per multiply-accumulate,
// 1 per elementwise op, 5 per softmax or layer-norm element.
SectionCounts count_flops(const ModelConfig& config, const ArchDescriptor& arch, std::size_t m = 0,
                          std::size_t n = 0);

CostReport cost_report(const ModelConfig& config, const ArchDescriptor& arch, std::size_t m = 0, std::size_t n = 0);

// Sorted by total FLOPs ascending, then width, then depth.
std::vector<CostReport> cost_table(const ModelConfig& config, std::span<const ArchDescriptor> archs,
                                   std::size_t m = 0, std::size_t n = 0);

// Header: arch_width,arch_depth,kept_layers,backbone_params,fixed_params,total_params,flops
void write_cost_csv(std::ostream& out, std::span<const CostReport> rows);

// Scalars of `params` actually read through slices during whatever runs
// between construction and result(); the union of leading blocks per tensor.
class TouchedParams {
public:
    explicit TouchedParams(const ParamStore& params);
    ~TouchedParams();
    TouchedParams(const TouchedParams&) = delete;
    TouchedParams& operator=(const TouchedParams&) = delete;

    SectionCounts result() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace dst
