#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace dst {

// Where a counted operation belongs in the cost breakdown.
enum class CostSection : std::size_t { Backbone = 0, Bridge = 1, Fixed = 2 };

struct FlopTally {
    std::array<std::uint64_t, 3> by_section{};

    std::uint64_t operator[](CostSection s) const { return by_section[static_cast<std::size_t>(s)]; }
    std::uint64_t total() const { return by_section[0] + by_section[1] + by_section[2]; }
};

// Runtime FLOP instrumentation. While a recorder is alive on this thread every
// op adds its cost (2 per multiply-accumulate, 1 per elementwise op, 5 per
// softmax/layer-norm element) to the tally under the current section.
class FlopRecorder {
public:
    explicit FlopRecorder(FlopTally& tally);
    ~FlopRecorder();
    FlopRecorder(const FlopRecorder&) = delete;
    FlopRecorder& operator=(const FlopRecorder&) = delete;

private:
    FlopTally* previous_;
};

class CostSectionGuard {
public:
    explicit CostSectionGuard(CostSection section);
    ~CostSectionGuard();
    CostSectionGuard(const CostSectionGuard&) = delete;
    CostSectionGuard& operator=(const CostSectionGuard&) = delete;

private:
    CostSection previous_;
};

void record_flops(std::uint64_t n);

}  // namespace dst
