#include "dst/flops.hpp"

namespace dst {

namespace {
thread_local FlopTally* g_tally = nullptr;
thread_local CostSection g_section = CostSection::Backbone;
}  // namespace

FlopRecorder::FlopRecorder(FlopTally& tally) : previous_(g_tally) { g_tally = &tally; }

FlopRecorder::~FlopRecorder() { g_tally = previous_; }

CostSectionGuard::CostSectionGuard(CostSection section) : previous_(g_section) { g_section = section; }

CostSectionGuard::~CostSectionGuard() { g_section = previous_; }

void record_flops(std::uint64_t n) {
    if (g_tally != nullptr) {
        g_tally->by_section[static_cast<std::size_t>(g_section)] += n;
    }
}

}  // namespace dst
