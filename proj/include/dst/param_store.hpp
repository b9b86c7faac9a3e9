#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dst/flops.hpp"
#include "dst/slim_layers.hpp"
#include "dst/tensor.hpp"

namespace dst {

// How one tensor dimension responds to width slimming.
//   Fixed  never sliced
//   Model  the residual width: d under slim-all, D under slim-intermediate
//   Heads  active heads times head width
//   Ffn    FFN hidden width
enum class SliceAxis : std::uint8_t { Fixed, Model, Heads, Ffn };

const char* slice_axis_name(SliceAxis axis);
SliceAxis parse_slice_axis(const std::string& name);

// Slicing rule of a stored tensor. 1-D tensors use `rows` only.
struct SliceTag {
    SliceAxis rows = SliceAxis::Fixed;
    SliceAxis cols = SliceAxis::Fixed;

    bool slimmable() const { return rows != SliceAxis::Fixed || cols != SliceAxis::Fixed; }
};

// "unslimmed", "slim-rows", "slim-cols" or "slim-both".
std::string slicing_tag_name(const SliceTag& tag, std::size_t dims);

std::size_t axis_extent(SliceAxis axis, std::size_t full_extent, const SlimSpec& spec);

struct ParamEntry {
    std::string name;
    Tensor value;
    SliceTag tag;
    CostSection section = CostSection::Backbone;

    // Shape of the leading block a submodel at `spec` reads.
    Shape sliced_shape(const SlimSpec& spec) const;
};

// Named master tensors. Insertion order is the canonical order for
// initialization, checkpoints and checksums.
class ParamStore {
public:
    Tensor& add(std::string name, Tensor value, SliceTag tag, CostSection section);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const ParamEntry& entry(const std::string& name) const;
    const Tensor& get(const std::string& name) const { return entry(name).value; }
    Tensor& get(const std::string& name);
    std::span<const ParamEntry> entries() const { return entries_; }
    std::span<ParamEntry> entries() { return entries_; }
    std::size_t size() const { return entries_.size(); }
    std::size_t scalar_count() const;

    // Entry owning the given tensor node, or nullptr.
    const ParamEntry* find(const Tensor& t) const;

    // Fresh storage, same names/tags/values; requires_grad preserved.
    ParamStore clone() const;
    void zero_grad();
    // FNV-1a over names, shapes and the raw bits of every value.
    std::uint64_t checksum() const;

private:
    std::vector<ParamEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace dst
