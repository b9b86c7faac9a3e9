#include "dst/param_store.hpp"

#include <bit>
#include <stdexcept>

namespace dst {

const char* slice_axis_name(SliceAxis axis) {
    switch (axis) {
        case SliceAxis::Fixed: return "fixed";
        case SliceAxis::Model: return "model";
        case SliceAxis::Heads: return "heads";
        case SliceAxis::Ffn: return "ffn";
    }
    return "unknown";
}

SliceAxis parse_slice_axis(const std::string& name) {
    for (SliceAxis a : {SliceAxis::Fixed, SliceAxis::Model, SliceAxis::Heads, SliceAxis::Ffn}) {
        if (name == slice_axis_name(a)) {
            return a;
        }
    }
    throw std::invalid_argument("unknown slice axis '" + name + "'");
}

std::string slicing_tag_name(const SliceTag& tag, std::size_t dims) {
    const bool rows = tag.rows != SliceAxis::Fixed;
    const bool cols = dims > 1 && tag.cols != SliceAxis::Fixed;
    if (rows && cols) {
        return "slim-both";
    }
    if (rows) {
        return "slim-rows";
    }
    if (cols) {
        return "slim-cols";
    }
    return "unslimmed";
}

std::size_t axis_extent(SliceAxis axis, std::size_t full_extent, const SlimSpec& spec) {
    switch (axis) {
        case SliceAxis::Fixed: return full_extent;
        case SliceAxis::Model: return spec.mode == WidthMode::SlimAll ? spec.scaled(full_extent) : full_extent;
        case SliceAxis::Heads:
        case SliceAxis::Ffn: return spec.scaled(full_extent);
    }
    return full_extent;
}

Shape ParamEntry::sliced_shape(const SlimSpec& spec) const {
    const Shape& full = value.shape();
    if (full.size() == 1) {
        return {axis_extent(tag.rows, full[0], spec)};
    }
    return {axis_extent(tag.rows, full[0], spec), axis_extent(tag.cols, full[1], spec)};
}

Tensor& ParamStore::add(std::string name, Tensor value, SliceTag tag, CostSection section) {
    if (contains(name)) {
        throw std::invalid_argument("ParamStore: duplicate name '" + name + "'");
    }
    if (value.dim() != 1 && value.dim() != 2) {
        throw DimensionError("ParamStore: '" + name + "' must be 1-D or 2-D");
    }
    index_.emplace(name, entries_.size());
    entries_.push_back(ParamEntry{std::move(name), std::move(value), tag, section});
    return entries_.back().value;
}

const ParamEntry& ParamStore::entry(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) {
        throw std::out_of_range("ParamStore: no tensor named '" + name + "'");
    }
    return entries_[it->second];
}

Tensor& ParamStore::get(const std::string& name) {
    const auto it = index_.find(name);
    if (it == index_.end()) {
        throw std::out_of_range("ParamStore: no tensor named '" + name + "'");
    }
    return entries_[it->second].value;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const ParamEntry& e : entries_) {
        n += e.value.numel();
    }
    return n;
}

const ParamEntry* ParamStore::find(const Tensor& t) const {
    for (const ParamEntry& e : entries_) {
        if (e.value.same_node(t)) {
            return &e;
        }
    }
    return nullptr;
}

ParamStore ParamStore::clone() const {
    ParamStore out;
    for (const ParamEntry& e : entries_) {
        out.add(e.name, e.value.clone(e.value.requires_grad()), e.tag, e.section);
    }
    return out;
}

void ParamStore::zero_grad() {
    for (ParamEntry& e : entries_) {
        e.value.zero_grad();
    }
}

std::uint64_t ParamStore::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffu;
            h *= 0x100000001b3ull;
        }
    };
    for (const ParamEntry& e : entries_) {
        for (char c : e.name) {
            mix(static_cast<unsigned char>(c));
        }
        for (std::size_t s : e.value.shape()) {
            mix(s);
        }
        for (double v : e.value.data()) {
            mix(std::bit_cast<std::uint64_t>(v));
        }
    }
    return h;
}

}  // namespace dst
