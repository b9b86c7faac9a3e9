#include <algorithm>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

#include "dst/harness.hpp"

namespace dst {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

const char* section_name(CostSection s) {
    switch (s) {
        case CostSection::Backbone: return "backbone";
        case CostSection::Bridge: return "bridge";
        case CostSection::Fixed: return "fixed";
    }
    return "unknown";
}

CostSection parse_section(const std::string& name) {
    for (CostSection s : {CostSection::Backbone, CostSection::Bridge, CostSection::Fixed}) {
        if (name == section_name(s)) {
            return s;
        }
    }
    throw CheckpointError("checkpoint: unknown section '" + name + "'");
}

void put_u64(std::ostream& out, std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    }
    out.write(bytes, 8);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
        throw CheckpointError("checkpoint: unexpected end of file");
    }
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | bytes[i];
    }
    return v;
}

ordered_json grid_json(const std::vector<Ratio>& ratios, const std::vector<std::size_t>& values) {
    ordered_json out = ordered_json::array();
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        out.push_back({{"ratio", ratios[i].str()}, {"value", values[i]}});
    }
    return out;
}

ordered_json manifest_for(const SlimmableModel& model) {
    const ModelConfig& c = model.config();
    ordered_json m;
    m["format"] = "DST1";
    m["config"] = to_json(c);
    m["width_grid"] = grid_json(c.width_ratios, c.width_grid().values(c.heads));
    m["depth_grid"] = grid_json(c.depth_ratios, c.depth_grid().values());
    m["layer_scores"] = model.layer_scores();
    ordered_json selected = ordered_json::array();
    for (const ArchDescriptor& a : model.selected()) {
        selected.push_back({{"arch", a.label()}, {"width", a.width}, {"kept_layers", a.kept_layers}});
    }
    m["selected"] = std::move(selected);

    ordered_json tensors = ordered_json::array();
    std::uint64_t offset = 0;
    for (const ParamEntry& e : model.params().entries()) {
        ordered_json t;
        t["name"] = e.name;
        t["shape"] = e.value.shape();
        t["dtype"] = "f64-le";
        t["byte_offset"] = offset;
        t["slicing_tag"] = slicing_tag_name(e.tag, e.value.dim());
        t["axes"] = {slice_axis_name(e.tag.rows), slice_axis_name(e.tag.cols)};
        t["section"] = section_name(e.section);
        tensors.push_back(std::move(t));
        offset += 8 * e.value.numel();
    }
    m["tensors"] = std::move(tensors);
    return m;
}

json parse_manifest(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kCheckpointMagic)) {
        throw CheckpointError("checkpoint: bad magic (expected DST1)");
    }
    const std::uint64_t length = get_u64(in);
    if (length > (1ull << 32)) {
        throw CheckpointError("checkpoint: implausible manifest length " + std::to_string(length));
    }
    std::string text(length, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(length))) {
        throw CheckpointError("checkpoint: truncated manifest");
    }
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint: malformed manifest: ") + e.what());
    }
}

}  // namespace

void write_checkpoint(std::ostream& out, const SlimmableModel& model) {
    const std::string manifest = manifest_for(model).dump();
    out.write(kCheckpointMagic, 4);
    put_u64(out, manifest.size());
    out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    for (const ParamEntry& e : model.params().entries()) {
        for (double v : e.value.data()) {
            put_u64(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    if (!out) {
        throw CheckpointError("checkpoint: write failed");
    }
}

SlimmableModel read_checkpoint(std::istream& in) {
    const json m = parse_manifest(in);
    try {
        const ModelConfig config = model_config_from_json(m.at("config"));
        std::vector<double> scores = m.at("layer_scores").get<std::vector<double>>();
        ParamStore store;
        std::uint64_t expected_offset = 0;
        for (const json& t : m.at("tensors")) {
            const std::string name = t.at("name").get<std::string>();
            if (t.at("dtype").get<std::string>() != "f64-le") {
                throw CheckpointError("checkpoint: '" + name + "' has unsupported dtype");
            }
            if (t.at("byte_offset").get<std::uint64_t>() != expected_offset) {
                throw CheckpointError("checkpoint: '" + name + "' is not stored contiguously in manifest order");
            }
            const Shape shape = t.at("shape").get<Shape>();
            const std::vector<std::string> axes = t.at("axes").get<std::vector<std::string>>();
            if (axes.size() != 2) {
                throw CheckpointError("checkpoint: '" + name + "' needs two slice axes");
            }
            const SliceTag tag{parse_slice_axis(axes[0]), parse_slice_axis(axes[1])};
            if (slicing_tag_name(tag, shape.size()) != t.at("slicing_tag").get<std::string>()) {
                throw CheckpointError("checkpoint: '" + name + "' slicing tag disagrees with its axes");
            }
            const std::size_t count = shape_numel(shape);
            std::vector<double> values(count);
            for (double& v : values) {
                v = std::bit_cast<double>(get_u64(in));
            }
            expected_offset += 8 * count;
            store.add(name, Tensor::from(shape, std::move(values), true), tag,
                      parse_section(t.at("section").get<std::string>()));
        }
        if (in.peek() != std::char_traits<char>::eof()) {
            throw CheckpointError("checkpoint: trailing bytes after the blob");
        }
        return SlimmableModel(config, std::move(store), std::move(scores));
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint: manifest field: ") + e.what());
    }
}

void save_checkpoint(const std::filesystem::path& path, const SlimmableModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
    }
    write_checkpoint(out, model);
}

SlimmableModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
    }
    return read_checkpoint(in);
}

nlohmann::json read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
    }
    return parse_manifest(in);
}

}  // namespace dst
