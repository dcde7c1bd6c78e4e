// SPDX-License-Identifier: Apache-2.0

#include "masktrack/dataset.hpp"

#include <fstream>
#include <set>

#include "json.hpp"

#include "masktrack/image_io.hpp"

namespace masktrack {

using nlohmann::json;
namespace fs = std::filesystem;

BinaryMask Annotation::as_mask(int width, int height) const {
    if (const auto* box = std::get_if<BoundingBox>(&kind)) return mask_from_box(*box, width, height);
    const auto& mask = std::get<BinaryMask>(kind);
    require_same_size(mask.width(), mask.height(), width, height,
                      "annotation on frame " + std::to_string(frame_index));
    return mask;
}

EvalProtocol parse_protocol(const std::string& name) {
    if (name == "davis") return EvalProtocol::davis();
    if (name == "first-only") return EvalProtocol::first_only();
    throw Error("unknown protocol '" + name + "' (expected davis or first-only)");
}

std::string protocol_name(const EvalProtocol& protocol) {
    if (protocol == EvalProtocol::davis()) return "davis";
    if (protocol == EvalProtocol::first_only()) return "first-only";
    return std::string("custom(") + (protocol.exclude_first ? "first" : "") +
           (protocol.exclude_last ? ",last" : "") + ")";
}

void VideoSequence::validate() const {
    if (frames.empty()) throw Error("sequence '" + name + "': no frames");
    const int w = frames[0].width();
    const int h = frames[0].height();
    for (std::size_t t = 0; t < frames.size(); ++t) {
        require_same_size(frames[t].width(), frames[t].height(), w, h,
                          "sequence '" + name + "' frame " + std::to_string(t));
    }
    if (ground_truth) {
        if (ground_truth->size() != frames.size()) {
            throw Error("sequence '" + name + "': " + std::to_string(ground_truth->size()) +
                        " ground-truth masks for " + std::to_string(frames.size()) + " frames");
        }
        for (std::size_t t = 0; t < ground_truth->size(); ++t) {
            const auto& m = (*ground_truth)[t];
            require_same_size(m.width(), m.height(), w, h,
                              "sequence '" + name + "' mask " + std::to_string(t));
        }
    }
    if (flow) {
        if (flow->size() + 1 != frames.size()) {
            throw Error("sequence '" + name + "': expected " + std::to_string(frames.size() - 1) +
                        " flow fields, got " + std::to_string(flow->size()));
        }
        for (std::size_t t = 0; t < flow->size(); ++t) {
            const auto& f = (*flow)[t];
            require_same_size(f.width(), f.height(), w, h,
                              "sequence '" + name + "' flow " + std::to_string(t));
        }
    }
}

const SequenceDescriptor& DatasetManifest::find(const std::string& name) const {
    for (const auto& s : sequences) {
        if (s.name == name) return s;
    }
    throw ManifestError("no sequence named '" + name + "' in manifest");
}

namespace {

std::vector<fs::path> path_list(const json& value, const fs::path& base, const std::string& where) {
    if (!value.is_array()) throw ManifestError(where + ": expected an array of paths");
    std::vector<fs::path> out;
    out.reserve(value.size());
    for (const auto& item : value) {
        if (!item.is_string()) throw ManifestError(where + ": expected string paths");
        fs::path p = item.get<std::string>();
        out.push_back(p.is_absolute() ? p : base / p);
    }
    return out;
}

void require_file(const fs::path& p, const std::string& sequence, const std::string& role,
                  std::size_t index) {
    if (!fs::is_regular_file(p)) {
        throw ManifestError("sequence '" + sequence + "' " + role + " " + std::to_string(index) +
                            ": missing file " + p.string());
    }
}

// Validates file presence and resolutions; fills width/height.
void check_descriptor(SequenceDescriptor& d) {
    if (d.frames.empty()) throw ManifestError("sequence '" + d.name + "': no frames");
    for (std::size_t t = 0; t < d.frames.size(); ++t) {
        require_file(d.frames[t], d.name, "frame", t);
        const ImageSize size = probe_image_size(d.frames[t]);
        if (t == 0) {
            d.width = size.width;
            d.height = size.height;
        } else if (size.width != d.width || size.height != d.height) {
            throw ManifestError("sequence '" + d.name + "' frame " + std::to_string(t) +
                                ": resolution " + std::to_string(size.width) + "x" +
                                std::to_string(size.height) + " differs from frame 0");
        }
    }
    if (d.gt_masks) {
        if (d.gt_masks->size() != d.frames.size()) {
            throw ManifestError("sequence '" + d.name + "': " + std::to_string(d.gt_masks->size()) +
                                " gt_masks for " + std::to_string(d.frames.size()) + " frames");
        }
        for (std::size_t t = 0; t < d.gt_masks->size(); ++t) {
            require_file((*d.gt_masks)[t], d.name, "mask", t);
            const ImageSize size = probe_image_size((*d.gt_masks)[t]);
            if (size.width != d.width || size.height != d.height) {
                throw ManifestError("sequence '" + d.name + "' frame " + std::to_string(t) +
                                    ": mask " + std::to_string(size.width) + "x" +
                                    std::to_string(size.height) + " does not match image " +
                                    std::to_string(d.width) + "x" + std::to_string(d.height));
            }
        }
    }
    if (d.flow) {
        if (d.flow->size() + 1 != d.frames.size()) {
            throw ManifestError("sequence '" + d.name + "': expected " +
                                std::to_string(d.frames.size() - 1) + " flow files, got " +
                                std::to_string(d.flow->size()));
        }
        for (std::size_t t = 0; t < d.flow->size(); ++t) require_file((*d.flow)[t], d.name, "flow", t);
    }
}

json relative_paths(const std::vector<fs::path>& paths, const fs::path& base) {
    json arr = json::array();
    for (const auto& p : paths) {
        const fs::path rel = p.lexically_relative(base);
        arr.push_back((rel.empty() || *rel.begin() == "..") ? p.generic_string() : rel.generic_string());
    }
    return arr;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ManifestError("manifest not found: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ManifestError(path.string() + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("sequences") || !doc["sequences"].is_array()) {
        throw ManifestError(path.string() + ": top level must be an object with a 'sequences' array");
    }
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");

    DatasetManifest manifest;
    manifest.source = path;
    std::set<std::string> names;
    std::size_t index = 0;
    for (const auto& entry : doc["sequences"]) {
        const std::string where = "sequences[" + std::to_string(index++) + "]";
        if (!entry.is_object()) throw ManifestError(where + ": expected an object");
        if (!entry.contains("name") || !entry["name"].is_string()) {
            throw ManifestError(where + ": missing string 'name'");
        }
        if (!entry.contains("frames")) throw ManifestError(where + ": missing 'frames'");

        SequenceDescriptor base_desc;
        base_desc.name = entry["name"].get<std::string>();
        const std::string seq_where = where + " ('" + base_desc.name + "')";
        base_desc.frames = path_list(entry["frames"], base, seq_where + ".frames");
        if (entry.contains("attributes") && !entry["attributes"].is_null()) {
            if (!entry["attributes"].is_array()) throw ManifestError(seq_where + ".attributes: expected array");
            for (const auto& a : entry["attributes"]) {
                if (!a.is_string()) throw ManifestError(seq_where + ".attributes: expected strings");
                base_desc.attributes.push_back(a.get<std::string>());
            }
        }
        if (entry.contains("flow") && !entry["flow"].is_null()) {
            base_desc.flow = path_list(entry["flow"], base, seq_where + ".flow");
        }
        if (entry.contains("protocol")) {
            if (!entry["protocol"].is_string()) throw ManifestError(seq_where + ".protocol: expected string");
            try {
                base_desc.protocol = parse_protocol(entry["protocol"].get<std::string>());
            } catch (const Error& e) {
                throw ManifestError(seq_where + ": " + e.what());
            }
        }
        if (entry.contains("category") && entry["category"].is_string()) {
            base_desc.category = entry["category"].get<std::string>();
        }

        std::vector<SequenceDescriptor> expanded;
        if (entry.contains("instances") && !entry["instances"].is_null()) {
            if (entry.contains("gt_masks") && !entry["gt_masks"].is_null()) {
                throw ManifestError(seq_where + ": 'instances' and 'gt_masks' are exclusive");
            }
            if (!entry["instances"].is_array()) throw ManifestError(seq_where + ".instances: expected array");
            int k = 1;
            for (const auto& inst : entry["instances"]) {
                SequenceDescriptor d = base_desc;
                d.name = base_desc.name + "_" + std::to_string(k);
                d.gt_masks = path_list(inst, base, seq_where + ".instances[" + std::to_string(k - 1) + "]");
                expanded.push_back(std::move(d));
                ++k;
            }
        } else {
            SequenceDescriptor d = base_desc;
            if (entry.contains("gt_masks") && !entry["gt_masks"].is_null()) {
                d.gt_masks = path_list(entry["gt_masks"], base, seq_where + ".gt_masks");
            }
            expanded.push_back(std::move(d));
        }

        for (auto& d : expanded) {
            if (!names.insert(d.name).second) {
                throw ManifestError("duplicate sequence name '" + d.name + "'");
            }
            check_descriptor(d);
            manifest.sequences.push_back(std::move(d));
        }
    }
    return manifest;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    json doc;
    doc["sequences"] = json::array();
    for (const auto& d : manifest.sequences) {
        json e;
        e["name"] = d.name;
        e["frames"] = relative_paths(d.frames, base);
        e["gt_masks"] = d.gt_masks ? relative_paths(*d.gt_masks, base) : json(nullptr);
        e["attributes"] = d.attributes;
        e["flow"] = d.flow ? relative_paths(*d.flow, base) : json(nullptr);
        e["protocol"] = protocol_name(d.protocol);
        if (!d.category.empty()) e["category"] = d.category;
        doc["sequences"].push_back(std::move(e));
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("cannot write manifest: " + path.string());
}

VideoSequence load_sequence(const SequenceDescriptor& d) {
    VideoSequence seq;
    seq.name = d.name;
    seq.attributes = d.attributes;
    seq.category = d.category;
    seq.frames.reserve(d.frames.size());
    for (const auto& p : d.frames) seq.frames.push_back(read_image(p));
    if (d.gt_masks) {
        std::vector<BinaryMask> gt;
        gt.reserve(d.gt_masks->size());
        for (const auto& p : *d.gt_masks) gt.push_back(read_mask(p));
        seq.ground_truth = std::move(gt);
    }
    if (d.flow) {
        std::vector<FlowField> flow;
        for (const auto& p : *d.flow) flow.push_back(read_flo(p));
        seq.flow = std::move(flow);
    }
    seq.validate();
    return seq;
}

}  // namespace masktrack
