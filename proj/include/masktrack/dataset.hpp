// SPDX-License-Identifier: Apache-2.0
//
// Sequences, annotations, evaluation protocols and the JSON dataset manifest.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "masktrack/flow.hpp"
#include "masktrack/types.hpp"

namespace masktrack {

struct Annotation {
    int frame_index = 0;
    std::variant<BinaryMask, BoundingBox> kind;

    [[nodiscard]] bool is_box() const noexcept { return std::holds_alternative<BoundingBox>(kind); }
    /// The segment itself, or the filled box at the given resolution.
    [[nodiscard]] BinaryMask as_mask(int width, int height) const;
};

struct EvalProtocol {
    bool exclude_first = true;
    bool exclude_last = true;

    static constexpr EvalProtocol davis() noexcept { return {true, true}; }
    static constexpr EvalProtocol first_only() noexcept { return {true, false}; }

    friend bool operator==(const EvalProtocol&, const EvalProtocol&) = default;
};

/// "davis" or "first-only".
EvalProtocol parse_protocol(const std::string& name);
std::string protocol_name(const EvalProtocol& protocol);

/// An in-memory video: frames share one resolution; ground truth, when
/// present, has one mask per frame; flow, when present, has one field per
/// consecutive frame pair (t -> t+1).
struct VideoSequence {
    std::string name;
    std::vector<Image> frames;
    std::optional<std::vector<BinaryMask>> ground_truth;
    std::vector<std::string> attributes;
    std::optional<std::vector<FlowField>> flow;
    std::string category;

    [[nodiscard]] int frame_count() const noexcept { return static_cast<int>(frames.size()); }
    [[nodiscard]] int width() const { return frames.at(0).width(); }
    [[nodiscard]] int height() const { return frames.at(0).height(); }

    /// Checks the invariants above; throws naming the sequence and frame.
    void validate() const;
};

/// One manifest entry, with file references resolved against the manifest directory.
struct SequenceDescriptor {
    std::string name;
    std::vector<std::filesystem::path> frames;
    std::optional<std::vector<std::filesystem::path>> gt_masks;
    std::vector<std::string> attributes;
    std::optional<std::vector<std::filesystem::path>> flow;
    EvalProtocol protocol = EvalProtocol::davis();
    std::string category;
    int width = 0;
    int height = 0;
};

struct DatasetManifest {
    std::filesystem::path source;
    std::vector<SequenceDescriptor> sequences;

    [[nodiscard]] const SequenceDescriptor& find(const std::string& name) const;
};

class ManifestError : public Error {
public:
    using Error::Error;
};

/// Parses and validates a manifest: schema, unique names, every referenced
/// file present, frame/mask resolutions consistent, list lengths consistent.
/// Entries with an "instances" list are split into one sequence per instance.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Writes a manifest whose paths are relative to `path`'s directory where possible.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

VideoSequence load_sequence(const SequenceDescriptor& descriptor);

}  // namespace masktrack
