// SPDX-License-Identifier: Apache-2.0
//
// Whole-run plumbing behind the command-line tool: run configuration, refiner
// construction, per-sequence processing and the on-disk result layout
//   <out>/config.json
//   <out>/<sequence>/<frame:05>.png
//   <out>/<sequence>/provenance.json

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "masktrack/crf.hpp"
#include "masktrack/dataset.hpp"
#include "masktrack/mask_synthesis.hpp"
#include "masktrack/propagation.hpp"
#include "masktrack/refiner.hpp"

namespace masktrack {

class ConfigError : public Error {
public:
    using Error::Error;
};

struct RefinerSpec {
    std::string kind = "colormodel";  // identity | oracle | colormodel | external
    std::string endpoint;             // external only

    friend bool operator==(const RefinerSpec&, const RefinerSpec&) = default;
};

/// "identity", "oracle", "colormodel" or "external:<address>".
RefinerSpec parse_refiner_spec(const std::string& text);
std::string format_refiner_spec(const RefinerSpec& spec);

struct RunConfig {
    std::filesystem::path manifest;
    RefinerSpec refiner;
    AugmentationParams augmentation;  // deformation.rng_seed is derived from `seed`
    PropagationConfig propagation;
    bool use_flow = false;
    std::optional<CrfParams> crf;
    std::filesystem::path output;
    std::uint64_t seed = 0;
    int jobs = 1;
    bool boxes = false;
    /// 0 annotates the first frame only; k > 0 annotates every k-th frame.
    int annotation_stride = 0;
    /// Send the online training set to external backends before refining.
    bool fine_tune_external = true;

    void validate() const;
};

/// Pretty-printed JSON of every field except `output`.
std::string serialize_config(const RunConfig& config);

/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);

/// Applies MASKTRACK_MANIFEST, MASKTRACK_REFINER, MASKTRACK_SEED, MASKTRACK_JOBS,
/// MASKTRACK_OUT, MASKTRACK_FLOW and MASKTRACK_CRF (0/1) when set.
void apply_env_overrides(RunConfig& config,
                         const std::function<const char*(const char*)>& getenv_fn);

/// Annotations the run starts from, drawn from ground truth.
std::vector<Annotation> run_annotations(const VideoSequence& sequence, const RunConfig& config);

/// Processes one sequence: refiner setup (online fitting for the color model,
/// fine-tuning for external backends), propagation, optional flow fusion and
/// optional CRF. `sequence_index` decorrelates the per-sequence seeds.
PropagationResult run_sequence(const VideoSequence& sequence, std::size_t sequence_index,
                               std::span<const Annotation> annotations, const RunConfig& config);

std::filesystem::path mask_path(const std::filesystem::path& out, const std::string& sequence, int frame);

void write_sequence_result(const std::filesystem::path& out, const VideoSequence& sequence,
                           const PropagationResult& result);

/// Reads `<dir>/<sequence>/<frame:05>.png` for every frame; throws IoError
/// naming the first missing file.
std::vector<BinaryMask> read_sequence_result(const std::filesystem::path& dir,
                                             const SequenceDescriptor& descriptor);

struct RunSummary {
    std::size_t sequences = 0;
    std::size_t frames = 0;
};

/// Loads the manifest, processes every sequence on `config.jobs` threads and
/// writes the result tree. Output bytes do not depend on the job count.
RunSummary run_dataset(const RunConfig& config);

}  // namespace masktrack
