// SPDX-License-Identifier: Apache-2.0
//
// Subcommands of the masktrack tool. Each returns a process exit status and
// reports failures on `err`.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "masktrack/dataset.hpp"
#include "masktrack/eval.hpp"
#include "masktrack/pipeline.hpp"
#include "masktrack/synthetic.hpp"

namespace masktrack::cli {

/// Preview grids, one PNG per sequence: first annotated frame, its
/// annotation, then `masks_per_image` synthesized input masks.
int cmd_synth(const RunConfig& config, int masks_per_image, std::ostream& out, std::ostream& err);

/// Offline corpus from the first annotated frame of every sequence (every
/// annotated frame with `all_frames`): `<id>_img.png`, `<id>_in.png`,
/// `<id>_gt.png` per sample plus index.json.
int cmd_export_train(const RunConfig& config, int masks_per_image, bool all_frames, std::ostream& out,
                     std::ostream& err);

int cmd_run(const RunConfig& config, std::ostream& out, std::ostream& err);

struct EvalOptions {
    std::filesystem::path results;
    std::filesystem::path manifest;
    std::optional<EvalProtocol> protocol;  // per-sequence manifest protocol when absent
    std::filesystem::path out;             // defaults to `results`
    EmptyConvention convention = EmptyConvention::BothEmptyIsOne;
};

/// Writes sequences.csv, groups.csv and report.json.
int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err);

struct DensityOptions {
    std::vector<int> strides{1, 2, 3, 5, 10, 20, 30, 40};
    bool boxes = false;
    EvalProtocol protocol = EvalProtocol::davis();
};

/// Writes density_masktrack.{csv,json} and density_baseline.{csv,json}.
int cmd_density(const RunConfig& config, const DensityOptions& options, std::ostream& out, std::ostream& err);

int cmd_generate_synthetic(const std::filesystem::path& root, const SyntheticOptions& options,
                           std::ostream& out, std::ostream& err);

}  // namespace masktrack::cli
