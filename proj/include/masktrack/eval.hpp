// SPDX-License-Identifier: Apache-2.0
//
// Jaccard scoring, per-sequence and per-attribute reports, and the
// annotation-density experiment.

#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "masktrack/dataset.hpp"
#include "masktrack/propagation.hpp"

namespace masktrack {

class EvalError : public Error {
public:
    using Error::Error;
};

enum class EmptyConvention { BothEmptyIsOne, BothEmptyIsZero };

/// |pred & gt| / |pred | gt|. Throws DimensionMismatch on differing sizes.
double iou(const BinaryMask& pred, const BinaryMask& gt,
           EmptyConvention convention = EmptyConvention::BothEmptyIsOne);

struct SequenceScore {
    std::string name;
    std::vector<int> frames;         // evaluated frame indices
    std::vector<double> per_frame;   // IoU of each evaluated frame
    double mean = 0.0;
};

/// Frames left after the protocol's exclusions.
std::vector<int> evaluated_frames(int frame_count, const EvalProtocol& protocol);

/// Scores predictions against the sequence ground truth. Throws EvalError
/// without ground truth, on a frame-count mismatch, or when the protocol
/// leaves no frame to evaluate.
SequenceScore score_sequence(std::span<const BinaryMask> predictions, const VideoSequence& sequence,
                             const EvalProtocol& protocol,
                             EmptyConvention convention = EmptyConvention::BothEmptyIsOne);

SequenceScore score_sequence(const PropagationResult& result, const VideoSequence& sequence,
                             const EvalProtocol& protocol,
                             EmptyConvention convention = EmptyConvention::BothEmptyIsOne);

struct GroupMean {
    std::size_t sequences = 0;
    double mean = 0.0;
};

struct Report {
    std::vector<SequenceScore> sequences;
    /// Mean of per-sequence means ("mean per object"); absent when empty.
    std::optional<double> dataset_mean;
    std::map<std::string, GroupMean> attributes;
    std::map<std::string, GroupMean> classes;
    /// Mean of the class means, when any sequence carries a category.
    std::optional<double> mean_per_class;
};

/// Attributes and categories are looked up in the manifest by sequence name;
/// sequences missing from it contribute to the dataset mean only.
Report dataset_report(std::vector<SequenceScore> scores, const DatasetManifest& manifest);

/// Same, with attributes and categories given directly.
Report dataset_report(std::vector<SequenceScore> scores,
                      const std::map<std::string, std::vector<std::string>>& attributes,
                      const std::map<std::string, std::string>& categories);

inline constexpr std::array<double, 8> kQuantileLevels{0.05, 0.10, 0.20, 0.30, 0.70, 0.80, 0.90, 0.95};

/// Linear interpolation between order statistics (Hyndman-Fan type 7).
/// Throws EvalError on an empty sample.
double quantile(std::vector<double> sample, double level);

struct DensityPoint {
    int annotation_stride = 1;
    double percent_annotated = 0.0;
    double mean_iou = 0.0;
    std::array<double, 8> quantiles{};
    std::size_t frames_pooled = 0;
};

/// Produces masks for one sequence from the given annotations.
using SequenceMethod =
    std::function<PropagationResult(const VideoSequence&, std::span<const Annotation>)>;

/// Annotations drawn from ground truth on frames 0, stride, 2*stride, ...;
/// tight boxes instead of segments when `use_boxes`.
std::vector<Annotation> strided_annotations(const VideoSequence& sequence, int stride, bool use_boxes);

/// For each stride (output sorted ascending): annotate, run `method`, score
/// under `protocol` and pool every evaluated frame across sequences.
std::vector<DensityPoint> density_experiment(std::span<const VideoSequence> sequences,
                                             std::vector<int> strides, const SequenceMethod& method,
                                             bool use_boxes, const EvalProtocol& protocol);

/// True when the mean does not increase as the stride grows.
bool mean_nonincreasing_in_stride(std::span<const DensityPoint> points);

enum class ReportFormat { Csv, Json };

ReportFormat parse_report_format(const std::string& name);

/// Per-sequence table; CSV: `sequence,frames_evaluated,mean_iou` with a final
/// `dataset_mean` row when nonempty. JSON additionally carries attribute and
/// class means. Values are printed with six decimals.
void emit_report(const Report& report, ReportFormat format, const std::filesystem::path& path);

/// `group,name,sequences,mean_iou` rows for attributes then classes.
void emit_group_table(const Report& report, const std::filesystem::path& path);

/// CSV: `stride,percent,mean,q05,q10,q20,q30,q70,q80,q90,q95`.
void emit_density(std::span<const DensityPoint> points, ReportFormat format,
                  const std::filesystem::path& path);

}  // namespace masktrack
