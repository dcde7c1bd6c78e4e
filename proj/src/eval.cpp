// SPDX-License-Identifier: Apache-2.0

#include "masktrack/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "masktrack/image_io.hpp"
#include "masktrack/simd/kernels.hpp"

namespace masktrack {

double iou(const BinaryMask& pred, const BinaryMask& gt, EmptyConvention convention) {
    require_same_size(pred.width(), pred.height(), gt.width(), gt.height(), "iou");
    const simd::OverlapCounts c = simd::active().count_overlap(pred.data(), gt.data());
    if (c.union_ == 0) return convention == EmptyConvention::BothEmptyIsOne ? 1.0 : 0.0;
    return static_cast<double>(c.intersection) / static_cast<double>(c.union_);
}

std::vector<int> evaluated_frames(int frame_count, const EvalProtocol& protocol) {
    std::vector<int> frames;
    const int first = protocol.exclude_first ? 1 : 0;
    const int last = protocol.exclude_last ? frame_count - 2 : frame_count - 1;
    for (int t = first; t <= last; ++t) frames.push_back(t);
    return frames;
}

SequenceScore score_sequence(std::span<const BinaryMask> predictions, const VideoSequence& sequence,
                             const EvalProtocol& protocol, EmptyConvention convention) {
    if (!sequence.ground_truth) {
        throw EvalError("sequence '" + sequence.name + "' has no ground truth");
    }
    const auto& gt = *sequence.ground_truth;
    if (predictions.size() != gt.size()) {
        throw EvalError("sequence '" + sequence.name + "': " + std::to_string(predictions.size()) +
                        " predictions for " + std::to_string(gt.size()) + " ground-truth frames");
    }
    SequenceScore score;
    score.name = sequence.name;
    score.frames = evaluated_frames(static_cast<int>(gt.size()), protocol);
    if (score.frames.empty()) {
        throw EvalError("sequence '" + sequence.name + "': no frame left to evaluate under protocol " +
                        protocol_name(protocol));
    }
    for (const int t : score.frames) {
        const auto i = static_cast<std::size_t>(t);
        try {
            score.per_frame.push_back(iou(predictions[i], gt[i], convention));
        } catch (const DimensionMismatch& e) {
            throw EvalError("sequence '" + sequence.name + "' frame " + std::to_string(t) + ": " + e.what());
        }
    }
    score.mean = std::accumulate(score.per_frame.begin(), score.per_frame.end(), 0.0) /
                 static_cast<double>(score.per_frame.size());
    return score;
}

SequenceScore score_sequence(const PropagationResult& result, const VideoSequence& sequence,
                             const EvalProtocol& protocol, EmptyConvention convention) {
    return score_sequence(result.masks, sequence, protocol, convention);
}

Report dataset_report(std::vector<SequenceScore> scores, const DatasetManifest& manifest) {
    std::map<std::string, std::vector<std::string>> attributes;
    std::map<std::string, std::string> categories;
    for (const auto& s : manifest.sequences) {
        attributes[s.name] = s.attributes;
        if (!s.category.empty()) categories[s.name] = s.category;
    }
    return dataset_report(std::move(scores), attributes, categories);
}

Report dataset_report(std::vector<SequenceScore> scores,
                      const std::map<std::string, std::vector<std::string>>& attributes,
                      const std::map<std::string, std::string>& categories) {
    Report report;
    report.sequences = std::move(scores);
    if (report.sequences.empty()) return report;

    std::map<std::string, double> attr_sum;
    std::map<std::string, double> class_sum;
    double total = 0.0;
    for (const auto& s : report.sequences) {
        total += s.mean;
        if (const auto it = attributes.find(s.name); it != attributes.end()) {
            std::vector<std::string> tags = it->second;
            std::sort(tags.begin(), tags.end());
            tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
            for (const auto& tag : tags) {
                ++report.attributes[tag].sequences;
                attr_sum[tag] += s.mean;
            }
        }
        if (const auto it = categories.find(s.name); it != categories.end()) {
            ++report.classes[it->second].sequences;
            class_sum[it->second] += s.mean;
        }
    }
    report.dataset_mean = total / static_cast<double>(report.sequences.size());
    for (auto& [tag, g] : report.attributes) g.mean = attr_sum[tag] / static_cast<double>(g.sequences);
    if (!report.classes.empty()) {
        double sum = 0.0;
        for (auto& [name, g] : report.classes) {
            g.mean = class_sum[name] / static_cast<double>(g.sequences);
            sum += g.mean;
        }
        report.mean_per_class = sum / static_cast<double>(report.classes.size());
    }
    return report;
}

double quantile(std::vector<double> sample, double level) {
    if (sample.empty()) throw EvalError("quantile of an empty sample");
    if (!(level >= 0.0 && level <= 1.0)) throw EvalError("quantile level outside [0,1]");
    std::sort(sample.begin(), sample.end());
    const double h = static_cast<double>(sample.size() - 1) * level;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sample.size() - 1);
    return sample[lo] + (h - static_cast<double>(lo)) * (sample[hi] - sample[lo]);
}

std::vector<Annotation> strided_annotations(const VideoSequence& sequence, int stride, bool use_boxes) {
    if (stride < 1) throw EvalError("annotation stride must be at least 1");
    if (!sequence.ground_truth) {
        throw EvalError("sequence '" + sequence.name + "' has no ground truth to annotate from");
    }
    std::vector<Annotation> out;
    for (int t = 0; t < sequence.frame_count(); t += stride) {
        const BinaryMask& gt = (*sequence.ground_truth)[static_cast<std::size_t>(t)];
        if (use_boxes && gt.any()) {
            out.push_back({t, tight_box(gt)});
        } else {
            out.push_back({t, gt});
        }
    }
    return out;
}

std::vector<DensityPoint> density_experiment(std::span<const VideoSequence> sequences,
                                             std::vector<int> strides, const SequenceMethod& method,
                                             bool use_boxes, const EvalProtocol& protocol) {
    std::sort(strides.begin(), strides.end());
    strides.erase(std::unique(strides.begin(), strides.end()), strides.end());
    std::vector<DensityPoint> points;
    for (const int stride : strides) {
        std::vector<double> pooled;
        std::size_t annotated = 0;
        std::size_t frames = 0;
        for (const auto& seq : sequences) {
            const auto anns = strided_annotations(seq, stride, use_boxes);
            annotated += anns.size();
            frames += static_cast<std::size_t>(seq.frame_count());
            const PropagationResult result = method(seq, anns);
            const SequenceScore s = score_sequence(result, seq, protocol);
            pooled.insert(pooled.end(), s.per_frame.begin(), s.per_frame.end());
        }
        if (pooled.empty()) throw EvalError("density experiment: no frames to score");
        DensityPoint p;
        p.annotation_stride = stride;
        p.percent_annotated = 100.0 * static_cast<double>(annotated) / static_cast<double>(frames);
        p.mean_iou = std::accumulate(pooled.begin(), pooled.end(), 0.0) / static_cast<double>(pooled.size());
        for (std::size_t k = 0; k < kQuantileLevels.size(); ++k) p.quantiles[k] = quantile(pooled, kQuantileLevels[k]);
        p.frames_pooled = pooled.size();
        points.push_back(p);
    }
    return points;
}

bool mean_nonincreasing_in_stride(std::span<const DensityPoint> points) {
    for (std::size_t i = 1; i < points.size(); ++i) {
        if (points[i].mean_iou > points[i - 1].mean_iou) return false;
    }
    return true;
}

ReportFormat parse_report_format(const std::string& name) {
    if (name == "csv") return ReportFormat::Csv;
    if (name == "json") return ReportFormat::Json;
    throw Error("unknown report format '" + name + "' (expected csv or json)");
}

namespace {

std::string fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

// Rounded like the CSV so both formats agree.
double rounded(double v) { return std::stod(fixed(v)); }

nlohmann::ordered_json group_json(const std::map<std::string, GroupMean>& groups) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& [name, g] : groups) {
        arr.push_back({{"name", name}, {"sequences", g.sequences}, {"mean_iou", rounded(g.mean)}});
    }
    return arr;
}

}  // namespace

void emit_report(const Report& report, ReportFormat format, const std::filesystem::path& path) {
    std::size_t total_frames = 0;
    for (const auto& s : report.sequences) total_frames += s.per_frame.size();
    if (format == ReportFormat::Csv) {
        std::string text = "sequence,frames_evaluated,mean_iou\n";
        for (const auto& s : report.sequences) {
            text += s.name + "," + std::to_string(s.per_frame.size()) + "," + fixed(s.mean) + "\n";
        }
        if (report.dataset_mean) {
            text += "dataset_mean," + std::to_string(total_frames) + "," + fixed(*report.dataset_mean) + "\n";
        }
        write_text(path, text);
        return;
    }
    nlohmann::ordered_json j;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& s : report.sequences) {
        rows.push_back({{"sequence", s.name}, {"frames_evaluated", s.per_frame.size()}, {"mean_iou", rounded(s.mean)}});
    }
    j["sequences"] = rows;
    j["frames_evaluated"] = total_frames;
    j["dataset_mean"] = report.dataset_mean ? nlohmann::ordered_json(rounded(*report.dataset_mean)) : nullptr;
    j["attributes"] = group_json(report.attributes);
    j["classes"] = group_json(report.classes);
    j["mean_per_class"] = report.mean_per_class ? nlohmann::ordered_json(rounded(*report.mean_per_class)) : nullptr;
    write_text(path, j.dump(2) + "\n");
}

void emit_group_table(const Report& report, const std::filesystem::path& path) {
    std::string text = "group,name,sequences,mean_iou\n";
    for (const auto& [name, g] : report.attributes) {
        text += "attribute," + name + "," + std::to_string(g.sequences) + "," + fixed(g.mean) + "\n";
    }
    for (const auto& [name, g] : report.classes) {
        text += "class," + name + "," + std::to_string(g.sequences) + "," + fixed(g.mean) + "\n";
    }
    write_text(path, text);
}

void emit_density(std::span<const DensityPoint> points, ReportFormat format,
                  const std::filesystem::path& path) {
    static constexpr std::array<const char*, 8> kNames{"q05", "q10", "q20", "q30", "q70", "q80", "q90", "q95"};
    if (format == ReportFormat::Csv) {
        std::string text = "stride,percent,mean";
        for (const char* n : kNames) text += std::string(",") + n;
        text += "\n";
        for (const auto& p : points) {
            text += std::to_string(p.annotation_stride) + "," + fixed(p.percent_annotated) + "," + fixed(p.mean_iou);
            for (const double q : p.quantiles) text += "," + fixed(q);
            text += "\n";
        }
        write_text(path, text);
        return;
    }
    auto arr = nlohmann::ordered_json::array();
    for (const auto& p : points) {
        nlohmann::ordered_json row;
        row["stride"] = p.annotation_stride;
        row["percent"] = rounded(p.percent_annotated);
        row["mean"] = rounded(p.mean_iou);
        for (std::size_t k = 0; k < kNames.size(); ++k) row[kNames[k]] = rounded(p.quantiles[k]);
        arr.push_back(row);
    }
    write_text(path, arr.dump(2) + "\n");
}

}  // namespace masktrack
