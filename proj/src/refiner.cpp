// SPDX-License-Identifier: Apache-2.0

#include "masktrack/refiner.hpp"

#include <algorithm>
#include <cmath>

#include "masktrack/morphology.hpp"
#include "masktrack/simd/kernels.hpp"

namespace masktrack {

BinaryMask threshold(const ScoreMap& scores, float tau) {
    if (!(tau >= 0.0F && tau <= 1.0F)) throw Error("threshold: tau must lie in [0,1]");
    BinaryMask mask(scores.width(), scores.height());
    simd::active().threshold(scores.data(), tau, mask.data());
    return mask;
}

namespace {

ScoreMap scores_from_mask(const BinaryMask& mask) {
    std::vector<float> v(mask.pixel_count());
    const auto m = mask.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = m[i] ? 1.0F : 0.0F;
    return ScoreMap(mask.width(), mask.height(), std::move(v));
}

void check_guidance(const RefinerRequest& request) {
    if (request.guidance != nullptr) {
        require_same_size(request.image.width(), request.image.height(), request.guidance->width(),
                          request.guidance->height(), "refiner guidance");
    }
}

}  // namespace

ScoreMap IdentityRefiner::refine(const RefinerRequest& request) {
    if (request.guidance == nullptr) throw RefinerError("identity refiner requires a guidance mask");
    check_guidance(request);
    return scores_from_mask(*request.guidance);
}

OracleRefiner::OracleRefiner(std::vector<BinaryMask> ground_truth)
    : ground_truth_(std::move(ground_truth)) {
    if (ground_truth_.empty()) throw RefinerError("oracle refiner requires ground truth");
}

ScoreMap OracleRefiner::refine(const RefinerRequest& request) {
    if (request.frame_index < 0 || static_cast<std::size_t>(request.frame_index) >= ground_truth_.size()) {
        throw RefinerError("oracle refiner: no ground truth for frame " +
                           std::to_string(request.frame_index));
    }
    const BinaryMask& gt = ground_truth_[static_cast<std::size_t>(request.frame_index)];
    require_same_size(request.image.width(), request.image.height(), gt.width(), gt.height(),
                      "oracle ground truth frame " + std::to_string(request.frame_index));
    return scores_from_mask(gt);
}

std::size_t color_model_feature(const Image& image, int x, int y, const BoundingBox& reference,
                                const ColorModelOptions& options) {
    const int bins = options.color_bins;
    std::size_t color = 0;
    if (image.channels() == 3) {
        for (int c = 0; c < 3; ++c) color = color * bins + image.at(x, y, c) * bins / 256;
    } else {
        const std::size_t g = image.at(x, y) * bins / 256;
        color = (g * bins + g) * bins + g;
    }
    const int grid = options.grid;
    const long cx = std::clamp<long>(static_cast<long>(x - reference.x_min) * grid / reference.width(), 0, grid - 1);
    const long cy = std::clamp<long>(static_cast<long>(y - reference.y_min) * grid / reference.height(), 0, grid - 1);
    return color * static_cast<std::size_t>(grid * grid) + static_cast<std::size_t>(cy * grid + cx);
}

namespace {

std::size_t feature_count(const ColorModelOptions& o) {
    return static_cast<std::size_t>(o.color_bins) * o.color_bins * o.color_bins * o.grid * o.grid;
}

BoundingBox reference_box(const BinaryMask* guidance, int width, int height) {
    if (guidance != nullptr && guidance->any()) return tight_box(*guidance);
    return {0, 0, width - 1, height - 1};
}

std::vector<double> normalize(const std::vector<std::uint64_t>& counts) {
    std::vector<double> p(counts.size());
    double total = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        p[i] = counts[i] == 0 ? 1.0 : static_cast<double>(counts[i]);
        total += p[i];
    }
    for (double& v : p) v /= total;
    return p;
}

}  // namespace

double OnlineColorModelState::posterior(std::size_t feature) const {
    const double f = fg_prior_ * fg_[feature];
    const double b = (1.0 - fg_prior_) * bg_[feature];
    return f / (f + b);
}

ColorModelFitter::ColorModelFitter(ColorModelOptions options)
    : options_(options), fg_counts_(feature_count(options), 0), bg_counts_(feature_count(options), 0) {
    if (options.color_bins < 1 || options.color_bins > 256 || options.grid < 1) {
        throw RefinerError("color model: invalid bin configuration");
    }
    if (!(options.lambda >= 0.0 && options.lambda <= 1.0)) {
        throw RefinerError("color model: lambda must lie in [0,1]");
    }
    if (!(options.prior_sigma_fraction > 0.0)) {
        throw RefinerError("color model: prior sigma must be positive");
    }
}

void ColorModelFitter::add(const TrainingSample& sample) {
    const Image& image = sample.image;
    require_same_size(image.width(), image.height(), sample.target_mask.width(),
                      sample.target_mask.height(), "color model sample '" + sample.id + "'");
    const BoundingBox ref = reference_box(sample.input_mask.pixel_count() ? &sample.input_mask : nullptr,
                                          image.width(), image.height());
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            const std::size_t f = color_model_feature(image, x, y, ref, options_);
            if (sample.target_mask.at(x, y)) {
                ++fg_counts_[f];
                ++fg_total_;
            } else {
                ++bg_counts_[f];
                ++bg_total_;
            }
        }
    }
    ++samples_;
}

OnlineColorModelState ColorModelFitter::finish() const {
    if (samples_ == 0) throw RefinerError("color model: no training samples");
    if (fg_total_ == 0) throw RefinerError("color model: every training target is empty");
    OnlineColorModelState state;
    state.options_ = options_;
    state.fg_ = normalize(fg_counts_);
    state.bg_ = normalize(bg_counts_);
    state.fg_prior_ = static_cast<double>(fg_total_) / static_cast<double>(fg_total_ + bg_total_);
    return state;
}

OnlineColorModelState fit_online(std::span<const TrainingSample> samples,
                                 const ColorModelOptions& options) {
    ColorModelFitter fitter(options);
    for (const auto& s : samples) fitter.add(s);
    return fitter.finish();
}

ScoreMap ColorModelRefiner::refine(const RefinerRequest& request) {
    if (!state_) throw RefinerError("color model refiner used before fitting");
    check_guidance(request);
    const Image& image = request.image;
    const ColorModelOptions& opt = state_->options();
    const BoundingBox ref = reference_box(request.guidance, image.width(), image.height());

    // Without guidance the spatial prior is dropped (lambda = 1).
    const bool use_prior = request.guidance != nullptr && request.guidance->any();
    std::vector<double> distance;
    double sigma = 1.0;
    if (use_prior) {
        distance = distance_to_foreground(*request.guidance);
        sigma = opt.prior_sigma_fraction * std::max(image.width(), image.height());
    }

    std::vector<float> out(image.pixel_count());
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * image.width() + x;
            double score = state_->posterior(color_model_feature(image, x, y, ref, opt));
            if (use_prior) {
                const double prior = std::exp(-distance[i] / sigma);
                score *= opt.lambda + (1.0 - opt.lambda) * prior;
            }
            out[i] = static_cast<float>(std::clamp(score, 0.0, 1.0));
        }
    }
    return ScoreMap(image.width(), image.height(), std::move(out));
}

ExternalRefiner::ExternalRefiner(const std::string& address)
    : client_(wire::open_endpoint(address)) {}

ExternalRefiner::~ExternalRefiner() {
    try {
        client_.shutdown();
    } catch (const std::exception&) {
        // The backend is already gone.
    }
}

ScoreMap ExternalRefiner::refine(const RefinerRequest& request) {
    check_guidance(request);
    try {
        return client_.refine(request.image, request.guidance);
    } catch (const wire::ProtocolError& e) {
        throw RefinerError(std::string("external backend: ") + e.what());
    } catch (const wire::RemoteError& e) {
        throw RefinerError(e.what());
    }
}

}  // namespace masktrack
