// SPDX-License-Identifier: Apache-2.0
//
// Mask refinement: (image, optional guidance mask) -> per-pixel foreground
// score. Backends:
//   identity    guidance passed through as 0/1 scores
//   oracle      ground truth of the requested frame (test harness)
//   colormodel  appearance histograms fitted online, gated by a spatial prior
//   external    a process speaking the wire protocol

#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "masktrack/mask_synthesis.hpp"
#include "masktrack/types.hpp"
#include "masktrack/wire.hpp"

namespace masktrack {

struct RefinerRequest {
    const Image& image;
    /// Null encodes the "no guidance input" mode.
    const BinaryMask* guidance = nullptr;
    /// Frame of the sequence being refined; only the oracle needs it.
    int frame_index = 0;
};

class RefinerError : public Error {
public:
    using Error::Error;
};

class Refiner {
public:
    virtual ~Refiner() = default;
    /// Score map at image resolution with values in [0, 1].
    virtual ScoreMap refine(const RefinerRequest& request) = 0;
    [[nodiscard]] virtual std::string_view kind() const noexcept = 0;
};

/// Foreground where score > tau (strict).
BinaryMask threshold(const ScoreMap& scores, float tau = 0.5F);

class IdentityRefiner final : public Refiner {
public:
    ScoreMap refine(const RefinerRequest& request) override;
    [[nodiscard]] std::string_view kind() const noexcept override { return "identity"; }
};

class OracleRefiner final : public Refiner {
public:
    explicit OracleRefiner(std::vector<BinaryMask> ground_truth);
    ScoreMap refine(const RefinerRequest& request) override;
    [[nodiscard]] std::string_view kind() const noexcept override { return "oracle"; }

private:
    std::vector<BinaryMask> ground_truth_;
};

struct ColorModelOptions {
    int color_bins = 16;            // per RGB channel
    int grid = 4;                   // position cells per axis
    double lambda = 0.5;            // weight of appearance alone vs appearance x prior
    double prior_sigma_fraction = 0.1;  // of max(width, height)

    friend bool operator==(const ColorModelOptions&, const ColorModelOptions&) = default;
};

/// Fitted appearance model. Features are (quantized RGB, position cell), where
/// positions are normalized to the guidance mask's bounding box (the whole
/// image without guidance) and clamped to the border cells.
class OnlineColorModelState {
public:
    [[nodiscard]] const ColorModelOptions& options() const noexcept { return options_; }
    [[nodiscard]] std::span<const double> foreground() const noexcept { return fg_; }
    [[nodiscard]] std::span<const double> background() const noexcept { return bg_; }
    [[nodiscard]] double foreground_prior() const noexcept { return fg_prior_; }

    /// P(fg | feature) from the histograms and class prior.
    [[nodiscard]] double posterior(std::size_t feature) const;

    friend bool operator==(const OnlineColorModelState&, const OnlineColorModelState&) = default;

private:
    friend class ColorModelFitter;
    ColorModelOptions options_;
    std::vector<double> fg_;
    std::vector<double> bg_;
    double fg_prior_ = 0.0;
};

/// Feature index of pixel (x, y) given the reference box for positions.
std::size_t color_model_feature(const Image& image, int x, int y, const BoundingBox& reference,
                                const ColorModelOptions& options);

/// Accumulates counts over samples, then normalizes. Bins never observed for
/// a class get a pseudocount of 1 before normalization.
class ColorModelFitter {
public:
    explicit ColorModelFitter(ColorModelOptions options = {});
    void add(const TrainingSample& sample);
    /// Throws RefinerError when no sample had foreground.
    [[nodiscard]] OnlineColorModelState finish() const;

private:
    ColorModelOptions options_;
    std::vector<std::uint64_t> fg_counts_;
    std::vector<std::uint64_t> bg_counts_;
    std::uint64_t fg_total_ = 0;
    std::uint64_t bg_total_ = 0;
    std::size_t samples_ = 0;
};

OnlineColorModelState fit_online(std::span<const TrainingSample> samples,
                                 const ColorModelOptions& options = {});

class ColorModelRefiner final : public Refiner {
public:
    ColorModelRefiner() = default;
    explicit ColorModelRefiner(std::shared_ptr<const OnlineColorModelState> state)
        : state_(std::move(state)) {}

    void set_state(std::shared_ptr<const OnlineColorModelState> state) { state_ = std::move(state); }
    [[nodiscard]] bool fitted() const noexcept { return state_ != nullptr; }

    ScoreMap refine(const RefinerRequest& request) override;
    [[nodiscard]] std::string_view kind() const noexcept override { return "colormodel"; }

private:
    std::shared_ptr<const OnlineColorModelState> state_;
};

class ExternalRefiner final : public Refiner {
public:
    explicit ExternalRefiner(std::unique_ptr<wire::Stream> stream) : client_(std::move(stream)) {}
    explicit ExternalRefiner(const std::string& address);
    ~ExternalRefiner() override;
    ExternalRefiner(const ExternalRefiner&) = delete;
    ExternalRefiner& operator=(const ExternalRefiner&) = delete;

    ScoreMap refine(const RefinerRequest& request) override;
    void fine_tune(std::span<const TrainingSample> samples) { client_.fine_tune(samples); }
    [[nodiscard]] std::string_view kind() const noexcept override { return "external"; }

private:
    wire::Client client_;
};

}  // namespace masktrack
