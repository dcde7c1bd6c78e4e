// SPDX-License-Identifier: Apache-2.0

#include "masktrack/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "masktrack/flow.hpp"
#include "masktrack/image_io.hpp"
#include "masktrack/parallel.hpp"
#include "masktrack/random.hpp"

namespace masktrack {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

RefinerSpec parse_refiner_spec(const std::string& text) {
    if (text == "identity" || text == "oracle" || text == "colormodel") return {text, ""};
    constexpr std::string_view kExternal = "external:";
    if (text.rfind(kExternal, 0) == 0 && text.size() > kExternal.size()) {
        return {"external", text.substr(kExternal.size())};
    }
    throw ConfigError("unknown refiner '" + text +
                      "' (expected identity, oracle, colormodel or external:<address>)");
}

std::string format_refiner_spec(const RefinerSpec& spec) {
    return spec.kind == "external" ? "external:" + spec.endpoint : spec.kind;
}

void RunConfig::validate() const {
    parse_refiner_spec(format_refiner_spec(refiner));
    augmentation.validate();
    propagation.validate();
    if (crf) crf->validate();
    if (jobs < 1) throw ConfigError("jobs must be at least 1");
    if (annotation_stride < 0) throw ConfigError("annotation stride must be non-negative");
}

namespace {

ordered_json crf_json(const CrfParams& p) {
    return {{"iterations", p.iterations},
            {"appearance_weight", p.appearance_weight},
            {"appearance_rgb_sigma", p.appearance_rgb_sigma},
            {"appearance_xyt_sigma", p.appearance_xyt_sigma},
            {"smoothness_weight", p.smoothness_weight},
            {"smoothness_xy_sigma", p.smoothness_xy_sigma},
            {"temporal_window", p.temporal_window}};
}

// Copies `key` from `obj` into `out` if present, with a typed error otherwise.
template <typename T>
void read_key(const nlohmann::json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

void check_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [k, v] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
            throw ConfigError(where + ": unknown key '" + k + "'");
        }
    }
}

}  // namespace

std::string serialize_config(const RunConfig& c) {
    const DeformationParams& d = c.augmentation.deformation;
    ordered_json j;
    j["manifest"] = c.manifest.generic_string();
    j["refiner"] = format_refiner_spec(c.refiner);
    j["seed"] = c.seed;
    j["jobs"] = c.jobs;
    j["annotations"] = {{"mode", c.boxes ? "box" : "segment"}, {"stride", c.annotation_stride}};
    j["deformation"] = {{"scale_jitter", d.scale_jitter},
                        {"translate_jitter", d.translate_jitter},
                        {"tps_control_points", d.tps_control_points},
                        {"tps_point_jitter", d.tps_point_jitter},
                        {"dilation_radius", d.dilation_radius},
                        {"enable_affine", d.enable_affine},
                        {"enable_nonrigid", d.enable_nonrigid},
                        {"enable_dilation", d.enable_dilation},
                        {"anisotropic_scale", d.anisotropic_scale}};
    j["augmentation"] = {{"flips", c.augmentation.flips},
                         {"rotations", c.augmentation.rotations},
                         {"samples_target", c.augmentation.samples_target}};
    const PropagationConfig& p = c.propagation;
    j["propagation"] = {
        {"dilation_radius", p.test_dilation_radius},
        {"tau", p.tau},
        {"empty_mask_policy",
         p.empty_mask_policy == EmptyMaskPolicy::FallbackToDilatedPrevious ? "fallback" : "propagate-empty"},
        {"direction", p.direction == Direction::Forward ? "forward" : "backward"}};
    j["flow"] = c.use_flow;
    j["crf"] = c.crf ? crf_json(*c.crf) : ordered_json(nullptr);
    j["fine_tune_external"] = c.fine_tune_external;
    return j.dump(2) + "\n";
}

RunConfig parse_config(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    check_keys(j, {"manifest", "refiner", "seed", "jobs", "annotations", "deformation", "augmentation",
                   "propagation", "flow", "crf", "fine_tune_external", "output"},
               "config");
    RunConfig c;
    std::string text;
    if (j.contains("manifest")) {
        read_key(j, "manifest", text, "config");
        c.manifest = text;
    }
    if (j.contains("output")) {
        read_key(j, "output", text, "config");
        c.output = text;
    }
    if (j.contains("refiner")) {
        read_key(j, "refiner", text, "config");
        c.refiner = parse_refiner_spec(text);
    }
    read_key(j, "seed", c.seed, "config");
    read_key(j, "jobs", c.jobs, "config");
    read_key(j, "flow", c.use_flow, "config");
    read_key(j, "fine_tune_external", c.fine_tune_external, "config");
    if (j.contains("annotations")) {
        const auto& a = j["annotations"];
        check_keys(a, {"mode", "stride"}, "config.annotations");
        std::string mode = c.boxes ? "box" : "segment";
        read_key(a, "mode", mode, "config.annotations");
        if (mode != "box" && mode != "segment") throw ConfigError("config.annotations.mode: expected box or segment");
        c.boxes = mode == "box";
        read_key(a, "stride", c.annotation_stride, "config.annotations");
    }
    if (j.contains("deformation")) {
        const auto& d = j["deformation"];
        const std::string w = "config.deformation";
        check_keys(d, {"scale_jitter", "translate_jitter", "tps_control_points", "tps_point_jitter",
                       "dilation_radius", "enable_affine", "enable_nonrigid", "enable_dilation",
                       "anisotropic_scale"}, w);
        DeformationParams& p = c.augmentation.deformation;
        read_key(d, "scale_jitter", p.scale_jitter, w);
        read_key(d, "translate_jitter", p.translate_jitter, w);
        read_key(d, "tps_control_points", p.tps_control_points, w);
        read_key(d, "tps_point_jitter", p.tps_point_jitter, w);
        read_key(d, "dilation_radius", p.dilation_radius, w);
        read_key(d, "enable_affine", p.enable_affine, w);
        read_key(d, "enable_nonrigid", p.enable_nonrigid, w);
        read_key(d, "enable_dilation", p.enable_dilation, w);
        read_key(d, "anisotropic_scale", p.anisotropic_scale, w);
    }
    if (j.contains("augmentation")) {
        const auto& a = j["augmentation"];
        const std::string w = "config.augmentation";
        check_keys(a, {"flips", "rotations", "samples_target"}, w);
        read_key(a, "flips", c.augmentation.flips, w);
        read_key(a, "rotations", c.augmentation.rotations, w);
        read_key(a, "samples_target", c.augmentation.samples_target, w);
    }
    if (j.contains("propagation")) {
        const auto& p = j["propagation"];
        const std::string w = "config.propagation";
        check_keys(p, {"dilation_radius", "tau", "empty_mask_policy", "direction"}, w);
        read_key(p, "dilation_radius", c.propagation.test_dilation_radius, w);
        read_key(p, "tau", c.propagation.tau, w);
        if (p.contains("empty_mask_policy")) {
            read_key(p, "empty_mask_policy", text, w);
            if (text == "fallback") c.propagation.empty_mask_policy = EmptyMaskPolicy::FallbackToDilatedPrevious;
            else if (text == "propagate-empty") c.propagation.empty_mask_policy = EmptyMaskPolicy::PropagateEmpty;
            else throw ConfigError(w + ".empty_mask_policy: expected fallback or propagate-empty");
        }
        if (p.contains("direction")) {
            read_key(p, "direction", text, w);
            if (text == "forward") c.propagation.direction = Direction::Forward;
            else if (text == "backward") c.propagation.direction = Direction::Backward;
            else throw ConfigError(w + ".direction: expected forward or backward");
        }
    }
    if (j.contains("crf") && !j["crf"].is_null()) {
        const auto& p = j["crf"];
        const std::string w = "config.crf";
        check_keys(p, {"iterations", "appearance_weight", "appearance_rgb_sigma", "appearance_xyt_sigma",
                       "smoothness_weight", "smoothness_xy_sigma", "temporal_window"}, w);
        CrfParams crf;
        read_key(p, "iterations", crf.iterations, w);
        read_key(p, "appearance_weight", crf.appearance_weight, w);
        read_key(p, "appearance_rgb_sigma", crf.appearance_rgb_sigma, w);
        read_key(p, "appearance_xyt_sigma", crf.appearance_xyt_sigma, w);
        read_key(p, "smoothness_weight", crf.smoothness_weight, w);
        read_key(p, "smoothness_xy_sigma", crf.smoothness_xy_sigma, w);
        read_key(p, "temporal_window", crf.temporal_window, w);
        c.crf = crf;
    }
    try {
        c.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

void apply_env_overrides(RunConfig& config, const std::function<const char*(const char*)>& getenv_fn) {
    auto flag = [](const char* name, const std::string& v) {
        if (v == "1" || v == "true" || v == "on") return true;
        if (v == "0" || v == "false" || v == "off") return false;
        throw ConfigError(std::string(name) + ": expected 0 or 1, got '" + v + "'");
    };
    auto integer = [](const char* name, const std::string& v) {
        const bool digits = !v.empty() && std::all_of(v.begin(), v.end(), [](char ch) { return ch >= '0' && ch <= '9'; });
        try {
            if (!digits) throw std::invalid_argument(v);
            std::size_t used = 0;
            const unsigned long long n = std::stoull(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return n;
        } catch (const std::exception&) {
            throw ConfigError(std::string(name) + ": expected a non-negative integer, got '" + v + "'");
        }
    };
    if (const char* v = getenv_fn("MASKTRACK_MANIFEST")) config.manifest = v;
    if (const char* v = getenv_fn("MASKTRACK_REFINER")) config.refiner = parse_refiner_spec(v);
    if (const char* v = getenv_fn("MASKTRACK_SEED")) config.seed = integer("MASKTRACK_SEED", v);
    if (const char* v = getenv_fn("MASKTRACK_JOBS")) config.jobs = static_cast<int>(integer("MASKTRACK_JOBS", v));
    if (const char* v = getenv_fn("MASKTRACK_OUT")) config.output = v;
    if (const char* v = getenv_fn("MASKTRACK_FLOW")) config.use_flow = flag("MASKTRACK_FLOW", v);
    if (const char* v = getenv_fn("MASKTRACK_CRF")) {
        if (flag("MASKTRACK_CRF", v)) {
            if (!config.crf) config.crf = CrfParams{};
        } else {
            config.crf.reset();
        }
    }
}

std::vector<Annotation> run_annotations(const VideoSequence& sequence, const RunConfig& config) {
    if (!sequence.ground_truth) {
        throw ConfigError("sequence '" + sequence.name + "' has no ground truth to take annotations from");
    }
    const int stride = config.annotation_stride == 0 ? sequence.frame_count() : config.annotation_stride;
    std::vector<Annotation> out;
    for (int t = 0; t < sequence.frame_count(); t += stride) {
        const BinaryMask& gt = (*sequence.ground_truth)[static_cast<std::size_t>(t)];
        if (config.boxes && gt.any()) out.push_back({t, tight_box(gt)});
        else out.push_back({t, gt});
    }
    return out;
}

namespace {

// Online training data for one branch: every usable annotation contributes an
// equal share of the sample budget.
void online_samples(std::span<const Image> images, std::span<const BinaryMask> masks,
                    const AugmentationParams& params, std::uint64_t seed,
                    const std::function<void(TrainingSample&&)>& sink) {
    std::vector<std::size_t> usable;
    for (std::size_t k = 0; k < masks.size(); ++k) {
        if (masks[k].any()) usable.push_back(k);
    }
    if (usable.empty()) throw RefinerError("no annotation with foreground to fit on");
    const auto total = static_cast<std::size_t>(params.samples_target);
    for (std::size_t u = 0; u < usable.size(); ++u) {
        const std::size_t share = total / usable.size() + (u < total % usable.size() ? 1 : 0);
        if (share == 0) continue;
        AugmentationParams a = params;
        a.samples_target = static_cast<int>(share);
        a.deformation.rng_seed = item_seed(seed, usable[u]);
        build_online_set(images[usable[u]], masks[usable[u]], a, sink);
    }
}

struct Branches {
    std::unique_ptr<Refiner> rgb;
    std::unique_ptr<Refiner> flow;  // null: no fusion, or fusion through `rgb`
    bool flow_uses_rgb = false;
};

Branches make_branches(const VideoSequence& seq, std::span<const Annotation> anns, const RunConfig& config,
                       std::uint64_t seed) {
    const bool fuse = config.use_flow && seq.flow && !seq.flow->empty();
    Branches b;
    const std::string& kind = config.refiner.kind;
    std::vector<Image> images;
    std::vector<Image> magnitudes;
    std::vector<BinaryMask> masks;
    for (const auto& a : anns) {
        images.push_back(seq.frames.at(static_cast<std::size_t>(a.frame_index)));
        masks.push_back(a.as_mask(seq.width(), seq.height()));
        if (fuse) {
            const std::size_t pair = std::min(static_cast<std::size_t>(a.frame_index), seq.flow->size() - 1);
            magnitudes.push_back(magnitude_image((*seq.flow)[pair]));
        }
    }

    if (kind == "identity") {
        b.rgb = std::make_unique<IdentityRefiner>();
        if (fuse) b.flow = std::make_unique<IdentityRefiner>();
    } else if (kind == "oracle") {
        if (!seq.ground_truth) throw ConfigError("oracle refiner needs ground truth for '" + seq.name + "'");
        b.rgb = std::make_unique<OracleRefiner>(*seq.ground_truth);
        if (fuse) b.flow = std::make_unique<OracleRefiner>(*seq.ground_truth);
    } else if (kind == "colormodel") {
        auto fit = [&](std::span<const Image> src, std::uint64_t s) {
            ColorModelFitter fitter;
            online_samples(src, masks, config.augmentation, s,
                           [&fitter](TrainingSample&& t) { fitter.add(t); });
            return std::make_shared<const OnlineColorModelState>(fitter.finish());
        };
        b.rgb = std::make_unique<ColorModelRefiner>(fit(images, item_seed(seed, 0)));
        if (fuse) b.flow = std::make_unique<ColorModelRefiner>(fit(magnitudes, item_seed(seed, 1)));
    } else if (kind == "external") {
        auto ext = std::make_unique<ExternalRefiner>(config.refiner.endpoint);
        if (config.fine_tune_external) {
            std::vector<TrainingSample> samples;
            online_samples(images, masks, config.augmentation, item_seed(seed, 0),
                           [&samples](TrainingSample&& t) { samples.push_back(std::move(t)); });
            ext->fine_tune(samples);
        }
        b.rgb = std::move(ext);
        b.flow_uses_rgb = fuse;
    } else {
        throw ConfigError("unknown refiner kind '" + kind + "'");
    }
    return b;
}

}  // namespace

PropagationResult run_sequence(const VideoSequence& sequence, std::size_t sequence_index,
                               std::span<const Annotation> annotations, const RunConfig& config) {
    const std::uint64_t seed = item_seed(config.seed, sequence_index);
    Branches branches = make_branches(sequence, annotations, config, seed);
    Refiner* flow = branches.flow_uses_rgb ? branches.rgb.get() : branches.flow.get();
    const FrameScorer scorer = make_frame_scorer(sequence, *branches.rgb, flow);

    PropagationConfig pc = config.propagation;
    pc.keep_scores = config.crf.has_value();
    PropagationResult result = annotations.size() == 1 ? propagate(sequence, annotations, scorer, pc)
                                                       : propagate_multi(sequence, annotations, scorer, pc);
    if (config.crf) {
        std::vector<BinaryMask> refined = postprocess_sequence(sequence.frames, result.scores, *config.crf, pc.tau, config.jobs);
        for (std::size_t t = 0; t < refined.size(); ++t) {
            if (result.provenance[t] == Provenance::Annotated) continue;  // annotations stay verbatim
            result.masks[t] = std::move(refined[t]);
        }
    }
    return result;
}

fs::path mask_path(const fs::path& out, const std::string& sequence, int frame) {
    char file[32];
    std::snprintf(file, sizeof file, "%05d.png", frame);
    return out / sequence / file;
}

void write_sequence_result(const fs::path& out, const VideoSequence& sequence, const PropagationResult& result) {
    ordered_json frames = ordered_json::array();
    for (int t = 0; t < sequence.frame_count(); ++t) {
        const auto i = static_cast<std::size_t>(t);
        write_mask(mask_path(out, sequence.name, t), result.masks[i]);
        frames.push_back({{"frame", t},
                          {"provenance", std::string(provenance_name(result.provenance[i]))},
                          {"source_frame", result.source_frame[i]}});
    }
    ordered_json doc;
    doc["sequence"] = sequence.name;
    doc["frames"] = frames;
    std::ofstream f(out / sequence.name / "provenance.json", std::ios::binary | std::ios::trunc);
    f << doc.dump(2) << '\n';
    if (!f) throw IoError("cannot write provenance for '" + sequence.name + "'");
}

std::vector<BinaryMask> read_sequence_result(const fs::path& dir, const SequenceDescriptor& descriptor) {
    std::vector<BinaryMask> masks;
    for (std::size_t t = 0; t < descriptor.frames.size(); ++t) {
        const fs::path p = mask_path(dir, descriptor.name, static_cast<int>(t));
        if (!fs::exists(p)) {
            throw IoError("missing result for sequence '" + descriptor.name + "' frame " + std::to_string(t) +
                          ": " + p.string());
        }
        masks.push_back(read_mask(p));
    }
    return masks;
}

RunSummary run_dataset(const RunConfig& config) {
    config.validate();
    if (config.output.empty()) throw ConfigError("no output directory given");
    const DatasetManifest manifest = load_manifest(config.manifest);
    fs::create_directories(config.output);
    {
        std::ofstream f(config.output / "config.json", std::ios::binary | std::ios::trunc);
        f << serialize_config(config);
        if (!f) throw IoError("cannot write " + (config.output / "config.json").string());
    }
    std::vector<std::size_t> frames(manifest.sequences.size(), 0);
    // Threads go to sequences first; a lone sequence spends them on CRF windows.
    RunConfig per_sequence = config;
    if (manifest.sequences.size() > 1) per_sequence.jobs = 1;
    parallel_for(manifest.sequences.size(), config.jobs, [&](std::size_t i) {
        const VideoSequence seq = load_sequence(manifest.sequences[i]);
        const auto anns = run_annotations(seq, config);
        const PropagationResult result = run_sequence(seq, i, anns, per_sequence);
        write_sequence_result(config.output, seq, result);
        frames[i] = static_cast<std::size_t>(seq.frame_count());
    });
    RunSummary s;
    s.sequences = manifest.sequences.size();
    for (const auto f : frames) s.frames += f;
    return s;
}

}  // namespace masktrack
