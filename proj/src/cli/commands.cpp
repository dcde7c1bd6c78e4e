// SPDX-License-Identifier: Apache-2.0

#include "masktrack/cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "json.hpp"
#include "masktrack/image_io.hpp"
#include "masktrack/mask_synthesis.hpp"
#include "masktrack/random.hpp"

namespace masktrack::cli {

namespace fs = std::filesystem;

namespace {

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        fn();
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

std::string fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

struct SourceItem {
    std::string id;
    Image image;
    BinaryMask mask;
};

// Annotated frames of the manifest in order: the first one per sequence, or all.
std::vector<SourceItem> annotated_items(const DatasetManifest& manifest, bool all_frames) {
    std::vector<SourceItem> items;
    for (const auto& d : manifest.sequences) {
        if (!d.gt_masks) continue;
        const std::size_t count = all_frames ? d.frames.size() : 1;
        for (std::size_t t = 0; t < count; ++t) {
            char id[32];
            std::snprintf(id, sizeof id, "_%05zu", t);
            items.push_back({d.name + id, read_image(d.frames[t]), read_mask((*d.gt_masks)[t])});
        }
    }
    return items;
}

Image mask_panel(const BinaryMask& m) {
    Image img(m.width(), m.height(), 3);
    const auto src = m.data();
    auto dst = img.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const std::uint8_t v = src[i] ? 255 : 0;
        dst[3 * i] = dst[3 * i + 1] = dst[3 * i + 2] = v;
    }
    return img;
}

Image hstack(const std::vector<Image>& panels, int gap) {
    int w = 0;
    int h = 0;
    for (const auto& p : panels) {
        w += p.width();
        h = std::max(h, p.height());
    }
    w += gap * static_cast<int>(panels.size() - 1);
    Image out(w, h, 3);
    std::fill(out.data().begin(), out.data().end(), std::uint8_t{128});
    int x0 = 0;
    for (const auto& p : panels) {
        for (int y = 0; y < p.height(); ++y) {
            for (int x = 0; x < p.width(); ++x) {
                for (int c = 0; c < 3; ++c) out.at(x0 + x, y, c) = p.at(x, y, p.channels() == 3 ? c : 0);
            }
        }
        x0 += p.width() + gap;
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << text;
    if (!f) throw IoError("cannot write " + path.string());
}

void require_output(const RunConfig& config) {
    if (config.output.empty()) throw ConfigError("no output directory given");
}

}  // namespace

int cmd_synth(const RunConfig& config, int masks_per_image, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        require_output(config);
        if (masks_per_image < 1) throw ConfigError("masks per image must be at least 1");
        const DatasetManifest manifest = load_manifest(config.manifest);
        std::vector<SourceItem> items = annotated_items(manifest, false);
        std::vector<CorpusItem> corpus;
        for (auto& it : items) corpus.push_back({it.id, it.image, it.mask});
        DeformationParams params = config.augmentation.deformation;
        params.rng_seed = config.seed;

        std::size_t k = 0;
        std::size_t written = 0;
        std::vector<Image> panels;
        auto flush = [&] {
            if (panels.empty()) return;
            write_image(config.output / (corpus[k].id + "_grid.png"), hstack(panels, 2));
            ++written;
            panels.clear();
        };
        const CorpusStats stats = build_offline_corpus(corpus, params, masks_per_image, [&](TrainingSample&& s) {
            while (s.id.rfind(corpus[k].id + "_", 0) != 0) {
                flush();
                ++k;
            }
            if (panels.empty()) {
                panels.push_back(s.image);
                panels.push_back(mask_panel(s.target_mask));
            }
            panels.push_back(mask_panel(s.input_mask));
        });
        flush();
        out << "grids: " << written << " (skipped " << stats.skipped << " empty annotations)\n";
    });
}

int cmd_export_train(const RunConfig& config, int masks_per_image, bool all_frames, std::ostream& out,
                     std::ostream& err) {
    return guarded(err, [&] {
        require_output(config);
        if (masks_per_image < 1) throw ConfigError("masks per image must be at least 1");
        std::vector<CorpusItem> corpus;
        if (!config.manifest.empty()) {
            const DatasetManifest manifest = load_manifest(config.manifest);
            for (auto& it : annotated_items(manifest, all_frames)) corpus.push_back({it.id, it.image, it.mask});
        }
        DeformationParams params = config.augmentation.deformation;
        params.rng_seed = config.seed;
        nlohmann::ordered_json index;
        index["seed"] = config.seed;
        index["masks_per_image"] = masks_per_image;
        auto entries = nlohmann::ordered_json::array();
        const CorpusStats stats = build_offline_corpus(corpus, params, masks_per_image, [&](TrainingSample&& s) {
            const std::string img = s.id + "_img.png";
            const std::string in = s.id + "_in.png";
            const std::string gt = s.id + "_gt.png";
            write_image(config.output / img, s.image);
            write_mask(config.output / in, s.input_mask);
            write_mask(config.output / gt, s.target_mask);
            entries.push_back({{"id", s.id}, {"image", img}, {"input_mask", in}, {"target_mask", gt}});
        });
        index["samples"] = entries;
        index["skipped"] = stats.skipped;
        write_text(config.output / "index.json", index.dump(2) + "\n");
        out << "samples: " << stats.samples << " (skipped " << stats.skipped << ")\n";
    });
}

int cmd_run(const RunConfig& config, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const RunSummary s = run_dataset(config);
        out << "sequences: " << s.sequences << ", frames: " << s.frames << ", output: "
            << config.output.string() << '\n';
    });
}

int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const DatasetManifest manifest = load_manifest(options.manifest);
        std::vector<SequenceScore> scores;
        for (const auto& d : manifest.sequences) {
            const VideoSequence seq = load_sequence(d);
            const std::vector<BinaryMask> pred = read_sequence_result(options.results, d);
            scores.push_back(score_sequence(pred, seq, options.protocol.value_or(d.protocol), options.convention));
        }
        const Report report = dataset_report(std::move(scores), manifest);
        const fs::path dir = options.out.empty() ? options.results : options.out;
        emit_report(report, ReportFormat::Csv, dir / "sequences.csv");
        emit_report(report, ReportFormat::Json, dir / "report.json");
        emit_group_table(report, dir / "groups.csv");
        for (const auto& s : report.sequences) out << s.name << ' ' << fixed(s.mean) << '\n';
        out << "mIoU " << (report.dataset_mean ? fixed(*report.dataset_mean) : std::string("n/a")) << '\n';
    });
}

int cmd_density(const RunConfig& config, const DensityOptions& options, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        require_output(config);
        config.validate();
        if (options.strides.empty()) throw ConfigError("no strides given");
        const DatasetManifest manifest = load_manifest(config.manifest);
        std::vector<VideoSequence> sequences;
        for (const auto& d : manifest.sequences) sequences.push_back(load_sequence(d));

        const SequenceMethod masktrack = [&](const VideoSequence& seq, std::span<const Annotation> anns) {
            const auto index = static_cast<std::size_t>(&seq - sequences.data());
            return run_sequence(seq, index, anns, config);
        };
        const SequenceMethod baseline = [](const VideoSequence& seq, std::span<const Annotation> anns) {
            return copy_baseline(seq, anns);
        };
        const auto ours = density_experiment(sequences, options.strides, masktrack, options.boxes, options.protocol);
        const auto base = density_experiment(sequences, options.strides, baseline, options.boxes, options.protocol);
        fs::create_directories(config.output);
        write_text(config.output / "config.json", serialize_config(config));
        emit_density(ours, ReportFormat::Csv, config.output / "density_masktrack.csv");
        emit_density(ours, ReportFormat::Json, config.output / "density_masktrack.json");
        emit_density(base, ReportFormat::Csv, config.output / "density_baseline.csv");
        emit_density(base, ReportFormat::Json, config.output / "density_baseline.json");
        out << "stride percent masktrack baseline\n";
        for (std::size_t i = 0; i < ours.size(); ++i) {
            out << ours[i].annotation_stride << ' ' << fixed(ours[i].percent_annotated) << ' '
                << fixed(ours[i].mean_iou) << ' ' << fixed(base[i].mean_iou) << '\n';
        }
        if (!mean_nonincreasing_in_stride(base)) {
            err << "warning: baseline mean increases with stride on this set\n";
        }
    });
}

int cmd_generate_synthetic(const fs::path& root, const SyntheticOptions& options, std::ostream& out,
                           std::ostream& err) {
    return guarded(err, [&] {
        const DatasetManifest m = write_synthetic_dataset(root, options);
        out << "sequences: " << m.sequences.size() << ", manifest: " << m.source.string() << '\n';
    });
}

}  // namespace masktrack::cli
