// SPDX-License-Identifier: Apache-2.0
//
// masktrack command-line tool. Settings come from --config, then MASKTRACK_*
// environment variables, then flags.

#include <cstdlib>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "masktrack/cli/commands.hpp"

namespace {

using namespace masktrack;

struct CommonFlags {
    std::string config;
    std::string manifest;
    std::string refiner;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::optional<int> stride;
    bool flow = false;
    bool no_flow = false;
    bool crf = false;
    bool no_crf = false;
    bool boxes = false;

    void add(CLI::App* app) {
        app->add_option("--config", config, "JSON run configuration");
        app->add_option("--manifest", manifest, "Dataset manifest");
        app->add_option("--refiner", refiner, "identity | oracle | colormodel | external:<address>");
        app->add_option("--out", out, "Output directory");
        app->add_option("--seed", seed, "Master seed");
        app->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
        app->add_option("--stride", stride, "Annotate every k-th frame (0: first frame only)")
            ->check(CLI::NonNegativeNumber);
        app->add_flag("--flow", flow, "Fuse with the flow-magnitude branch");
        app->add_flag("--no-flow", no_flow, "Disable flow fusion");
        app->add_flag("--crf", crf, "Enable CRF post-processing");
        app->add_flag("--no-crf", no_crf, "Disable CRF post-processing");
        app->add_flag("--boxes", boxes, "Use bounding-box annotations");
    }

    [[nodiscard]] RunConfig resolve() const {
        RunConfig c = config.empty() ? RunConfig{} : load_config(config);
        apply_env_overrides(c, [](const char* name) { return std::getenv(name); });
        if (!manifest.empty()) c.manifest = manifest;
        if (!refiner.empty()) c.refiner = parse_refiner_spec(refiner);
        if (!out.empty()) c.output = out;
        if (seed) c.seed = *seed;
        if (jobs) c.jobs = *jobs;
        if (stride) c.annotation_stride = *stride;
        if (flow) c.use_flow = true;
        if (no_flow) c.use_flow = false;
        if (crf && !c.crf) c.crf = CrfParams{};
        if (no_crf) c.crf.reset();
        if (boxes) c.boxes = true;
        c.validate();
        return c;
    }
};

std::vector<int> parse_strides(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        const int v = std::stoi(item, &used);
        if (used != item.size() || v < 1) throw ConfigError("bad stride '" + item + "'");
        out.push_back(v);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"masktrack: guided mask propagation for video object segmentation"};
    app.require_subcommand(1);

    CommonFlags synth_flags;
    int synth_masks = 2;
    auto* synth = app.add_subcommand("synth", "Write preview grids of synthesized input masks");
    synth_flags.add(synth);
    synth->add_option("--masks-per-image", synth_masks, "Variants per source image");

    CommonFlags export_flags;
    int export_masks = 2;
    bool export_all = false;
    auto* export_train = app.add_subcommand("export-train", "Materialize the offline training corpus");
    export_flags.add(export_train);
    export_train->add_option("--masks-per-image", export_masks, "Samples per source image");
    export_train->add_flag("--all-frames", export_all, "Use every annotated frame, not only the first");

    CommonFlags run_flags;
    auto* run = app.add_subcommand("run", "Propagate masks through every manifest sequence");
    run_flags.add(run);

    cli::EvalOptions eval_opts;
    std::string eval_results;
    std::string eval_manifest;
    std::string eval_out;
    std::string eval_protocol;
    bool zero_empty = false;
    auto* eval = app.add_subcommand("eval", "Score a result directory against ground truth");
    eval->add_option("--results", eval_results, "Result directory of a run")->required();
    eval->add_option("--manifest", eval_manifest, "Dataset manifest")->required();
    eval->add_option("--protocol", eval_protocol, "davis | first-only (default: per manifest entry)");
    eval->add_option("--out", eval_out, "Report directory (default: the result directory)");
    eval->add_flag("--both-empty-zero", zero_empty, "Score frames where both masks are empty as 0");

    CommonFlags density_flags;
    std::string density_strides = "1,2,3,5,10,20,30,40";
    std::string density_protocol = "davis";
    auto* density = app.add_subcommand("density", "Annotation-density experiment with the copy baseline");
    density_flags.add(density);
    density->add_option("--strides", density_strides, "Comma-separated annotation strides");
    density->add_option("--protocol", density_protocol, "davis | first-only");

    SyntheticOptions synthetic;
    std::string synthetic_out;
    auto* gen = app.add_subcommand("generate-synthetic", "Write the procedural test dataset");
    gen->add_option("--out", synthetic_out, "Dataset root")->required();
    gen->add_option("--sequences", synthetic.sequences, "Number of sequences");
    gen->add_option("--frames", synthetic.frames, "Frames per sequence");
    gen->add_option("--width", synthetic.width, "Frame width");
    gen->add_option("--height", synthetic.height, "Frame height");
    gen->add_option("--seed", synthetic.seed, "Seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) return cli::cmd_synth(synth_flags.resolve(), synth_masks, std::cout, std::cerr);
        if (*export_train) {
            return cli::cmd_export_train(export_flags.resolve(), export_masks, export_all, std::cout, std::cerr);
        }
        if (*run) return cli::cmd_run(run_flags.resolve(), std::cout, std::cerr);
        if (*eval) {
            eval_opts.results = eval_results;
            eval_opts.manifest = eval_manifest;
            eval_opts.out = eval_out;
            if (!eval_protocol.empty()) eval_opts.protocol = parse_protocol(eval_protocol);
            if (zero_empty) eval_opts.convention = EmptyConvention::BothEmptyIsZero;
            return cli::cmd_eval(eval_opts, std::cout, std::cerr);
        }
        if (*density) {
            cli::DensityOptions opts;
            opts.strides = parse_strides(density_strides);
            opts.boxes = density_flags.boxes;
            opts.protocol = parse_protocol(density_protocol);
            return cli::cmd_density(density_flags.resolve(), opts, std::cout, std::cerr);
        }
        if (*gen) return cli::cmd_generate_synthetic(synthetic_out, synthetic, std::cout, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
