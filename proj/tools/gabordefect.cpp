#include "gabordefect/cli.hpp"
#include "gabordefect/error.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace gabordefect;

struct Common {
    std::string config;
    std::string checkpoint;
    std::string out;
    std::optional<std::uint64_t> seed;
};

cli::RunConfig resolve(const Common& opts) {
    auto cfg = cli::load_config(opts.config);
    if (!opts.out.empty()) cfg.output_dir = opts.out;
    if (opts.seed) cfg.train.seed = *opts.seed;
    return cfg;
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reconstruction-based texture defect detection with Gabor scoring"};
    app.require_subcommand(1);

    Common train_opts, eval_opts, sweep_opts, vis_opts;

    auto* train = app.add_subcommand("train", "train the reconstruction network on normal images");
    train->add_option("--config", train_opts.config, "run config file")->required();
    train->add_option("--out", train_opts.out, "output directory (overrides output_dir)");
    train->add_option("--seed", train_opts.seed, "seed (overrides seed)");

    auto* evaluate = app.add_subcommand("eval", "score the test split and report the AUC");
    evaluate->add_option("--config", eval_opts.config, "run config file")->required();
    evaluate->add_option("--checkpoint", eval_opts.checkpoint, "checkpoint file")->required();
    evaluate->add_option("--out", eval_opts.out, "output directory (overrides output_dir)");

    auto* sweep = app.add_subcommand("sweep", "grid-search Gabor parameters by AUC");
    std::string kernels = "5:39:2", sigmas = "1:20:1", lambdas = "1:20:1", gammas = "0.2:4.0:0.2";
    bool dry_run = false;
    sweep->add_option("--config", sweep_opts.config, "run config file")->required();
    sweep->add_option("--checkpoint", sweep_opts.checkpoint, "checkpoint file");
    sweep->add_option("--out", sweep_opts.out, "output directory (overrides output_dir)");
    sweep->add_option("--kernel", kernels, "kernel sizes, start:stop:step or a,b,c")->capture_default_str();
    sweep->add_option("--sigma", sigmas, "sigma values")->capture_default_str();
    sweep->add_option("--lambda", lambdas, "wavelength values")->capture_default_str();
    sweep->add_option("--gamma", gammas, "aspect ratio values")->capture_default_str();
    sweep->add_flag("--dry-run", dry_run, "validate the ranges and print the tuple count");

    auto* visualize = app.add_subcommand("visualize", "write reconstruction, Gabor responses and filter bank PNGs");
    std::string image;
    visualize->add_option("--config", vis_opts.config, "run config file")->required();
    visualize->add_option("--checkpoint", vis_opts.checkpoint, "checkpoint file")->required();
    visualize->add_option("--image", image, "input image")->required();
    visualize->add_option("--out", vis_opts.out, "output directory (overrides output_dir)");

    auto* synth = app.add_subcommand("synth", "generate a striped synthetic dataset");
    cli::SynthSpec spec;
    std::string synth_out;
    synth->add_option("--out", synth_out, "dataset root to create")->required();
    synth->add_option("--seed", spec.seed, "generator seed")->capture_default_str();
    synth->add_option("--period", spec.period, "stripe period in pixels")->capture_default_str();
    synth->add_option("--train", spec.train_count, "normal training images")->capture_default_str();
    synth->add_option("--test-normal", spec.test_normal, "normal test images")->capture_default_str();
    synth->add_option("--test-defect", spec.test_defect, "defect test images")->capture_default_str();
    synth->add_option("--size", spec.image_size, "image side in pixels")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "gabordefect: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        if (*train) {
            cli::run_train(resolve(train_opts), std::cout);
        } else if (*evaluate) {
            cli::run_eval(resolve(eval_opts), eval_opts.checkpoint, std::cout);
        } else if (*sweep) {
            const eval::SweepRanges ranges{cli::parse_int_range(kernels), cli::parse_range(sigmas),
                                           cli::parse_range(lambdas), cli::parse_range(gammas)};
            if (!dry_run && sweep_opts.checkpoint.empty())
                throw Error(ErrorCode::InvalidArgument, "sweep needs --checkpoint unless --dry-run is given");
            cli::run_sweep(resolve(sweep_opts), sweep_opts.checkpoint, ranges, dry_run, std::cout);
        } else if (*visualize) {
            const auto cfg = resolve(vis_opts);
            cli::run_visualize(cfg, vis_opts.checkpoint, image, cfg.output_dir);
        } else if (*synth) {
            cli::write_synthetic_dataset(synth_out, spec);
            std::cout << "wrote synthetic dataset to " << synth_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "gabordefect: error: " << one_line(e.what()) << "\n";
        return 1;
    }
    return 0;
}
