#pragma once

#include "gabordefect/augment.hpp"
#include "gabordefect/eval.hpp"
#include "gabordefect/gabor.hpp"
#include "gabordefect/net.hpp"
#include "gabordefect/train.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gabordefect::cli {

/// Everything a run needs, read from a flat `key = value` file. Lines starting
/// with '#' and blank lines are ignored.
///
/// Keys: image_size base_width depth patch_size embed_dim num_heads ffn_mult
/// use_vit | epochs batch_size learning_rate seed | grid_k p_salt p_pepper
/// p_patch masked_target | gabor (preset name) or gabor_kernel gabor_sigma
/// gabor_lambda gabor_gamma | dataset_root output_dir.
struct RunConfig {
    net::ModelConfig model;
    train::TrainConfig train;
    std::optional<std::string> gabor_preset;
    std::optional<gabor::GaborParams> gabor_explicit;
    std::filesystem::path dataset_root;
    std::filesystem::path output_dir = "out";

    /// Preset when named, else the explicit tuple; throws Config if neither.
    gabor::GaborParams gabor() const;
};

/// `source` names the input in diagnostics ("<source>:<line>: ...").
RunConfig parse_config(std::string_view text, const std::string& source = "config");
RunConfig load_config(const std::filesystem::path& path);

/// Inclusive range "start:stop:step" or comma list "a,b,c".
std::vector<double> parse_range(std::string_view text);
std::vector<int> parse_int_range(std::string_view text);

struct SynthSpec {
    int period = 8;
    int train_count = 64;
    int test_normal = 32;
    int test_defect = 32;
    int image_size = 64;
    std::uint64_t seed = 7;

    void validate() const;
};

/// Single-channel sinusoidal stripe texture with seeded phase, angle and
/// contrast jitter.
Image render_stripes(const SynthSpec& spec, std::uint64_t image_seed);

struct SynthDefect {
    Image image;
    augment::MaskMap blobs;  // pixels covered by a blob
};

/// Paints 1 to 3 seeded elliptical blobs, each uniformly bright or dark.
/// Pixels outside the blob mask are left untouched.
SynthDefect add_blobs(const Image& normal, std::uint64_t blob_seed);

/// Writes train/good, test/good and test/blob under `root`.
void write_synthetic_dataset(const std::filesystem::path& root, const SynthSpec& spec);

struct EvalOutcome {
    eval::EvalResult result;
    std::filesystem::path scores_csv;
    std::filesystem::path roc_csv;
};

/// Checkpoints and loss.csv go to cfg.output_dir.
train::FitResult run_train(const RunConfig& cfg, std::ostream& log);
/// Writes scores.csv and roc.csv to cfg.output_dir and prints "AUC: <value>".
EvalOutcome run_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& log);
/// Writes sweep.csv to cfg.output_dir and prints the best tuple. With
/// `dry_run` only validates the ranges and prints the tuple count.
std::vector<eval::SweepEntry> run_sweep(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                                        const eval::SweepRanges& ranges, bool dry_run, std::ostream& log);
/// Writes recon.png, avg.png, resp_0..7.png and bank_0..7.png to `out_dir`.
void run_visualize(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                   const std::filesystem::path& image, const std::filesystem::path& out_dir);

}  // namespace gabordefect::cli
