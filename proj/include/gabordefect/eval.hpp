#pragma once

#include "gabordefect/gabor.hpp"
#include "gabordefect/imgcore.hpp"
#include "gabordefect/net.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace gabordefect::eval {

enum class Label { Normal, Defect };

const char* to_string(Label label) noexcept;

struct TestItem {
    std::filesystem::path path;
    Label label = Label::Normal;
};

/// MVTec-style split: train/good holds normals; test/good are normal test
/// items and every other test/<name> folder holds defects.
struct DatasetSplit {
    std::filesystem::path root;
    std::vector<std::filesystem::path> train_normal;
    std::vector<TestItem> test_items;

    std::size_t count(Label label) const;
};

/// Paths within each folder are sorted; defect folders are visited in name order.
DatasetSplit load_dataset(const std::filesystem::path& root);

struct ScoreRecord {
    std::string path;
    Label label = Label::Normal;
    double score = 0.0;
};

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;

    friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

struct RocResult {
    double auc = 0.0;
    std::vector<RocPoint> curve;  // (0,0) first, (1,1) last
};

/// Higher score means more defective. The curve has one point per distinct
/// score threshold; the AUC is its trapezoidal area, which equals the
/// Mann-Whitney statistic with ties counted as one half.
RocResult roc_auc(const std::vector<ScoreRecord>& records);

/// Model output clamped to [0,1] and converted to luminance; `batch` holds
/// 3-channel images at model resolution.
std::vector<Image> reconstruct_gray(const net::ModelParams& params, const net::ModelConfig& cfg,
                                    const std::vector<Image>& batch);

double score_reconstruction(const Image& gray, const gabor::GaborBank& bank);

/// dfscore(apply_bank(to_grayscale(clamp(forward(img))))).
ScoreRecord score_image(const net::ModelParams& params, const net::ModelConfig& cfg, const gabor::GaborBank& bank,
                        const Image& img, std::string path = {});

struct EvalResult {
    RocResult roc;
    std::vector<ScoreRecord> records;  // in test-item order
};

/// Record paths are relative to the split root.
EvalResult evaluate(const net::ModelParams& params, const net::ModelConfig& cfg, const gabor::GaborBank& bank,
                    const DatasetSplit& split);

/// "path,label,score"
void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreRecord>& records);
/// "fpr,tpr"
void write_roc_csv(const std::filesystem::path& path, const RocResult& roc);

struct SweepRanges {
    std::vector<int> kernel_sizes;
    std::vector<double> sigmas;
    std::vector<double> lambdas;
    std::vector<double> gammas;

    std::size_t tuple_count() const noexcept {
        return kernel_sizes.size() * sigmas.size() * lambdas.size() * gammas.size();
    }
    /// Throws InvalidArgument when any range is empty or holds an invalid value.
    void validate() const;
    /// Every combination, kernel size outermost, gamma innermost.
    std::vector<gabor::GaborParams> tuples() const;
};

/// Kernel 5..39 odd, sigma 1..20, lambda 1..20, gamma 0.2..4.0 in steps of 0.2.
SweepRanges default_sweep_ranges();

struct SweepEntry {
    gabor::GaborParams params;
    double auc = 0.0;
};

/// Grayscale reconstructions of every test item, computed once per model.
struct ReconstructionCache {
    std::vector<Image> gray;
    std::vector<ScoreRecord> records;  // path and label; score unused
};

ReconstructionCache build_cache(const net::ModelParams& params, const net::ModelConfig& cfg,
                                const DatasetSplit& split);

/// Sorted by AUC descending, ties by (kernel, sigma, lambda, gamma) ascending.
std::vector<SweepEntry> sweep(const ReconstructionCache& cache, const SweepRanges& ranges);

/// With `use_cache` false every tuple reconstructs the test set again; the
/// result is identical either way.
std::vector<SweepEntry> sweep(const net::ModelParams& params, const net::ModelConfig& cfg, const DatasetSplit& split,
                              const SweepRanges& ranges, bool use_cache = true);

/// "kernel,sigma,lambda,gamma,auc"
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepEntry>& entries);

/// Shortest round-trip decimal text for a double.
std::string format_double(double v);

}  // namespace gabordefect::eval
