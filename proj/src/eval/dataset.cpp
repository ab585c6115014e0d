#include "gabordefect/error.hpp"
#include "gabordefect/eval.hpp"

#include <algorithm>

namespace gabordefect::eval {

const char* to_string(Label label) noexcept { return label == Label::Normal ? "normal" : "defect"; }

std::size_t DatasetSplit::count(Label label) const {
    return static_cast<std::size_t>(
        std::count_if(test_items.begin(), test_items.end(), [&](const TestItem& t) { return t.label == label; }));
}

DatasetSplit load_dataset(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(root, ec)) throw Error(ErrorCode::Dataset, "dataset root not found: " + root.string());
    const fs::path train_good = root / "train" / "good";
    const fs::path test_dir = root / "test";
    const fs::path test_good = test_dir / "good";
    for (const auto& dir : {train_good, test_good})
        if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::Dataset, "missing dataset directory: " + dir.string());

    DatasetSplit split;
    split.root = root;
    split.train_normal = list_images(train_good);
    if (split.train_normal.empty())
        throw Error(ErrorCode::Dataset, "no training images in " + train_good.string());

    for (auto& p : list_images(test_good)) split.test_items.push_back({std::move(p), Label::Normal});
    if (split.test_items.empty()) throw Error(ErrorCode::Dataset, "no normal test images in " + test_good.string());

    std::vector<fs::path> defect_dirs;
    for (const auto& entry : fs::directory_iterator(test_dir))
        if (entry.is_directory() && entry.path().filename() != "good") defect_dirs.push_back(entry.path());
    std::sort(defect_dirs.begin(), defect_dirs.end());
    for (const auto& dir : defect_dirs)
        for (auto& p : list_images(dir)) split.test_items.push_back({std::move(p), Label::Defect});
    if (split.count(Label::Defect) == 0)
        throw Error(ErrorCode::Dataset, "no defect test images under " + test_dir.string());
    return split;
}

}  // namespace gabordefect::eval
