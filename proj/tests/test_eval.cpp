#include "gabordefect/error.hpp"
#include "gabordefect/eval.hpp"
#include "gabordefect/train.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

using namespace gabordefect;
using namespace gabordefect::eval;

namespace {

std::vector<ScoreRecord> make_records(const std::vector<double>& scores, const std::vector<bool>& defect) {
    std::vector<ScoreRecord> out;
    for (std::size_t i = 0; i < scores.size(); ++i)
        out.push_back({"img" + std::to_string(i), defect[i] ? Label::Defect : Label::Normal, scores[i]});
    return out;
}

double trapezoid(const std::vector<RocPoint>& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i)
        area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
    return area;
}

void write_tree(const std::filesystem::path& root, int train, int good, const std::vector<std::pair<std::string, int>>& defects) {
    std::mt19937_64 rng(1);
    auto fill = [&](const std::filesystem::path& dir, int n) {
        std::filesystem::create_directories(dir);
        for (int i = 0; i < n; ++i) save_png(oracle::random_image(rng, 16, 16, 3), dir / ("f" + std::to_string(i) + ".png"));
    };
    fill(root / "train" / "good", train);
    fill(root / "test" / "good", good);
    for (const auto& [name, n] : defects) fill(root / "test" / name, n);
}

std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Image stripes(int size, double period, double phase) {
    Image img(size, size, 1);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) img.at(0, y, x) = 0.5 + 0.3 * std::sin(2 * std::numbers::pi * x / period + phase);
    return img;
}

}  // namespace

TEST(Dataset, LabelsAndOrdering) {
    test::TempDir dir;
    write_tree(dir.path(), 3, 2, {{"crack", 2}});
    const DatasetSplit split = load_dataset(dir.path());
    EXPECT_EQ(split.train_normal.size(), 3u);
    ASSERT_EQ(split.test_items.size(), 4u);
    EXPECT_EQ(split.count(Label::Normal), 2u);
    EXPECT_EQ(split.count(Label::Defect), 2u);
    EXPECT_EQ(split.test_items[0].label, Label::Normal);
    EXPECT_EQ(split.test_items[3].label, Label::Defect);
    EXPECT_TRUE(std::is_sorted(split.train_normal.begin(), split.train_normal.end()));
}

TEST(Dataset, MultipleDefectFoldersInNameOrder) {
    test::TempDir dir;
    write_tree(dir.path(), 1, 1, {{"scratch", 1}, {"color", 2}});
    const auto split = load_dataset(dir.path());
    ASSERT_EQ(split.test_items.size(), 4u);
    EXPECT_EQ(split.test_items[1].path.parent_path().filename(), "color");
    EXPECT_EQ(split.test_items[3].path.parent_path().filename(), "scratch");
}

TEST(Dataset, DescriptiveErrors) {
    test::TempDir dir;
    EXPECT_THROW(load_dataset(dir.path() / "missing"), Error);
    write_tree(dir.path() / "nodefect", 1, 1, {});
    EXPECT_THROW(load_dataset(dir.path() / "nodefect"), Error);
    write_tree(dir.path() / "emptygood", 1, 0, {{"crack", 1}});
    EXPECT_THROW(load_dataset(dir.path() / "emptygood"), Error);
    write_tree(dir.path() / "notrain", 0, 1, {{"crack", 1}});
    EXPECT_THROW(load_dataset(dir.path() / "notrain"), Error);
    try {
        load_dataset(dir.path());
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("train"), std::string::npos);
    }
}

TEST(Roc, PerfectSeparationAndTies) {
    const auto perfect = roc_auc(make_records({1, 1, 0, 0, 0}, {true, true, false, false, false}));
    EXPECT_EQ(perfect.auc, 1.0);
    const auto tied = roc_auc(make_records({0.3, 0.3, 0.3, 0.3}, {true, false, true, false}));
    EXPECT_EQ(tied.auc, 0.5);
    EXPECT_EQ(tied.curve.front(), (RocPoint{0, 0}));
    EXPECT_EQ(tied.curve.back(), (RocPoint{1, 1}));
    EXPECT_THROW(roc_auc(make_records({1, 2}, {true, true})), Error);
    EXPECT_THROW(roc_auc({}), Error);
}

TEST(Roc, MatchesPairwiseStatisticOnRandomSetsWithTies) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> size(2, 40), level(0, 6);
    std::bernoulli_distribution coin(0.5);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = size(rng);
        std::vector<double> scores(n);
        std::vector<bool> defect(n);
        for (int i = 0; i < n; ++i) {
            scores[i] = level(rng) * 0.5;
            defect[i] = coin(rng);
        }
        defect[0] = true;
        defect[1] = false;
        const auto roc = roc_auc(make_records(scores, defect));
        EXPECT_NEAR(roc.auc, oracle::pairwise_auc(scores, defect), 1e-12);
        EXPECT_NEAR(roc.auc, trapezoid(roc.curve), 1e-12);
        for (std::size_t i = 1; i < roc.curve.size(); ++i) {
            EXPECT_GE(roc.curve[i].fpr, roc.curve[i - 1].fpr);
            EXPECT_GE(roc.curve[i].tpr, roc.curve[i - 1].tpr);
        }

        std::vector<bool> flipped(defect.size());
        for (std::size_t i = 0; i < defect.size(); ++i) flipped[i] = !defect[i];
        EXPECT_NEAR(roc_auc(make_records(scores, flipped)).auc, 1.0 - roc.auc, 1e-12);

        std::vector<double> warped = scores;
        for (double& s : warped) s = std::exp(3.0 * s) - 7.0;
        EXPECT_NEAR(roc_auc(make_records(warped, defect)).auc, roc.auc, 1e-15);
    }
}

TEST(Scoring, PipelineIsTheComposition) {
    const auto cfg = net::toy_config();
    const auto params = net::init_params(cfg, 3);
    const gabor::GaborBank bank(gabor::GaborParams{5, 2, 4, 1});
    std::mt19937_64 rng(2);
    const Image img = oracle::random_image(rng, 16, 16, 3);
    const ScoreRecord r = score_image(params, cfg, bank, img, "x.png");
    const Tensor4 recon = net::forward(params, cfg, to_batch(std::vector<Image>{img}));
    const double want = gabor::dfscore(gabor::apply_bank(to_grayscale(clamp(from_batch(recon, 0))), bank)).value;
    EXPECT_EQ(r.score, want);
    EXPECT_EQ(r.path, "x.png");
}

TEST(Scoring, NonPositiveResponsesScoreZero) {
    const gabor::GaborBank bank(gabor::GaborParams{5, 2, 4, 1});
    EXPECT_EQ(score_reconstruction(Image(12, 12, 1, 0.0), bank), 0.0);
}

TEST(Evaluate, CountsRecordsAndIsOrderInvariantAndStable) {
    test::TempDir dir;
    write_tree(dir.path() / "data", 1, 2, {{"crack", 2}});
    const auto cfg = net::toy_config();
    const auto params = net::init_params(cfg, 4);
    const gabor::GaborBank bank(gabor::GaborParams{5, 2, 4, 1});
    DatasetSplit split = load_dataset(dir.path() / "data");
    const auto result = evaluate(params, cfg, bank, split);
    ASSERT_EQ(result.records.size(), 4u);
    EXPECT_EQ(result.records[0].path, "test/good/f0.png");
    EXPECT_GE(result.roc.auc, 0.0);
    EXPECT_LE(result.roc.auc, 1.0);

    std::reverse(split.test_items.begin(), split.test_items.end());
    EXPECT_EQ(evaluate(params, cfg, bank, split).roc.auc, result.roc.auc);

    write_scores_csv(dir.path() / "a.csv", result.records);
    write_scores_csv(dir.path() / "b.csv", evaluate(params, cfg, bank, load_dataset(dir.path() / "data")).records);
    EXPECT_EQ(read_bytes(dir.path() / "a.csv"), read_bytes(dir.path() / "b.csv"));
    EXPECT_EQ(read_bytes(dir.path() / "a.csv").substr(0, 17), "path,label,score\n");
    write_roc_csv(dir.path() / "roc.csv", result.roc);
    EXPECT_EQ(read_bytes(dir.path() / "roc.csv").substr(0, 8), "fpr,tpr\n");
}

TEST(Sweep, DefaultRanges) {
    const SweepRanges r = default_sweep_ranges();
    EXPECT_EQ(r.tuple_count(), 18u * 20u * 20u * 20u);
    EXPECT_EQ(r.kernel_sizes.front(), 5);
    EXPECT_EQ(r.kernel_sizes.back(), 39);
    EXPECT_EQ(r.gammas.front(), 0.2);
    EXPECT_EQ(r.gammas[2], 0.6);
    EXPECT_EQ(r.gammas.back(), 4.0);
    EXPECT_NO_THROW(r.validate());
    EXPECT_THROW((SweepRanges{{}, {1}, {1}, {1}}.validate()), Error);
    EXPECT_THROW((SweepRanges{{4}, {1}, {1}, {1}}.validate()), Error);
}

TEST(Sweep, RanksTheMatchingWavelengthFirst) {
    // Normals are period-12 stripes; defects carry a period-4 patch. Only the
    // short-wavelength bank reacts to the patch.
    ReconstructionCache cache;
    for (int i = 0; i < 6; ++i) {
        Image img = stripes(32, 12.0, 0.4 * i);
        cache.gray.push_back(img);
        cache.records.push_back({"n" + std::to_string(i), Label::Normal, 0.0});
        const Image patch = stripes(32, 4.0, 0.3 * i);
        for (int y = 8 + i; y < 20 + i; ++y)
            for (int x = 10; x < 22; ++x) img.at(0, y, x) = patch.at(0, y, x);
        cache.gray.push_back(img);
        cache.records.push_back({"d" + std::to_string(i), Label::Defect, 0.0});
    }
    const SweepRanges ranges{{9}, {2.0}, {4.0, 24.0}, {1.0}};
    const auto entries = sweep(cache, ranges);
    ASSERT_EQ(entries.size(), 2u);
    EXPECT_EQ(entries[0].params.lambda, 4.0);
    EXPECT_GT(entries[0].auc, entries[1].auc);
}

TEST(Sweep, CacheOnOffAgreeAndOutputIsPermutation) {
    test::TempDir dir;
    write_tree(dir.path() / "data", 1, 3, {{"crack", 3}});
    const auto cfg = net::toy_config();
    const auto params = net::init_params(cfg, 5);
    const auto split = load_dataset(dir.path() / "data");
    const SweepRanges ranges{{3, 5}, {1.0, 2.0}, {3.0}, {0.5, 1.0}};
    const auto cached = sweep(params, cfg, split, ranges, true);
    const auto uncached = sweep(params, cfg, split, ranges, false);
    ASSERT_EQ(cached.size(), ranges.tuple_count());
    std::set<gabor::GaborParams> seen;
    for (std::size_t i = 0; i < cached.size(); ++i) {
        EXPECT_EQ(cached[i].params, uncached[i].params);
        EXPECT_EQ(cached[i].auc, uncached[i].auc);
        seen.insert(cached[i].params);
        if (i > 0) {
            EXPECT_GE(cached[i - 1].auc, cached[i].auc);
            if (cached[i - 1].auc == cached[i].auc) EXPECT_LT(cached[i - 1].params, cached[i].params);
        }
    }
    EXPECT_EQ(seen.size(), ranges.tuple_count());

    const auto single = sweep(params, cfg, split, SweepRanges{{5}, {2.0}, {3.0}, {1.0}});
    ASSERT_EQ(single.size(), 1u);
    EXPECT_EQ(single[0].auc, evaluate(params, cfg, gabor::GaborBank({5, 2.0, 3.0, 1.0}), split).roc.auc);

    write_sweep_csv(dir.path() / "sweep.csv", cached);
    std::ifstream in(dir.path() / "sweep.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "kernel,sigma,lambda,gamma,auc");
}
