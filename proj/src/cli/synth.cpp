#include "gabordefect/cli.hpp"
#include "gabordefect/error.hpp"
#include "gabordefect/parallel.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace gabordefect::cli {

namespace {

enum Stream : std::uint64_t { TrainGood = 1, TestGood = 2, DefectBase = 3, DefectBlobs = 4 };

std::string file_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%03d.png", i);
    return buf;
}

void make_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw Error(ErrorCode::FileWrite, "cannot create directory " + dir.string());
}

}  // namespace

void SynthSpec::validate() const {
    if (period < 2) throw Error(ErrorCode::InvalidArgument, "stripe period must be at least 2");
    if (train_count < 1 || test_normal < 1 || test_defect < 1)
        throw Error(ErrorCode::InvalidArgument, "synthetic image counts must be at least 1");
    if (image_size < 16) throw Error(ErrorCode::InvalidArgument, "synthetic image size must be at least 16");
}

Image render_stripes(const SynthSpec& spec, std::uint64_t image_seed) {
    std::mt19937_64 rng(image_seed);
    std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> angle_dist(-0.05, 0.05);
    std::uniform_real_distribution<double> amp_dist(0.28, 0.34);
    const double phase = phase_dist(rng);
    const double angle = angle_dist(rng);
    const double amplitude = amp_dist(rng);
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double freq = 2.0 * std::numbers::pi / spec.period;

    Image img(spec.image_size, spec.image_size, 1);
    for (int y = 0; y < spec.image_size; ++y)
        for (int x = 0; x < spec.image_size; ++x)
            img.at(0, y, x) = 0.5 + amplitude * std::sin(freq * (x * ca + y * sa) + phase);
    return img;
}

SynthDefect add_blobs(const Image& normal, std::uint64_t blob_seed) {
    const int h = normal.height(), w = normal.width();
    std::mt19937_64 rng(blob_seed);
    std::uniform_int_distribution<int> count_dist(1, 3);
    std::uniform_real_distribution<double> cy_dist(0.15 * h, 0.85 * h);
    std::uniform_real_distribution<double> cx_dist(0.15 * w, 0.85 * w);
    std::uniform_real_distribution<double> axis_dist(std::min(h, w) / 16.0, std::min(h, w) / 8.0);
    std::uniform_real_distribution<double> rot_dist(0.0, std::numbers::pi);
    std::bernoulli_distribution bright_dist(0.5);

    SynthDefect out{normal, {h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 0)}};
    const int blobs = count_dist(rng);
    for (int b = 0; b < blobs; ++b) {
        const double cy = cy_dist(rng), cx = cx_dist(rng);
        const double ay = axis_dist(rng), ax = axis_dist(rng);
        const double rot = rot_dist(rng);
        const double value = bright_dist(rng) ? 1.0 : 0.0;
        const double cr = std::cos(rot), sr = std::sin(rot);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double dx = x - cx, dy = y - cy;
                const double u = (dx * cr + dy * sr) / ax;
                const double v = (-dx * sr + dy * cr) / ay;
                if (u * u + v * v > 1.0) continue;
                for (int c = 0; c < out.image.channels(); ++c) out.image.at(c, y, x) = value;
                out.blobs.altered[static_cast<std::size_t>(y) * w + x] = 1;
            }
    }
    return out;
}

void write_synthetic_dataset(const std::filesystem::path& root, const SynthSpec& spec) {
    spec.validate();
    const auto train_dir = root / "train" / "good";
    const auto good_dir = root / "test" / "good";
    const auto blob_dir = root / "test" / "blob";
    for (const auto& dir : {train_dir, good_dir, blob_dir}) make_dir(dir);

    struct Job {
        std::filesystem::path path;
        Stream stream;
        int index;
    };
    std::vector<Job> jobs;
    for (int i = 0; i < spec.train_count; ++i) jobs.push_back({train_dir / file_name(i), TrainGood, i});
    for (int i = 0; i < spec.test_normal; ++i) jobs.push_back({good_dir / file_name(i), TestGood, i});
    for (int i = 0; i < spec.test_defect; ++i) jobs.push_back({blob_dir / file_name(i), DefectBase, i});

    parallel_for(jobs.size(), [&](std::size_t j) {
        const Job& job = jobs[j];
        const auto index = static_cast<std::uint64_t>(job.index);
        Image img = render_stripes(spec, train::derive_seed(spec.seed, job.stream, index));
        if (job.stream == DefectBase) img = add_blobs(img, train::derive_seed(spec.seed, DefectBlobs, index)).image;
        save_png(img, job.path);
    });
}

}  // namespace gabordefect::cli
