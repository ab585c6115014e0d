#include "gabordefect/error.hpp"
#include "gabordefect/net.hpp"
#include "gabordefect/train.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace gabordefect;
using namespace gabordefect::net;

namespace {

void randomize(ModelParams& params, std::uint64_t seed, double scale = 0.3) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (auto& p : params)
        for (double& v : p.values) v = u(rng);
}

Tensor4 random_batch(std::uint64_t seed, int n, int size) {
    std::mt19937_64 rng(seed);
    std::vector<Image> imgs;
    for (int i = 0; i < n; ++i) imgs.push_back(oracle::random_image(rng, size, size, 3));
    return to_batch(imgs);
}

std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(ModelConfig, DerivedSizesForDefault) {
    const ModelConfig cfg;
    EXPECT_EQ(cfg.encoder_map(), 32);
    EXPECT_EQ(cfg.token_grid(), 2);
    EXPECT_EQ(cfg.tokens(), 4);
    EXPECT_EQ(cfg.head_dim(), 64);
    EXPECT_EQ(cfg.bottleneck_channels(), 1024);
    EXPECT_EQ(cfg.decoder_steps(), 8);
    EXPECT_EQ(cfg.decoder_out_channels(0), 512);
    EXPECT_EQ(cfg.decoder_out_channels(7), 64);
    EXPECT_EQ(cfg.decoder_skip_stage(4), 3);
    EXPECT_EQ(cfg.decoder_skip_stage(7), 0);
    EXPECT_EQ(cfg.decoder_skip_stage(0), -1);
}

TEST(ModelConfig, RejectsInconsistentShapes) {
    auto bad = [](auto mutate) {
        ModelConfig cfg = toy_config();
        mutate(cfg);
        return cfg;
    };
    EXPECT_THROW(bad([](ModelConfig& c) { c.num_heads = 3; }).validate(), Error);
    EXPECT_THROW(bad([](ModelConfig& c) { c.patch_size = 3; }).validate(), Error);
    EXPECT_THROW(bad([](ModelConfig& c) { c.image_size = 18; }).validate(), Error);
    EXPECT_THROW(bad([](ModelConfig& c) { c.patch_size = 8; }).validate(), Error);  // token grid of 1
    EXPECT_THROW(bad([](ModelConfig& c) { c.depth = 0; }).validate(), Error);
    EXPECT_NO_THROW(toy_config().validate());
}

TEST(ParamPlan, DefaultShapes) {
    const auto plan = param_plan(ModelConfig{});
    auto shape_of = [&](const std::string& name) {
        for (const auto& s : plan)
            if (s.name == name) return s.shape;
        return std::vector<int>{};
    };
    EXPECT_EQ(shape_of("enc1.weight"), (std::vector<int>{64, 3, 3, 3}));
    EXPECT_EQ(shape_of("enc4.weight"), (std::vector<int>{512, 256, 3, 3}));
    EXPECT_EQ(shape_of("embed.weight"), (std::vector<int>{512, 512, 16, 16}));
    EXPECT_EQ(shape_of("attn.q.weight"), (std::vector<int>{512, 512}));
    EXPECT_EQ(shape_of("ffn.fc1.weight"), (std::vector<int>{2048, 512}));
    EXPECT_EQ(shape_of("bottleneck.weight"), (std::vector<int>{1024, 512, 3, 3}));
    EXPECT_EQ(shape_of("dec1.weight"), (std::vector<int>{512, 1024, 3, 3}));
    EXPECT_EQ(shape_of("dec5.weight"), (std::vector<int>{128, 256 + 512, 3, 3}));
    EXPECT_EQ(shape_of("head.weight"), (std::vector<int>{3, 64, 1, 1}));
    EXPECT_EQ(plan.back().name, "head.bias");

    ModelConfig ablated;
    ablated.use_vit = false;
    const auto plain = param_plan(ablated);
    EXPECT_EQ(plain.size(), plan.size() - 14 + 2);
}

TEST(InitParams, SeededAndScaled) {
    const ModelConfig cfg = toy_config();
    EXPECT_EQ(init_params(cfg, 3), init_params(cfg, 3));
    EXPECT_NE(init_params(cfg, 3), init_params(cfg, 4));
    const ModelParams p = init_params(ModelConfig{}, 1);
    for (const char* name : {"enc2.bias", "attn.q.bias", "head.bias"})
        for (double v : p.get(name).values) EXPECT_EQ(v, 0.0);
    auto stddev = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s / v.size());
    };
    EXPECT_NEAR(stddev(p.get("enc4.weight").values), std::sqrt(2.0 / (256 * 9)), 0.002);
    EXPECT_NEAR(stddev(p.get("attn.k.weight").values), 0.02, 0.0005);
}

TEST(Attention, MatchesScalarOracleAndRowsSumToOne) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-2, 2);
    Matrix q(5, 3), k(5, 3), v(5, 3);
    for (auto* m : {&q, &k, &v})
        for (double& x : m->data) x = u(rng);
    oracle::Mat oq(5, std::vector<double>(3)), ok = oq, ov = oq;
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 3; ++j) oq[i][j] = q.at(i, j), ok[i][j] = k.at(i, j), ov[i][j] = v.at(i, j);
    }
    Matrix weights;
    const Matrix out = attention(q, k, v, &weights);
    const auto want = oracle::attention(oq, ok, ov);
    for (int i = 0; i < 5; ++i) {
        double row = 0.0;
        for (int j = 0; j < 5; ++j) row += weights.at(i, j);
        EXPECT_NEAR(row, 1.0, 1e-12);
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(out.at(i, j), want[i][j], 1e-12);
    }
}

TEST(Attention, StableForLargeLogits) {
    Matrix q(2, 1, std::vector<double>{1000.0, -1000.0});
    Matrix v(2, 1, std::vector<double>{1.0, 2.0});
    const Matrix out = attention(q, q, v);
    for (double x : out.data) EXPECT_TRUE(std::isfinite(x));
    EXPECT_NEAR(out.at(0, 0), 1.0, 1e-12);
}

TEST(Gelu, ExactErfForm) {
    EXPECT_EQ(gelu(0.0), 0.0);
    EXPECT_NEAR(gelu(1.0), 0.8413447460685429, 1e-15);
    EXPECT_NEAR(gelu(-1.0), -0.15865525393145707, 1e-15);
}

TEST(VitBlock, MatchesScalarComposition) {
    const ModelConfig cfg = toy_config();
    ModelParams params = init_params(cfg, 1);
    randomize(params, 2);
    const int c_in = cfg.encoder_width(cfg.depth - 1), e = cfg.encoder_map(), p = cfg.patch_size;
    const int g = cfg.token_grid(), d = cfg.embed_dim, hd = cfg.head_dim(), tokens = cfg.tokens();
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    Tensor4 x(1, c_in, e, e);
    for (double& v : x.data()) v = u(rng);

    const auto& ew = params.get("embed.weight").values;
    const auto& eb = params.get("embed.bias").values;
    oracle::Mat t(tokens, std::vector<double>(d));
    for (int gy = 0; gy < g; ++gy)
        for (int gx = 0; gx < g; ++gx)
            for (int o = 0; o < d; ++o) {
                double acc = eb[o];
                for (int c = 0; c < c_in; ++c)
                    for (int i = 0; i < p; ++i)
                        for (int j = 0; j < p; ++j)
                            acc += ew[((o * c_in + c) * p + i) * p + j] * x.at(0, c, gy * p + i, gx * p + j);
                t[gy * g + gx][o] = std::max(acc, 0.0);
            }
    auto linear = [&](const oracle::Mat& in, const std::string& name) {
        const auto& w = params.get(name + ".weight");
        const auto& b = params.get(name + ".bias").values;
        const int out_dim = w.shape[0], in_dim = w.shape[1];
        oracle::Mat out(in.size(), std::vector<double>(out_dim));
        for (std::size_t r = 0; r < in.size(); ++r)
            for (int o = 0; o < out_dim; ++o) {
                double acc = b[o];
                for (int i = 0; i < in_dim; ++i) acc += w.values[o * in_dim + i] * in[r][i];
                out[r][o] = acc;
            }
        return out;
    };
    const auto q = linear(t, "attn.q"), k = linear(t, "attn.k"), v = linear(t, "attn.v");
    oracle::Mat concat(tokens, std::vector<double>(d));
    for (int h = 0; h < cfg.num_heads; ++h) {
        auto slice = [&](const oracle::Mat& m) {
            oracle::Mat s(tokens, std::vector<double>(hd));
            for (int r = 0; r < tokens; ++r)
                for (int j = 0; j < hd; ++j) s[r][j] = m[r][h * hd + j];
            return s;
        };
        const auto head = oracle::attention(slice(q), slice(k), slice(v));
        for (int r = 0; r < tokens; ++r)
            for (int j = 0; j < hd; ++j) concat[r][h * hd + j] = head[r][j];
    }
    auto r1 = linear(concat, "attn.out");
    for (int r = 0; r < tokens; ++r)
        for (int j = 0; j < d; ++j) r1[r][j] += t[r][j];
    auto hidden = linear(r1, "ffn.fc1");
    for (auto& row : hidden)
        for (double& z : row) z = 0.5 * z * (1.0 + std::erf(z / std::sqrt(2.0)));
    auto r2 = linear(hidden, "ffn.fc2");
    for (int r = 0; r < tokens; ++r)
        for (int j = 0; j < d; ++j) r2[r][j] += r1[r][j];

    const Tensor4 out = vit_block(x, params, cfg);
    ASSERT_EQ(out.c(), d);
    ASSERT_EQ(out.h(), g);
    for (int gy = 0; gy < g; ++gy)
        for (int gx = 0; gx < g; ++gx)
            for (int j = 0; j < d; ++j) EXPECT_NEAR(out.at(0, j, gy, gx), r2[gy * g + gx][j], 1e-12);
}

TEST(Forward, ToyTraceShapes) {
    const ModelConfig cfg = toy_config();
    ForwardTrace trace;
    const Tensor4 out = forward(init_params(cfg, 1), cfg, random_batch(1, 2, 16), &trace);
    EXPECT_EQ(out.n(), 2);
    EXPECT_EQ(out.c(), 3);
    EXPECT_EQ(out.h(), 16);
    auto shape = [&](const char* name) {
        const auto* s = trace.find(name);
        return s ? s->shape : std::vector<int>{};
    };
    EXPECT_EQ(shape("input"), (std::vector<int>{2, 3, 16, 16}));
    EXPECT_EQ(shape("enc1"), (std::vector<int>{2, 4, 16, 16}));
    EXPECT_EQ(shape("pool1"), (std::vector<int>{2, 4, 8, 8}));
    EXPECT_EQ(shape("enc2"), (std::vector<int>{2, 8, 8, 8}));
    EXPECT_EQ(shape("embed"), (std::vector<int>{2, 8, 2, 2}));
    EXPECT_EQ(shape("tokens"), (std::vector<int>{2, 4, 8}));
    EXPECT_EQ(shape("vit_out"), (std::vector<int>{2, 8, 2, 2}));
    EXPECT_EQ(shape("bottleneck"), (std::vector<int>{2, 16, 1, 1}));
    EXPECT_EQ(shape("dec4"), (std::vector<int>{2, 4, 16, 16}));
    EXPECT_EQ(shape("output"), (std::vector<int>{2, 3, 16, 16}));
    EXPECT_EQ(trace.find("pool2"), nullptr);
    EXPECT_FALSE(trace.has_cache());
}

TEST(Forward, AblationReplacesVitWithAdapter) {
    ModelConfig cfg = toy_config();
    cfg.use_vit = false;
    ForwardTrace trace;
    const Tensor4 out = forward(init_params(cfg, 1), cfg, random_batch(2, 1, 16), &trace);
    EXPECT_EQ(out.h(), 16);
    EXPECT_NE(trace.find("adapter"), nullptr);
    EXPECT_EQ(trace.find("attn"), nullptr);
    EXPECT_EQ(trace.find("bottleneck")->shape, (std::vector<int>{1, 16, 1, 1}));
}

TEST(Forward, RejectsWrongInputAndParams) {
    const ModelConfig cfg = toy_config();
    const ModelParams params = init_params(cfg, 1);
    EXPECT_THROW(forward(params, cfg, random_batch(1, 1, 32)), Error);
    ModelConfig other = cfg;
    other.embed_dim = 16;
    try {
        forward(params, other, random_batch(1, 1, 16));
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("embed.weight"), std::string::npos);
    }
}

TEST(Forward, DeterministicAcrossThreadCounts) {
    const ModelConfig cfg = toy_config();
    ModelParams params = init_params(cfg, 4);
    randomize(params, 5);
    const Tensor4 batch = random_batch(6, 5, 16);
    const Tensor4 target = random_batch(7, 5, 16);
    auto run = [&] {
        ForwardTrace trace(false, true);
        const Tensor4 out = forward(params, cfg, batch, &trace);
        Tensor4 grad;
        train::total_loss(out, target, &grad);
        return std::pair{out, backward(params, cfg, trace, grad)};
    };
    setenv("GABORDEFECT_THREADS", "1", 1);
    const auto serial = run();
    setenv("GABORDEFECT_THREADS", "3", 1);
    const auto threaded = run();
    unsetenv("GABORDEFECT_THREADS");
    EXPECT_EQ(serial.first, threaded.first);
    EXPECT_EQ(serial.second, threaded.second);
}

TEST(Backward, RequiresCachedTrace) {
    const ModelConfig cfg = toy_config();
    const ModelParams params = init_params(cfg, 1);
    ForwardTrace trace;
    const Tensor4 out = forward(params, cfg, random_batch(1, 1, 16), &trace);
    EXPECT_THROW(backward(params, cfg, trace, out), Error);
}

// Probed through a smooth functional <forward(x), G> so only ReLU/max-pool kinks remain.
TEST(Backward, MatchesFiniteDifferences) {
    for (bool use_vit : {true, false}) {
        ModelConfig cfg = toy_config();
        cfg.use_vit = use_vit;
        ModelParams params = init_params(cfg, 8);
        randomize(params, 9);
        const Tensor4 batch = random_batch(10, 2, 16);
        const Tensor4 probe_dir = random_batch(11, 2, 16);
        auto functional = [&](const Tensor4& out) {
            double s = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) s += out.data()[i] * probe_dir.data()[i];
            return s;
        };
        ForwardTrace trace(false, true);
        forward(params, cfg, batch, &trace);
        const ModelParams grads = backward(params, cfg, trace, probe_dir);

        std::mt19937_64 rng(12);
        int checked = 0, agreed = 0;
        for (std::size_t pi = 0; pi < params.count(); ++pi) {
            std::uniform_int_distribution<std::size_t> pick(0, params[pi].size() - 1);
            for (int probe = 0; probe < 3; ++probe) {
                const std::size_t j = pick(rng);
                const double saved = params[pi].values[j];
                const double h = 1e-5;
                params[pi].values[j] = saved + h;
                const double up = functional(forward(params, cfg, batch));
                params[pi].values[j] = saved - h;
                const double down = functional(forward(params, cfg, batch));
                params[pi].values[j] = saved;
                const double numeric = (up - down) / (2 * h);
                const double analytic = grads[pi].values[j];
                const double err = std::abs(numeric - analytic);
                ++checked;
                if (err <= 1e-4 * std::max(std::abs(numeric), std::abs(analytic)) || err < 1e-7) ++agreed;
                else
                    ADD_FAILURE() << params[pi].name << "[" << j << "] analytic " << analytic << " numeric " << numeric;
            }
        }
        EXPECT_EQ(agreed, checked);
    }
}

TEST(Checkpoint, RoundTripStoresFloat32AndIsStable) {
    test::TempDir dir;
    const ModelConfig cfg = toy_config();
    ModelParams params = init_params(cfg, 2);
    randomize(params, 3);
    const auto path = dir.path() / "a.bin";
    save_checkpoint(path, cfg, params);
    EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
    const Checkpoint ck = load_checkpoint(path, cfg);
    EXPECT_EQ(ck.config, cfg);
    for (std::size_t i = 0; i < params.count(); ++i)
        for (std::size_t j = 0; j < params[i].size(); ++j)
            EXPECT_EQ(ck.params[i].values[j], static_cast<double>(static_cast<float>(params[i].values[j])));
    const auto path2 = dir.path() / "b.bin";
    save_checkpoint(path2, ck.config, ck.params);
    EXPECT_EQ(read_bytes(path), read_bytes(path2));
    EXPECT_EQ(read_bytes(path).substr(0, 8), "GDNETCKP");
}

TEST(Checkpoint, RejectsCorruptOrMismatchedFiles) {
    test::TempDir dir;
    const ModelConfig cfg = toy_config();
    const auto path = dir.path() / "m.bin";
    save_checkpoint(path, cfg, init_params(cfg, 1));
    const std::string bytes = read_bytes(path);
    auto write = [&](const std::string& name, const std::string& data) {
        std::ofstream(dir.path() / name, std::ios::binary) << data;
        return dir.path() / name;
    };
    std::string wrong_version = bytes;
    wrong_version[8] = 2;
    EXPECT_THROW(load_checkpoint(write("v.bin", wrong_version)), Error);
    EXPECT_THROW(load_checkpoint(write("t.bin", bytes.substr(0, bytes.size() - 3))), Error);
    EXPECT_THROW(load_checkpoint(write("x.bin", "XXXXXXXX" + bytes.substr(8))), Error);
    EXPECT_THROW(load_checkpoint(write("e.bin", bytes + "z")), Error);
    EXPECT_THROW(load_checkpoint(dir.path() / "none.bin"), Error);

    ModelConfig wider = cfg;
    wider.base_width = 8;
    try {
        load_checkpoint(path, wider);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Checkpoint);
        EXPECT_NE(std::string(e.what()).find("enc1.weight"), std::string::npos) << e.what();
    }
    ModelConfig heads = cfg;
    heads.num_heads = 4;
    EXPECT_THROW(load_checkpoint(path, heads), Error);
    EXPECT_THROW(save_checkpoint(dir.path() / "bad.bin", wider, init_params(cfg, 1)), Error);
}
