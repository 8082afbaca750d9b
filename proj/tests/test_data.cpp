#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "met2net/data.hpp"
#include "met2net/tensor.hpp"

using namespace met2net;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / "met2net_tests" / ("data_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<float> read_floats(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    REQUIRE(bytes % sizeof(float) == 0);
    std::vector<float> out(bytes / sizeof(float));
    in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
    REQUIRE(in.good());
    return out;
}

std::vector<char> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<char> out(bytes);
    in.read(out.data(), static_cast<std::streamsize>(bytes));
    return out;
}

data::SpriteSceneConfig small_cfg() {
    data::SpriteSceneConfig cfg;
    cfg.height = 40;
    cfg.width = 40;
    cfg.t_in = 4;
    cfg.t_out = 3;
    cfg.n_train = 6;
    cfg.n_test = 2;
    cfg.seed = 7;
    return cfg;
}

/// Center (cy, cx) of the nonzero bounding box of one variable's plane in a
/// [N=3, C=1, H, W] frame; nullopt when the plane is empty.
std::optional<std::pair<double, double>> bbox_center(const float* fr, int H, int W, int var) {
    const float* ch = fr + static_cast<std::size_t>(var) * H * W;
    int y0 = H, y1 = -1, x0 = W, x1 = -1;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (ch[y * W + x] != 0.0f) {
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
            }
    if (y1 < y0) return std::nullopt;
    return std::make_pair((y0 + y1) / 2.0, (x0 + x1) / 2.0);
}

void write_idx(const fs::path& p, const std::vector<std::array<std::uint8_t, 28 * 28>>& imgs,
               std::uint32_t magic = 0x00000803u) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    auto be32 = [&](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
        os.write(reinterpret_cast<char*>(b), 4);
    };
    be32(magic);
    be32(static_cast<std::uint32_t>(imgs.size()));
    be32(28);
    be32(28);
    for (const auto& img : imgs)
        os.write(reinterpret_cast<const char*>(img.data()),
                 static_cast<std::streamsize>(img.size()));
    REQUIRE(os.good());
}

}  // namespace

TEST_SUITE("data.config") {
    TEST_CASE("defaults validate") { CHECK_NOTHROW(data::SpriteSceneConfig{}.validate()); }

    TEST_CASE("invalid configurations are rejected") {
        auto cfg = small_cfg();
        cfg.n_channels = 2;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg = small_cfg();
        cfg.width = 20;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg = small_cfg();
        cfg.min_speed = 5.0;
        cfg.max_speed = 2.0;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg = small_cfg();
        cfg.n_train = 0;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg = small_cfg();
        cfg.t_out = 0;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg = small_cfg();
        cfg.n_sprites = 0;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
}

TEST_SUITE("data.motion") {
    TEST_CASE("rightward sprite reflects off the right edge with reversed velocity") {
        data::SpriteState s{10.0, 5.0, 3.0, 0.0};
        const double xmax = 12.0, ymax = 12.0;
        data::advance_sprite(s, xmax, ymax);  // 13 -> reflect to 11
        CHECK(s.x == doctest::Approx(11.0));
        CHECK(s.vx == doctest::Approx(-3.0));
        CHECK(s.y == doctest::Approx(5.0));
        CHECK(s.vy == doctest::Approx(0.0));
        data::advance_sprite(s, xmax, ymax);
        CHECK(s.x == doctest::Approx(8.0));  // keeps moving left after the bounce
    }

    TEST_CASE("leftward sprite reflects off the left edge") {
        data::SpriteState s{1.0, 6.0, -2.5, 0.0};
        data::advance_sprite(s, 12.0, 12.0);  // -1.5 -> 1.5
        CHECK(s.x == doctest::Approx(1.5));
        CHECK(s.vx == doctest::Approx(2.5));
    }

    TEST_CASE("interior motion is plain constant-velocity integration") {
        data::SpriteState s{4.0, 4.0, 1.25, -0.5};
        data::advance_sprite(s, 12.0, 12.0);
        CHECK(s.x == doctest::Approx(5.25));
        CHECK(s.y == doctest::Approx(3.5));
        CHECK(s.vx == doctest::Approx(1.25));
        CHECK(s.vy == doctest::Approx(-0.5));
    }

    TEST_CASE("vertical reflection mirrors the overshoot") {
        data::SpriteState s{4.0, 11.5, 0.0, 2.0};
        data::advance_sprite(s, 12.0, 12.0);  // 13.5 -> 10.5
        CHECK(s.y == doctest::Approx(10.5));
        CHECK(s.vy == doctest::Approx(-2.0));
    }
}

TEST_SUITE("data.generate") {
    TEST_CASE("blob sizes, binary values, inversion, and cross-variable alignment") {
        const auto dir = fresh_dir("gen");
        const auto cfg = small_cfg();
        const auto summary = data::generate_mvm(cfg, dir.string());
        CHECK(summary.n_train == 6);
        CHECK(summary.n_test == 2);

        const std::size_t frame = 3u * 40 * 40;
        const auto tx = read_floats(dir / "train_x.bin");
        const auto ty = read_floats(dir / "train_y.bin");
        const auto sx = read_floats(dir / "test_x.bin");
        const auto sy = read_floats(dir / "test_y.bin");
        CHECK(tx.size() == 6u * 4 * frame);
        CHECK(ty.size() == 6u * 3 * frame);
        CHECK(sx.size() == 2u * 4 * frame);
        CHECK(sy.size() == 2u * 3 * frame);
        CHECK(summary.bytes_written ==
              (tx.size() + ty.size() + sx.size() + sy.size()) * sizeof(float));

        for (const auto* blob : {&tx, &ty, &sx, &sy}) {
            std::size_t frames = blob->size() / frame;
            for (std::size_t f = 0; f < frames; ++f) {
                const float* fr = blob->data() + f * frame;
                // Every value is exactly 0 or 1.
                for (std::size_t i = 0; i < frame; ++i)
                    REQUIRE((fr[i] == 0.0f || fr[i] == 1.0f));
                // Variable 3 is the exact pixel inversion of variable 1.
                for (std::size_t i = 0; i < 40u * 40; ++i)
                    REQUIRE(fr[2 * 40 * 40 + i] == 1.0f - fr[i]);
                // Variables 1 and 2 share trajectories: bounding-box centers
                // of their sprite content coincide frame by frame.
                auto c1 = bbox_center(fr, 40, 40, 0);
                auto c2 = bbox_center(fr, 40, 40, 1);
                REQUIRE(c1.has_value());
                REQUIRE(c2.has_value());
                REQUIRE(std::abs(c1->first - c2->first) <= 1.0);
                REQUIRE(std::abs(c1->second - c2->second) <= 1.0);
            }
        }
    }

    TEST_CASE("generation is reproducible and seed-sensitive") {
        const auto d1 = fresh_dir("gen_a");
        const auto d2 = fresh_dir("gen_b");
        const auto d3 = fresh_dir("gen_c");
        auto cfg = small_cfg();
        data::generate_mvm(cfg, d1.string());
        data::generate_mvm(cfg, d2.string());
        auto cfg2 = cfg;
        cfg2.seed = 8;
        data::generate_mvm(cfg2, d3.string());
        for (const char* name : {"train_x.bin", "train_y.bin", "test_x.bin", "test_y.bin",
                                 "manifest.json"}) {
            CHECK(read_bytes(d1 / name) == read_bytes(d2 / name));
        }
        CHECK(read_bytes(d1 / "train_x.bin") != read_bytes(d3 / "train_x.bin"));
    }

    TEST_CASE("manifest records dims and positive per-variable training stats") {
        const auto dir = fresh_dir("gen_manifest");
        data::generate_mvm(small_cfg(), dir.string());
        std::ifstream in(dir / "manifest.json");
        const auto j = nlohmann::json::parse(in);
        CHECK(j.at("format") == "met2net.dataset.v1");
        CHECK(j.at("dims").at("n_train") == 6);
        CHECK(j.at("dims").at("t_in") == 4);
        CHECK(j.at("dims").at("t_out") == 3);
        CHECK(j.at("dims").at("n_vars") == 3);
        CHECK(j.at("dims").at("height") == 40);
        CHECK(j.at("variables").size() == 3);
        for (const auto& v : j.at("variables")) {
            const double mean = v.at("mean").get<double>();
            const double sd = v.at("std").get<double>();
            CHECK(mean > 0.0);
            CHECK(mean < 1.0);
            CHECK(sd > 0.0);
        }
        // Variable 3 is the inversion of variable 1, so their training means
        // are complementary and their stds identical.
        const double m1 = j.at("variables")[0].at("mean").get<double>();
        const double m3 = j.at("variables")[2].at("mean").get<double>();
        const double s1 = j.at("variables")[0].at("std").get<double>();
        const double s3 = j.at("variables")[2].at("std").get<double>();
        CHECK(m1 + m3 == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(s1 == doctest::Approx(s3).epsilon(1e-9));
    }

    TEST_CASE("sprites from an IDX image file") {
        const auto dir = fresh_dir("gen_idx");
        std::vector<std::array<std::uint8_t, 28 * 28>> imgs(4);
        for (int k = 0; k < 4; ++k)
            for (int y = 0; y < 10; ++y)
                for (int x = 0; x < 10 + k; ++x)
                    imgs[static_cast<std::size_t>(k)][static_cast<std::size_t>(y + 6) * 28 +
                                                      (x + 5)] = 255;
        write_idx(dir / "sprites.idx", imgs);
        auto cfg = small_cfg();
        cfg.sprite_source = (dir / "sprites.idx").string();
        CHECK_NOTHROW(data::generate_mvm(cfg, (dir / "out").string()));
        const auto tx = read_floats(dir / "out" / "train_x.bin");
        bool any = false;
        for (float v : tx) {
            REQUIRE((v == 0.0f || v == 1.0f));
            any = any || v == 1.0f;
        }
        CHECK(any);
    }

    TEST_CASE("IDX failures map to data errors") {
        const auto dir = fresh_dir("gen_idx_bad");
        std::vector<std::array<std::uint8_t, 28 * 28>> imgs(2);
        imgs[0].fill(255);
        imgs[1].fill(255);
        write_idx(dir / "bad_magic.idx", imgs, 0x00000801u);
        auto cfg = small_cfg();
        cfg.sprite_source = (dir / "bad_magic.idx").string();
        CHECK_THROWS_AS(data::generate_mvm(cfg, (dir / "o1").string()), DataError);

        write_idx(dir / "short.idx", imgs);
        fs::resize_file(dir / "short.idx", 16 + 300);  // truncate inside image 1
        cfg.sprite_source = (dir / "short.idx").string();
        CHECK_THROWS_AS(data::generate_mvm(cfg, (dir / "o2").string()), DataError);

        cfg.sprite_source = (dir / "does_not_exist.idx").string();
        CHECK_THROWS_AS(data::generate_mvm(cfg, (dir / "o3").string()), DataError);
    }
}

TEST_SUITE("data.load") {
    TEST_CASE("loaded splits are standardized and invertible") {
        const auto dir = fresh_dir("load");
        data::generate_mvm(small_cfg(), dir.string());
        const auto ds = data::load_dataset((dir / "manifest.json").string());
        CHECK(ds.train_x.shape() == Shape{6, 4, 3, 1, 40, 40});
        CHECK(ds.train_y.shape() == Shape{6, 3, 3, 1, 40, 40});
        CHECK(ds.test_x.shape() == Shape{2, 4, 3, 1, 40, 40});
        CHECK(ds.test_y.shape() == Shape{2, 3, 3, 1, 40, 40});

        // Per-variable mean/std of the standardized training split (inputs
        // and targets pooled) are 0/1 up to float rounding.
        const std::int64_t hw = 40 * 40;
        for (int v = 0; v < 3; ++v) {
            double s1 = 0, s2 = 0;
            std::int64_t n = 0;
            for (const Tensor* t : {&ds.train_x, &ds.train_y}) {
                auto d = t->data<float>();
                const std::int64_t frames = t->numel() / (3 * hw);
                for (std::int64_t f = 0; f < frames; ++f)
                    for (std::int64_t i = 0; i < hw; ++i) {
                        const double val = d[(f * 3 + v) * hw + i];
                        s1 += val;
                        s2 += val * val;
                        ++n;
                    }
            }
            const double mean = s1 / static_cast<double>(n);
            const double sd = std::sqrt(s2 / static_cast<double>(n) - mean * mean);
            CHECK(std::abs(mean) < 1e-3);
            CHECK(std::abs(sd - 1.0) < 1e-2);
        }

        // Denormalization recovers the raw binary field.
        const auto raw = read_floats(dir / "train_x.bin");
        const Tensor denorm = ds.denormalize(ds.train_x);
        auto dd = denorm.data<float>();
        REQUIRE(dd.size() == raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i)
            REQUIRE(std::abs(dd[i] - raw[i]) < 1e-6);

        // Round trip through normalize is the identity within 1e-6.
        const Tensor back = ds.normalize(denorm);
        auto bb = back.data<float>();
        auto xx = ds.train_x.data<float>();
        for (std::size_t i = 0; i < bb.size(); ++i)
            REQUIRE(std::abs(bb[i] - xx[i]) < 1e-6);
    }

    TEST_CASE("loading is deterministic") {
        const auto dir = fresh_dir("load_det");
        data::generate_mvm(small_cfg(), dir.string());
        const auto a = data::load_dataset((dir / "manifest.json").string());
        const auto b = data::load_dataset((dir / "manifest.json").string());
        auto da = a.train_x.data<float>();
        auto db = b.train_x.data<float>();
        for (std::size_t i = 0; i < da.size(); ++i) REQUIRE(da[i] == db[i]);
    }

    TEST_CASE("climatology is the per-pixel mean of the training targets") {
        const auto dir = fresh_dir("load_clim");
        data::generate_mvm(small_cfg(), dir.string());
        const auto ds = data::load_dataset((dir / "manifest.json").string());
        const Tensor clim = ds.climatology();
        CHECK(clim.shape() == Shape{3, 1, 40, 40});
        const auto raw = read_floats(dir / "train_y.bin");
        const std::int64_t hw = 40 * 40;
        // Independent oracle: average the raw target frames directly.
        for (int v = 0; v < 3; ++v)
            for (std::int64_t i = 0; i < hw; ++i) {
                double acc = 0;
                for (std::int64_t f = 0; f < 6 * 3; ++f)
                    acc += raw[static_cast<std::size_t>((f * 3 + v) * hw + i)];
                const double expect = acc / (6.0 * 3.0);
                REQUIRE(std::abs(clim.at(v * hw + i) - expect) < 1e-5);
            }
        // Inversion propagates through the mean: clim3 == 1 - clim1.
        for (std::int64_t i = 0; i < hw; ++i)
            REQUIRE(std::abs(clim.at(2 * hw + i) - (1.0 - clim.at(i))) < 1e-5);
    }

    TEST_CASE("corrupt inputs raise data errors") {
        const auto dir = fresh_dir("load_bad");
        data::generate_mvm(small_cfg(), dir.string());

        SUBCASE("missing manifest") {
            CHECK_THROWS_AS(data::load_dataset((dir / "nope.json").string()), DataError);
        }
        SUBCASE("corrupt manifest") {
            std::ofstream((dir / "manifest.json").string(), std::ios::trunc) << "not json";
            CHECK_THROWS_AS(data::load_dataset((dir / "manifest.json").string()), DataError);
        }
        SUBCASE("truncated blob reports byte counts") {
            fs::resize_file(dir / "train_x.bin", 1000);
            CHECK_THROWS_WITH_AS(data::load_dataset((dir / "manifest.json").string()),
                                 doctest::Contains("1000"), DataError);
        }
        SUBCASE("missing blob") {
            fs::remove(dir / "test_y.bin");
            CHECK_THROWS_WITH_AS(data::load_dataset((dir / "manifest.json").string()),
                                 doctest::Contains("test_y.bin"), DataError);
        }
        SUBCASE("non-positive std is rejected") {
            std::ifstream in(dir / "manifest.json");
            auto j = nlohmann::json::parse(in);
            in.close();
            j["variables"][1]["std"] = 0.0;
            std::ofstream(dir / "manifest.json", std::ios::trunc) << j.dump();
            CHECK_THROWS_WITH_AS(data::load_dataset((dir / "manifest.json").string()),
                                 doctest::Contains("std"), DataError);
        }
    }

    TEST_CASE("shuffled order is a deterministic seeded permutation") {
        const auto a = data::shuffled_order(100, 5);
        const auto b = data::shuffled_order(100, 5);
        const auto c = data::shuffled_order(100, 6);
        CHECK(a == b);
        CHECK(a != c);
        auto sorted = a;
        std::sort(sorted.begin(), sorted.end());
        for (std::int64_t i = 0; i < 100; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
    }
}

TEST_SUITE("data.analyze") {
    TEST_CASE("constant field: all first differences are zero") {
        Tensor t = Tensor::full({2, 3, 2, 1, 4, 4}, 0.7, Dtype::F32);
        const auto rep = data::analyze_distribution(t, 1, 16);
        CHECK(rep.temporal.mean == doctest::Approx(0.0));
        CHECK(rep.temporal.stddev == doctest::Approx(0.0));
        CHECK(rep.temporal.kept == rep.temporal.total);
        CHECK(rep.temporal.total == 2 * 2 * 16);
        CHECK(rep.spatial.mean == doctest::Approx(0.0));
        CHECK(rep.spatial.stddev == doctest::Approx(0.0));
        CHECK(rep.spatial.kept == rep.spatial.total);
        // All standardized values sit in the central bin.
        std::int64_t tsum = 0;
        for (auto c : rep.temporal.hist) tsum += c;
        CHECK(tsum == rep.temporal.kept);
        CHECK(rep.temporal.hist[8] == rep.temporal.kept);
        // Value histograms are fractions summing to one.
        double f = 0;
        for (double v : rep.spatial_value_hist) f += v;
        CHECK(f == doctest::Approx(1.0));
        f = 0;
        for (double v : rep.point_value_hist) f += v;
        CHECK(f == doctest::Approx(1.0));
    }

    TEST_CASE("linear ramp in time: temporal differences are constant") {
        Tensor t({1, 5, 1, 1, 3, 3}, Dtype::F64);
        auto d = t.data<double>();
        for (std::int64_t k = 0; k < 5; ++k)
            for (std::int64_t i = 0; i < 9; ++i) d[static_cast<std::size_t>(k * 9 + i)] = 0.25 * k;
        const auto rep = data::analyze_distribution(t, 0, 8);
        CHECK(rep.temporal.mean == doctest::Approx(0.25));
        CHECK(rep.temporal.stddev == doctest::Approx(0.0));
        CHECK(rep.temporal.kept == rep.temporal.total);
        CHECK(rep.temporal.total == 4 * 9);
        // A frame is spatially constant, so spatial differences vanish.
        CHECK(rep.spatial.mean == doctest::Approx(0.0));
        CHECK(rep.spatial.stddev == doctest::Approx(0.0));
    }

    TEST_CASE("linear ramp in space: spatial differences are constant") {
        Tensor t({1, 2, 1, 1, 4, 5}, Dtype::F64);
        auto d = t.data<double>();
        for (std::int64_t k = 0; k < 2; ++k)
            for (std::int64_t y = 0; y < 4; ++y)
                for (std::int64_t x = 0; x < 5; ++x)
                    d[static_cast<std::size_t>((k * 4 + y) * 5 + x)] = 0.5 * x;
        const auto rep = data::analyze_distribution(t, 0, 8);
        CHECK(rep.spatial.mean == doctest::Approx(0.5));
        CHECK(rep.spatial.stddev == doctest::Approx(0.0));
        CHECK(rep.spatial.kept == rep.spatial.total);
        CHECK(rep.spatial.total == 2 * 4 * 4);
    }

    TEST_CASE("three-sigma filter: histogram counts equal retained samples") {
        // 63 small differences plus one enormous outlier in time.
        Tensor t({1, 65, 1, 1, 1, 1}, Dtype::F64);
        auto d = t.data<double>();
        double acc = 0.0;
        for (std::int64_t k = 0; k < 65; ++k) {
            d[static_cast<std::size_t>(k)] = acc;
            acc += (k == 31) ? 1000.0 : ((k % 2 == 0) ? 1.0 : -1.0);
        }
        const auto rep = data::analyze_distribution(t, 0, 16);
        CHECK(rep.temporal.total == 64);
        CHECK(rep.temporal.kept == 63);  // the 1000-step is beyond 3 sigma
        std::int64_t sum = 0;
        for (auto c : rep.temporal.hist) sum += c;
        CHECK(sum == rep.temporal.kept);

        // Independent recomputation of the filter on the raw differences.
        std::vector<double> diffs;
        for (std::int64_t k = 0; k + 1 < 65; ++k)
            diffs.push_back(d[static_cast<std::size_t>(k + 1)] - d[static_cast<std::size_t>(k)]);
        double s1 = 0, s2 = 0;
        for (double v : diffs) {
            s1 += v;
            s2 += v * v;
        }
        const double mean = s1 / 64.0;
        const double sd = std::sqrt(s2 / 64.0 - mean * mean);
        CHECK(rep.temporal.mean == doctest::Approx(mean));
        CHECK(rep.temporal.stddev == doctest::Approx(sd));
        std::int64_t kept = 0;
        for (double v : diffs)
            if (std::abs((v - mean) / sd) <= 3.0) ++kept;
        CHECK(rep.temporal.kept == kept);
    }

    TEST_CASE("selection errors") {
        Tensor ok({1, 2, 2, 1, 4, 4}, Dtype::F32);
        CHECK_THROWS_AS(data::analyze_distribution(Tensor::zeros({2, 3, 4}), 0, 8), ShapeError);
        CHECK_THROWS_AS(data::analyze_distribution(ok, 2, 8), ConfigError);
        CHECK_THROWS_AS(data::analyze_distribution(ok, -1, 8), ConfigError);
        CHECK_THROWS_AS(data::analyze_distribution(ok, 0, 0), ConfigError);
        // An empty selection cannot even be represented: zero extents are
        // rejected at tensor construction.
        CHECK_THROWS_AS(Tensor::zeros({0, 2, 2, 1, 4, 4}), ShapeError);
    }

    TEST_CASE("generated data analyzes as binary-valued") {
        const auto dir = fresh_dir("analyze_gen");
        data::generate_mvm(small_cfg(), dir.string());
        const auto ds = data::load_dataset((dir / "manifest.json").string());
        const auto rep = data::analyze_distribution(ds.denormalize(ds.train_x), 0, 10);
        // Binary field: only the extreme bins of the value histogram are hit.
        for (int b = 1; b < 9; ++b)
            CHECK(rep.spatial_value_hist[static_cast<std::size_t>(b)] == doctest::Approx(0.0));
        CHECK(rep.spatial_value_hist[0] + rep.spatial_value_hist[9] == doctest::Approx(1.0));
        std::int64_t sum = 0;
        for (auto c : rep.temporal.hist) sum += c;
        CHECK(sum == rep.temporal.kept);
        CHECK(rep.temporal.kept <= rep.temporal.total);
        CHECK(rep.temporal.kept > 0);
    }
}
