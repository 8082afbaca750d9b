#include "met2net/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "json.hpp"

#include "met2net/threading.hpp"

namespace met2net::data {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kTile = 28;    // sprite tile side
constexpr int kBox = 20;     // normalized content-bbox side
constexpr int kBoxOff = 4;   // bbox offset inside the tile
constexpr int kPoolSize = 64;
constexpr std::uint64_t kPoolTagA = 0xA11CE0ULL;
constexpr std::uint64_t kPoolTagB = 0xA11CE1ULL;
constexpr std::uint64_t kSampleTag = 0x5A3D1EULL;

using Glyph = std::array<std::uint8_t, kTile * kTile>;

std::uint64_t splitmix64(std::uint64_t seed, std::uint64_t k) {
    std::uint64_t z = seed + (k + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Max-pool resample of the content bounding box of `src` (rows x cols,
/// nonzero = ink) onto the fixed kBox x kBox block of a tile. Every source
/// cell lands in some target cell, so the resampled content spans the block
/// exactly: boundary rows/columns of the block are never empty.
Glyph normalize_glyph(const std::vector<std::uint8_t>& src, int rows, int cols, bool* empty) {
    int y0 = rows, y1 = -1, x0 = cols, x1 = -1;
    for (int y = 0; y < rows; ++y)
        for (int x = 0; x < cols; ++x)
            if (src[static_cast<std::size_t>(y) * cols + x]) {
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
            }
    Glyph out{};
    if (y1 < y0) {
        *empty = true;
        return out;
    }
    *empty = false;
    const int bh = y1 - y0 + 1, bw = x1 - x0 + 1;
    for (int i = 0; i < kBox; ++i) {
        int sy0 = y0 + i * bh / kBox;
        int sy1 = std::max(sy0 + 1, y0 + (i + 1) * bh / kBox);
        for (int j = 0; j < kBox; ++j) {
            int sx0 = x0 + j * bw / kBox;
            int sx1 = std::max(sx0 + 1, x0 + (j + 1) * bw / kBox);
            std::uint8_t v = 0;
            for (int sy = sy0; sy < sy1 && !v; ++sy)
                for (int sx = sx0; sx < sx1 && !v; ++sx)
                    v = src[static_cast<std::size_t>(sy) * cols + sx];
            out[static_cast<std::size_t>(kBoxOff + i) * kTile + (kBoxOff + j)] = v;
        }
    }
    return out;
}

double dist_to_segment(double px, double py, double ax, double ay, double bx, double by) {
    const double dx = bx - ax, dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double cx = ax + t * dx - px, cy = ay + t * dy - py;
    return std::sqrt(cx * cx + cy * cy);
}

/// Source A: open polyline strokes of thickness ~2.4 px. Control points stay
/// in [6,21]^2 so the inked area fits a 20x20 box before normalization.
std::vector<std::uint8_t> raw_stroke_glyph(std::mt19937_64& rng) {
    std::vector<std::uint8_t> g(kTile * kTile, 0);
    const int k = std::uniform_int_distribution<int>(3, 5)(rng);
    std::vector<double> xs(k), ys(k);
    for (int i = 0; i < k; ++i) {
        xs[i] = std::uniform_real_distribution<double>(6.0, 21.0)(rng);
        ys[i] = std::uniform_real_distribution<double>(6.0, 21.0)(rng);
    }
    const double r = 1.2;
    for (int y = 0; y < kTile; ++y)
        for (int x = 0; x < kTile; ++x)
            for (int i = 0; i + 1 < k; ++i)
                if (dist_to_segment(x, y, xs[i], ys[i], xs[i + 1], ys[i + 1]) <= r) {
                    g[static_cast<std::size_t>(y) * kTile + x] = 1;
                    break;
                }
    return g;
}

/// Source B: filled ellipses, rectangles, and triangles, confined to [4,23]^2.
std::vector<std::uint8_t> raw_shape_glyph(std::mt19937_64& rng) {
    std::vector<std::uint8_t> g(kTile * kTile, 0);
    const int kind = std::uniform_int_distribution<int>(0, 2)(rng);
    if (kind == 0) {
        const double cx = std::uniform_real_distribution<double>(12.0, 15.0)(rng);
        const double cy = std::uniform_real_distribution<double>(12.0, 15.0)(rng);
        const double rx = std::uniform_real_distribution<double>(5.0, 8.4)(rng);
        const double ry = std::uniform_real_distribution<double>(5.0, 8.4)(rng);
        for (int y = 0; y < kTile; ++y)
            for (int x = 0; x < kTile; ++x) {
                const double u = (x - cx) / rx, v = (y - cy) / ry;
                if (u * u + v * v <= 1.0) g[static_cast<std::size_t>(y) * kTile + x] = 1;
            }
    } else if (kind == 1) {
        const int x0 = std::uniform_int_distribution<int>(4, 13)(rng);
        const int y0 = std::uniform_int_distribution<int>(4, 13)(rng);
        const int w = std::uniform_int_distribution<int>(8, 24 - x0)(rng);
        const int h = std::uniform_int_distribution<int>(8, 24 - y0)(rng);
        for (int y = y0; y < y0 + h; ++y)
            for (int x = x0; x < x0 + w; ++x) g[static_cast<std::size_t>(y) * kTile + x] = 1;
    } else {
        double px[3], py[3];
        for (int tries = 0; tries < 100; ++tries) {
            for (int i = 0; i < 3; ++i) {
                px[i] = std::uniform_real_distribution<double>(4.0, 23.0)(rng);
                py[i] = std::uniform_real_distribution<double>(4.0, 23.0)(rng);
            }
            const double area2 = std::abs((px[1] - px[0]) * (py[2] - py[0]) -
                                          (px[2] - px[0]) * (py[1] - py[0]));
            if (area2 >= 80.0) break;
        }
        auto side = [&](double x, double y, int a, int b) {
            return (px[b] - px[a]) * (y - py[a]) - (py[b] - py[a]) * (x - px[a]);
        };
        for (int y = 0; y < kTile; ++y)
            for (int x = 0; x < kTile; ++x) {
                const double s0 = side(x, y, 0, 1), s1 = side(x, y, 1, 2), s2 = side(x, y, 2, 0);
                const bool neg = s0 < 0 || s1 < 0 || s2 < 0;
                const bool pos = s0 > 0 || s1 > 0 || s2 > 0;
                if (!(neg && pos)) g[static_cast<std::size_t>(y) * kTile + x] = 1;
            }
    }
    return g;
}

std::vector<Glyph> procedural_pool(std::uint64_t seed, bool strokes) {
    std::mt19937_64 rng(splitmix64(seed, strokes ? kPoolTagA : kPoolTagB));
    std::vector<Glyph> pool;
    pool.reserve(kPoolSize);
    while (static_cast<int>(pool.size()) < kPoolSize) {
        auto raw = strokes ? raw_stroke_glyph(rng) : raw_shape_glyph(rng);
        bool empty = false;
        Glyph g = normalize_glyph(raw, kTile, kTile, &empty);
        if (!empty) pool.push_back(g);
    }
    return pool;
}

std::uint32_t read_be32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DataError("idx: short read in header of " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

/// Reads an IDX3 unsigned-byte image file (big-endian header, magic
/// 0x00000803), binarizes at 128, and bbox-normalizes each image.
std::vector<Glyph> load_idx_glyphs(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("idx: cannot open " + path);
    const std::uint32_t magic = read_be32(in, path);
    if (magic != 0x00000803u)
        throw DataError("idx: bad magic in " + path + " (expected 0x00000803)");
    const std::uint32_t n = read_be32(in, path);
    const std::uint32_t rows = read_be32(in, path);
    const std::uint32_t cols = read_be32(in, path);
    if (n == 0 || rows == 0 || cols == 0) throw DataError("idx: empty image set in " + path);
    const std::uint32_t take = std::min<std::uint32_t>(n, 4 * kPoolSize);
    std::vector<std::uint8_t> img(static_cast<std::size_t>(rows) * cols);
    std::vector<Glyph> pool;
    for (std::uint32_t i = 0; i < take; ++i) {
        in.read(reinterpret_cast<char*>(img.data()), static_cast<std::streamsize>(img.size()));
        if (!in) throw DataError("idx: short read in image data of " + path);
        for (auto& p : img) p = p >= 128 ? 1 : 0;
        bool empty = false;
        Glyph g = normalize_glyph(img, static_cast<int>(rows), static_cast<int>(cols), &empty);
        if (!empty) pool.push_back(g);
    }
    if (pool.size() < 2) throw DataError("idx: fewer than two non-empty images in " + path);
    return pool;
}

struct SpriteDraw {
    SpriteState st;
    const Glyph* glyph_a = nullptr;
    const Glyph* glyph_b = nullptr;
};

void blit(float* ch, int H, int W, int oy, int ox, const Glyph& g) {
    for (int gy = 0; gy < kTile; ++gy) {
        float* row = ch + static_cast<std::size_t>(oy + gy) * W + ox;
        const std::uint8_t* src = g.data() + static_cast<std::size_t>(gy) * kTile;
        for (int gx = 0; gx < kTile; ++gx)
            if (src[gx]) row[gx] = 1.0f;
    }
}

/// Renders one sample's t_in input frames into xdst and t_out target frames
/// into ydst (each frame is [N=3, C=1, H, W]). Everything about the sample is
/// derived from the (dataset seed, global sample index) stream.
void generate_sample(const SpriteSceneConfig& cfg, const std::vector<Glyph>& pool_a,
                     const std::vector<Glyph>& pool_b, std::int64_t global_index, float* xdst,
                     float* ydst) {
    std::mt19937_64 rng(
        splitmix64(cfg.seed, kSampleTag + static_cast<std::uint64_t>(global_index)));
    const double xmax = cfg.width - kTile;
    const double ymax = cfg.height - kTile;
    std::vector<SpriteDraw> sprites(static_cast<std::size_t>(cfg.n_sprites));
    for (auto& s : sprites) {
        s.glyph_a = &pool_a[rng() % pool_a.size()];
        s.glyph_b = &pool_b[rng() % pool_b.size()];
        s.st.x = std::uniform_real_distribution<double>(0.0, xmax)(rng);
        s.st.y = std::uniform_real_distribution<double>(0.0, ymax)(rng);
        const double speed =
            std::uniform_real_distribution<double>(cfg.min_speed, cfg.max_speed)(rng);
        const double ang =
            std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
        s.st.vx = speed * std::cos(ang);
        s.st.vy = speed * std::sin(ang);
    }
    const int H = cfg.height, W = cfg.width;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    const std::size_t frame_elems = 3 * hw;
    for (int t = 0; t < cfg.t_in + cfg.t_out; ++t) {
        float* fr = t < cfg.t_in ? xdst + static_cast<std::size_t>(t) * frame_elems
                                 : ydst + static_cast<std::size_t>(t - cfg.t_in) * frame_elems;
        std::fill(fr, fr + frame_elems, 0.0f);
        float* ch1 = fr;
        float* ch2 = fr + hw;
        float* ch3 = fr + 2 * hw;
        for (const auto& s : sprites) {
            const int oy = static_cast<int>(std::floor(s.st.y));
            const int ox = static_cast<int>(std::floor(s.st.x));
            blit(ch1, H, W, oy, ox, *s.glyph_a);
            blit(ch2, H, W, oy, ox, *s.glyph_b);
        }
        for (std::size_t i = 0; i < hw; ++i) ch3[i] = 1.0f - ch1[i];
        for (auto& s : sprites) advance_sprite(s.st, xmax, ymax);
    }
}

void write_floats(std::ofstream& os, const float* p, std::size_t n, const std::string& what) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(float)));
    if (!os) throw DataError("generate: write failed for " + what);
}

json manifest_to_json(const DatasetManifest& m) {
    json vars = json::array();
    for (int v = 0; v < m.n_vars; ++v)
        vars.push_back({{"name", m.var_names[static_cast<std::size_t>(v)]},
                        {"mean", m.mean[static_cast<std::size_t>(v)]},
                        {"std", m.stddev[static_cast<std::size_t>(v)]}});
    return json{{"format", "met2net.dataset.v1"},
                {"dims",
                 {{"n_train", m.n_train},
                  {"n_test", m.n_test},
                  {"t_in", m.t_in},
                  {"t_out", m.t_out},
                  {"n_vars", m.n_vars},
                  {"channels", m.channels},
                  {"height", m.height},
                  {"width", m.width}}},
                {"seed", m.seed},
                {"variables", vars},
                {"blobs",
                 {{"train_x", "train_x.bin"},
                  {"train_y", "train_y.bin"},
                  {"test_x", "test_x.bin"},
                  {"test_y", "test_y.bin"}}}};
}

DatasetManifest manifest_from_json(const json& j) {
    DatasetManifest m;
    if (j.value("format", "") != "met2net.dataset.v1")
        throw DataError("manifest: unrecognized format tag");
    const json& d = j.at("dims");
    m.n_train = d.at("n_train").get<std::int64_t>();
    m.n_test = d.at("n_test").get<std::int64_t>();
    m.t_in = d.at("t_in").get<int>();
    m.t_out = d.at("t_out").get<int>();
    m.n_vars = d.at("n_vars").get<int>();
    m.channels = d.at("channels").get<int>();
    m.height = d.at("height").get<int>();
    m.width = d.at("width").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& v : j.at("variables")) {
        m.var_names.push_back(v.at("name").get<std::string>());
        m.mean.push_back(v.at("mean").get<double>());
        m.stddev.push_back(v.at("std").get<double>());
    }
    if (m.n_train < 1 || m.n_test < 0 || m.t_in < 1 || m.t_out < 1 || m.n_vars < 1 ||
        m.channels < 1 || m.height < 1 || m.width < 1)
        throw DataError("manifest: non-positive dimension");
    if (static_cast<int>(m.var_names.size()) != m.n_vars)
        throw DataError("manifest: variable count does not match n_vars");
    for (double s : m.stddev)
        if (!(s > 0.0)) throw DataError("manifest: variable std must be > 0");
    return m;
}

Tensor read_blob(const fs::path& p, const Shape& shape) {
    const std::int64_t expect =
        shape_numel(shape) * static_cast<std::int64_t>(sizeof(float));
    std::error_code ec;
    const auto sz = fs::file_size(p, ec);
    if (ec) throw DataError("dataset: missing blob " + p.string());
    if (static_cast<std::int64_t>(sz) != expect)
        throw DataError("dataset: blob " + p.string() + " has " + std::to_string(sz) +
                        " bytes, expected " + std::to_string(expect));
    Tensor t(shape, Dtype::F32);
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("dataset: cannot open blob " + p.string());
    auto dst = t.data<float>();
    in.read(reinterpret_cast<char*>(dst.data()),
            static_cast<std::streamsize>(dst.size() * sizeof(float)));
    if (!in) throw DataError("dataset: short read on blob " + p.string());
    return t;
}

/// In-place (v - mean) / std over each variable slice of a [S,T,N,C,H,W] blob.
void standardize(Tensor& t, const DatasetManifest& m) {
    auto d = t.data<float>();
    const std::int64_t inner =
        static_cast<std::int64_t>(m.channels) * m.height * m.width;
    const std::int64_t frames = t.numel() / (inner * m.n_vars);
    for (std::int64_t f = 0; f < frames; ++f)
        for (int v = 0; v < m.n_vars; ++v) {
            const double mu = m.mean[static_cast<std::size_t>(v)];
            const double sd = m.stddev[static_cast<std::size_t>(v)];
            float* p = d.data() + (f * m.n_vars + v) * inner;
            for (std::int64_t i = 0; i < inner; ++i)
                p[i] = static_cast<float>((static_cast<double>(p[i]) - mu) / sd);
        }
}

enum class AffineKind { Normalize, Denormalize };

Tensor affine_vars(const Tensor& t, const DatasetManifest& m, AffineKind kind) {
    if (t.ndim() < 4) throw ShapeError("dataset: expected at least 4 dims, got " + shape_str(t.shape()));
    const int axis = t.ndim() - 4;
    if (t.dim(static_cast<std::size_t>(axis)) != m.n_vars)
        throw ShapeError("dataset: dim " + std::to_string(axis) + " of " + shape_str(t.shape()) +
                         " does not match " + std::to_string(m.n_vars) + " variables");
    std::int64_t inner = 1;
    for (int i = axis + 1; i < t.ndim(); ++i) inner *= t.dim(static_cast<std::size_t>(i));
    const std::int64_t outer = t.numel() / (inner * m.n_vars);
    Tensor out(t.shape(), t.dtype());
    dispatch(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto src = t.data<T>();
        auto dst = out.data<T>();
        for (std::int64_t o = 0; o < outer; ++o)
            for (int v = 0; v < m.n_vars; ++v) {
                const double mu = m.mean[static_cast<std::size_t>(v)];
                const double sd = m.stddev[static_cast<std::size_t>(v)];
                const T* s = src.data() + (o * m.n_vars + v) * inner;
                T* d = dst.data() + (o * m.n_vars + v) * inner;
                if (kind == AffineKind::Denormalize)
                    for (std::int64_t i = 0; i < inner; ++i)
                        d[i] = static_cast<T>(static_cast<double>(s[i]) * sd + mu);
                else
                    for (std::int64_t i = 0; i < inner; ++i)
                        d[i] = static_cast<T>((static_cast<double>(s[i]) - mu) / sd);
            }
    });
    return out;
}

}  // namespace

void SpriteSceneConfig::validate() const {
    if (n_channels != 3)
        throw ConfigError("data: n_channels must be 3 (two sprite sources plus the inversion)");
    if (height < kTile + 4 || width < kTile + 4)
        throw ConfigError("data: canvas must be at least " + std::to_string(kTile + 4) +
                          " pixels per side");
    if (n_sprites < 1 || n_sprites > 8) throw ConfigError("data: n_sprites must be in [1,8]");
    if (t_in < 1 || t_out < 1) throw ConfigError("data: t_in and t_out must be >= 1");
    if (n_train < 1 || n_test < 1) throw ConfigError("data: both splits need at least 1 sample");
    if (!(min_speed >= 0.0) || !(max_speed >= min_speed) || !(max_speed <= 20.0))
        throw ConfigError("data: need 0 <= min_speed <= max_speed <= 20");
    if (sprite_source.empty()) throw ConfigError("data: sprite_source must not be empty");
}

void advance_sprite(SpriteState& s, double xmax, double ymax) {
    s.x += s.vx;
    s.y += s.vy;
    while (s.x < 0.0 || s.x > xmax) {
        if (s.x < 0.0) s.x = -s.x;
        else s.x = 2.0 * xmax - s.x;
        s.vx = -s.vx;
    }
    while (s.y < 0.0 || s.y > ymax) {
        if (s.y < 0.0) s.y = -s.y;
        else s.y = 2.0 * ymax - s.y;
        s.vy = -s.vy;
    }
}

GenerateSummary generate_mvm(const SpriteSceneConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    std::vector<Glyph> pool_a, pool_b;
    if (cfg.sprite_source == "glyphs") {
        pool_a = procedural_pool(cfg.seed, true);
        pool_b = procedural_pool(cfg.seed, false);
    } else {
        auto all = load_idx_glyphs(cfg.sprite_source);
        for (std::size_t i = 0; i < all.size(); ++i)
            (i % 2 == 0 ? pool_a : pool_b).push_back(all[i]);
    }

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    std::ofstream fx_train(dir / "train_x.bin", std::ios::binary | std::ios::trunc);
    std::ofstream fy_train(dir / "train_y.bin", std::ios::binary | std::ios::trunc);
    std::ofstream fx_test(dir / "test_x.bin", std::ios::binary | std::ios::trunc);
    std::ofstream fy_test(dir / "test_y.bin", std::ios::binary | std::ios::trunc);
    if (!fx_train || !fy_train || !fx_test || !fy_test)
        throw DataError("generate: cannot create blobs in " + out_dir);

    const std::size_t hw = static_cast<std::size_t>(cfg.height) * cfg.width;
    const std::size_t frame_elems = 3 * hw;
    const std::size_t x_elems = static_cast<std::size_t>(cfg.t_in) * frame_elems;
    const std::size_t y_elems = static_cast<std::size_t>(cfg.t_out) * frame_elems;
    constexpr std::int64_t kChunk = 64;
    std::vector<float> bufx(static_cast<std::size_t>(kChunk) * x_elems);
    std::vector<float> bufy(static_cast<std::size_t>(kChunk) * y_elems);

    std::array<double, 3> sum{}, sumsq{};
    std::int64_t stat_count = 0;  // per-variable value count over the training split
    GenerateSummary summary{cfg.n_train, cfg.n_test, 0};

    auto accumulate = [&](const std::vector<float>& buf, std::int64_t k, std::size_t per_sample,
                          int frames) {
        for (std::int64_t i = 0; i < k; ++i) {
            const float* sample = buf.data() + static_cast<std::size_t>(i) * per_sample;
            for (int t = 0; t < frames; ++t)
                for (int v = 0; v < 3; ++v) {
                    const float* ch =
                        sample + static_cast<std::size_t>(t) * frame_elems + v * hw;
                    double s = 0, s2 = 0;
                    for (std::size_t p = 0; p < hw; ++p) {
                        const double val = ch[p];
                        s += val;
                        s2 += val * val;
                    }
                    sum[static_cast<std::size_t>(v)] += s;
                    sumsq[static_cast<std::size_t>(v)] += s2;
                }
        }
    };

    for (int split = 0; split < 2; ++split) {
        const bool is_train = split == 0;
        const std::int64_t S = is_train ? cfg.n_train : cfg.n_test;
        const std::int64_t base = is_train ? 0 : cfg.n_train;
        std::ofstream& fx = is_train ? fx_train : fx_test;
        std::ofstream& fy = is_train ? fy_train : fy_test;
        for (std::int64_t start = 0; start < S; start += kChunk) {
            const std::int64_t k = std::min(kChunk, S - start);
            parallel_for(k, 1, [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t i = lo; i < hi; ++i)
                    generate_sample(cfg, pool_a, pool_b, base + start + i,
                                    bufx.data() + static_cast<std::size_t>(i) * x_elems,
                                    bufy.data() + static_cast<std::size_t>(i) * y_elems);
            });
            if (is_train) {
                accumulate(bufx, k, x_elems, cfg.t_in);
                accumulate(bufy, k, y_elems, cfg.t_out);
                stat_count += k * (cfg.t_in + cfg.t_out) * static_cast<std::int64_t>(hw);
            }
            write_floats(fx, bufx.data(), static_cast<std::size_t>(k) * x_elems, "x blob");
            write_floats(fy, bufy.data(), static_cast<std::size_t>(k) * y_elems, "y blob");
            summary.bytes_written +=
                static_cast<std::uint64_t>(k) * (x_elems + y_elems) * sizeof(float);
        }
    }

    DatasetManifest m;
    m.n_train = cfg.n_train;
    m.n_test = cfg.n_test;
    m.t_in = cfg.t_in;
    m.t_out = cfg.t_out;
    m.n_vars = 3;
    m.channels = 1;
    m.height = cfg.height;
    m.width = cfg.width;
    m.seed = cfg.seed;
    m.var_names = {"ch1", "ch2", "ch3"};
    for (int v = 0; v < 3; ++v) {
        const double mean = sum[static_cast<std::size_t>(v)] / static_cast<double>(stat_count);
        const double var =
            sumsq[static_cast<std::size_t>(v)] / static_cast<double>(stat_count) - mean * mean;
        const double sd = std::sqrt(std::max(0.0, var));
        if (!(sd > 0.0))
            throw DataError("generate: variable " + std::to_string(v + 1) +
                            " has zero variance on the training split");
        m.mean.push_back(mean);
        m.stddev.push_back(sd);
    }
    std::ofstream mf(dir / "manifest.json", std::ios::trunc);
    if (!mf) throw DataError("generate: cannot write manifest in " + out_dir);
    mf << manifest_to_json(m).dump(2) << '\n';
    if (!mf) throw DataError("generate: manifest write failed in " + out_dir);
    return summary;
}

Tensor Dataset::denormalize(const Tensor& t) const {
    return affine_vars(t, manifest, AffineKind::Denormalize);
}

Tensor Dataset::normalize(const Tensor& t) const {
    return affine_vars(t, manifest, AffineKind::Normalize);
}

Tensor Dataset::climatology() const {
    const auto& m = manifest;
    const std::int64_t inner =
        static_cast<std::int64_t>(m.channels) * m.height * m.width;
    const std::int64_t frames = m.n_train * m.t_out;
    Tensor clim({m.n_vars, m.channels, m.height, m.width}, Dtype::F32);
    auto src = train_y.data<float>();
    auto dst = clim.data<float>();
    for (int v = 0; v < m.n_vars; ++v) {
        const double mu = m.mean[static_cast<std::size_t>(v)];
        const double sd = m.stddev[static_cast<std::size_t>(v)];
        for (std::int64_t i = 0; i < inner; ++i) {
            double acc = 0.0;
            for (std::int64_t f = 0; f < frames; ++f)
                acc += src[(f * m.n_vars + v) * inner + i];
            dst[v * inner + i] = static_cast<float>(acc / static_cast<double>(frames) * sd + mu);
        }
    }
    return clim;
}

Dataset load_dataset(const std::string& manifest_path) {
    const fs::path mp(manifest_path);
    std::ifstream in(mp);
    if (!in) throw DataError("dataset: cannot open manifest " + manifest_path);
    Dataset ds;
    try {
        ds.manifest = manifest_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw DataError("dataset: corrupt manifest " + manifest_path + ": " + e.what());
    }
    const auto& m = ds.manifest;
    const fs::path dir = mp.parent_path();
    const Shape xs{m.n_train, m.t_in, m.n_vars, m.channels, m.height, m.width};
    const Shape ys{m.n_train, m.t_out, m.n_vars, m.channels, m.height, m.width};
    const Shape xt{m.n_test, m.t_in, m.n_vars, m.channels, m.height, m.width};
    const Shape yt{m.n_test, m.t_out, m.n_vars, m.channels, m.height, m.width};
    ds.train_x = read_blob(dir / "train_x.bin", xs);
    ds.train_y = read_blob(dir / "train_y.bin", ys);
    ds.test_x = read_blob(dir / "test_x.bin", xt);
    ds.test_y = read_blob(dir / "test_y.bin", yt);
    standardize(ds.train_x, m);
    standardize(ds.train_y, m);
    standardize(ds.test_x, m);
    standardize(ds.test_y, m);
    return ds;
}

std::vector<std::int64_t> shuffled_order(std::int64_t n, std::uint64_t seed) {
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), std::int64_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

namespace {

template <class T>
DistributionReport analyze_core(std::span<const T> d, const Shape& sh, int variable, int n_bins) {
    const std::int64_t S = sh[0], Tn = sh[1], N = sh[2], C = sh[3], H = sh[4], W = sh[5];
    DistributionReport rep;
    rep.variable = variable;
    rep.n_bins = n_bins;
    const std::int64_t inner = C * H * W;
    auto frame = [&](std::int64_t s, std::int64_t t) {
        return d.data() + ((s * Tn + t) * N + variable) * inner;
    };

    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::int64_t s = 0; s < S; ++s)
        for (std::int64_t t = 0; t < Tn; ++t) {
            const T* f = frame(s, t);
            for (std::int64_t i = 0; i < inner; ++i) {
                const double v = f[i];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    rep.value_edges.resize(static_cast<std::size_t>(n_bins) + 1);
    for (int b = 0; b <= n_bins; ++b)
        rep.value_edges[static_cast<std::size_t>(b)] = lo + (hi - lo) * b / n_bins;
    auto value_bin = [&](double v) {
        const int b = static_cast<int>((v - lo) / (hi - lo) * n_bins);
        return std::clamp(b, 0, n_bins - 1);
    };

    // Value histogram of the first frame of the first sample (spatial slice).
    {
        std::vector<std::int64_t> counts(static_cast<std::size_t>(n_bins), 0);
        const T* f = frame(0, 0);
        for (std::int64_t i = 0; i < inner; ++i) ++counts[static_cast<std::size_t>(value_bin(f[i]))];
        rep.spatial_value_hist.resize(static_cast<std::size_t>(n_bins));
        for (int b = 0; b < n_bins; ++b)
            rep.spatial_value_hist[static_cast<std::size_t>(b)] =
                static_cast<double>(counts[static_cast<std::size_t>(b)]) /
                static_cast<double>(inner);
    }
    // Value histogram of the center-pixel series across all samples and frames.
    {
        const std::int64_t center = (C / 2) * H * W + (H / 2) * W + W / 2;
        std::vector<std::int64_t> counts(static_cast<std::size_t>(n_bins), 0);
        for (std::int64_t s = 0; s < S; ++s)
            for (std::int64_t t = 0; t < Tn; ++t)
                ++counts[static_cast<std::size_t>(value_bin(frame(s, t)[center]))];
        rep.point_value_hist.resize(static_cast<std::size_t>(n_bins));
        for (int b = 0; b < n_bins; ++b)
            rep.point_value_hist[static_cast<std::size_t>(b)] =
                static_cast<double>(counts[static_cast<std::size_t>(b)]) /
                static_cast<double>(S * Tn);
    }

    // Two passes over a difference population: moments first, then the
    // 3-sigma filter and the histogram of the standardized survivors.
    auto finish = [&](DistributionReport::DiffStats& st, auto&& for_each_diff) {
        double s1 = 0, s2 = 0;
        std::int64_t n = 0;
        for_each_diff([&](double v) {
            s1 += v;
            s2 += v * v;
            ++n;
        });
        st.total = n;
        st.hist.assign(static_cast<std::size_t>(n_bins), 0);
        if (n == 0) return;
        st.mean = s1 / static_cast<double>(n);
        st.stddev = std::sqrt(std::max(0.0, s2 / static_cast<double>(n) - st.mean * st.mean));
        for_each_diff([&](double v) {
            const double z = st.stddev > 0.0 ? (v - st.mean) / st.stddev : 0.0;
            if (std::abs(z) > 3.0) return;
            ++st.kept;
            const int b = std::clamp(static_cast<int>((z + 3.0) / 6.0 * n_bins), 0, n_bins - 1);
            ++st.hist[static_cast<std::size_t>(b)];
        });
    };

    finish(rep.temporal, [&](auto&& fn) {
        for (std::int64_t s = 0; s < S; ++s)
            for (std::int64_t t = 0; t + 1 < Tn; ++t) {
                const T* a = frame(s, t);
                const T* b = frame(s, t + 1);
                for (std::int64_t i = 0; i < inner; ++i)
                    fn(static_cast<double>(b[i]) - static_cast<double>(a[i]));
            }
    });
    finish(rep.spatial, [&](auto&& fn) {
        for (std::int64_t s = 0; s < S; ++s)
            for (std::int64_t t = 0; t < Tn; ++t) {
                const T* f = frame(s, t);
                for (std::int64_t c = 0; c < C; ++c)
                    for (std::int64_t y = 0; y < H; ++y) {
                        const T* row = f + (c * H + y) * W;
                        for (std::int64_t x = 0; x + 1 < W; ++x)
                            fn(static_cast<double>(row[x + 1]) - static_cast<double>(row[x]));
                    }
            }
    });
    return rep;
}

}  // namespace

DistributionReport analyze_distribution(const Tensor& frames, int variable, int n_bins) {
    if (frames.ndim() != 6)
        throw ShapeError("analyze: expected [S,T,N,C,H,W], got " + shape_str(frames.shape()));
    if (n_bins < 1) throw ConfigError("analyze: n_bins must be >= 1");
    if (variable < 0 || variable >= frames.dim(2))
        throw ConfigError("analyze: variable index " + std::to_string(variable) +
                          " out of range for " + std::to_string(frames.dim(2)) + " variables");
    if (frames.numel() == 0) throw DataError("analyze: empty selection");
    return dispatch(frames.dtype(), [&](auto tag) {
        using T = decltype(tag);
        return analyze_core<T>(frames.data<T>(), frames.shape(), variable, n_bins);
    });
}

}  // namespace met2net::data
