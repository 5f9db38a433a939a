#pragma once

// Camouflaged moving-square clips: a static random texture with a square
// patch drawn from the same distribution, translating 1-2 px per frame and
// bouncing off the borders. A single frame carries no appearance cue; only
// the motion separates the square from the background.

#include <cstdint>
#include <random>
#include <vector>

#include "vcod/errors.hpp"
#include "vcod/numerics.hpp"
#include "vcod/pseudolabel.hpp"

namespace vcod::toynet {

struct SyntheticConfig {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t frames = 6;
    std::size_t square = 12;
    int min_speed = 1;  // px / frame per axis
    int max_speed = 2;
};

struct SyntheticSequence {
    std::vector<DenseArray> frames;  // 3 x H x W in [0,1]
    std::vector<MaskImage> masks;    // binary, square = 1
    std::vector<std::pair<long, long>> positions;  // top-left (row, col) per frame
};

namespace detail {
// iid uniform noise smoothed by a 3x3 box (wrapping), per channel.
inline DenseArray texture(std::mt19937_64& rng, std::size_t h, std::size_t w) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    DenseArray raw({3, h, w});
    for (auto& v : raw.values()) v = u(rng);
    DenseArray out({3, h, w});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t x = 0; x < w; ++x) {
                double s = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) s += raw(c, (r + h + dy) % h, (x + w + dx) % w);
                out(c, r, x) = s / 9.0;
            }
    return out;
}
}  // namespace detail

inline SyntheticSequence make_moving_square(const SyntheticConfig& cfg, std::uint64_t seed) {
    if (cfg.frames < 2) throw InputError("make_moving_square: need at least two frames");
    if (cfg.square == 0 || cfg.square >= cfg.height || cfg.square >= cfg.width) {
        throw InputError("make_moving_square: square must fit inside the frame");
    }
    if (cfg.min_speed < 1 || cfg.max_speed < cfg.min_speed) throw InputError("make_moving_square: bad speed range");
    std::mt19937_64 rng(seed);
    const auto background = detail::texture(rng, cfg.height, cfg.width);
    const auto patch = detail::texture(rng, cfg.square, cfg.square);

    std::uniform_int_distribution<int> speed(cfg.min_speed, cfg.max_speed), sign(0, 1);
    long vy = speed(rng) * (sign(rng) ? 1 : -1), vx = speed(rng) * (sign(rng) ? 1 : -1);
    const long max_r = static_cast<long>(cfg.height - cfg.square), max_c = static_cast<long>(cfg.width - cfg.square);
    std::uniform_int_distribution<long> r0(0, max_r), c0(0, max_c);
    long r = r0(rng), c = c0(rng);

    SyntheticSequence seq;
    for (std::size_t t = 0; t < cfg.frames; ++t) {
        DenseArray frame = background;
        DenseArray mask({cfg.height, cfg.width}, 0.0);
        for (std::size_t y = 0; y < cfg.square; ++y)
            for (std::size_t x = 0; x < cfg.square; ++x) {
                const auto fy = static_cast<std::size_t>(r) + y, fx = static_cast<std::size_t>(c) + x;
                for (std::size_t ch = 0; ch < 3; ++ch) frame(ch, fy, fx) = patch(ch, y, x);
                mask(fy, fx) = 1.0;
            }
        seq.frames.push_back(std::move(frame));
        seq.masks.emplace_back(std::move(mask), MaskKind::binary);
        seq.positions.emplace_back(r, c);
        // bounce
        if (r + vy < 0 || r + vy > max_r) vy = -vy;
        if (c + vx < 0 || c + vx > max_c) vx = -vx;
        r += vy;
        c += vx;
    }
    return seq;
}

}  // namespace vcod::toynet
