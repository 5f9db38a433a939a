#pragma once

// Full-range correlation aggregation: every reference position (x, y) is
// paired with every position (u, v) of a max-pooled neighbour feature map,
// the exponentiated dot products are normalised over (u, v), and the result
// is used as convex weights over a 1x1-projected copy of the neighbour.
//
// Unnormalised volumes are stored max-shifted per reference position, i.e.
// entry = scaled * exp(log_scale), so large feature magnitudes never overflow
// the normalisation. Materialising the raw entries through entries() may still
// overflow and is only meant for inspection.

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "vcod/errors.hpp"
#include "vcod/numerics.hpp"

namespace vcod {

class FeatureMap {
public:
    FeatureMap() = default;
    explicit FeatureMap(DenseArray values) : values_(std::move(values)) {
        if (values_.rank() != 3) {
            throw DimensionError("feature map must be C x H x W, got " + shape_string(values_.shape()));
        }
        if (!all_finite(values_)) throw InputError("feature map contains non-finite values");
    }
    FeatureMap(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0)
        : values_({channels, height, width}, fill) {}

    std::size_t channels() const { return values_.extent(0); }
    std::size_t height() const { return values_.extent(1); }
    std::size_t width() const { return values_.extent(2); }
    std::size_t positions() const { return height() * width(); }

    const DenseArray& values() const noexcept { return values_; }
    DenseArray& values() noexcept { return values_; }

    double operator()(std::size_t c, std::size_t y, std::size_t x) const { return values_(c, y, x); }
    double& operator()(std::size_t c, std::size_t y, std::size_t x) { return values_(c, y, x); }

private:
    DenseArray values_;
};

class CorrelationVolume {
public:
    CorrelationVolume(std::size_t ref_h, std::size_t ref_w, std::size_t nbr_h, std::size_t nbr_w,
                      DenseArray scaled, std::vector<double> log_scale, bool normalized)
        : ref_h_(ref_h), ref_w_(ref_w), nbr_h_(nbr_h), nbr_w_(nbr_w), scaled_(std::move(scaled)),
          log_scale_(std::move(log_scale)), normalized_(normalized) {
        if (scaled_.shape() != Shape{ref_h, ref_w, nbr_h, nbr_w} || log_scale_.size() != ref_h * ref_w) {
            throw DimensionError("correlation volume storage does not match its extents");
        }
    }

    std::size_t ref_height() const { return ref_h_; }
    std::size_t ref_width() const { return ref_w_; }
    std::size_t nbr_height() const { return nbr_h_; }
    std::size_t nbr_width() const { return nbr_w_; }
    std::size_t ref_positions() const { return ref_h_ * ref_w_; }
    std::size_t nbr_positions() const { return nbr_h_ * nbr_w_; }
    bool normalized() const { return normalized_; }

    double entry(std::size_t x, std::size_t y, std::size_t u, std::size_t v) const {
        return scaled_(x, y, u, v) * std::exp(log_scale_[x * ref_w_ + y]);
    }

    // Entries indexed [x, y, u, v] with (x, y) over the reference grid.
    DenseArray entries() const {
        DenseArray out(scaled_.shape());
        const auto n = nbr_positions();
        for (std::size_t r = 0; r < ref_positions(); ++r) {
            const double s = std::exp(log_scale_[r]);
            for (std::size_t j = 0; j < n; ++j) out[r * n + j] = scaled_[r * n + j] * s;
        }
        return out;
    }

    // Max-shifted storage (probabilities when normalized).
    const DenseArray& scaled() const noexcept { return scaled_; }
    const std::vector<double>& log_scale() const noexcept { return log_scale_; }

private:
    std::size_t ref_h_, ref_w_, nbr_h_, nbr_w_;
    DenseArray scaled_;
    std::vector<double> log_scale_;
    bool normalized_;
};

// exp(sum_c f_ref[c,x,y] * f_nbr[c,u,v]) for all (x, y, u, v).
inline CorrelationVolume correlation_volume(const FeatureMap& f_ref, const FeatureMap& f_nbr) {
    if (f_ref.channels() != f_nbr.channels()) {
        throw DimensionError("correlation_volume: channel mismatch " + std::to_string(f_ref.channels()) +
                             " vs " + std::to_string(f_nbr.channels()));
    }
    const auto C = f_ref.channels();
    const auto R = f_ref.positions(), N = f_nbr.positions();
    const double* a = f_ref.values().data();
    const double* b = f_nbr.values().data();
    DenseArray scaled({f_ref.height(), f_ref.width(), f_nbr.height(), f_nbr.width()});
    std::vector<double> log_scale(R);
    std::vector<double> logits(N);
    for (std::size_t r = 0; r < R; ++r) {
        std::fill(logits.begin(), logits.end(), 0.0);
        for (std::size_t c = 0; c < C; ++c) {
            const double ar = a[c * R + r];
            const double* bc = b + c * N;
            for (std::size_t j = 0; j < N; ++j) logits[j] += ar * bc[j];
        }
        const double m = *std::max_element(logits.begin(), logits.end());
        log_scale[r] = m;
        for (std::size_t j = 0; j < N; ++j) scaled[r * N + j] = std::exp(logits[j] - m);
    }
    return {f_ref.height(), f_ref.width(), f_nbr.height(), f_nbr.width(), std::move(scaled),
            std::move(log_scale), false};
}

// Divides every (x, y) slice by its sum over (u, v).
inline CorrelationVolume normalize_volume(const CorrelationVolume& vol) {
    if (vol.normalized()) return vol;
    const auto R = vol.ref_positions(), N = vol.nbr_positions();
    DenseArray out(vol.scaled().shape());
    for (std::size_t r = 0; r < R; ++r) {
        const double* row = vol.scaled().data() + r * N;
        double total = 0.0;
        for (std::size_t j = 0; j < N; ++j) total += row[j];
        for (std::size_t j = 0; j < N; ++j) out[r * N + j] = row[j] / total;
    }
    return {vol.ref_height(), vol.ref_width(), vol.nbr_height(), vol.nbr_width(), std::move(out),
            std::vector<double>(R, 0.0), true};
}

// f'[c,x,y] = sum_{u,v} vol[x,y,u,v] * g[c,u,v]
inline FeatureMap aggregate(const CorrelationVolume& vol_n, const FeatureMap& g) {
    if (!vol_n.normalized()) throw InputError("aggregate: correlation volume is not normalized");
    if (g.height() != vol_n.nbr_height() || g.width() != vol_n.nbr_width()) {
        throw DimensionError("aggregate: neighbour features " + shape_string(g.values().shape()) +
                             " do not match volume neighbour grid " + std::to_string(vol_n.nbr_height()) + "x" +
                             std::to_string(vol_n.nbr_width()));
    }
    const auto C = g.channels(), R = vol_n.ref_positions(), N = vol_n.nbr_positions();
    FeatureMap out(C, vol_n.ref_height(), vol_n.ref_width());
    const double* w = vol_n.scaled().data();
    for (std::size_t c = 0; c < C; ++c) {
        const double* gc = g.values().data() + c * N;
        double* oc = out.values().data() + c * R;
        for (std::size_t r = 0; r < R; ++r) {
            double acc = 0.0;
            for (std::size_t j = 0; j < N; ++j) acc += w[r * N + j] * gc[j];
            oc[r] = acc;
        }
    }
    return out;
}

// Channel mixing phi(.) applied to the pooled neighbour before aggregation.
struct Projection1x1 {
    DenseArray weight;         // C_out x C_in x 1 x 1
    std::vector<double> bias;  // C_out

    static Projection1x1 identity(std::size_t channels) {
        Projection1x1 p{DenseArray({channels, channels, 1, 1}), std::vector<double>(channels, 0.0)};
        for (std::size_t c = 0; c < channels; ++c) p.weight(c, c, 0, 0) = 1.0;
        return p;
    }
    std::size_t in_channels() const { return weight.extent(1); }
    std::size_t out_channels() const { return weight.extent(0); }

    FeatureMap apply(const FeatureMap& x) const {
        return FeatureMap(conv2d(x.values(), weight, std::span<const double>(bias)));
    }
};

struct CabCache {
    FeatureMap reference;
    FeatureMap pooled;                 // max-pooled neighbour, input of the correlation
    FeatureMap projected;              // phi(pooled)
    std::vector<std::size_t> argmax;   // pooled -> neighbour flat index
    Shape neighbor_shape;
    Projection1x1 phi;
    DenseArray weights;                // normalised volume, R x N
    Shape output_shape;
    std::size_t pool_k = 0;

    bool valid() const { return pool_k != 0 && !output_shape.empty(); }
};

struct CabResult {
    FeatureMap aggregated;
    CabCache cache;
};

struct CabGradients {
    DenseArray d_reference;
    DenseArray d_neighbor;
    DenseArray d_phi_weight;
    std::vector<double> d_phi_bias;
};

struct CabBackwardOptions {
    // Zero the gradient through the correlation logits and through phi's
    // parameters; only the value path phi(pooled) -> f' stays live.
    bool freeze_correlation = false;
};

// Pooled neighbour is correlated against the full-resolution reference.
inline CabResult cab_forward(const FeatureMap& f_ref, const FeatureMap& f_nbr_full, const Projection1x1& phi,
                             std::size_t pool_k) {
    if (pool_k == 0) throw DimensionError("cab_forward: pool factor must be positive");
    if (f_ref.channels() != f_nbr_full.channels()) {
        throw DimensionError("cab_forward: reference and neighbour channel counts differ");
    }
    if (phi.in_channels() != f_nbr_full.channels()) {
        throw DimensionError("cab_forward: phi expects " + std::to_string(phi.in_channels()) + " channels");
    }
    auto pooled = max_pool2d_with_indices(f_nbr_full.values(), pool_k, pool_k);
    FeatureMap pooled_map(std::move(pooled.values));
    FeatureMap projected = phi.apply(pooled_map);
    const auto vol_n = normalize_volume(correlation_volume(f_ref, pooled_map));
    FeatureMap out = aggregate(vol_n, projected);

    CabCache cache;
    cache.reference = f_ref;
    cache.pooled = std::move(pooled_map);
    cache.projected = std::move(projected);
    cache.argmax = std::move(pooled.argmax);
    cache.neighbor_shape = f_nbr_full.values().shape();
    cache.phi = phi;
    cache.weights = vol_n.scaled().reshaped({vol_n.ref_positions(), vol_n.nbr_positions()});
    cache.output_shape = out.values().shape();
    cache.pool_k = pool_k;
    return {std::move(out), std::move(cache)};
}

inline CabGradients cab_backward(const CabCache& cache, const DenseArray& d_out,
                                 CabBackwardOptions options = {}) {
    if (!cache.valid()) throw ContractError("cab_backward: cache was not produced by cab_forward");
    if (d_out.shape() != cache.output_shape) {
        throw ContractError("cab_backward: cotangent " + shape_string(d_out.shape()) +
                            " does not match cached output " + shape_string(cache.output_shape));
    }
    const auto& A = cache.weights;
    const auto R = A.extent(0), N = A.extent(1);
    const auto Cv = cache.projected.channels();   // value channels
    const auto Ck = cache.pooled.channels();      // key channels
    const double* G = d_out.data();
    const double* g = cache.projected.values().data();
    const double* keys = cache.pooled.values().data();
    const double* ref = cache.reference.values().data();

    // Value path: d g[c,j] = sum_r A[r,j] G[c,r]
    DenseArray d_proj({Cv, cache.pooled.height(), cache.pooled.width()});
    for (std::size_t c = 0; c < Cv; ++c) {
        for (std::size_t r = 0; r < R; ++r) {
            const double gr = G[c * R + r];
            if (gr == 0.0) continue;
            for (std::size_t j = 0; j < N; ++j) d_proj[c * N + j] += A(r, j) * gr;
        }
    }

    DenseArray d_ref(cache.reference.values().shape());
    DenseArray d_pooled(cache.pooled.values().shape());

    if (!options.freeze_correlation) {
        // dA[r,j] = sum_c G[c,r] g[c,j]; softmax Jacobian gives the logit cotangent.
        std::vector<double> dA(N), ds(N);
        for (std::size_t r = 0; r < R; ++r) {
            std::fill(dA.begin(), dA.end(), 0.0);
            for (std::size_t c = 0; c < Cv; ++c) {
                const double gr = G[c * R + r];
                for (std::size_t j = 0; j < N; ++j) dA[j] += gr * g[c * N + j];
            }
            double dot = 0.0;
            for (std::size_t j = 0; j < N; ++j) dot += A(r, j) * dA[j];
            for (std::size_t j = 0; j < N; ++j) ds[j] = A(r, j) * (dA[j] - dot);
            for (std::size_t c = 0; c < Ck; ++c) {
                double acc = 0.0;
                const double rc = ref[c * R + r];
                for (std::size_t j = 0; j < N; ++j) {
                    acc += ds[j] * keys[c * N + j];
                    d_pooled[c * N + j] += ds[j] * rc;
                }
                d_ref[c * R + r] = acc;
            }
        }
    }

    // Through phi back to the pooled neighbour.
    const auto& W = cache.phi.weight;
    for (std::size_t ci = 0; ci < Ck; ++ci) {
        for (std::size_t co = 0; co < Cv; ++co) {
            const double w = W(co, ci, 0, 0);
            for (std::size_t j = 0; j < N; ++j) d_pooled[ci * N + j] += w * d_proj[co * N + j];
        }
    }

    DenseArray d_w(W.shape());
    std::vector<double> d_b(Cv, 0.0);
    if (!options.freeze_correlation) {
        for (std::size_t co = 0; co < Cv; ++co) {
            for (std::size_t j = 0; j < N; ++j) d_b[co] += d_proj[co * N + j];
            for (std::size_t ci = 0; ci < Ck; ++ci) {
                double acc = 0.0;
                for (std::size_t j = 0; j < N; ++j) acc += d_proj[co * N + j] * keys[ci * N + j];
                d_w(co, ci, 0, 0) = acc;
            }
        }
    }

    DenseArray d_nbr(cache.neighbor_shape);
    for (std::size_t i = 0; i < d_pooled.size(); ++i) d_nbr[cache.argmax[i]] += d_pooled[i];

    return {std::move(d_ref), std::move(d_nbr), std::move(d_w), std::move(d_b)};
}

// ---------------------------------------------------------------------------
// Pyramid over encoder scales i = 2, 3, 4 (extents H / 2^(i+1)).

inline constexpr std::array<int, 3> kPyramidLevels{2, 3, 4};

inline std::size_t level_divisor(int level) { return std::size_t{1} << (level + 1); }

// Pool factor per pyramid level, finest first. The default pairs the largest
// window with the finest level.
struct PoolSchedule {
    std::array<std::size_t, 3> factors{8, 4, 2};

    // Shrinks a factor until the pooled grid keeps at least two cells per
    // axis (or one, when the map itself is a single cell).
    static std::size_t effective(std::size_t k, std::size_t height, std::size_t width) {
        const std::size_t extent = std::min(height, width);
        const std::size_t cap = std::max<std::size_t>(1, extent / 2);
        return std::max<std::size_t>(1, std::min(k, cap));
    }
};

struct PyramidLevel {
    int level = 0;
    std::size_t pool_k = 0;
    CabResult next;                   // t <- t+1
    std::optional<CabResult> second;  // t <- t+2
};

struct CorrelationPyramid {
    std::size_t height = 0, width = 0;  // declared input extents
    std::array<PyramidLevel, 3> levels;
};

struct PyramidFeatures {
    std::array<FeatureMap, 3> reference;
    std::array<FeatureMap, 3> neighbor;
    std::optional<std::array<FeatureMap, 3>> second_neighbor;
};

inline void check_pyramid_extents(std::size_t height, std::size_t width) {
    if (height == 0 || width == 0 || height % 32 != 0 || width % 32 != 0) {
        throw DimensionError("pyramid input " + std::to_string(height) + "x" + std::to_string(width) +
                             " is not divisible by 32");
    }
}

inline CorrelationPyramid build_pyramid(std::size_t height, std::size_t width, const PyramidFeatures& features,
                                        const std::array<Projection1x1, 3>& phis, const PoolSchedule& schedule = {}) {
    check_pyramid_extents(height, width);
    CorrelationPyramid pyramid;
    pyramid.height = height;
    pyramid.width = width;
    for (std::size_t s = 0; s < 3; ++s) {
        const int level = kPyramidLevels[s];
        const auto h = height / level_divisor(level), w = width / level_divisor(level);
        auto check = [&](const FeatureMap& f, const char* what) {
            if (f.height() != h || f.width() != w) {
                throw DimensionError(std::string("build_pyramid: ") + what + " features at level " +
                                     std::to_string(level) + " are " + shape_string(f.values().shape()) +
                                     ", expected spatial " + std::to_string(h) + "x" + std::to_string(w));
            }
        };
        check(features.reference[s], "reference");
        check(features.neighbor[s], "neighbour");
        if (features.second_neighbor) check((*features.second_neighbor)[s], "second neighbour");

        auto& out = pyramid.levels[s];
        out.level = level;
        out.pool_k = PoolSchedule::effective(schedule.factors[s], h, w);
        out.next = cab_forward(features.reference[s], features.neighbor[s], phis[s], out.pool_k);
        if (features.second_neighbor) {
            out.second = cab_forward(features.reference[s], (*features.second_neighbor)[s], phis[s], out.pool_k);
        }
    }
    return pyramid;
}

}  // namespace vcod
