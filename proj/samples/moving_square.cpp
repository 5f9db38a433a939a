// Builds one synthetic clip, runs an untrained short-term model on the first
// triplet, refines the clip with the long-term module and prints the metrics.

#include <cstdio>

#include "vcod/vcod.hpp"

using namespace vcod;

int main() {
    const auto clip = toynet::make_moving_square({}, 7);
    const auto model = toynet::ShortTermModel::random(7);

    const auto pred = toynet::short_forward(model, clip.frames[0], clip.frames[1], clip.frames[2]);
    const auto m = evaluate_frame(FramePair(pred, clip.masks[0]));
    std::printf("short-term  S=%.3f Fw=%.3f E=%.3f M=%.3f\n", m.s_alpha, m.f_beta_w, m.e_phi_mean, m.mae);

    const auto refined = toynet::refine_sequence(model, toynet::LongTermModel::random(7), clip.frames);
    const auto r = evaluate_frame(FramePair(refined.maps[0], clip.masks[0]));
    std::printf("long-term   S=%.3f Fw=%.3f E=%.3f M=%.3f (K clipped: %s)\n", r.s_alpha, r.f_beta_w, r.e_phi_mean,
                r.mae, refined.k_clipped ? "yes" : "no");

    // correlation weights for the centre pixel at the finest pyramid scale
    const auto ref = toynet::encode(model, clip.frames[0]).features[0];
    const auto nbr = toynet::encode(model, clip.frames[1]).features[0];
    const auto vol = normalize_volume(correlation_volume(ref, nbr));
    const auto cy = vol.ref_height() / 2, cx = vol.ref_width() / 2;
    double total = 0;
    for (std::size_t u = 0; u < vol.nbr_height(); ++u)
        for (std::size_t v = 0; v < vol.nbr_width(); ++v) total += vol.entry(cy, cx, u, v);
    std::printf("correlation slice at (%zu,%zu) sums to %.12f\n", cy, cx, total);
}
