#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "instancegen/guidance.hpp"

#include "oracles.hpp"

#include <cmath>

using namespace instancegen;
using namespace instancegen::guide;

namespace {

GuidanceWeights defaults() { return GuidanceWeights{}; }

GridD random_map(Rng& rng, int rows, int cols, double lo = 0.05, double hi = 0.95) {
    GridD g(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) g(r, c) = rng.next_range(lo, hi);
    return g;
}

MaskGrid random_mask(Rng& rng, int rows, int cols, double density = 0.4) {
    MaskGrid m = make_mask(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            if (rng.next_unit() < density) m(r, c) = 1;
    return m;
}

}  // namespace

TEST_CASE("guidance weight defaults match the published values") {
    GuidanceWeights w;
    CHECK(w.foreground_pixel_weight == 1.5);
    CHECK(w.attr_weight == 0.8);
    CHECK(w.bg_weight == 0.3);
    CHECK(w.suppression_delta == -1.5);
    OptimizationSchedule s;
    CHECK(s.learning_rate == 0.015);
    CHECK(s.optimize_window == IndexRange{0, 20});
    CHECK(s.extra_iterations.at(0) == 15);
    CHECK(s.extra_iterations.at(5) == 15);
    CHECK(s.extra_iterations.at(10) == 5);
    CHECK(s.self_mask_timesteps == IndexRange{0, 3});
    CHECK(s.self_mask_layers == IndexRange{10, 21});
    CHECK(s.cross_mask_timesteps == IndexRange{0, 22});
    CHECK(s.cross_mask_layers == IndexRange{0, 21});
}

TEST_CASE("object loss worked examples") {
    GuidanceWeights w = defaults();

    // 2x2, one foreground pixel at 0.9, three background pixels at 0.1:
    // -(1.5 ln 0.9 + 3 ln 0.9) = 4.5 * 0.10536052 = 0.47412232
    GridD c1(2, 2);
    c1 << 0.9, 0.1, 0.1, 0.1;
    MaskGrid m1 = make_mask(2, 2);
    m1(0, 0) = 1;
    CHECK(object_loss(c1, m1, w) == doctest::Approx(0.4741223204602184).epsilon(1e-4));

    // 2x2, two foreground pixels, uniform 0.5: (1.5*2 + 2) ln 2 = 3.46574
    GridD c2 = GridD::Constant(2, 2, 0.5);
    MaskGrid m2 = make_mask(2, 2);
    m2(0, 0) = m2(0, 1) = 1;
    CHECK(object_loss(c2, m2, w) == doctest::Approx(3.4657359027997265).epsilon(1e-4));

    // map equal to its mask (after clamping) is essentially free
    GridD c3(2, 2);
    c3 << 1.0, 0.0, 0.0, 0.0;
    CHECK(object_loss(c3, m1, w) <= 4.5 * -std::log(1.0 - w.clamp_epsilon) + 1e-12);
}

TEST_CASE("attribute loss worked examples") {
    GuidanceWeights w = defaults();
    GridD c = GridD::Constant(2, 2, 0.5);

    MaskGrid empty = make_mask(2, 2);
    CHECK(attribute_loss(c, empty, w) == 0.0);

    MaskGrid one = make_mask(2, 2);
    one(1, 1) = 1;
    CHECK(attribute_loss(c, one, w) == doctest::Approx(std::log(2.0)).epsilon(1e-4));

    GridD high = GridD::Constant(2, 2, 1.0 - w.clamp_epsilon);
    CHECK(attribute_loss(high, one, w) == doctest::Approx(0.0).epsilon(1e-5));
}

TEST_CASE("background loss worked examples") {
    Latent ref, live;
    ref.channels.push_back(GridD::Zero(2, 2));
    live.channels.push_back(GridD::Zero(2, 2));
    MaskGrid bg = MaskGrid::Constant(2, 2, 1);

    CHECK(background_loss(ref, live, bg) == 0.0);

    live.channels[0](0, 1) = 1.0;  // one of four background pixels differs by 1
    CHECK(background_loss(ref, live, bg) == doctest::Approx(0.25));

    MaskGrid none = make_mask(2, 2);
    CHECK(background_loss(ref, live, none) == 0.0);
}

TEST_CASE("total loss combines with the published weights") {
    GuidanceWeights w = defaults();
    CHECK(total_loss({1.0}, {1.0}, 1.0, w) == doctest::Approx(2.1));
    CHECK(total_loss({}, {}, 0.0, w) == 0.0);
    CHECK(total_loss({0.5, 0.7}, {}, 0.0, w) == doctest::Approx(1.2));
}

TEST_CASE("losses match the brute-force reference on random instances") {
    GuidanceWeights w = defaults();
    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        GridD map = random_map(rng, 8, 8, 0.001, 0.999);
        MaskGrid mask = random_mask(rng, 8, 8);
        double obj = object_loss(map, mask, w);
        double obj_ref = oracle::object_loss_brute(map, mask, w.foreground_pixel_weight, w.clamp_epsilon);
        CHECK(std::abs(obj - obj_ref) <= 1e-10 * std::max(1.0, std::abs(obj_ref)));
        double att = attribute_loss(map, mask, w);
        double att_ref = oracle::attribute_loss_brute(map, mask, w.clamp_epsilon);
        CHECK(std::abs(att - att_ref) <= 1e-10 * std::max(1.0, std::abs(att_ref)));
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    GuidanceWeights w = defaults();
    const double h = 1e-5, tol = 1e-4;
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        GridD map = random_map(rng, 8, 8);
        MaskGrid mask = random_mask(rng, 8, 8);

        GridD g_obj = object_loss_grad(map, mask, w);
        GridD fd_obj = oracle::central_differences(
            [&](const GridD& x) { return object_loss(x, mask, w); }, map, h);
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c)
                CHECK(std::abs(g_obj(r, c) - fd_obj(r, c)) <=
                      tol * std::max(1.0, std::abs(fd_obj(r, c))));

        GridD g_att = attribute_loss_grad(map, mask, w);
        GridD fd_att = oracle::central_differences(
            [&](const GridD& x) { return attribute_loss(x, mask, w); }, map, h);
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c)
                CHECK(std::abs(g_att(r, c) - fd_att(r, c)) <=
                      tol * std::max(1.0, std::abs(fd_att(r, c))));

        // background loss gradient w.r.t. the live latent (2 channels)
        Latent ref, live;
        ref.channels = {random_map(rng, 8, 8, -1, 1), random_map(rng, 8, 8, -1, 1)};
        live.channels = {random_map(rng, 8, 8, -1, 1), random_map(rng, 8, 8, -1, 1)};
        MaskGrid bg = random_mask(rng, 8, 8, 0.5);
        Latent g_bg = background_loss_grad(ref, live, bg);
        for (int ch = 0; ch < 2; ++ch) {
            GridD fd_bg = oracle::central_differences(
                [&](const GridD& x) {
                    Latent probe = live;
                    probe.channels[std::size_t(ch)] = x;
                    return background_loss(ref, probe, bg);
                },
                live.channels[std::size_t(ch)], h);
            for (int r = 0; r < 8; ++r)
                for (int c = 0; c < 8; ++c)
                    CHECK(std::abs(g_bg.channels[std::size_t(ch)](r, c) - fd_bg(r, c)) <=
                          tol * std::max(1.0, std::abs(fd_bg(r, c))));
        }
    }
}

TEST_CASE("losses are non-negative and zero only at perfect attention") {
    GuidanceWeights w = defaults();
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        GridD map = random_map(rng, 6, 6, 0.001, 0.999);
        MaskGrid mask = random_mask(rng, 6, 6);
        CHECK(object_loss(map, mask, w) >= 0.0);
        CHECK(attribute_loss(map, mask, w) >= 0.0);
    }
    // perfect attention: 1 on the mask, 0 off it
    MaskGrid mask = make_mask(6, 6);
    mask.block(1, 1, 2, 3).setConstant(1);
    GridD perfect(6, 6);
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) perfect(r, c) = mask(r, c) ? 1.0 : 0.0;
    double floor = -std::log(1.0 - w.clamp_epsilon) * 6 * 6 * w.foreground_pixel_weight;
    CHECK(object_loss(perfect, mask, w) <= floor);
    CHECK(attribute_loss(perfect, mask, w) <= floor);
}

TEST_CASE("cross attention transform multiplies suppressed scores by delta") {
    GridD scores = GridD::Constant(2, 2, 0.4);
    MaskGrid suppress = make_mask(2, 2);
    suppress(0, 0) = 1;

    GridD out = scores;
    cross_attention_transform(out, suppress, -1.5);
    CHECK(out(0, 0) == doctest::Approx(-0.6));
    CHECK(out(0, 1) == 0.4);

    GridD identity = scores;
    cross_attention_transform(identity, make_mask(2, 2), -1.5);
    CHECK((identity == scores).all());

    GridD delta_one = scores;
    cross_attention_transform(delta_one, MaskGrid::Constant(2, 2, 1), 1.0);
    CHECK((delta_one == scores).all());
}

TEST_CASE("self attention transform zeroes fg-bg pairs and is idempotent") {
    // 2x1 partition: pixel 0 foreground, pixel 1 background
    MaskGrid fg = make_mask(2, 1);
    fg(0, 0) = 1;
    GridD s(2, 2);
    s << 0.5, 0.7, 0.7, 0.9;
    GridD out = s;
    self_attention_transform(out, fg);
    CHECK(out(0, 0) == 0.5);
    CHECK(out(0, 1) == 0.0);
    CHECK(out(1, 0) == 0.0);
    CHECK(out(1, 1) == 0.9);

    GridD again = out;
    self_attention_transform(again, fg);
    CHECK((again == out).all());

    // all-foreground partition: identity
    GridD full = s;
    self_attention_transform(full, MaskGrid::Constant(2, 1, 1));
    CHECK((full == s).all());
}

TEST_CASE("scaling attention maps never changes which pixels are suppressed") {
    Rng rng(9);
    GridD scores = random_map(rng, 5, 5);
    MaskGrid suppress = random_mask(rng, 5, 5);
    for (double scale : {0.1, 3.0, 42.0}) {
        GridD a = scores, b = scale * scores;
        cross_attention_transform(a, suppress, -1.5);
        cross_attention_transform(b, suppress, -1.5);
        for (int r = 0; r < 5; ++r)
            for (int c = 0; c < 5; ++c) {
                bool changed_a = a(r, c) != scores(r, c);
                bool changed_b = b(r, c) != scale * scores(r, c);
                CHECK(changed_a == changed_b);
            }
    }
}

TEST_CASE("schedule iteration counts follow window, base and extras") {
    OptimizationSchedule s;
    int total = 0;
    for (int t = 0; t < 26; ++t) total += s.iterations_at(t);
    CHECK(total == 56);  // 21 base + 15 + 15 + 5
    CHECK(s.iterations_at(0) == 16);
    CHECK(s.iterations_at(5) == 16);
    CHECK(s.iterations_at(10) == 6);
    CHECK(s.iterations_at(20) == 1);
    CHECK(s.iterations_at(21) == 0);
    CHECK(s.iterations_at(25) == 0);
}

TEST_CASE("loss gradients reject shape mismatches") {
    GuidanceWeights w = defaults();
    CHECK_THROWS_AS(object_loss(GridD::Zero(2, 2), make_mask(3, 3), w), ValidationError);
    Latent a, b;
    a.channels = {GridD::Zero(2, 2)};
    b.channels = {GridD::Zero(3, 3)};
    CHECK_THROWS_AS(background_loss(a, b, make_mask(2, 2)), ValidationError);
}
