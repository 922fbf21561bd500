#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "ghostseg/pointseg.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace ghostseg;

namespace {

Mat rows(std::initializer_list<std::initializer_list<double>> r) {
    Mat m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& row : r) {
        Eigen::Index j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

Dense identity(std::size_t n) { return {Mat::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)), Vec::Zero(static_cast<Eigen::Index>(n))}; }

double sample_loss(const Sample& s, std::span<const int> labels, const NetworkParams& p, const ClassWeights& w) {
    Rng rng(0);
    return weighted_ce_loss(forward(s, p, Mode::Eval, rng).probabilities, labels, w).loss;
}

}  // namespace

TEST_CASE("farthest point sampling picks the extremes of collinear points") {
    const Mat p = rows({{0, 0}, {5, 0}, {10, 0}});
    CHECK(farthest_point_sampling(p, 2, 0) == std::vector<std::size_t>{0, 2});
    CHECK(farthest_point_sampling(p, 3, 0) == std::vector<std::size_t>{0, 2, 1});
}

TEST_CASE("farthest point sampling with k equal to N returns every index") {
    const auto s = testing::random_sample(20, 1, 3);
    const Mat p = Eigen::Map<const Mat>(s.positions.data(), 20, 2);
    auto idx = farthest_point_sampling(p, 20, 7);
    std::sort(idx.begin(), idx.end());
    std::vector<std::size_t> all(20);
    std::iota(all.begin(), all.end(), 0);
    CHECK(idx == all);
}

TEST_CASE("farthest point sampling over identical points breaks ties by index") {
    const Mat p = rows({{1, 1}, {1, 1}, {1, 1}, {1, 1}});
    CHECK(farthest_point_sampling(p, 2, 0) == std::vector<std::size_t>{0, 1});
    CHECK_THROWS_AS(farthest_point_sampling(p, 5, 0), std::invalid_argument);
    CHECK_THROWS_AS(farthest_point_sampling(p, 0, 0), std::invalid_argument);
}

TEST_CASE("farthest point sampling matches a from-scratch greedy recount") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng() % 64;
        const auto s = testing::random_sample(n, 1, rng());
        const Mat p = Eigen::Map<const Mat>(s.positions.data(), static_cast<Eigen::Index>(n), 2);
        const std::size_t k = 1 + rng() % n;
        const std::size_t start = rng() % n;
        REQUIRE(farthest_point_sampling(p, k, start) == oracle::fps_greedy(p, k, start));
    }
}

TEST_CASE("ball query") {
    SUBCASE("a center on a point contains it") {
        const Mat p = rows({{0, 0}, {3, 3}});
        const auto g = ball_query(p, rows({{3, 3}}), 1e-6, 4);
        CHECK(g[0] == std::vector<std::size_t>{1});
    }
    SUBCASE("empty neighbourhoods fall back to the nearest point") {
        const Mat p = rows({{2, 0}, {5, 0}});
        const auto g = ball_query(p, rows({{0, 0}}), 0.5, 4);
        CHECK(g[0] == std::vector<std::size_t>{0});
    }
    SUBCASE("max_samples keeps the nearest members") {
        const Mat p = rows({{0.4, 0}, {0.1, 0}, {0.3, 0}, {0.05, 0}, {0.2, 0}, {3, 0}});
        const auto g = ball_query(p, rows({{0, 0}}), 0.5, 3);
        CHECK(g[0] == std::vector<std::size_t>{3, 1, 4});
    }
}

TEST_CASE("mini pointnet max-pools the shared MLP") {
    const Dense id = identity(2);
    const Dense* layers[] = {&id};
    const Mat g = rows({{1, 2}, {3, 0}});
    const Vec out = mini_pointnet(g, layers);
    CHECK(out(0) == 3.0);
    CHECK(out(1) == 2.0);
    const Mat swapped = rows({{3, 0}, {1, 2}});
    CHECK(mini_pointnet(swapped, layers) == out);
    const Vec single = mini_pointnet(rows({{4, 5}}), layers);
    CHECK(single(0) == 4.0);
    CHECK(single(1) == 5.0);
    const Dense wrong = identity(3);
    const Dense* bad[] = {&wrong};
    CHECK_THROWS_AS(mini_pointnet(g, bad), std::invalid_argument);
}

TEST_CASE("set abstraction concatenates one block per radius") {
    const auto s = testing::random_sample(40, 3, 5);
    const Mat pos = Eigen::Map<const Mat>(s.positions.data(), 40, 2);
    const Mat feat = Eigen::Map<const Mat>(s.features.data(), 40, 3);
    MsgLevelConfig level{8, {1.0, 2.0}, {4, 6}, {{5}, {7}}};
    Rng rng(1);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    Dense a{Mat::NullaryExpr(5, 5, [&] { return u(rng); }), Vec::Zero(5)};
    Dense b{Mat::NullaryExpr(7, 5, [&] { return u(rng); }), Vec::Zero(7)};
    const std::vector<std::vector<const Dense*>> layers{{&a}, {&b}};
    const auto out = set_abstraction_msg(pos, feat, level, layers, 0, nullptr);
    CHECK(out.features.rows() == 8);
    CHECK(out.features.cols() == 12);
    const auto again = set_abstraction_msg(pos, feat, level, layers, 0, nullptr);
    CHECK(again.features == out.features);
    MsgLevelConfig too_many{41, {1.0}, {4}, {{5}}};
    CHECK_THROWS_AS(set_abstraction_msg(pos, feat, too_many, {{&a}}, 0, nullptr), std::invalid_argument);
}

TEST_CASE("set abstraction with an identity MLP pools recentered neighbourhoods") {
    const Mat pos = rows({{0, 0}, {1, 0}, {0, 2}});
    const Mat feat = rows({{0.5}, {0.25}, {4}});
    MsgLevelConfig level{1, {1.5}, {3}, {{3}}};
    const Dense id = identity(3);
    const auto out = set_abstraction_msg(pos, feat, level, {{&id}}, 0, nullptr);
    // Members of center 0 within 1.5 m: points 0 and 1.
    CHECK(out.features(0, 0) == 1.0);
    CHECK(out.features(0, 1) == 0.0);
    CHECK(out.features(0, 2) == 0.5);
}

TEST_CASE("feature propagation interpolation") {
    SUBCASE("a coincident fine point takes the coarse feature") {
        const Mat coarse = rows({{0, 0}, {1, 0}, {0, 1}});
        const Mat f = rows({{2.0, -1.0}, {5.0, 3.0}, {7.0, 8.0}});
        const Mat out = interpolate_features(coarse, f, rows({{1, 0}}), 3, nullptr);
        CHECK(out(0, 0) == doctest::Approx(5.0).epsilon(1e-9));
        CHECK(out(0, 1) == doctest::Approx(3.0).epsilon(1e-9));
    }
    SUBCASE("two equidistant coarse points average") {
        const Mat coarse = rows({{-1, 0}, {1, 0}});
        const Mat f = rows({{2.0}, {6.0}});
        const Mat out = interpolate_features(coarse, f, rows({{0, 3}}), 3, nullptr);
        CHECK(out(0, 0) == doctest::Approx(4.0));
    }
    SUBCASE("a single coarse point is copied verbatim") {
        const Mat coarse = rows({{3, 4}});
        const Mat f = rows({{0.125, -9.5}});
        const Mat out = interpolate_features(coarse, f, rows({{0, 0}, {10, -2}}), 3, nullptr);
        CHECK(out.row(0) == f.row(0));
        CHECK(out.row(1) == f.row(0));
    }
    SUBCASE("skip features are appended before the MLP") {
        const Mat coarse = rows({{3, 4}});
        const Mat f = rows({{1.0}});
        const Mat out = feature_propagation(coarse, f, rows({{0, 0}}), rows({{2.0}}), {}, nullptr);
        CHECK(out.cols() == 2);
        CHECK(out(0, 1) == 2.0);
    }
}

TEST_CASE("forward pass shapes and eval determinism") {
    const auto cfg = NetworkConfig::tiny(3, 4);
    NetworkParams p(cfg);
    p.init_uniform(9);
    const auto s = testing::random_sample(32, 4, 2);
    Rng r1(1), r2(2);
    const auto a = forward(s, p, Mode::Eval, r1);
    const auto b = forward(s, p, Mode::Eval, r2);
    CHECK(a.probabilities.rows() == 32);
    CHECK(a.probabilities.cols() == 3);
    CHECK(a.probabilities == b.probabilities);
    for (Eigen::Index i = 0; i < 32; ++i) {
        CHECK(std::abs(a.probabilities.row(i).sum() - 1.0) < 1e-6);
        CHECK(a.probabilities.row(i).minCoeff() >= 0.0);
        CHECK(a.probabilities.row(i).maxCoeff() <= 1.0);
    }
}

TEST_CASE("all-zero parameters give uniform probabilities") {
    NetworkParams p(NetworkConfig::tiny(4, 4));
    const auto s = testing::random_sample(32, 4, 4);
    Rng rng(0);
    const auto st = forward(s, p, Mode::Eval, rng);
    for (Eigen::Index i = 0; i < st.probabilities.size(); ++i) CHECK(st.probabilities.data()[i] == doctest::Approx(0.25));
}

TEST_CASE("non-finite inputs are reported with the layer name") {
    NetworkParams p(NetworkConfig::tiny(3, 4));
    p.init_uniform(1);
    auto s = testing::random_sample(32, 4, 4);
    s.features[5] = NAN;
    Rng rng(0);
    try {
        forward(s, p, Mode::Eval, rng);
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("sa0") != std::string::npos);
    }
}

TEST_CASE("weighted cross entropy") {
    SUBCASE("certain prediction has zero loss") {
        const Mat p = rows({{0, 1, 0}});
        const int l[] = {1};
        CHECK(weighted_ce_loss(p, l, ClassWeights::uniform(3)).loss == 0.0);
    }
    SUBCASE("weight 1/(c s) rescales the cross entropy") {
        const double q = std::exp(-0.6);
        const Mat p = rows({{q, (1 - q) / 2, (1 - q) / 2}});
        const int l[] = {0};
        const double s[] = {0.2, 0.4, 0.4};
        CHECK(weighted_ce_loss(p, l, ClassWeights::from_proportions(s)).loss == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("uniform proportions leave the plain cross entropy") {
        const double s[] = {0.25, 0.25, 0.25, 0.25};
        const auto w = ClassWeights::from_proportions(s);
        for (double v : w.w) CHECK(v == doctest::Approx(1.0));
        const Mat p = rows({{0.1, 0.2, 0.3, 0.4}, {0.25, 0.25, 0.25, 0.25}});
        const int l[] = {3, 1};
        CHECK(weighted_ce_loss(p, l, w).loss == doctest::Approx(-(std::log(0.4) + std::log(0.25)) / 2));
    }
    SUBCASE("zero proportion is rejected") {
        const double s[] = {1.0, 0.0};
        CHECK_THROWS_AS(ClassWeights::from_proportions(s), std::invalid_argument);
    }
}

TEST_CASE("analytic gradient agrees with central differences") {
    auto cfg = NetworkConfig::tiny(3, 4);
    cfg.dropout = 0.0;
    NetworkParams p(cfg);
    p.init_uniform(21);
    const auto s = testing::random_sample(32, 4, 8, 3.0);
    std::vector<int> labels;
    for (Label l : s.labels) labels.push_back(static_cast<int>(l) % 3);
    const double props[] = {0.5, 0.3, 0.2};
    const auto w = ClassWeights::from_proportions(props);
    NetworkParams grads(cfg);
    Rng rng(0);
    loss_and_gradient(s, labels, p, w, Mode::Eval, rng, grads);

    std::mt19937_64 pick(5);
    const double eps = 1e-5;
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
        const std::size_t idx = pick() % p.size();
        const double orig = p.at(idx);
        p.at(idx) = orig + eps;
        const double up = sample_loss(s, labels, p, w);
        p.at(idx) = orig - eps;
        const double down = sample_loss(s, labels, p, w);
        p.at(idx) = orig;
        const double numeric = (up - down) / (2 * eps);
        const double analytic = grads.at(idx);
        const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-7});
        INFO("param ", idx, " in ", p.owner(idx), ": analytic ", analytic, " numeric ", numeric);
        CHECK(rel < 1e-4);
        worst = std::max(worst, rel);
    }
    MESSAGE("worst relative error ", worst);
}

TEST_CASE("saturated correct predictions have a vanishing gradient") {
    auto cfg = NetworkConfig::tiny(2, 4);
    cfg.dropout = 0.0;
    NetworkParams p(cfg);
    p.init_uniform(3);
    auto& last = p.layer(p.fc_layer(2));
    last.weight.setZero();
    last.bias << 40.0, -40.0;
    const auto s = testing::random_sample(32, 4, 1);
    const std::vector<int> labels(32, 0);
    NetworkParams g(cfg);
    Rng rng(0);
    loss_and_gradient(s, labels, p, ClassWeights::uniform(2), Mode::Eval, rng, g);
    double norm = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) norm += g.at(i) * g.at(i);
    CHECK(std::sqrt(norm) < 1e-6);
}

TEST_CASE("doubling a class weight doubles its gradient contribution") {
    auto cfg = NetworkConfig::tiny(2, 4);
    cfg.dropout = 0.0;
    NetworkParams p(cfg);
    p.init_uniform(17);
    const auto s = testing::random_sample(32, 4, 6);
    const std::vector<int> labels(32, 1);
    NetworkParams g1(cfg), g2(cfg);
    Rng rng(0);
    loss_and_gradient(s, labels, p, {{1.0, 1.5}}, Mode::Eval, rng, g1);
    loss_and_gradient(s, labels, p, {{1.0, 3.0}}, Mode::Eval, rng, g2);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2.at(i) == doctest::Approx(2.0 * g1.at(i)).epsilon(1e-9));
}

TEST_CASE("eval output is equivariant under point permutation") {
    NetworkParams p(NetworkConfig::tiny(3, 4));
    p.init_uniform(4);
    const auto s = testing::random_sample(32, 4, 12);
    std::vector<std::size_t> perm(32);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(2);
    std::shuffle(perm.begin(), perm.end(), rng);
    Sample t = s;
    for (std::size_t i = 0; i < 32; ++i) {
        const auto j = perm[i];
        t.positions[2 * i] = s.positions[2 * j];
        t.positions[2 * i + 1] = s.positions[2 * j + 1];
        for (std::size_t k = 0; k < 4; ++k) t.features[i * 4 + k] = s.features[j * 4 + k];
        t.amplitude[i] = s.amplitude[j];
    }
    Rng r(0);
    const auto a = forward(s, p, Mode::Eval, r).probabilities;
    const auto b = forward(t, p, Mode::Eval, r).probabilities;
    for (std::size_t i = 0; i < 32; ++i)
        for (Eigen::Index c = 0; c < 3; ++c)
            CHECK(b(static_cast<Eigen::Index>(i), c) == doctest::Approx(a(static_cast<Eigen::Index>(perm[i]), c)).epsilon(1e-12));
}

TEST_CASE("dropout zeroes units at the configured rate") {
    Rng rng(99);
    const double rate = 0.5;
    const Mat m = dropout_mask(1000, 100, rate, rng);
    const double zeros = static_cast<double>((m.array() == 0.0).count());
    const double n = 1e5;
    const double sigma = std::sqrt(n * rate * (1 - rate));
    CHECK(std::abs(zeros - n * rate) < 3 * sigma);
    CHECK(((m.array() == 0.0) || (m.array() == 2.0)).all());
}

TEST_CASE("train mode with dropout differs from eval mode") {
    NetworkParams p(NetworkConfig::tiny(3, 4));
    p.init_uniform(4);
    const auto s = testing::random_sample(32, 4, 12);
    Rng r(1);
    const auto a = forward(s, p, Mode::Eval, r).probabilities;
    const auto b = forward(s, p, Mode::Train, r).probabilities;
    CHECK(a != b);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    NetworkParams p(NetworkConfig::tiny(5, 3));
    p.init_uniform(77);
    p.at(3) = -0.0;
    p.at(4) = 1e-310;
    std::stringstream ss;
    write_checkpoint(ss, p, 1234, {{"note", "x"}});
    const auto ck = read_checkpoint(ss);
    CHECK(ck.params == p);
    CHECK(ck.seed == 1234);
    CHECK(ck.extra.at("note") == "x");
    CHECK(std::signbit(ck.params.at(3)));

    std::stringstream broken("not a checkpoint\n");
    CHECK_THROWS(read_checkpoint(broken));
}

TEST_CASE("network config validation") {
    auto c = NetworkConfig::standard(3, 4);
    CHECK_NOTHROW(c.validate());
    CHECK(network_config_from_json(to_json(c)) == c);
    c.num_classes = 1;
    c.fc[2] = 1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    auto d = NetworkConfig::standard(3, 4);
    d.msg[0].radii = {1.0, 0.5};
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
    auto e = NetworkConfig::standard(3, 4);
    e.msg[1].mlp_widths[0].clear();
    CHECK_THROWS_AS(e.validate(), std::invalid_argument);
}

TEST_CASE("parameter layout follows the layer paths") {
    NetworkParams p(NetworkConfig::standard(3, 4));
    CHECK(p.layer_name(0) == "sa0.r0.mlp0");
    CHECK(p.layer(0).weight.cols() == 6);
    CHECK(p.layer(p.fp_layer(0, 0)).weight.cols() == 256 + 128);
    CHECK(p.layer(p.fp_layer(2, 0)).weight.cols() == 32 + 4);
    CHECK(p.layer(p.fc_layer(2)).weight.rows() == 3);
    std::size_t total = 0;
    for (std::size_t i = 0; i < p.layer_count(); ++i) total += p.layer(i).weight.size() + p.layer(i).bias.size();
    CHECK(p.size() == total);
    CHECK(p.owner(p.size() - 1) == "fc2");
}
