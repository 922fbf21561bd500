#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ghostseg/trainer.hpp"
#include "support.hpp"

using namespace ghostseg;

namespace {

/// Spatially coherent setup-3 labels: left band obj, right band ghost, middle background.
Sample banded_sample(std::uint64_t seed, std::size_t n = 32) {
    Sample s = testing::random_sample(n, 4, seed);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = s.positions[2 * i];
        s.features[i * 4] = x / 6.0;
        s.labels[i] = x < -2.0 ? Label::Pedestrian : x > 2.0 ? Label::GhostPedestrian : Label::Background;
    }
    return s;
}

std::vector<Sample> banded_set(std::size_t count, std::uint64_t seed0) {
    std::vector<Sample> out;
    for (std::size_t k = 0; k < count; ++k) {
        out.push_back(banded_sample(seed0 + k));
        out.back().recording_id = "rec" + std::to_string(k % 3);
    }
    return out;
}

TrainConfig tiny_config(int epochs) {
    TrainConfig c;
    c.setup = 3;
    c.epochs = epochs;
    c.batch_size = 2;
    c.network = NetworkConfig::tiny(3);
    c.network.dropout = 0.0;
    c.seed = 17;
    return c;
}

}  // namespace

TEST_CASE("proportions from counts") {
    const std::vector<std::uint64_t> counts{900, 100};
    const auto p = compute_proportions(counts, setup_by_id(1));
    CHECK(p.s[0] == doctest::Approx(0.9));
    CHECK(p.s[1] == doctest::Approx(0.1));
    CHECK(p.s[0] + p.s[1] == doctest::Approx(1.0));
    CHECK(p.counts == counts);
}

TEST_CASE("a class without training points is an error naming it") {
    const std::vector<std::uint64_t> counts{900, 30, 0};
    try {
        compute_proportions(counts, setup_by_id(3));
        FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("ghost-obj") != std::string::npos);
    }
}

TEST_CASE("proportions from samples count remapped labels") {
    const auto samples = banded_set(3, 100);
    std::uint64_t obj = 0, ghost = 0, bg = 0;
    for (const auto& s : samples)
        for (Label l : s.labels) {
            obj += l == Label::Pedestrian;
            ghost += l == Label::GhostPedestrian;
            bg += l == Label::Background;
        }
    const auto p = compute_proportions(samples, setup_by_id(3));
    const auto& cls = setup_by_id(3).classes;
    for (std::size_t c = 0; c < cls.size(); ++c) {
        const std::string name(train_class_name(cls[c]));
        const std::uint64_t expect = name == "obj" ? obj : name == "ghost-obj" ? ghost : bg;
        CHECK(p.counts[c] == expect);
    }
}

TEST_CASE("validation split holds out a tenth") {
    const auto s = split_train_val(100, 0.1, 3);
    CHECK(s.train.size() == 90);
    CHECK(s.val.size() == 10);
    CHECK(split_train_val(100, 0.1, 3).val == s.val);
    CHECK(split_train_val(100, 0.1, 4).val != s.val);
    CHECK_THROWS_AS(split_train_val(1, 0.1, 3), std::invalid_argument);
    CHECK_THROWS_AS(split_train_val(10, 1.0, 3), std::invalid_argument);
}

TEST_CASE("validation split is a partition") {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<std::size_t> un(2, 400);
    std::uniform_real_distribution<double> uf(0.01, 0.99);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = un(rng);
        const auto s = split_train_val(n, uf(rng), rng());
        REQUIRE(!s.train.empty());
        REQUIRE(!s.val.empty());
        std::set<std::size_t> all(s.train.begin(), s.train.end());
        all.insert(s.val.begin(), s.val.end());
        REQUIRE(all.size() == n);
        REQUIRE(s.train.size() + s.val.size() == n);
        REQUIRE(*all.rbegin() == n - 1);
    }
}

TEST_CASE("recording-level split keeps each recording on one side") {
    const auto samples = banded_set(12, 5);
    const auto s = split_train_val_by_recording(samples, 0.34, 2);
    std::set<std::string> train_ids, val_ids;
    for (auto i : s.train) train_ids.insert(samples[i].recording_id);
    for (auto i : s.val) val_ids.insert(samples[i].recording_id);
    CHECK(!val_ids.empty());
    for (const auto& id : val_ids) CHECK(train_ids.count(id) == 0);
    CHECK(s.train.size() + s.val.size() == samples.size());
}

TEST_CASE("first-epoch loss matches the weighted uniform baseline") {
    // Near-zero weights give uniform predictions, where the 1/(c s_l) weighted
    // mean cross-entropy over the training points is exactly log c.
    const auto samples = banded_set(6, 40);
    TrainConfig c = tiny_config(1);
    c.batch_size = 64;
    c.init_scale = 1e-4;
    const auto r = train(samples, c);
    CHECK(r.history.train_loss[0] == doctest::Approx(std::log(3.0)).epsilon(0.1));
}

TEST_CASE("a tiny network memorizes a handful of samples") {
    // A misclassified point has p_true <= 1/2, so it costs at least w_min log 2;
    // the final-epoch loss therefore bounds the training error fraction.
    const auto samples = banded_set(5, 60);
    TrainConfig c = tiny_config(200);
    c.batch_size = 1;
    c.learning_rate = 1e-2;
    c.val_fraction = 0.2;
    const auto r = train(samples, c);
    const double w_min = *std::min_element(r.weights.w.begin(), r.weights.w.end());
    const double error_bound = r.history.train_loss.back() / (w_min * std::log(2.0));
    CHECK(error_bound <= 0.01);
}

TEST_CASE("training is bit-reproducible and keeps the best checkpoint") {
    const auto samples = banded_set(8, 90);
    TrainConfig c = tiny_config(6);
    c.val_fraction = 0.25;
    std::vector<EpochInfo> seen;
    const auto a = train(samples, c, [&](const EpochInfo& e) { seen.push_back(e); });
    const auto b = train(samples, c);
    CHECK(a.history == b.history);
    CHECK(a.params == b.params);

    REQUIRE(seen.size() == 6);
    const auto& f1 = a.history.val_macro_f1;
    const auto best = std::max_element(f1.begin(), f1.end());
    CHECK(a.history.best_epoch == static_cast<int>(best - f1.begin()) + 1);
    for (std::size_t e = 0; e < seen.size(); ++e) {
        CHECK(seen[e].epoch == static_cast<int>(e) + 1);
        CHECK(seen[e].val_macro_f1 == f1[e]);
    }

    std::vector<Sample> val;
    for (auto i : a.split.val) val.push_back(samples[i]);
    const auto& setup = setup_by_id(3);
    CHECK(validation_macro_f1(val, a.params, setup) == *best);

    std::stringstream ss;
    write_checkpoint(ss, a.params, c.seed, {});
    const auto loaded = read_checkpoint(ss);
    CHECK(validation_macro_f1(val, loaded.params, setup) == *best);
}

TEST_CASE("a different seed changes the run") {
    const auto samples = banded_set(8, 90);
    TrainConfig c = tiny_config(2);
    const auto a = train(samples, c);
    c.seed = 18;
    const auto b = train(samples, c);
    CHECK(!(a.params == b.params));
}

TEST_CASE("non-finite inputs abort training") {
    auto samples = banded_set(4, 7);
    for (auto& s : samples) s.features[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(train(samples, tiny_config(1)), std::runtime_error);
}

TEST_CASE("training config validation") {
    TrainConfig c = tiny_config(1);
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = tiny_config(1);
    c.learning_rate = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = tiny_config(1);
    c.val_fraction = 1.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = tiny_config(1);
    c.setup = 7;
    CHECK_THROWS(c.validate());
    CHECK_THROWS_AS(train({}, tiny_config(1)), std::invalid_argument);
}

TEST_CASE("history csv marks the best epoch") {
    TrainHistory h;
    h.train_loss = {1.0, 0.5};
    h.val_macro_f1 = {0.2, 0.4};
    h.best_epoch = 2;
    std::ostringstream out;
    h.write(out);
    CHECK(out.str().rfind("epoch,train_loss,val_macro_f1,best\n", 0) == 0);
    CHECK(out.str().find(",0\n2,") != std::string::npos);
    CHECK(out.str().back() == '\n');
}
