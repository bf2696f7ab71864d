#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <sstream>

#include "elens/errors.hpp"
#include "elens/excitation.hpp"
#include "elens/minires.hpp"
#include "elens/model.hpp"
#include "elens/rng.hpp"
#include "support/oracles.hpp"

using namespace elens;

namespace {

// input (D,1,1) -> flatten -> [dense -> relu]* -> dense head, mirroring the
// oracle's ToyNet layout.
Model toy_model(const oracle::ToyNet& net) {
    Model m;
    ModelGraph& g = m.graph;
    const int64_t in_dim = static_cast<int64_t>(net.input.size());
    g.input_shape = {in_dim, 1, 1};
    g.num_classes = static_cast<int>(net.widths.back());
    for (int i = 0; i < g.num_classes; ++i) g.labels.push_back("c" + std::to_string(i));
    g.preprocess.mean.assign(static_cast<size_t>(in_dim), 0.0f);
    g.preprocess.std.assign(static_cast<size_t>(in_dim), 1.0f);

    LayerSpec input{.name = "input", .kind = LayerKind::Input};
    g.layers.push_back(input);
    g.layers.push_back(
        {.name = "flat", .kind = LayerKind::Flatten, .inputs = {"input"}});
    std::string prev = "flat";
    int64_t prev_dim = in_dim;
    for (size_t l = 0; l < net.weights.size(); ++l) {
        const std::string name = "fc" + std::to_string(l + 1);
        g.layers.push_back({.name = name,
                            .kind = LayerKind::Dense,
                            .inputs = {prev},
                            .weight_ref = name});
        Blob w;
        w.dims = {net.widths[l], prev_dim};
        for (double v : net.weights[l]) w.data.push_back(static_cast<float>(v));
        m.weights[name + ".weight"] = std::move(w);
        Blob b;
        b.dims = {net.widths[l]};
        b.data.assign(static_cast<size_t>(net.widths[l]), 0.0f);
        m.weights[name + ".bias"] = std::move(b);
        prev_dim = net.widths[l];
        if (l + 1 < net.weights.size()) {
            const std::string rname = "relu" + std::to_string(l + 1);
            g.layers.push_back(
                {.name = rname, .kind = LayerKind::Relu, .inputs = {name}});
            prev = rname;
        } else {
            prev = name;
        }
    }
    g.target_layer_default.clear();
    validate_model(m);
    return m;
}

Tensor toy_input(const oracle::ToyNet& net) {
    std::vector<float> data;
    for (double v : net.input) data.push_back(static_cast<float>(v));
    return Tensor(Shape4{1, static_cast<int64_t>(net.input.size()), 1, 1}, data);
}

oracle::ToyNet random_toy_net(uint64_t seed) {
    SplitMix64 rng(seed);
    oracle::ToyNet net;
    const int depth = 2 + static_cast<int>(rng.below(2));  // 2 or 3 dense layers
    int64_t width = 3 + static_cast<int64_t>(rng.below(14));
    net.input.resize(static_cast<size_t>(width));
    for (double& v : net.input) v = rng.uniform();  // non-negative inputs
    for (int l = 0; l < depth; ++l) {
        const int64_t next = 3 + static_cast<int64_t>(rng.below(14));
        std::vector<double> w(static_cast<size_t>(next * width));
        for (double& v : w) v = static_cast<double>(rng.symmetric(1.0f));
        net.weights.push_back(std::move(w));
        net.widths.push_back(next);
        width = next;
    }
    return net;
}

double map_total(const ExcitationMaps& maps) {
    double s = 0.0;
    for (float v : maps.values) s += v;
    return s;
}

Tensor random_image(uint64_t seed) {
    Tensor t(Shape4{1, 3, 64, 64});
    SplitMix64 rng(seed);
    for (float& v : t.data()) v = rng.symmetric(1.0f);
    return t;
}

}  // namespace

TEST_CASE("single dense layer routes mass by positive-weighted activation") {
    oracle::ToyNet net;
    net.input = {2.0, 1.0};

    SUBCASE("all-positive weights") {
        net.weights = {{3.0, 1.0}};
        net.widths = {1};
        const Model m = toy_model(net);
        const ForwardTrace trace = forward(m, toy_input(net));
        const ExcitationMaps maps = excitation_backprop(m, trace, 0, "flat");
        REQUIRE(maps.values.size() == 2);
        CHECK(maps.values[0] == doctest::Approx(6.0 / 7.0).epsilon(1e-6));
        CHECK(maps.values[1] == doctest::Approx(1.0 / 7.0).epsilon(1e-6));
        CHECK(maps.discarded_mass == 0.0);
    }
    SUBCASE("negative weight is clamped out") {
        net.weights = {{3.0, -1.0}};
        net.widths = {1};
        const Model m = toy_model(net);
        const ForwardTrace trace = forward(m, toy_input(net));
        const ExcitationMaps maps = excitation_backprop(m, trace, 0, "flat");
        CHECK(maps.values[0] == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(maps.values[1] == 0.0f);
    }
    SUBCASE("zero activations discard the whole mass") {
        net.input = {0.0, 0.0};
        net.weights = {{3.0, 1.0}};
        net.widths = {1};
        const Model m = toy_model(net);
        const ForwardTrace trace = forward(m, toy_input(net));
        const ExcitationMaps maps = excitation_backprop(m, trace, 0, "flat");
        CHECK(maps.values[0] == 0.0f);
        CHECK(maps.values[1] == 0.0f);
        CHECK(maps.discarded_mass == doctest::Approx(1.0));
    }
}

TEST_CASE("excitation matches the path-enumeration oracle on toy nets") {
    for (uint64_t seed = 1; seed <= 6; ++seed) {
        const oracle::ToyNet net = random_toy_net(seed);
        const Model m = toy_model(net);
        const ForwardTrace trace = forward(m, toy_input(net));
        const int start =
            static_cast<int>(SplitMix64(seed * 17).below(
                static_cast<uint64_t>(net.widths.back())));

        // Stop at the first relu so every dense layer above it gets routed.
        const int stop_layer = 1;
        const std::string target = "relu1";
        const ExcitationMaps maps = excitation_backprop(m, trace, start, target);
        const oracle::PathEnumeration want =
            oracle::enumerate_paths(net, start, stop_layer);

        REQUIRE(maps.values.size() == want.marginals.size());
        for (size_t i = 0; i < want.marginals.size(); ++i) {
            CHECK(maps.values[i] == doctest::Approx(want.marginals[i]).epsilon(1e-6));
        }
        CHECK(maps.discarded_mass == doctest::Approx(want.discarded).epsilon(1e-6));
    }
}

TEST_CASE("aggregate_map sums unit maps elementwise") {
    ExcitationMaps maps;
    maps.num_units = 2;
    maps.height = 2;
    maps.width = 2;
    maps.values = {0.1f, 0.0f, 0.0f, 0.0f, 0.2f, 0.1f, 0.0f, 0.0f};
    const Tensor agg = aggregate_map(maps);
    CHECK(agg.shape() == Shape4{1, 1, 2, 2});
    CHECK(agg.data()[0] == doctest::Approx(0.3).epsilon(1e-6));
    CHECK(agg.data()[1] == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(agg.data()[2] == 0.0f);
    CHECK(agg.data()[3] == 0.0f);

    ExcitationMaps zero;
    zero.num_units = 3;
    zero.height = 2;
    zero.width = 2;
    zero.values.assign(12, 0.0f);
    const Tensor zagg = aggregate_map(zero);
    for (float v : zagg.data()) CHECK(v == 0.0f);
}

TEST_CASE("mass is conserved through minires at the default target") {
    const Model m = build_minires(7, 123);
    for (uint64_t seed = 1; seed <= 8; ++seed) {
        const ForwardTrace trace = forward(m, random_image(seed));
        const BrandId p = predict(m.graph, trace);
        const ExcitationMaps maps =
            excitation_backprop(m, trace, p.index, "blk2.relu2");
        CHECK(map_total(maps) + maps.discarded_mass == doctest::Approx(1.0).epsilon(1e-5));
        for (float v : maps.values) CHECK(v >= 0.0f);
        CHECK(maps.num_units == 32);
        CHECK(maps.height == 8);
        CHECK(maps.width == 8);
    }
}

TEST_CASE("mass recombines through the residual add at a deeper target") {
    const Model m = build_minires(5, 321);
    for (uint64_t seed = 11; seed <= 14; ++seed) {
        const ForwardTrace trace = forward(m, random_image(seed));
        const ExcitationMaps blk1 = excitation_backprop(m, trace, 0, "blk1.relu2");
        CHECK(map_total(blk1) + blk1.discarded_mass ==
              doctest::Approx(1.0).epsilon(1e-5));
        const ExcitationMaps stem = excitation_backprop(m, trace, 0, "stem.relu");
        CHECK(map_total(stem) + stem.discarded_mass ==
              doctest::Approx(1.0).epsilon(1e-5));
        for (float v : stem.values) CHECK(v >= 0.0f);
    }
}

TEST_CASE("routing is invariant to rescaling one layer's activations") {
    const oracle::ToyNet net = random_toy_net(42);
    const Model m = toy_model(net);
    const Tensor input = toy_input(net);
    ForwardTrace trace = forward(m, input);
    const ExcitationMaps base = excitation_backprop(m, trace, 0, "relu1");

    for (float c : {0.25f, 3.0f, 117.0f}) {
        ForwardTrace scaled = trace;
        Tensor& act = scaled.activations.at("relu1");
        for (float& v : act.data()) v *= c;
        const ExcitationMaps got = excitation_backprop(m, scaled, 0, "relu1");
        REQUIRE(got.values.size() == base.values.size());
        for (size_t i = 0; i < base.values.size(); ++i) {
            CHECK(got.values[i] == doctest::Approx(base.values[i]).epsilon(1e-6));
        }
    }
}

TEST_CASE("excitation is deterministic for a fixed trace") {
    const Model m = build_minires(3, 9);
    const ForwardTrace trace = forward(m, random_image(77));
    const ExcitationMaps a = excitation_backprop(m, trace, 1, "blk2.relu2");
    const ExcitationMaps b = excitation_backprop(m, trace, 1, "blk2.relu2");
    CHECK(a.values.size() == b.values.size());
    CHECK(std::memcmp(a.values.data(), b.values.data(),
                      a.values.size() * sizeof(float)) == 0);
    CHECK(a.discarded_mass == b.discarded_mass);
}

TEST_CASE("invalid targets and classes are rejected") {
    const Model m = build_minires(3, 10);
    const ForwardTrace trace = forward(m, random_image(5));
    CHECK_THROWS_AS(excitation_backprop(m, trace, 3, "blk2.relu2"), DataError);
    CHECK_THROWS_AS(excitation_backprop(m, trace, -1, "blk2.relu2"), DataError);
    CHECK_THROWS_WITH_AS(excitation_backprop(m, trace, 0, "head.fc"),
                         doctest::Contains("not on a path"), DataError);
    CHECK_THROWS_WITH_AS(excitation_backprop(m, trace, 0, "nope"),
                         doctest::Contains("not on a path"), DataError);
}

TEST_CASE("map records round-trip through the binary dump") {
    const Model m = build_minires(4, 55);
    const ForwardTrace trace = forward(m, random_image(3));
    ExcitationMaps maps = excitation_backprop(m, trace, 2, "blk2.relu2", "img_0042");

    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    write_map_record(buf, maps);
    write_map_record(buf, maps);
    for (int i = 0; i < 2; ++i) {
        const std::optional<MapRecord> rec = read_map_record(buf);
        REQUIRE(rec.has_value());
        CHECK(rec->image_id == "img_0042");
        CHECK(rec->class_index == 2);
        CHECK(rec->num_units == maps.num_units);
        CHECK(rec->height == maps.height);
        CHECK(rec->width == maps.width);
        CHECK(std::memcmp(rec->values.data(), maps.values.data(),
                          maps.values.size() * sizeof(float)) == 0);
    }
    CHECK_FALSE(read_map_record(buf).has_value());

    std::stringstream trunc(std::ios::in | std::ios::out | std::ios::binary);
    write_map_record(trunc, maps);
    std::string bytes = trunc.str();
    bytes.resize(bytes.size() - 10);
    std::stringstream cut(bytes, std::ios::in | std::ios::binary);
    CHECK_THROWS_AS(
        [&] {
            while (read_map_record(cut)) {
            }
        }(),
        DataError);
}
