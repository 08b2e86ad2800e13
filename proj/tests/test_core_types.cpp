#include <limits>

#include "doctest.h"

#include "hmore/types.hpp"

using namespace hmore;

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

TEST_CASE("constructors reject non-finite values") {
    CHECK_THROWS_AS(Vec2(kNaN, 0.0), NonFiniteValue);
    CHECK_THROWS_AS(Vec2(0.0, kInf), NonFiniteValue);
    CHECK_THROWS_AS(Point2(-kInf, 0.0), NonFiniteValue);
    CHECK_THROWS_AS(Keypoint(0.0, kNaN, 1.0), NonFiniteValue);
    CHECK_THROWS_AS(Keypoint(0.0, 0.0, kNaN), NonFiniteValue);
    CHECK_NOTHROW(Vec2(1e300, -1e300));
}

TEST_CASE("keypoint confidence lies in [0, 1]") {
    CHECK_NOTHROW(Keypoint(1.0, 2.0, 0.0));
    CHECK_NOTHROW(Keypoint(1.0, 2.0, 1.0));
    CHECK_THROWS_AS(Keypoint(1.0, 2.0, 1.5), InvalidArgument);
    CHECK_THROWS_AS(Keypoint(1.0, 2.0, -0.01), InvalidArgument);
}

TEST_CASE("flow map shape and storage") {
    CHECK_THROWS_AS(FlowMap(0, 4), InvalidArgument);
    CHECK_THROWS_AS(FlowMap(4, -1), InvalidArgument);
    CHECK_THROWS_AS(FlowMap(2, 2, std::vector<Vec2>(3)), InvalidArgument);

    FlowMap f(3, 2);
    CHECK(f.size() == 6);
    f.set(2, 1, Vec2(1.5, -2.0));
    CHECK(f[5] == Vec2(1.5, -2.0));
    CHECK(f.at(2, 1).dx == 1.5);
    CHECK(f.index(1, 1) == 4);
    CHECK(f.contains(2, 1));
    CHECK_FALSE(f.contains(3, 0));
    CHECK_FALSE(f.contains(0, -1));
}

TEST_CASE("subject mask labels must be contiguous from 1") {
    CHECK_NOTHROW(SubjectMask(2, 2, {0, 1, 2, 0}));
    CHECK_THROWS_AS(SubjectMask(2, 2, {0, 1, 3, 0}), InvalidArgument);
    CHECK_THROWS_AS(SubjectMask(2, 2, {0, 2, 2, 0}), InvalidArgument);
    CHECK_THROWS_AS(SubjectMask(2, 2, {0, 1, 1}), InvalidArgument);

    const SubjectMask m(3, 1, {2, 1, 2});
    CHECK(m.subject_count() == 2);
    CHECK(m.count(2) == 2);
    CHECK(m.count(0) == 0);
    CHECK(SubjectMask(4, 4).subject_count() == 0);
}

TEST_CASE("validate_pairing") {
    CHECK_NOTHROW(validate_pairing(FlowMap(64, 64), SubjectMask(64, 64)));
    CHECK_THROWS_AS(validate_pairing(FlowMap(64, 64), SubjectMask(32, 64)), DimensionMismatch);
    CHECK_NOTHROW(validate_pairing(FlowMap(1, 1), SubjectMask(1, 1)));
    try {
        validate_pairing(FlowMap(64, 64), SubjectMask(32, 64));
    } catch (const DimensionMismatch& e) {
        const std::string msg = e.what();
        CHECK(msg.find("64x64") != std::string::npos);
        CHECK(msg.find("32x64") != std::string::npos);
    }
}

TEST_CASE("hyperparameter defaults and invariants") {
    const Hyperparams hp;
    CHECK(hp.alpha == 0.1);
    CHECK(hp.beta == 0.01);
    CHECK(hp.theta_a == 15.0);
    CHECK(hp.theta_il == 0.8);
    CHECK(hp.theta_ih == 1.2);
    CHECK(hp.scales == std::vector<int>{8, 16, 32});
    CHECK_NOTHROW(hp.validate());

    auto broken = [](auto mutate) {
        Hyperparams h;
        mutate(h);
        return h;
    };
    CHECK_THROWS_AS(broken([](Hyperparams& h) { h.beta = 0.0; }).validate(), InvalidArgument);
    CHECK_THROWS_AS(broken([](Hyperparams& h) { h.alpha = -1.0; }).validate(), InvalidArgument);
    CHECK_THROWS_AS(broken([](Hyperparams& h) { h.theta_il = 1.3; }).validate(), InvalidArgument);
    CHECK_THROWS_AS(broken([](Hyperparams& h) { h.theta_a = 90.0; }).validate(), InvalidArgument);
    CHECK_THROWS_AS(broken([](Hyperparams& h) { h.scales = {}; }).validate(), InvalidArgument);
    CHECK_THROWS_AS(broken([](Hyperparams& h) { h.scales = {8, 1}; }).validate(), InvalidArgument);
    CHECK_THROWS_AS(broken([](Hyperparams& h) { h.edge_theta_i = kNaN; }).validate(), NonFiniteValue);
    // alpha = 0 switches the boundary term off
    CHECK_NOTHROW(broken([](Hyperparams& h) { h.alpha = 0.0; }).validate());
}

TEST_CASE("errors carry their I/O classification") {
    CHECK(IoError("x").is_io());
    CHECK_FALSE(SchemaError("x").is_io());
    CHECK_FALSE(InvalidArgument("x").is_io());
}
