#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <doctest.h>

#include "fixtures.hpp"
#include "relation_oracle.hpp"
#include "vrc/scene_graph.hpp"

using namespace vrc;
using fixtures::object;

TEST_SUITE("scene_graph") {
    TEST_CASE("direction angle examples") {
        const ObjectInfo e = object("AV001", 0, 0, 0);
        CHECK(direction_angle(e, object("a", 0, 10)) == doctest::Approx(0.0));
        CHECK(direction_angle(e, object("b", 10, 0)) == doctest::Approx(-90.0));
        CHECK(direction_angle(e, object("c", -10, 0)) == doctest::Approx(90.0));
        CHECK(direction_angle(e, object("d", 0, -10)) == doctest::Approx(180.0));
        CHECK_THROWS_AS(direction_angle(e, object("same", 0, 0)), Error);
        // Heading east: north of the ego is on its left.
        CHECK(direction_angle(object("AV002", 0, 0, 90), object("n", 0, 10)) == doctest::Approx(90.0));
    }

    TEST_CASE("spatial bins are half-open as specified") {
        CHECK(spatial_relation(45.0) == RelationKind::front);
        CHECK(spatial_relation(45.0001) == RelationKind::left);
        CHECK(spatial_relation(135.0) == RelationKind::left);
        CHECK(spatial_relation(180.0) == RelationKind::rear);
        CHECK(spatial_relation(-45.0) == RelationKind::right);
        CHECK(spatial_relation(-135.0) == RelationKind::rear);
        CHECK(spatial_relation(-44.999) == RelationKind::front);
    }

    TEST_CASE("property: exactly one bin matches any angle") {
        std::mt19937_64 rng(2);
        std::uniform_real_distribution<double> theta(-180.0, 180.0);
        for (int i = 0; i < 10000; ++i) {
            double t = theta(rng);
            if (t == -180.0) t = 180.0;
            const int matches = (t > -45 && t <= 45) + (t > 45 && t <= 135) + (t > -135 && t <= -45) +
                                ((t > 135 && t <= 180) || (t > -180 && t <= -135));
            REQUIRE(matches == 1);
            REQUIRE(spatial_relation(t) == oracle::bin(t));
        }
    }

    TEST_CASE("property: relation agrees with the body-frame oracle") {
        std::mt19937_64 rng(17);
        std::uniform_real_distribution<double> pos(-100.0, 100.0);
        std::uniform_real_distribution<double> heading(0.0, 360.0);
        int checked = 0;
        for (int i = 0; i < 10000; ++i) {
            const ObjectInfo e = object("AV001", pos(rng), pos(rng), heading(rng));
            const ObjectInfo o = object("x", pos(rng), pos(rng));
            const auto expected = oracle::quadrant(e, o);
            if (!expected) continue;  // within float noise of a bin edge
            ++checked;
            REQUIRE(spatial_relation(direction_angle(e, o)) == *expected);
        }
        CHECK(checked > 9900);
    }

    TEST_CASE("lane relation follows the index rule literally") {
        CHECK(lane_relation(object("AV1", 0, 0, 0, "R1", 2), object("o", 0, 0, 0, "R1", 1)) == RelationKind::leftlane);
        CHECK(lane_relation(object("AV1", 0, 0, 0, "R1", 1), object("o", 0, 0, 0, "R1", 2)) == RelationKind::rightlane);
        CHECK(lane_relation(object("AV1", 0, 0, 0, "R1", 0), object("o", 0, 0, 0, "R1", 0)) == RelationKind::samelane);
        CHECK(!lane_relation(object("AV1", 0, 0, 0, "R1", 0), object("o", 0, 0, 0, "R2", 0)));
        CHECK(!lane_relation(object("AV1", 0, 0, 0, "R1", 0), object("o", 0, 0, 0, "R1", 2)));
        for (int a = 0; a < 4; ++a) {
            for (int b = 0; b < 4; ++b) {
                const auto ab = lane_relation(object("e", 0, 0, 0, "R1", a), object("o", 0, 0, 0, "R1", b));
                const auto ba = lane_relation(object("o", 0, 0, 0, "R1", b), object("e", 0, 0, 0, "R1", a));
                CHECK((ab == RelationKind::leftlane) == (ba == RelationKind::rightlane));
            }
        }
    }

    TEST_CASE("graph fixture: truck ahead in the same lane") {
        const auto ls = fixtures::scene_of({object("AV001", 0, 0, 0, "R1", 1), object("truck1", 0, 20, 0, "R1", 1)});
        const ERGraph g = build_graph(ls, "AV001");
        REQUIRE(g.edges.size() == 1);
        const GraphEdge& e = g.edges[0];
        CHECK(e.spatial == RelationKind::front);
        CHECK(e.lane == RelationKind::samelane);
        CHECK(e.road == "R1");
        CHECK(e.distance == doctest::Approx(20.0));
        CHECK(e.satisfies(RelationKind::road, "R1"));
        CHECK(!e.satisfies(RelationKind::road, "R2"));
        CHECK(e.satisfies(RelationKind::surrounding));
    }

    TEST_CASE("graph radius boundary and errors") {
        const auto ls = fixtures::scene_of(
            {object("AV001", 0, 0), object("near", 0, 100.0), object("far", 0, 100.5), object("car9", 0, 0)});
        const ERGraph g = build_graph(ls, "AV001");
        std::set<std::string> ids;
        for (const auto& e : g.edges) ids.insert(e.object.id);
        CHECK(ids == std::set<std::string>{"near"});
        CHECK(build_graph(fixtures::scene_of({object("AV001", 0, 0)}), "AV001").edges.empty());
        CHECK_THROWS_AS(build_graph(ls, "AV404"), NotFoundError);
        CHECK_THROWS_AS(build_graph(ls, "car9"), Error);
    }

    TEST_CASE("property: edge set equals the brute-force radius filter") {
        std::mt19937_64 rng(23);
        std::uniform_real_distribution<double> pos(-150.0, 150.0);
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<ObjectInfo> objs = {object("AV001", pos(rng), pos(rng), 360.0 * (pos(rng) + 150) / 300.1)};
            for (int i = 0; i < 40; ++i) objs.push_back(object("car" + std::to_string(i), pos(rng), pos(rng)));
            const auto ls = fixtures::scene_of(objs);
            std::set<std::string> want;
            for (const auto& o : objs) {
                if (o.id != "AV001" && std::hypot(o.x - objs[0].x, o.y - objs[0].y) <= 100.0) want.insert(o.id);
            }
            std::set<std::string> got;
            double last = -1;
            for (const auto& e : build_graph(ls, "AV001").edges) {
                got.insert(e.object.id);
                REQUIRE(e.distance >= last);
                last = e.distance;
            }
            REQUIRE(got == want);
        }
    }

    TEST_CASE("AER masking") {
        auto truck = object("truck1", 0, 20, 0, "R1", 0);
        truck.co = Color::yellow;
        const auto ls = fixtures::scene_of({object("AV001", 0, 0, 0, "R1", 1), truck});
        const ERGraph g = build_graph(ls, "AV001");
        const AERGraph aer = build_aer(g, MaskedAttribute{"truck1", "co"});
        CHECK(std::get<std::string>(aer.masked_value()) == "yellow");
        CHECK(aer.base().edges.size() == g.edges.size());
        CHECK_THROWS_AS(build_aer(g, MaskedAttribute{"truck1", "nonexistent"}), Error);
        CHECK_THROWS_AS(build_aer(g, MaskedAttribute{"ghost", "co"}), NotFoundError);

        const AERGraph r1 = build_aer(g, std::uint64_t{7});
        const AERGraph r2 = build_aer(g, std::uint64_t{7});
        CHECK(r1.masked().entity == r2.masked().entity);
        CHECK(r1.masked().attribute == r2.masked().attribute);
        CHECK(r1.masked().attribute != "id");
        CHECK(object_attribute_names().size() == 19);
    }
}
