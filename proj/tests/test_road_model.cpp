#include <cmath>
#include <random>

#include <doctest.h>

#include "fixtures.hpp"
#include "vrc/road_model.hpp"

using namespace vrc;

TEST_SUITE("road_model") {
    TEST_CASE("minimal network loads one straight lane") {
        const auto net = parse_network(
            R"({"roads":[{"id":"A","lanes":[{"index":0,"name":"A_0","width":3.5,"centerline":[[0,0],[0,100]]}]}]})");
        CHECK(net.roads().size() == 1);
        CHECK(net.lane_count() == 1);
        CHECK(net.find_lane("A", 0)->length() == doctest::Approx(100.0));
    }

    TEST_CASE("shipped cross network has 2 roads and 5 lanes") {
        const auto net = fixtures::cross_network();
        CHECK(net->roads().size() == 2);
        CHECK(net->lane_count() == 5);
        CHECK(net->rsu_coverages().size() == 3);
    }

    TEST_CASE("validation errors name the problem") {
        CHECK_THROWS_WITH_AS(parse_network(R"({"roads":[{"id":"A","lanes":[
            {"index":0,"name":"A_0","width":3.5,"centerline":[[0,0],[0,100]]},
            {"index":2,"name":"A_2","width":3.5,"centerline":[[3,0],[3,100]]}]}]})"),
                             doctest::Contains("non-contiguous lane indices"), Error);
        CHECK_THROWS_WITH_AS(parse_network(R"({"roads":[{"id":"A","lanes":[{"index":0,"name":"A_0","width":3.5}]}]})"),
                             doctest::Contains("centerline"), Error);
        CHECK_THROWS_AS(parse_network(R"({"roads":[{"id":"A","lanes":[{"index":0,"name":"A_0","width":3.5,
            "centerline":[[0,0],[0,100]]}]}],"rsu_coverages":{"R":[{"lane":"nope","s_range":[0,10]}]}})"),
                        Error);
        CHECK_THROWS_AS(parse_network(R"({"roads":[{"id":"A","lanes":[{"index":0,"name":"A_0","width":3.5,
            "centerline":[[0,0],[0,100]]}]}],"rsu_coverages":{"R":[{"lane":"A_0","s_range":[50,10]}]}})"),
                        Error);
        CHECK_THROWS_AS(parse_network("{\"roads\": ["), Error);
        CHECK_THROWS_AS(load_network("/nonexistent/net.json"), Error);
    }

    TEST_CASE("projection examples") {
        const auto net = parse_network(
            R"({"roads":[{"id":"A","lanes":[{"index":0,"name":"A_0","width":3.5,"centerline":[[0,0],[0,100]]},
                                             {"index":1,"name":"A_1","width":3.5,"centerline":[[-3.5,0],[-3.5,100]]}]}]})");
        const auto on = project(net, "A", 0, 0.0, 30.0);
        CHECK(on.s == doctest::Approx(30.0));
        CHECK(on.lateral == doctest::Approx(0.0));
        // Lane 1 lies west, so index-increase side is west; east of centerline is negative.
        const auto off = project(net, "A", 0, 1.0, 30.0);
        CHECK(off.s == doctest::Approx(30.0));
        CHECK(off.lateral == doctest::Approx(-1.0));
        CHECK_THROWS_WITH_AS(project(net, "A", 0, 10.0, 30.0), doctest::Contains("too far from centerline"), Error);
        CHECK_THROWS_AS(project(net, "A", 5, 0.0, 30.0), NotFoundError);
    }

    TEST_CASE("heading convention is clockwise from north") {
        CHECK(heading_of(0, 1) == doctest::Approx(0.0));
        CHECK(heading_of(1, 0) == doctest::Approx(90.0));
        CHECK(heading_of(0, -1) == doctest::Approx(180.0));
        CHECK(heading_of(-1, 0) == doctest::Approx(270.0));
    }

    TEST_CASE("property: centerline samples project to (s, 0) and projection is idempotent") {
        const auto net = parse_network(R"({"roads":[{"id":"C","lanes":[{"index":0,"name":"C_0","width":3.5,
            "centerline":[[0,0],[0,50],[30,90],[100,90],[140,40]]}]}]})");
        const Lane& lane = *net.find_lane("C", 0);
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> s_dist(0.0, lane.length());
        std::uniform_real_distribution<double> lat_dist(-1.7, 1.7);
        for (int i = 0; i < 2000; ++i) {
            const double s = s_dist(rng);
            const Point p = lane.point_at(s);
            const LaneCoord c = lane.project(p);
            REQUIRE(std::abs(c.s - s) < 1e-6);
            REQUIRE(std::abs(c.lateral) < 1e-6);

            const Point q = lane.world_point(s, lat_dist(rng));
            const LaneCoord first = lane.project(q);
            const LaneCoord second = lane.project(lane.world_point(first.s, first.lateral));
            REQUIRE(std::abs(first.s - second.s) < 1e-6);
            REQUIRE(std::abs(first.lateral - second.lateral) < 1e-6);
        }
    }
}
