#pragma once

#include <vector>

#include "fixtures.hpp"
#include "vrc/bus.hpp"

namespace sim_scenes {

/// Scenes from a seeded 60 s run on the shipped network, built once per binary.
inline const std::vector<vrc::LinguisticScene>& shared() {
    static const std::vector<vrc::LinguisticScene> scenes = [] {
        std::vector<vrc::LinguisticScene> out;
        vrc::ScenePipeline p(fixtures::cross_network(), vrc::SimConfig{});
        p.run_for(60.0, [&](const vrc::LinguisticScene& ls) { out.push_back(ls); });
        return out;
    }();
    return scenes;
}

}  // namespace sim_scenes
