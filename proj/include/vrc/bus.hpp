#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "vrc/object_info.hpp"
#include "vrc/perception.hpp"
#include "vrc/scene.hpp"
#include "vrc/traffic_sim.hpp"

namespace vrc {

inline constexpr const char* kObjectInfoTopic = "/OI";

struct OiMessage {
    std::string topic = kObjectInfoTopic;
    std::string publisher;  // sensor id
    double ts = 0.0;
    std::vector<ObjectInfo> records;
};

/// In-process publish/subscribe bus. Delivery happens on the publishing
/// thread under one lock, so messages from a given publisher reach every
/// subscriber in publish order. With a non-zero latency, messages are held
/// until deliver_until() is called with a time at or past ts + latency.
class MessageBus {
public:
    using Handler = std::function<void(const OiMessage&)>;
    using SubscriptionId = std::uint64_t;

    SubscriptionId subscribe(const std::string& topic, Handler handler);
    void unsubscribe(SubscriptionId id);

    /// Throws if a record's ds differs from the publisher.
    void publish(OiMessage msg);

    void set_latency(double seconds);
    double latency() const;
    /// Delivers held messages that are due at sim time `now`.
    void deliver_until(double now);
    std::size_t pending() const;

private:
    void deliver_locked(const OiMessage& msg);

    mutable std::mutex mutex_;
    std::map<SubscriptionId, std::pair<std::string, Handler>> subscribers_;
    std::deque<OiMessage> held_;
    SubscriptionId next_id_ = 1;
    double latency_ = 0.0;
};

struct PipelineConfig {
    double av_range = 50.0;  // meters
    std::size_t queue_capacity = FreshnessQueue::kDefaultCapacity;
    double scene_rate_hz = 5.0;
    double bus_latency_ms = 0.0;
};

/// Simulation, sensing, transport and scene construction wired together the
/// way the cloud node sees them: sensors publish on "/OI", the cloud node
/// subscribes into its freshness queue and a constructor samples it at a
/// fixed rate.
class ScenePipeline {
public:
    ScenePipeline(std::shared_ptr<const RoadNetwork> network, SimConfig sim, PipelineConfig config = {});

    /// Advances one simulation step; returns a scene when a constructor tick falls due.
    std::optional<LinguisticScene> step();
    /// Runs until the configured simulation duration, calling `on_scene` per scene.
    void run(const std::function<void(const LinguisticScene&)>& on_scene);
    /// Same, for an explicit amount of simulated time.
    void run_for(double seconds, const std::function<void(const LinguisticScene&)>& on_scene);

    const World& world() const { return world_; }
    const FreshnessQueue& queue() const { return queue_; }
    MessageBus& bus() { return bus_; }
    const PipelineConfig& config() const { return config_; }
    std::uint64_t messages_received() const { return received_; }

private:
    std::shared_ptr<const RoadNetwork> network_;
    World world_;
    PipelineConfig config_;
    MessageBus bus_;
    FreshnessQueue queue_;
    std::uint64_t received_ = 0;
    std::int64_t next_scene_id_ = 0;
    std::uint64_t next_tick_ = 1;
};

}  // namespace vrc
