#include "vrc/bus.hpp"

#include <cmath>

#include <fmt/format.h>

namespace vrc {

MessageBus::SubscriptionId MessageBus::subscribe(const std::string& topic, Handler handler) {
    std::lock_guard lock(mutex_);
    const SubscriptionId id = next_id_++;
    subscribers_.emplace(id, std::make_pair(topic, std::move(handler)));
    return id;
}

void MessageBus::unsubscribe(SubscriptionId id) {
    std::lock_guard lock(mutex_);
    subscribers_.erase(id);
}

void MessageBus::publish(OiMessage msg) {
    for (const ObjectInfo& r : msg.records) {
        if (r.ds != msg.publisher) {
            throw Error(fmt::format("publish: record '{}' has ds '{}' but publisher is '{}'", r.id, r.ds,
                                    msg.publisher));
        }
    }
    std::lock_guard lock(mutex_);
    if (latency_ > 0.0) {
        held_.push_back(std::move(msg));
        return;
    }
    deliver_locked(msg);
}

void MessageBus::deliver_locked(const OiMessage& msg) {
    for (const auto& [id, sub] : subscribers_) {
        if (sub.first == msg.topic) {
            sub.second(msg);
        }
    }
}

void MessageBus::set_latency(double seconds) {
    if (seconds < 0.0) {
        throw Error("bus latency must be non-negative");
    }
    std::lock_guard lock(mutex_);
    latency_ = seconds;
}

double MessageBus::latency() const {
    std::lock_guard lock(mutex_);
    return latency_;
}

void MessageBus::deliver_until(double now) {
    std::lock_guard lock(mutex_);
    // Held messages keep publish order; a fixed latency makes due times monotone.
    while (!held_.empty() && held_.front().ts + latency_ <= now + 1e-9) {
        deliver_locked(held_.front());
        held_.pop_front();
    }
}

std::size_t MessageBus::pending() const {
    std::lock_guard lock(mutex_);
    return held_.size();
}

ScenePipeline::ScenePipeline(std::shared_ptr<const RoadNetwork> network, SimConfig sim, PipelineConfig config)
    : network_(network), world_(network, std::move(sim)), config_(config), queue_(config.queue_capacity) {
    if (!(config_.scene_rate_hz > 0.0)) {
        throw Error("pipeline: scene rate must be positive");
    }
    bus_.set_latency(config_.bus_latency_ms / 1000.0);
    bus_.subscribe(kObjectInfoTopic, [this](const OiMessage& msg) {
        queue_.push(msg.records);
        ++received_;
    });
}

std::optional<LinguisticScene> ScenePipeline::step() {
    world_.step();
    const Snapshot snap = snapshot(world_, world_.time());
    for (const SensorSpec& sensor : default_sensor_layout(snap, *network_, config_.av_range)) {
        OiMessage msg;
        msg.publisher = sensor.id;
        msg.ts = snap.t;
        msg.records = sensor.kind == SensorKind::av ? perceive_av(snap, sensor.id, sensor)
                                                    : perceive_rsu(snap, sensor, *network_);
        bus_.publish(std::move(msg));
    }
    bus_.deliver_until(world_.time());

    const double period = 1.0 / config_.scene_rate_hz;
    if (world_.time() + 1e-9 < static_cast<double>(next_tick_) * period) {
        return std::nullopt;
    }
    const double tick_time = static_cast<double>(next_tick_) * period;
    while (static_cast<double>(next_tick_) * period <= world_.time() + 1e-9) {
        ++next_tick_;
    }
    return construct_scene(queue_, *network_, tick_time, next_scene_id_++);
}

void ScenePipeline::run(const std::function<void(const LinguisticScene&)>& on_scene) {
    run_for(world_.config().duration, on_scene);
}

void ScenePipeline::run_for(double seconds, const std::function<void(const LinguisticScene&)>& on_scene) {
    const auto steps = static_cast<std::uint64_t>(std::llround(seconds / world_.config().dt));
    for (std::uint64_t i = 0; i < steps; ++i) {
        if (auto scene = step()) {
            on_scene(*scene);
        }
    }
}

}  // namespace vrc
