#include "vrc/object_info.hpp"

#include <cmath>

namespace vrc {

namespace {

template <typename Enum, std::size_t N>
std::optional<Enum> parse_enum(std::string_view s, const std::array<Enum, N>& values) {
    for (Enum e : values) {
        if (to_string(e) == s) {
            return e;
        }
    }
    return std::nullopt;
}

}  // namespace

std::string_view to_string(VehicleType t) {
    switch (t) {
        case VehicleType::car: return "car";
        case VehicleType::truck: return "truck";
        case VehicleType::bus: return "bus";
        case VehicleType::motorcycle: return "motorcycle";
    }
    return "car";
}

std::string_view to_string(Color c) {
    switch (c) {
        case Color::red: return "red";
        case Color::yellow: return "yellow";
        case Color::blue: return "blue";
        case Color::white: return "white";
        case Color::black: return "black";
        case Color::green: return "green";
        case Color::gray: return "gray";
    }
    return "white";
}

std::string_view to_string(Signal s) {
    switch (s) {
        case Signal::none: return "none";
        case Signal::left: return "left";
        case Signal::right: return "right";
        case Signal::brake: return "brake";
    }
    return "none";
}

std::optional<VehicleType> parse_vehicle_type(std::string_view s) { return parse_enum(s, kVehicleTypes); }
std::optional<Color> parse_color(std::string_view s) { return parse_enum(s, kColors); }
std::optional<Signal> parse_signal(std::string_view s) { return parse_enum(s, kSignals); }

double quantize(double value) {
    double q = std::round(value * 1000.0) / 1000.0;
    return q == 0.0 ? 0.0 : q;
}

ObjectInfo quantized(ObjectInfo o) {
    for (double* f : {&o.ts, &o.x, &o.y, &o.s, &o.lat, &o.v, &o.a, &o.h, &o.le, &o.wi, &o.he}) {
        *f = quantize(*f);
    }
    // 359.9996 rounds up to 360.000, which is outside [0, 360).
    if (o.h >= 360.0) {
        o.h = 0.0;
    }
    return o;
}

}  // namespace vrc
