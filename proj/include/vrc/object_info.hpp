#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vrc {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

enum class VehicleType { car, truck, bus, motorcycle };
enum class Color { red, yellow, blue, white, black, green, gray };
enum class Signal { none, left, right, brake };

inline constexpr std::array<VehicleType, 4> kVehicleTypes = {
    VehicleType::car, VehicleType::truck, VehicleType::bus, VehicleType::motorcycle};
inline constexpr std::array<Color, 7> kColors = {Color::red,   Color::yellow, Color::blue, Color::white,
                                                 Color::black, Color::green,  Color::gray};
inline constexpr std::array<Signal, 4> kSignals = {Signal::none, Signal::left, Signal::right, Signal::brake};

std::string_view to_string(VehicleType t);
std::string_view to_string(Color c);
std::string_view to_string(Signal s);

std::optional<VehicleType> parse_vehicle_type(std::string_view s);
std::optional<Color> parse_color(std::string_view s);
std::optional<Signal> parse_signal(std::string_view s);

/// One perceived object. Field names follow the wire schema of the
/// linguistic scene (`ts` is the time stamp, `lat` the lateral lane offset).
struct ObjectInfo {
    std::string id;
    double ts = 0.0;
    double x = 0.0;
    double y = 0.0;
    double s = 0.0;
    double lat = 0.0;
    double v = 0.0;
    double a = 0.0;
    double h = 0.0;  // degrees clockwise from north (+y)
    double le = 0.0;
    double wi = 0.0;
    double he = 0.0;
    VehicleType ty = VehicleType::car;
    Color co = Color::white;
    std::string ln;
    int lx = 0;
    std::string rd;
    Signal sg = Signal::none;
    std::string ds;

    bool operator==(const ObjectInfo&) const = default;
};

/// Autonomous vehicles are marked by the "AV" id prefix.
inline bool is_av_id(std::string_view id) { return id.starts_with("AV"); }

/// Rounds to the 3-decimal precision used on the wire; never yields -0.
double quantize(double value);

/// Applies quantize() to every numeric field.
ObjectInfo quantized(ObjectInfo o);

}  // namespace vrc
