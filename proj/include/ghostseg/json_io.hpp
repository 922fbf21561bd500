#pragma once

#include <json.hpp>

#include "ghostseg/multipath.hpp"
#include "ghostseg/radar_core.hpp"

namespace ghostseg {

nlohmann::json to_json(const SensorSpec& spec);
SensorSpec sensor_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SensorPose& pose);
SensorPose sensor_pose_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Reflector& refl);
Reflector reflector_from_json(const nlohmann::json& j);

}  // namespace ghostseg
