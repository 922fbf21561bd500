#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "ghostseg/simulator.hpp"

namespace ghostseg {

/// Invalid or missing configuration field. `line` is 1-based, 0 if unknown.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, int line, const std::string& message);

    const std::string& field() const { return field_; }
    int line() const { return line_; }

private:
    std::string field_;
    int line_;
};

/// Scenario-set document (YAML): master seed, repeats, split, simulation
/// options, shared defaults and the list of scenarios.
DatasetConfig load_dataset_config(const std::filesystem::path& path);
DatasetConfig parse_dataset_config(const std::string& text, const std::string& source = "<string>");

}  // namespace ghostseg
