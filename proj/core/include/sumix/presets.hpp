#pragma once

#include <string>
#include <vector>

#include "sumix/training.hpp"

namespace sumix {

// A named, fully resolved TrainConfig. The registry carries the reference
// zeta/alpha grid across datasets and model scales; the encoder is always
// the local small_cnn stand-in, the scale only selects hyperparameters.
struct Preset {
    std::string name;
    std::string note;
    TrainConfig config;
};

const std::vector<Preset>& preset_registry();

// nullptr when the name is unknown.
const Preset* find_preset(const std::string& name);

}  // namespace sumix
