#pragma once

#include <string>

#include "pave/model.hpp"
#include "pave/train.hpp"

namespace pave {

// Flat "key = value" run configuration ('#' comments, blank lines ignored).
// Unknown keys are errors so ablation-grid typos fail loudly.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;

    static RunConfig parse_text(const std::string& text);
    static RunConfig parse_file(const std::string& path);
    void apply(const std::string& key, const std::string& value);
    std::string echo() const;  // round-trips through parse_text
};

}  // namespace pave
