#pragma once

#include <array>
#include <string>
#include <vector>

namespace geosep::plot {

using Path = std::vector<std::array<double, 2>>;

struct Layer {
    std::string name;
    std::string color = "#1f77b4";
    bool lines = true;  // polylines, otherwise dots
    std::vector<Path> paths;
};

/// Deterministic SVG with axes, ticks and a legend. With no points the axes
/// span [0, 1].
std::string render_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                       const std::vector<Layer>& layers);

/// One row per point: layer,path,x,y.
std::string layers_csv(const std::vector<Layer>& layers);

}  // namespace geosep::plot
