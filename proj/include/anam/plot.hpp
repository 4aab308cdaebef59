#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace anam {

// A shape-grid CSV as read back for plotting: one or two input columns
// (numeric or level labels) followed by `value`.
struct ShapeTable {
    std::vector<std::string> input_names;
    std::vector<std::vector<std::string>> inputs;  // per input column, per row
    std::vector<double> values;
};

ShapeTable parse_shape_table(std::string_view csv);

// Sequential colormap sampled at 256 steps, interpolated from five anchor
// colours (dark purple, blue, teal, green, yellow). t is clamped to [0, 1].
std::array<unsigned char, 3> colormap(double t);

// Line chart for one-input tables, heatmap for two-input tables.
std::string render_svg(const ShapeTable& table, const std::string& title);

}  // namespace anam
