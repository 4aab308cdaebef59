#include "anam/plot.hpp"

#include "anam/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace anam {

namespace {

std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

bool parse_number(const std::string& s, double& v) {
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string px(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

// Distinct labels in order of first appearance, or sorted numerically when
// every label parses as a number.
struct AxisLevels {
    std::vector<std::string> labels;
    std::vector<double> numeric;
    bool is_numeric = true;

    std::size_t index_of(const std::string& s) const {
        return static_cast<std::size_t>(std::find(labels.begin(), labels.end(), s) - labels.begin());
    }
};

AxisLevels axis_levels(const std::vector<std::string>& column) {
    AxisLevels a;
    for (const auto& s : column)
        if (std::find(a.labels.begin(), a.labels.end(), s) == a.labels.end()) a.labels.push_back(s);
    for (const auto& s : a.labels) {
        double v;
        if (!parse_number(s, v)) {
            a.is_numeric = false;
            a.numeric.clear();
            break;
        }
        a.numeric.push_back(v);
    }
    return a;
}

constexpr double kWidth = 640, kHeight = 420, kLeft = 70, kRight = 30, kTop = 40, kBottom = 50;

std::string header(const std::string& title) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(kWidth) + "\" height=\"" + px(kHeight) +
           "\" viewBox=\"0 0 " + px(kWidth) + " " + px(kHeight) +
           "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
           "<text x=\"" + px(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) +
           "</text>\n";
}

std::string line_chart(const ShapeTable& t, const std::string& title) {
    const auto axis = axis_levels(t.inputs[0]);
    std::vector<double> xs;
    for (const auto& s : t.inputs[0]) {
        const auto k = axis.index_of(s);
        xs.push_back(axis.is_numeric ? axis.numeric[k] : static_cast<double>(k));
    }
    const auto [xmin_it, xmax_it] = std::minmax_element(xs.begin(), xs.end());
    const auto [ymin_it, ymax_it] = std::minmax_element(t.values.begin(), t.values.end());
    double x0 = *xmin_it, x1 = *xmax_it, y0 = *ymin_it, y1 = *ymax_it;
    if (x1 == x0) x1 = x0 + 1.0;
    if (y1 == y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto sx = [&](double x) { return kLeft + pw * (x - x0) / (x1 - x0); };
    auto sy = [&](double y) { return kTop + ph * (1.0 - (y - y0) / (y1 - y0)); };

    std::string out = header(title);
    out += "<rect x=\"" + px(kLeft) + "\" y=\"" + px(kTop) + "\" width=\"" + px(pw) + "\" height=\"" + px(ph) +
           "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double yv = y0 + (y1 - y0) * k / 4.0;
        out += "<text x=\"" + px(kLeft - 6) + "\" y=\"" + px(sy(yv) + 4) + "\" text-anchor=\"end\">" + num(yv) +
               "</text>\n";
        if (axis.is_numeric) {
            const double xv = x0 + (x1 - x0) * k / 4.0;
            out += "<text x=\"" + px(sx(xv)) + "\" y=\"" + px(kTop + ph + 18) + "\" text-anchor=\"middle\">" +
                   num(xv) + "</text>\n";
        }
    }
    if (!axis.is_numeric)
        for (std::size_t k = 0; k < axis.labels.size(); ++k)
            out += "<text x=\"" + px(sx(static_cast<double>(k))) + "\" y=\"" + px(kTop + ph + 18) +
                   "\" text-anchor=\"middle\">" + escape(axis.labels[k]) + "</text>\n";
    if (y0 < 0.0 && y1 > 0.0)
        out += "<line x1=\"" + px(kLeft) + "\" x2=\"" + px(kLeft + pw) + "\" y1=\"" + px(sy(0)) + "\" y2=\"" +
               px(sy(0)) + "\" stroke=\"#bbb\" stroke-dasharray=\"4 3\"/>\n";
    out += "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? " " : "") + px(sx(xs[i])) + "," + px(sy(t.values[i]));
    out += "\"/>\n";
    out += "<text x=\"" + px(kLeft + pw / 2) + "\" y=\"" + px(kHeight - 10) + "\" text-anchor=\"middle\">" +
           escape(t.input_names[0]) + "</text>\n</svg>\n";
    return out;
}

std::string heatmap(const ShapeTable& t, const std::string& title) {
    const auto ax = axis_levels(t.inputs[0]);
    const auto ay = axis_levels(t.inputs[1]);
    const auto [vmin_it, vmax_it] = std::minmax_element(t.values.begin(), t.values.end());
    const double v0 = *vmin_it, v1 = *vmax_it;
    const double legend = 60;
    const double pw = kWidth - kLeft - kRight - legend, ph = kHeight - kTop - kBottom;
    const double cw = pw / static_cast<double>(ax.labels.size());
    const double ch = ph / static_cast<double>(ay.labels.size());

    std::string out = header(title);
    for (std::size_t i = 0; i < t.values.size(); ++i) {
        const auto a = ax.index_of(t.inputs[0][i]);
        const auto b = ay.index_of(t.inputs[1][i]);
        const double u = v1 > v0 ? (t.values[i] - v0) / (v1 - v0) : 0.5;
        const auto c = colormap(u);
        char fill[8];
        std::snprintf(fill, sizeof fill, "#%02x%02x%02x", c[0], c[1], c[2]);
        out += "<rect x=\"" + px(kLeft + cw * static_cast<double>(a)) + "\" y=\"" +
               px(kTop + ph - ch * static_cast<double>(b + 1)) + "\" width=\"" + px(cw + 0.5) + "\" height=\"" +
               px(ch + 0.5) + "\" fill=\"" + fill + "\"/>\n";
    }
    auto tick_label = [](const AxisLevels& a, std::size_t k) {
        return a.is_numeric ? num(a.numeric[k]) : escape(a.labels[k]);
    };
    const std::size_t stride_x = std::max<std::size_t>(1, ax.labels.size() / 5);
    for (std::size_t k = 0; k < ax.labels.size(); k += stride_x)
        out += "<text x=\"" + px(kLeft + cw * (static_cast<double>(k) + 0.5)) + "\" y=\"" + px(kTop + ph + 18) +
               "\" text-anchor=\"middle\">" + tick_label(ax, k) + "</text>\n";
    const std::size_t stride_y = std::max<std::size_t>(1, ay.labels.size() / 5);
    for (std::size_t k = 0; k < ay.labels.size(); k += stride_y)
        out += "<text x=\"" + px(kLeft - 6) + "\" y=\"" + px(kTop + ph - ch * (static_cast<double>(k) + 0.5) + 4) +
               "\" text-anchor=\"end\">" + tick_label(ay, k) + "</text>\n";
    out += "<text x=\"" + px(kLeft + pw / 2) + "\" y=\"" + px(kHeight - 10) + "\" text-anchor=\"middle\">" +
           escape(t.input_names[0]) + "</text>\n";
    out += "<text x=\"16\" y=\"" + px(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
           px(kTop + ph / 2) + ")\">" + escape(t.input_names[1]) + "</text>\n";

    // Colour bar.
    const double bx = kLeft + pw + 15, bw = 14;
    for (int k = 0; k < 64; ++k) {
        const auto c = colormap(k / 63.0);
        char fill[8];
        std::snprintf(fill, sizeof fill, "#%02x%02x%02x", c[0], c[1], c[2]);
        out += "<rect x=\"" + px(bx) + "\" y=\"" + px(kTop + ph - ph * (k + 1) / 64.0) + "\" width=\"" + px(bw) +
               "\" height=\"" + px(ph / 64.0 + 0.5) + "\" fill=\"" + fill + "\"/>\n";
    }
    out += "<text x=\"" + px(bx + bw + 3) + "\" y=\"" + px(kTop + 8) + "\">" + num(v1) + "</text>\n";
    out += "<text x=\"" + px(bx + bw + 3) + "\" y=\"" + px(kTop + ph) + "\">" + num(v0) + "</text>\n</svg>\n";
    return out;
}

}  // namespace

ShapeTable parse_shape_table(std::string_view csv) {
    ShapeTable t;
    std::istringstream in{std::string(csv)};
    std::string line;
    if (!std::getline(in, line)) throw DataError("shape grid is empty");
    const auto head = split_line(line);
    if (head.size() < 2 || head.size() > 3 || head.back() != "value")
        throw DataError("shape grid header must be 'x,value' or 'x1,x2,value'");
    t.input_names.assign(head.begin(), head.end() - 1);
    t.inputs.resize(t.input_names.size());
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != head.size()) throw ParseError(row, "value", "wrong number of fields");
        for (std::size_t d = 0; d < t.inputs.size(); ++d) t.inputs[d].push_back(cells[d]);
        double v;
        if (!parse_number(cells.back(), v)) throw ParseError(row, "value", "not a number: '" + cells.back() + "'");
        t.values.push_back(v);
    }
    if (t.values.empty()) throw DataError("shape grid has no rows");
    return t;
}

std::array<unsigned char, 3> colormap(double t) {
    static constexpr double anchors[5][3] = {
        {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
    if (!(t >= 0.0)) t = 0.0;
    t = std::min(t, 1.0);
    const int step = static_cast<int>(std::lround(t * 255.0));
    const double pos = step / 255.0 * 4.0;
    const int k = std::min(3, static_cast<int>(pos));
    const double f = pos - k;
    std::array<unsigned char, 3> c{};
    for (int i = 0; i < 3; ++i)
        c[i] = static_cast<unsigned char>(std::lround(anchors[k][i] + f * (anchors[k + 1][i] - anchors[k][i])));
    return c;
}

std::string render_svg(const ShapeTable& table, const std::string& title) {
    if (table.values.empty()) throw DataError("nothing to plot");
    return table.input_names.size() == 1 ? line_chart(table, title) : heatmap(table, title);
}

}  // namespace anam
