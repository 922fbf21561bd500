#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include "ghostseg/commands.hpp"

namespace ghostseg {

namespace {

struct Style {
    const char* name;
    const char* color;
    bool cross;
};

Style truth_style(Label l) {
    switch (l) {
        case Label::Background: return {"background", "#9e9e9e", false};
        case Label::Pedestrian: return {"pedestrian", "#1f77b4", false};
        case Label::Cyclist: return {"cyclist", "#2ca02c", false};
        case Label::GhostPedestrian: return {"ghost pedestrian", "#d62728", false};
        case Label::GhostCyclist: return {"ghost cyclist", "#ff7f0e", false};
        case Label::Type1SecondBounce: return {"type-1 second bounce", "#9467bd", false};
    }
    return {"?", "#000000", false};
}

bool is_object_class(TrainClass c) { return c == TrainClass::Obj || c == TrainClass::Ped || c == TrainClass::Cycl; }

Style outcome_style(Label truth, int predicted, const Setup& setup) {
    const int t = remap_label(truth, setup);
    if (t == predicted) {
        if (is_real_object(truth)) return {"object correct", "#2ca02c", false};
        if (is_ghost(truth)) return {"ghost correct", "#1f77b4", false};
        return {"background correct", "#9e9e9e", false};
    }
    const TrainClass p = setup.classes[static_cast<std::size_t>(predicted)];
    if (is_ghost(truth) && is_object_class(p)) return {"ghost taken for object", "#d62728", true};
    if (is_real_object(truth)) return {"object misclassified", "#ff7f0e", true};
    if (is_ghost(truth)) return {"ghost misclassified", "#8c564b", true};
    return {"background misclassified", "#9467bd", true};
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string render_scene_svg(const SceneSpec& scene) {
    double xmin = 0.0, xmax = 10.0, ymin = -5.0, ymax = 5.0;
    auto grow = [&](const Vec2& p) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    };
    for (const auto& r : scene.reflectors) {
        grow(r.a);
        grow(r.b);
    }
    for (const auto& s : scene.sensors) grow(s.position);
    for (const auto& p : scene.points) grow(p.position);
    xmin -= 2.0;
    xmax += 2.0;
    ymin -= 2.0;
    ymax += 2.0;
    const double scale = std::clamp(1000.0 / std::max(xmax - xmin, ymax - ymin), 4.0, 40.0);
    const double legend_w = 230.0;
    const double top = 30.0;
    const double w = (xmax - xmin) * scale + legend_w;
    const double h = std::max((ymax - ymin) * scale, 200.0) + top;
    // Ego x points right, ego y points up.
    auto sx = [&](double x) { return num((x - xmin) * scale); };
    auto sy = [&](double y) { return num(top + (ymax - y) * scale); };

    const Setup* setup = scene.setup_id ? &setup_by_id(*scene.setup_id) : nullptr;
    std::vector<std::pair<std::string, Style>> legend;
    auto style_of = [&](const ScenePoint& p) {
        return setup && p.predicted ? outcome_style(p.point.label, *p.predicted, *setup) : truth_style(p.point.label);
    };
    if (setup) {
        std::set<std::string> seen;
        for (const auto& p : scene.points) seen.insert(style_of(p).name);
        for (const Style s :
             {Style{"object correct", "#2ca02c", false}, Style{"ghost correct", "#1f77b4", false},
              Style{"background correct", "#9e9e9e", false}, Style{"ghost taken for object", "#d62728", true},
              Style{"object misclassified", "#ff7f0e", true}, Style{"ghost misclassified", "#8c564b", true},
              Style{"background misclassified", "#9467bd", true}})
            if (seen.count(s.name)) legend.emplace_back(s.name, s);
    } else {
        bool type1 = false;
        for (const auto& p : scene.points) type1 = type1 || p.point.label == Label::Type1SecondBounce;
        for (Label l : kAllLabels)
            if (l != Label::Type1SecondBounce || type1) legend.emplace_back(truth_style(l).name, truth_style(l));
    }

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
        << "\" viewBox=\"0 0 " << num(w) << ' ' << num(h) << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
    svg << "<text x=\"8\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << escape(scene.title) << "</text>\n";
    for (double gx = std::ceil(xmin / 5.0) * 5.0; gx <= xmax; gx += 5.0)
        svg << "<line x1=\"" << sx(gx) << "\" y1=\"" << sy(ymax) << "\" x2=\"" << sx(gx) << "\" y2=\"" << sy(ymin)
            << "\" stroke=\"#eeeeee\" stroke-width=\"1\"/>\n";
    for (double gy = std::ceil(ymin / 5.0) * 5.0; gy <= ymax; gy += 5.0)
        svg << "<line x1=\"" << sx(xmin) << "\" y1=\"" << sy(gy) << "\" x2=\"" << sx(xmax) << "\" y2=\"" << sy(gy)
            << "\" stroke=\"#eeeeee\" stroke-width=\"1\"/>\n";
    svg << "<g id=\"reflectors\">\n";
    for (const auto& r : scene.reflectors)
        svg << "<line x1=\"" << sx(r.a.x) << "\" y1=\"" << sy(r.a.y) << "\" x2=\"" << sx(r.b.x) << "\" y2=\""
            << sy(r.b.y) << "\" stroke=\"#333333\" stroke-width=\"4\"/>\n";
    svg << "</g>\n<g id=\"ego\">\n";
    svg << "<rect x=\"" << sx(-4.5) << "\" y=\"" << sy(0.9) << "\" width=\"" << num(4.5 * scale) << "\" height=\""
        << num(1.8 * scale) << "\" fill=\"#cfd8dc\" stroke=\"#455a64\"/>\n";
    for (const auto& s : scene.sensors)
        svg << "<circle cx=\"" << sx(s.position.x) << "\" cy=\"" << sy(s.position.y)
            << "\" r=\"3\" fill=\"#000000\"/>\n";
    svg << "</g>\n<g id=\"points\">\n";
    for (const auto& p : scene.points) {
        const Style st = style_of(p);
        const double cx = (p.position.x - xmin) * scale;
        const double cy = top + (ymax - p.position.y) * scale;
        if (st.cross) {
            svg << "<path d=\"M" << num(cx - 3) << ' ' << num(cy - 3) << "L" << num(cx + 3) << ' ' << num(cy + 3)
                << "M" << num(cx - 3) << ' ' << num(cy + 3) << "L" << num(cx + 3) << ' ' << num(cy - 3)
                << "\" stroke=\"" << st.color << "\" stroke-width=\"1.5\"/>\n";
        } else {
            svg << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"2.5\" fill=\"" << st.color
                << "\"/>\n";
        }
    }
    svg << "</g>\n<g id=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
    const double lx = w - legend_w + 10.0;
    double ly = top + 10.0;
    for (const auto& [name, st] : legend) {
        if (st.cross)
            svg << "<path d=\"M" << num(lx) << ' ' << num(ly - 4) << "L" << num(lx + 8) << ' ' << num(ly + 4) << "M"
                << num(lx) << ' ' << num(ly + 4) << "L" << num(lx + 8) << ' ' << num(ly - 4) << "\" stroke=\""
                << st.color << "\" stroke-width=\"1.5\"/>\n";
        else
            svg << "<circle cx=\"" << num(lx + 4) << "\" cy=\"" << num(ly) << "\" r=\"4\" fill=\"" << st.color
                << "\"/>\n";
        svg << "<text x=\"" << num(lx + 16) << "\" y=\"" << num(ly + 4) << "\">" << escape(name) << "</text>\n";
        ly += 18.0;
    }
    svg << "</g>\n</svg>\n";
    return svg.str();
}

}  // namespace ghostseg
