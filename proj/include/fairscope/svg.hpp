#pragma once

#include <charconv>
#include <string>
#include <string_view>

#include "fairscope/error.hpp"
#include "fairscope/plot.hpp"

namespace fairscope {

namespace detail {

// Fixed two-decimal text, identical on every platform.
inline std::string svgNum(double v) {
  if (v == 0.0) v = 0.0;  // drop negative zero
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 2);
  std::string s(buf, res.ptr);
  if (s == "-0.00") s = "0.00";
  return s;
}

inline std::string xmlEscape(std::string_view in) {
  std::string out;
  out.reserve(in.size());
  for (char c : in) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default:
        // control characters are not allowed in XML 1.0
        if (static_cast<unsigned char>(c) < 0x20 && c != '\t' && c != '\n' && c != '\r')
          out += ' ';
        else
          out += c;
    }
  }
  return out;
}

inline constexpr const char* kPalette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a",
                                           "#66a61e", "#e6ab02", "#a6761d", "#666666"};

inline std::string colorFor(const std::string& styleKey) {
  std::size_t idx = 0;
  if (styleKey.size() > 1 && styleKey[0] == 's') {
    auto r = std::from_chars(styleKey.data() + 1, styleKey.data() + styleKey.size(), idx);
    if (r.ec != std::errc()) idx = 0;
  }
  return kPalette[idx % (sizeof kPalette / sizeof kPalette[0])];
}

inline std::string tickText(const Axis& a, std::size_t i) {
  if (i < a.tickLabels.size()) return a.tickLabels[i];
  double v = a.ticks[i];
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// Static SVG 1.1 rendering of a plot document.
inline std::string renderSvg(const PlotDocument& doc, int width = 720, int height = 480) {
  using detail::svgNum;
  if (width <= 0 || height <= 0) throw DataError("SVG dimensions must be positive");
  if (doc.layers.empty()) throw DataError("cannot render a plot with no layers");
  doc.validate();

  const double left = 70, right = 160, top = 40, bottom = 60;
  const double pw = width - left - right;
  const double ph = height - top - bottom;
  if (pw <= 0 || ph <= 0) throw DataError("SVG dimensions too small for the plot margins");
  const Axis& ax = doc.axes[0];
  const Axis& ay = doc.axes[1];
  auto sx = [&](double x) {
    return left + (ax.max > ax.min ? (x - ax.min) / (ax.max - ax.min) : 0.5) * pw;
  };
  auto sy = [&](double y) {
    return top + ph - (ay.max > ay.min ? (y - ay.min) / (ay.max - ay.min) : 0.5) * ph;
  };

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + std::to_string(width) +
       "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) + " " +
       std::to_string(height) + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(width) + "\" height=\"" +
       std::to_string(height) + "\" fill=\"white\"/>\n";
  s += "<text x=\"" + svgNum(width / 2.0) +
       "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
       detail::xmlEscape(doc.title) + "</text>\n";

  // axes
  s += "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n";
  s += "<line x1=\"" + svgNum(left) + "\" y1=\"" + svgNum(top + ph) + "\" x2=\"" + svgNum(left + pw) +
       "\" y2=\"" + svgNum(top + ph) + "\"/>\n";
  s += "<line x1=\"" + svgNum(left) + "\" y1=\"" + svgNum(top) + "\" x2=\"" + svgNum(left) +
       "\" y2=\"" + svgNum(top + ph) + "\"/>\n";
  for (double t : ax.ticks)
    s += "<line x1=\"" + svgNum(sx(t)) + "\" y1=\"" + svgNum(top + ph) + "\" x2=\"" + svgNum(sx(t)) +
         "\" y2=\"" + svgNum(top + ph + 5) + "\"/>\n";
  for (double t : ay.ticks)
    s += "<line x1=\"" + svgNum(left - 5) + "\" y1=\"" + svgNum(sy(t)) + "\" x2=\"" + svgNum(left) +
         "\" y2=\"" + svgNum(sy(t)) + "\"/>\n";
  s += "</g>\n";

  s += "<g class=\"ticks\" font-family=\"sans-serif\" font-size=\"10\" fill=\"black\">\n";
  for (std::size_t i = 0; i < ax.ticks.size(); ++i)
    s += "<text x=\"" + svgNum(sx(ax.ticks[i])) + "\" y=\"" + svgNum(top + ph + 18) +
         "\" text-anchor=\"middle\">" + detail::xmlEscape(detail::tickText(ax, i)) + "</text>\n";
  for (std::size_t i = 0; i < ay.ticks.size(); ++i)
    s += "<text x=\"" + svgNum(left - 8) + "\" y=\"" + svgNum(sy(ay.ticks[i]) + 3) +
         "\" text-anchor=\"end\">" + detail::xmlEscape(detail::tickText(ay, i)) + "</text>\n";
  s += "<text x=\"" + svgNum(left + pw / 2) + "\" y=\"" + svgNum(height - 15.0) +
       "\" text-anchor=\"middle\" font-size=\"12\">" + detail::xmlEscape(ax.label) + "</text>\n";
  s += "<text x=\"15\" y=\"" + svgNum(top + ph / 2) + "\" text-anchor=\"middle\" font-size=\"12\" " +
       "transform=\"rotate(-90 15 " + svgNum(top + ph / 2) + ")\">" + detail::xmlEscape(ay.label) +
       "</text>\n";
  s += "</g>\n";

  // layers
  s += "<g class=\"layers\">\n";
  for (const auto& layer : doc.layers) {
    const std::string color = detail::colorFor(layer.styleKey);
    const std::string group = detail::xmlEscape(layer.groupLabel);
    if (layer.kind == LayerKind::Points) {
      s += "<g class=\"points\" data-group=\"" + group + "\" fill=\"" + color + "\">\n";
      for (const auto& c : layer.coordinates)
        s += "<circle cx=\"" + svgNum(sx(c[0])) + "\" cy=\"" + svgNum(sy(c[1])) + "\" r=\"" +
             svgNum(layer.size / 2.0) + "\"/>\n";
      s += "</g>\n";
      continue;
    }
    s += "<polyline class=\"" + std::string(layerKindName(layer.kind)) + "\" data-group=\"" + group +
         "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" + svgNum(layer.size) +
         "\"" + (layer.kind == LayerKind::Polyline ? " stroke-opacity=\"0.5\"" : "") + " points=\"";
    for (std::size_t i = 0; i < layer.coordinates.size(); ++i) {
      if (i) s += ' ';
      s += svgNum(sx(layer.coordinates[i][0])) + "," + svgNum(sy(layer.coordinates[i][1]));
    }
    s += "\"/>\n";
  }
  s += "</g>\n";

  // legend
  s += "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t i = 0; i < doc.legend.size(); ++i) {
    const double y = top + 10 + 18.0 * static_cast<double>(i);
    const double x = left + pw + 15;
    s += "<rect x=\"" + svgNum(x) + "\" y=\"" + svgNum(y - 8) + "\" width=\"12\" height=\"12\" fill=\"" +
         detail::colorFor(doc.legend[i].styleKey) + "\"/>\n";
    s += "<text x=\"" + svgNum(x + 18) + "\" y=\"" + svgNum(y + 2) + "\">" +
         detail::xmlEscape(doc.legend[i].group) + "</text>\n";
  }
  s += "</g>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace fairscope
