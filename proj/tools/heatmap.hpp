#pragma once

#include <algorithm>
#include <cstdio>
#include <string>

#include "lareqa/bias.hpp"

namespace lareqa::report {

inline std::string escape_xml(std::string_view s) {
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

/// White-to-blue heatmap of a language matrix as a standalone SVG document.
/// Values are clamped to [0, 1]; absent cells are hatched grey.
inline std::string heatmap_svg(const LanguageMatrix& m, std::string_view title) {
  const int cell = 44, left = 56, top = 64;
  const int n = static_cast<int>(m.languages.size());
  const int width = left + n * cell + 16, height = top + n * cell + 40;
  std::string svg;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                "font-family=\"sans-serif\" font-size=\"11\">\n",
                width, height);
  svg += buf;
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"20\" font-size=\"14\">", left);
  svg += buf + escape_xml(title) + "</text>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"40\" fill=\"#555\">rows: question language, columns: answer language</text>\n", left);
  svg += buf;
  for (int i = 0; i < n; ++i) {
    const std::string code = escape_xml(m.languages[i].str());
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">", left + i * cell + cell / 2, top - 6);
    svg += buf + code + "</text>\n";
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" text-anchor=\"end\">", left - 6, top + i * cell + cell / 2 + 4);
    svg += buf + code + "</text>\n";
  }
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const int x = left + c * cell, y = top + r * cell;
      const auto& v = m.values[r][c];
      if (!v) {
        std::snprintf(buf, sizeof buf,
                      "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"#ddd\" stroke=\"white\"/>\n",
                      x, y, cell, cell);
        svg += buf;
        continue;
      }
      const double t = std::clamp(*v, 0.0, 1.0);
      const int red = static_cast<int>(247 - t * (247 - 8));
      const int green = static_cast<int>(251 - t * (251 - 48));
      const int blue = static_cast<int>(255 - t * (255 - 107));
      std::snprintf(buf, sizeof buf,
                    "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"rgb(%d,%d,%d)\" stroke=\"white\"/>\n",
                    x, y, cell, cell, red, green, blue);
      svg += buf;
      std::snprintf(buf, sizeof buf,
                    "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\" fill=\"%s\">%.2f</text>\n", x + cell / 2,
                    y + cell / 2 + 4, t > 0.5 ? "white" : "black", *v);
      svg += buf;
    }
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace lareqa::report
