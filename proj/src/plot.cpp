#include "sbr/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sbr/errors.hpp"

namespace sbr {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 60, kRight = 150, kTop = 40, kBottom = 50;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string_view colour(Definition d) {
  switch (d) {
    case Definition::Ge28Weeks: return "#1f77b4";
    case Definition::Ge24Weeks: return "#9467bd";
    case Definition::Ge22Weeks: return "#ff7f0e";
    case Definition::Ge1000g: return "#8c564b";
    case Definition::Ge500g: return "#e377c2";
  }
  return "#000000";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

/// Maps data coordinates into the plotting rectangle.
struct Frame {
  double x0, x1, y0, y1;
  double x(double v) const { return kLeft + (v - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double y(double v) const { return kHeight - kBottom - (v - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

double nice_step(double span) {
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10.0 * mag;
}

void axes(std::ostream& out, const Frame& f, const std::string& y_label) {
  out << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(f.y(f.y0)) << "\" x2=\"" << fmt(kWidth - kRight)
      << "\" y2=\"" << fmt(f.y(f.y0)) << "\" stroke=\"#333\"/>\n";
  out << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(f.y(f.y0)) << "\" x2=\"" << fmt(kLeft) << "\" y2=\""
      << fmt(f.y(f.y1)) << "\" stroke=\"#333\"/>\n";
  const double ystep = nice_step(f.y1 - f.y0);
  for (double v = std::ceil(f.y0 / ystep) * ystep; v <= f.y1 + 1e-9; v += ystep) {
    out << "<line x1=\"" << fmt(kLeft - 4) << "\" y1=\"" << fmt(f.y(v)) << "\" x2=\"" << fmt(kLeft) << "\" y2=\""
        << fmt(f.y(v)) << "\" stroke=\"#333\"/>"
        << "<text x=\"" << fmt(kLeft - 7) << "\" y=\"" << fmt(f.y(v) + 4) << "\" font-size=\"11\" text-anchor=\"end\">"
        << fmt(v) << "</text>\n";
  }
  const double xstep = std::max(1.0, std::round(nice_step(f.x1 - f.x0)));
  for (double v = std::ceil(f.x0 / xstep) * xstep; v <= f.x1 + 1e-9; v += xstep) {
    out << "<line x1=\"" << fmt(f.x(v)) << "\" y1=\"" << fmt(f.y(f.y0)) << "\" x2=\"" << fmt(f.x(v)) << "\" y2=\""
        << fmt(f.y(f.y0) + 4) << "\" stroke=\"#333\"/>"
        << "<text x=\"" << fmt(f.x(v)) << "\" y=\"" << fmt(f.y(f.y0) + 17) << "\" font-size=\"11\" text-anchor=\"middle\">"
        << static_cast<long long>(v) << "</text>\n";
  }
  out << "<text x=\"16\" y=\"" << fmt((kTop + kHeight - kBottom) / 2) << "\" font-size=\"12\" transform=\"rotate(-90 16 "
      << fmt((kTop + kHeight - kBottom) / 2) << ")\" text-anchor=\"middle\">" << xml_escape(y_label) << "</text>\n";
}

std::string band_path(const Frame& f, const std::vector<const EstimateRow*>& rows, bool covariate) {
  std::ostringstream d;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = covariate ? rows[i]->covariate_only : rows[i]->sbr;
    d << (i == 0 ? "M" : "L") << fmt(f.x(rows[i]->year)) << ' ' << fmt(f.y(s.upper)) << ' ';
  }
  for (std::size_t i = rows.size(); i-- > 0;) {
    const auto& s = covariate ? rows[i]->covariate_only : rows[i]->sbr;
    d << "L" << fmt(f.x(rows[i]->year)) << ' ' << fmt(f.y(s.lower)) << ' ';
  }
  d << "Z";
  return d.str();
}

std::string line_path(const Frame& f, const std::vector<const EstimateRow*>& rows, bool covariate) {
  std::ostringstream d;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = covariate ? rows[i]->covariate_only : rows[i]->sbr;
    d << (i == 0 ? "M" : "L") << fmt(f.x(rows[i]->year)) << ' ' << fmt(f.y(s.median)) << ' ';
  }
  return d.str();
}

std::ofstream open_svg(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(kWidth) << "\" height=\"" << fmt(kHeight)
      << "\" viewBox=\"0 0 " << fmt(kWidth) << ' ' << fmt(kHeight) << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return out;
}

}  // namespace

void emit_country_plot(const std::string& country, const std::vector<EstimateRow>& estimates,
                       const std::vector<PlotPoint>& points, const std::filesystem::path& out_path) {
  std::vector<const EstimateRow*> rows;
  for (const auto& r : estimates) {
    if (r.country == country) rows.push_back(&r);
  }
  if (rows.empty()) throw std::invalid_argument("no estimates for country " + country);
  std::sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) { return a->year < b->year; });

  double ymax = 0.0;
  for (const auto* r : rows) ymax = std::max({ymax, r->sbr.upper, r->covariate_only.upper});
  for (const auto& p : points) ymax = std::max({ymax, p.raw, p.upper});
  Frame f{static_cast<double>(rows.front()->year), static_cast<double>(std::max(rows.back()->year, rows.front()->year + 1)),
          0.0, ymax * 1.08};

  auto out = open_svg(out_path);
  out << "<text x=\"" << fmt(kLeft) << "\" y=\"24\" font-size=\"15\" font-weight=\"bold\">" << xml_escape(country)
      << "</text>\n";
  axes(out, f, "Stillbirth rate (per 1000 total births)");
  out << "<path d=\"" << band_path(f, rows, true) << "\" fill=\"#2ca02c\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
  out << "<path d=\"" << band_path(f, rows, false) << "\" fill=\"#d62728\" fill-opacity=\"0.25\" stroke=\"none\"/>\n";
  out << "<path d=\"" << line_path(f, rows, true)
      << "\" fill=\"none\" stroke=\"#2ca02c\" stroke-width=\"2\" stroke-dasharray=\"6 4\"/>\n";
  out << "<path d=\"" << line_path(f, rows, false) << "\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";

  for (const auto& p : points) {
    const auto c = colour(p.definition);
    const double x = f.x(p.year);
    out << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(f.y(p.lower)) << "\" x2=\"" << fmt(x) << "\" y2=\""
        << fmt(f.y(p.upper)) << "\" stroke=\"" << c << "\"/>"
        << "<circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(f.y(p.adjusted)) << "\" r=\"4\" fill=\"" << c << "\"/>"
        << "<circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(f.y(p.raw)) << "\" r=\"4\" fill=\"none\" stroke=\"" << c
        << "\"/>\n";
  }

  // legend
  double ly = kTop + 10;
  const double lx = kWidth - kRight + 12;
  auto legend_text = [&](const std::string& label) {
    out << "<text x=\"" << fmt(lx + 22) << "\" y=\"" << fmt(ly + 4) << "\" font-size=\"11\">" << label << "</text>\n";
    ly += 18;
  };
  out << "<line x1=\"" << fmt(lx) << "\" y1=\"" << fmt(ly) << "\" x2=\"" << fmt(lx + 16) << "\" y2=\"" << fmt(ly)
      << "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
  legend_text("estimate");
  out << "<line x1=\"" << fmt(lx) << "\" y1=\"" << fmt(ly) << "\" x2=\"" << fmt(lx + 16) << "\" y2=\"" << fmt(ly)
      << "\" stroke=\"#2ca02c\" stroke-width=\"2\" stroke-dasharray=\"6 4\"/>\n";
  legend_text("covariate-based");
  for (const auto d : kAllDefinitions) {
    out << "<circle cx=\"" << fmt(lx + 8) << "\" cy=\"" << fmt(ly) << "\" r=\"4\" fill=\"" << colour(d) << "\"/>\n";
    legend_text(std::string(to_string(d)));
  }
  out << "<circle cx=\"" << fmt(lx + 8) << "\" cy=\"" << fmt(ly) << "\" r=\"4\" fill=\"none\" stroke=\"#333\"/>\n";
  legend_text("unadjusted");
  out << "</svg>\n";
}

void emit_pareto_k_plot(const std::vector<long long>& ids, const std::vector<double>& k,
                        const std::filesystem::path& out_path) {
  if (ids.size() != k.size()) throw std::invalid_argument("pareto k plot: ids and k differ in length");
  double kmax = 1.0, kmin = 0.0;
  for (double v : k) {
    if (std::isfinite(v)) {
      kmax = std::max(kmax, v);
      kmin = std::min(kmin, v);
    }
  }
  Frame f{0.0, static_cast<double>(std::max<std::size_t>(k.size(), 2) - 1), kmin - 0.05, kmax + 0.05};
  auto out = open_svg(out_path);
  out << "<text x=\"" << fmt(kLeft) << "\" y=\"24\" font-size=\"15\" font-weight=\"bold\">Pareto k diagnostics</text>\n";
  axes(out, f, "Pareto k");
  for (double ref : {0.5, 0.7}) {
    out << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(f.y(ref)) << "\" x2=\"" << fmt(kWidth - kRight) << "\" y2=\""
        << fmt(f.y(ref)) << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (!std::isfinite(k[i])) continue;
    const char* fill = k[i] > 0.7 ? "#d62728" : (k[i] > 0.5 ? "#ff7f0e" : "#1f77b4");
    out << "<circle cx=\"" << fmt(f.x(static_cast<double>(i))) << "\" cy=\"" << fmt(f.y(k[i])) << "\" r=\"3\" fill=\""
        << fill << "\"><title>id " << ids[i] << "</title></circle>\n";
  }
  out << "</svg>\n";
}

void write_plot_index(const std::vector<std::string>& countries, bool has_pareto_plot,
                      const std::filesystem::path& out_path) {
  if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
  std::ofstream out(out_path);
  if (!out) throw IoError("cannot write " + out_path.string());
  out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Stillbirth rate estimates</title></head><body>\n"
      << "<h1>Stillbirth rate estimates</h1>\n";
  if (has_pareto_plot) out << "<p><a href=\"pareto_k.svg\">Pareto k diagnostics</a></p>\n";
  for (const auto& c : countries) {
    const auto name = xml_escape(c);
    out << "<h2>" << name << "</h2>\n<img src=\"" << name << ".svg\" alt=\"" << name << "\">\n";
  }
  out << "</body></html>\n";
}

}  // namespace sbr
