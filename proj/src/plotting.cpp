#include "hdrfield/plotting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace hdrfield {

namespace {
constexpr int kW = 640, kH = 420, kMargin = 54;

double nice_min(double v) { return std::isfinite(v) ? v : 0.0; }
}  // namespace

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<Series>& series, bool log_y) {
  if (series.empty()) throw std::invalid_argument("plot: no series");
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const Series& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      double y = s.y[i];
      if (log_y) y = std::log10(std::max(y, 1e-12));
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, nice_min(y));
      ymax = std::max(ymax, nice_min(y));
    }
  }
  if (!(xmax > xmin)) xmax = xmin + 1.0;
  if (!(ymax > ymin)) ymax = ymin + 1.0;
  auto sx = [&](double x) {
    return kMargin + (x - xmin) / (xmax - xmin) * (kW - 2 * kMargin);
  };
  auto sy = [&](double y) {
    if (log_y) y = std::log10(std::max(y, 1e-12));
    return kH - kMargin - (y - ymin) / (ymax - ymin) * (kH - 2 * kMargin);
  };
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write plot: " + path);
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='"
     << kH << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << kW / 2 << "' y='20' text-anchor='middle' "
     << "font-family='sans-serif' font-size='14'>" << title << "</text>\n";
  os << "<line x1='" << kMargin << "' y1='" << kH - kMargin << "' x2='"
     << kW - kMargin << "' y2='" << kH - kMargin << "' stroke='black'/>\n";
  os << "<line x1='" << kMargin << "' y1='" << kMargin << "' x2='" << kMargin
     << "' y2='" << kH - kMargin << "' stroke='black'/>\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", xmin);
  os << "<text x='" << kMargin << "' y='" << kH - kMargin + 16
     << "' font-size='11' font-family='sans-serif'>" << buf << "</text>\n";
  std::snprintf(buf, sizeof(buf), "%.3g", xmax);
  os << "<text x='" << kW - kMargin << "' y='" << kH - kMargin + 16
     << "' text-anchor='end' font-size='11' font-family='sans-serif'>" << buf
     << "</text>\n";
  std::snprintf(buf, sizeof(buf), log_y ? "1e%.1f" : "%.3g", ymin);
  os << "<text x='" << kMargin - 4 << "' y='" << kH - kMargin
     << "' text-anchor='end' font-size='11' font-family='sans-serif'>" << buf
     << "</text>\n";
  std::snprintf(buf, sizeof(buf), log_y ? "1e%.1f" : "%.3g", ymax);
  os << "<text x='" << kMargin - 4 << "' y='" << kMargin + 4
     << "' text-anchor='end' font-size='11' font-family='sans-serif'>" << buf
     << "</text>\n";
  int legend_y = kMargin;
  for (const Series& s : series) {
    os << "<polyline fill='none' stroke='" << s.color
       << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      os << sx(s.x[i]) << "," << sy(s.y[i]) << " ";
    }
    os << "'/>\n";
    os << "<text x='" << kW - kMargin + 4 << "' y='" << legend_y
       << "' font-size='11' font-family='sans-serif' fill='" << s.color << "'>"
       << s.label << "</text>\n";
    legend_y += 14;
  }
  os << "</svg>\n";
}

void plot_loss_log(const std::string& log_path, const std::string& out_svg) {
  std::ifstream is(log_path);
  if (!is) throw std::invalid_argument("missing loss log: " + log_path);
  std::map<std::string, Series> by_term;
  const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                           "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                           "#bcbd22", "#17becf", "#111111"};
  std::int64_t step;
  std::string term;
  double value;
  int color_idx = 0;
  while (is >> step >> term >> value) {
    auto [it, inserted] = by_term.try_emplace(term);
    if (inserted) {
      it->second.label = term;
      it->second.color = palette[color_idx++ % 11];
    }
    it->second.x.push_back(static_cast<double>(step));
    it->second.y.push_back(value);
  }
  if (by_term.empty()) throw std::invalid_argument("empty loss log");
  std::vector<Series> series;
  for (auto& [name, s] : by_term) series.push_back(std::move(s));
  write_svg_plot(out_svg, "training losses", series, /*log_y=*/true);
}

void plot_crf(const CrfParams& crf, double reference_gamma,
              const std::string& out_svg) {
  const Eigen::MatrixXd y = crf_control_points(crf);
  std::vector<Series> series;
  const char* colors[3] = {"#d62728", "#2ca02c", "#1f77b4"};
  const char* names[3] = {"learned R", "learned G", "learned B"};
  for (int c = 0; c < 3; ++c) {
    Series s;
    s.label = names[c];
    s.color = colors[c];
    for (int k = 0; k < CrfParams::kControlPoints; ++k) {
      s.x.push_back(k / (CrfParams::kControlPoints - 1.0));
      s.y.push_back(y(k, c));
    }
    series.push_back(std::move(s));
  }
  if (reference_gamma > 0.0) {
    Series ref;
    ref.label = "reference";
    ref.color = "#7f7f7f";
    for (int k = 0; k < CrfParams::kControlPoints; ++k) {
      const double x = k / (CrfParams::kControlPoints - 1.0);
      ref.x.push_back(x);
      ref.y.push_back(std::pow(x, 1.0 / reference_gamma));
    }
    series.push_back(std::move(ref));
  }
  write_svg_plot(out_svg, "camera response", series);
}

void plot_hdr_histogram(const Image& pred, const Image& gt,
                        const std::string& out_svg) {
  constexpr int kBins = 96;
  constexpr double kLogMin = -9.0, kLogMax = 4.0;  // natural-log radiance
  auto histogram = [&](const Image& img) {
    std::vector<double> h(kBins, 0.0);
    for (double v : img.data) {
      const double lv = std::log(std::max(v, 1e-9));
      const double u = (lv - kLogMin) / (kLogMax - kLogMin) * (kBins - 1);
      const int b = std::clamp(static_cast<int>(u), 0, kBins - 1);
      h[b] += 1.0;
    }
    // Gaussian smoothing: the kernel-density style view.
    std::vector<double> s(kBins, 0.0);
    for (int i = 0; i < kBins; ++i) {
      double norm = 0.0;
      for (int j = std::max(0, i - 6); j < std::min(kBins, i + 7); ++j) {
        const double w = std::exp(-0.5 * sq((i - j) / 2.0));
        s[i] += w * h[j];
        norm += w;
      }
      s[i] /= norm;
    }
    const double total = static_cast<double>(img.data.size());
    for (double& v : s) v /= total;
    return s;
  };
  const std::vector<double> hp = histogram(pred);
  const std::vector<double> hg = histogram(gt);
  Series sp, sg;
  sp.label = "reconstruction";
  sp.color = "#d62728";
  sg.label = "ground truth";
  sg.color = "#1f77b4";
  for (int b = 0; b < kBins; ++b) {
    const double x = kLogMin + (kLogMax - kLogMin) * b / (kBins - 1.0);
    sp.x.push_back(x);
    sp.y.push_back(hp[b]);
    sg.x.push_back(x);
    sg.y.push_back(hg[b]);
  }
  write_svg_plot(out_svg, "log-radiance histogram", {sp, sg});
  std::ofstream data(out_svg + ".txt");
  data.precision(12);
  for (int b = 0; b < kBins; ++b) {
    data << sp.x[b] << " " << sp.y[b] << " " << sg.y[b] << "\n";
  }
}

}  // namespace hdrfield
