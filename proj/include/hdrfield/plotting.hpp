#pragma once

#include <string>
#include <vector>

#include "hdrfield/image.hpp"
#include "hdrfield/tonemap.hpp"

namespace hdrfield {

// Minimal SVG line plots; enough for loss curves, CRF overlays and
// log-radiance histograms without a plotting dependency.
struct Series {
  std::string label;
  std::string color = "#1f77b4";
  std::vector<double> x, y;
};

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<Series>& series, bool log_y = false);

// Per-term training curves from a "step term value" log file.
void plot_loss_log(const std::string& log_path, const std::string& out_svg);

// Learned curve against an optional gamma reference.
void plot_crf(const CrfParams& crf, double reference_gamma,
              const std::string& out_svg);

// Smoothed log-radiance histograms (kernel-density style) of two HDR images;
// also writes the binned data as plain text next to the SVG.
void plot_hdr_histogram(const Image& pred, const Image& gt,
                        const std::string& out_svg);

}  // namespace hdrfield
