// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The bbs authors

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bbs/beams.hpp"
#include "bbs/common.hpp"
#include "bbs/evaluation.hpp"
#include "bbs/sitegen.hpp"
#include "bbs/stats.hpp"

namespace bbs::plots {

namespace fs = std::filesystem;

/// Gain-versus-angle scan |a(phi)^H w|^2 on a 1 degree grid over [-90, 90].
inline Eigen::VectorXd scan_beam_pattern(const sitegen::ArrayConfig& array, const beams::BeamformingVector& w) {
    Eigen::VectorXd pattern(181);
    for (int i = 0; i <= 180; ++i) {
        const double phi = static_cast<double>(i - 90);
        const auto a = sitegen::steering_vector(array, phi);
        pattern[i] = std::norm(a.dot(w.w));
    }
    return pattern;
}

/// Indices of strict local maxima (plateaus count once, at their left edge).
inline std::vector<int> find_peaks(const Eigen::VectorXd& y) {
    std::vector<int> peaks;
    const int n = static_cast<int>(y.size());
    for (int i = 0; i < n; ++i) {
        const double left = (i == 0) ? -std::numeric_limits<double>::infinity() : y[i - 1];
        int j = i;
        while (j + 1 < n && y[j + 1] == y[i]) ++j;
        const double right = (j == n - 1) ? -std::numeric_limits<double>::infinity() : y[j + 1];
        if (y[i] > left && y[i] > right) peaks.push_back(i);
        i = j;
    }
    return peaks;
}

struct Series {
    std::string label;
    std::vector<double> x, y;
};

struct Figure {
    std::string title, xlabel, ylabel;
    std::vector<Series> series;
};

enum class PlotFormat { svg, ppm };

inline const char* plot_extension(PlotFormat f) { return f == PlotFormat::svg ? "svg" : "ppm"; }

namespace detail {

inline constexpr int kWidth = 640, kHeight = 480;
inline constexpr int kMarginL = 64, kMarginR = 16, kMarginT = 32, kMarginB = 48;

inline const std::array<std::array<uint8_t, 3>, 8>& palette() {
    static const std::array<std::array<uint8_t, 3>, 8> p{{{31, 119, 180},
                                                          {255, 127, 14},
                                                          {44, 160, 44},
                                                          {214, 39, 40},
                                                          {148, 103, 189},
                                                          {140, 86, 75},
                                                          {227, 119, 194},
                                                          {127, 127, 127}}};
    return p;
}

struct Range {
    double lo = 0.0, hi = 1.0;
    double clamp(double v) const { return std::min(hi, std::max(lo, v)); }
};

inline Range data_range(const Figure& fig, bool horizontal) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& s : fig.series) {
        for (double v : (horizontal ? s.x : s.y)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (!std::isfinite(lo) || !std::isfinite(hi)) return {0.0, 1.0};
    if (lo == hi) {
        lo -= 1.0;
        hi += 1.0;
    }
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

inline double map_x(double v, const Range& r) {
    return kMarginL + (v - r.lo) / (r.hi - r.lo) * (kWidth - kMarginL - kMarginR);
}

inline double map_y(double v, const Range& r) {
    return kHeight - kMarginB - (v - r.lo) / (r.hi - r.lo) * (kHeight - kMarginT - kMarginB);
}

inline std::string fmt_coord(double v) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << v;
    return os.str();
}

inline std::string fmt_tick(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace detail

inline void render_svg(const Figure& fig, const std::string& path) {
    using namespace detail;
    require(!fig.series.empty(), "render_svg: figure has no series");
    const Range rx = data_range(fig, true);
    const Range ry = data_range(fig, false);
    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
    svg << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"14\">"
        << xml_escape(fig.title) << "</text>\n";
    // axes
    svg << "<line x1=\"" << kMarginL << "\" y1=\"" << kHeight - kMarginB << "\" x2=\"" << kWidth - kMarginR << "\" y2=\""
        << kHeight - kMarginB << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << kMarginL << "\" y1=\"" << kMarginT << "\" x2=\"" << kMarginL << "\" y2=\"" << kHeight - kMarginB
        << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = rx.lo + (rx.hi - rx.lo) * i / 4.0;
        const double fy = ry.lo + (ry.hi - ry.lo) * i / 4.0;
        const double px = map_x(fx, rx);
        const double py = map_y(fy, ry);
        svg << "<line x1=\"" << fmt_coord(px) << "\" y1=\"" << kHeight - kMarginB << "\" x2=\"" << fmt_coord(px) << "\" y2=\""
            << kHeight - kMarginB + 4 << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << fmt_coord(px) << "\" y=\"" << kHeight - kMarginB + 18
            << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"11\">" << fmt_tick(fx) << "</text>\n";
        svg << "<line x1=\"" << kMarginL - 4 << "\" y1=\"" << fmt_coord(py) << "\" x2=\"" << kMarginL << "\" y2=\"" << fmt_coord(py)
            << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << kMarginL - 8 << "\" y=\"" << fmt_coord(py + 4)
            << "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"11\">" << fmt_tick(fy) << "</text>\n";
    }
    svg << "<text x=\"" << (kMarginL + kWidth - kMarginR) / 2 << "\" y=\"" << kHeight - 8
        << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\">" << xml_escape(fig.xlabel) << "</text>\n";
    svg << "<text x=\"14\" y=\"" << (kMarginT + kHeight - kMarginB) / 2 << "\" text-anchor=\"middle\" font-family=\"monospace\""
        << " font-size=\"12\" transform=\"rotate(-90 14 " << (kMarginT + kHeight - kMarginB) / 2 << ")\">" << xml_escape(fig.ylabel)
        << "</text>\n";
    for (size_t si = 0; si < fig.series.size(); ++si) {
        const auto& s = fig.series[si];
        const auto& c = detail::palette()[si % detail::palette().size()];
        std::ostringstream color;
        color << "rgb(" << int(c[0]) << ',' << int(c[1]) << ',' << int(c[2]) << ')';
        svg << "<polyline fill=\"none\" stroke=\"" << color.str() << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (i) svg << ' ';
            svg << fmt_coord(map_x(rx.clamp(s.x[i]), rx)) << ',' << fmt_coord(map_y(ry.clamp(s.y[i]), ry));
        }
        svg << "\"/>\n";
        const int ly = kMarginT + 16 * static_cast<int>(si);
        svg << "<line x1=\"" << kWidth - kMarginR - 150 << "\" y1=\"" << ly << "\" x2=\"" << kWidth - kMarginR - 130 << "\" y2=\"" << ly
            << "\" stroke=\"" << color.str() << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << kWidth - kMarginR - 125 << "\" y=\"" << ly + 4 << "\" font-family=\"monospace\" font-size=\"11\">"
            << xml_escape(s.label) << "</text>\n";
    }
    svg << "</svg>\n";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("render_svg: cannot open " + path);
    out << svg.str();
}

inline void render_ppm(const Figure& fig, const std::string& path) {
    using namespace detail;
    require(!fig.series.empty(), "render_ppm: figure has no series");
    const Range rx = data_range(fig, true);
    const Range ry = data_range(fig, false);
    std::vector<uint8_t> img(static_cast<size_t>(kWidth) * kHeight * 3, 255);
    auto put = [&](int x, int y, const std::array<uint8_t, 3>& c) {
        if (x < 0 || x >= kWidth || y < 0 || y >= kHeight) return;
        const size_t o = (static_cast<size_t>(y) * kWidth + static_cast<size_t>(x)) * 3;
        img[o] = c[0];
        img[o + 1] = c[1];
        img[o + 2] = c[2];
    };
    auto line = [&](int x0, int y0, int x1, int y1, const std::array<uint8_t, 3>& c) {
        const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            put(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    };
    const std::array<uint8_t, 3> black{0, 0, 0};
    line(kMarginL, kHeight - kMarginB, kWidth - kMarginR, kHeight - kMarginB, black);
    line(kMarginL, kMarginT, kMarginL, kHeight - kMarginB, black);
    for (size_t si = 0; si < fig.series.size(); ++si) {
        const auto& s = fig.series[si];
        const auto& c = detail::palette()[si % detail::palette().size()];
        for (size_t i = 0; i + 1 < s.x.size(); ++i) {
            line(static_cast<int>(std::lround(map_x(rx.clamp(s.x[i]), rx))), static_cast<int>(std::lround(map_y(ry.clamp(s.y[i]), ry))),
                 static_cast<int>(std::lround(map_x(rx.clamp(s.x[i + 1]), rx))),
                 static_cast<int>(std::lround(map_y(ry.clamp(s.y[i + 1]), ry))), c);
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("render_ppm: cannot open " + path);
    out << "P6\n" << kWidth << ' ' << kHeight << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
}

inline void render(const Figure& fig, const std::string& path, PlotFormat fmt) {
    if (fmt == PlotFormat::svg) {
        render_svg(fig, path);
    } else {
        render_ppm(fig, path);
    }
}

/// Renders the figure analogues a sweep CSV supports: median normalized gain
/// versus Q (noiseless cells) and versus SNR (noisy cells). Returns the files
/// written. Same CSV in, same bytes out.
inline std::vector<std::string> emit_plots(const std::string& csv_path, const std::string& out_dir, PlotFormat fmt = PlotFormat::svg) {
    const auto records = evaluation::read_gain_csv(csv_path);
    if (records.empty()) throw FormatError("emit_plots: no records in " + csv_path);
    fs::create_directories(out_dir);
    std::vector<std::string> written;

    // label -> x -> gains; map keeps series and points ordered
    std::map<std::string, std::map<double, std::vector<double>>> by_q, by_snr;
    for (const auto& r : records) {
        if (!r.snr_db) {
            std::string label = r.method;
            if (r.method == evaluation::kMethodBbs) label += " M=" + std::to_string(r.m);
            if (r.method == evaluation::kMethodMrt) continue;
            by_q[label][static_cast<double>(r.q)].push_back(r.norm_gain_db);
        } else {
            std::string label = r.method;
            if (r.method == evaluation::kMethodBbs) label += " M=" + std::to_string(r.m) + " Q=" + std::to_string(r.q);
            if (r.method == evaluation::kMethodDiscriminative) label += " Q=" + std::to_string(r.q);
            by_snr[label][*r.snr_db].push_back(r.norm_gain_db);
        }
    }

    auto build = [](const std::map<std::string, std::map<double, std::vector<double>>>& groups) {
        std::vector<Series> out;
        for (const auto& [label, points] : groups) {
            Series s;
            s.label = label;
            for (const auto& [x, gains] : points) {
                s.x.push_back(x);
                s.y.push_back(stats::median(gains));
            }
            out.push_back(std::move(s));
        }
        return out;
    };

    if (!by_q.empty()) {
        Figure fig;
        fig.title = "Median normalized gain vs probing beams";
        fig.xlabel = "Q (probing beams)";
        fig.ylabel = "normalized gain (dB)";
        fig.series = build(by_q);
        const std::string path = (fs::path(out_dir) / (std::string("gain_vs_q.") + plot_extension(fmt))).string();
        render(fig, path, fmt);
        written.push_back(path);
    }
    if (!by_snr.empty()) {
        Figure fig;
        fig.title = "Median normalized gain vs prompt SNR";
        fig.xlabel = "SNR (dB)";
        fig.ylabel = "normalized gain (dB)";
        fig.series = build(by_snr);
        const std::string path = (fs::path(out_dir) / (std::string("gain_vs_snr.") + plot_extension(fmt))).string();
        render(fig, path, fmt);
        written.push_back(path);
    }
    if (written.empty()) throw FormatError("emit_plots: no plottable cells in " + csv_path);
    return written;
}

/// Beam-pattern figure for a set of labeled beams on one array.
inline std::string emit_beam_pattern(const sitegen::ArrayConfig& array, const std::vector<std::pair<std::string, beams::BeamformingVector>>& labeled,
                                     const std::string& out_path, PlotFormat fmt = PlotFormat::svg) {
    require(!labeled.empty(), "emit_beam_pattern: no beams");
    Figure fig;
    fig.title = "Beam pattern scan";
    fig.xlabel = "azimuth (deg)";
    fig.ylabel = "gain (dB)";
    for (const auto& [label, w] : labeled) {
        const auto pattern = scan_beam_pattern(array, w);
        Series s;
        s.label = label;
        for (int i = 0; i <= 180; ++i) {
            s.x.push_back(static_cast<double>(i - 90));
            s.y.push_back(linear_to_db(std::max(pattern[i], 1e-12)));
        }
        fig.series.push_back(std::move(s));
    }
    render(fig, out_path, fmt);
    return out_path;
}

}  // namespace bbs::plots
