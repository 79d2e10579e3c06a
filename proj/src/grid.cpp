#include "instancegen/grid.hpp"

#include "instancegen/common.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

namespace instancegen {

// --- common.hpp bits (logging + file helpers live here to keep the build flat)

namespace {
std::mutex g_log_mutex;
LogSink g_log_sink;
LogLevel g_log_level = LogLevel::Info;

const char* level_tag(LogLevel l) {
    switch (l) {
        case LogLevel::Debug: return "debug";
        case LogLevel::Info: return "info";
        case LogLevel::Warn: return "warn";
        case LogLevel::Error: return "error";
    }
    return "?";
}
}  // namespace

void set_log_sink(LogSink sink) {
    std::lock_guard lock(g_log_mutex);
    g_log_sink = std::move(sink);
}

void set_log_level(LogLevel min_level) { g_log_level = min_level; }

void log_message(LogLevel level, const std::string& msg) {
    if (int(level) < int(g_log_level)) return;
    std::lock_guard lock(g_log_mutex);
    if (g_log_sink) {
        g_log_sink(level, msg);
    } else {
        std::cerr << "[" << level_tag(level) << "] " << msg << "\n";
    }
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file: " + path);
    out << content;
}

std::string find_data_file(const std::string& relative) {
    {
        std::ifstream probe(relative);
        if (probe) return relative;
    }
#ifdef INSTANCEGEN_SOURCE_DIR
    std::string in_tree = std::string(INSTANCEGEN_SOURCE_DIR) + "/" + relative;
    std::ifstream probe(in_tree);
    if (probe) return in_tree;
#endif
    throw ValidationError("data file not found: " + relative);
}

// --- resampling --------------------------------------------------------------

namespace {
inline Eigen::Index nn_source_index(Eigen::Index dst, Eigen::Index dst_n, Eigen::Index src_n) {
    // center-of-cell mapping: src = floor((dst + 0.5) * src_n / dst_n)
    Eigen::Index s = Eigen::Index((double(dst) + 0.5) * double(src_n) / double(dst_n));
    return std::clamp<Eigen::Index>(s, 0, src_n - 1);
}
}  // namespace

MaskGrid resample_mask_nn(const MaskGrid& src, Eigen::Index rows, Eigen::Index cols) {
    MaskGrid out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        Eigen::Index sr = nn_source_index(r, rows, src.rows());
        for (Eigen::Index c = 0; c < cols; ++c) {
            out(r, c) = src(sr, nn_source_index(c, cols, src.cols()));
        }
    }
    return out;
}

GridD resample_grid_nn(const GridD& src, Eigen::Index rows, Eigen::Index cols) {
    GridD out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        Eigen::Index sr = nn_source_index(r, rows, src.rows());
        for (Eigen::Index c = 0; c < cols; ++c) {
            out(r, c) = src(sr, nn_source_index(c, cols, src.cols()));
        }
    }
    return out;
}

GridD resample_grid_bilinear(const GridD& src, Eigen::Index rows, Eigen::Index cols) {
    GridD out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        double fr = (double(r) + 0.5) * double(src.rows()) / double(rows) - 0.5;
        fr = std::clamp(fr, 0.0, double(src.rows() - 1));
        Eigen::Index r0 = Eigen::Index(std::floor(fr));
        Eigen::Index r1 = std::min(r0 + 1, src.rows() - 1);
        double wr = fr - double(r0);
        for (Eigen::Index c = 0; c < cols; ++c) {
            double fc = (double(c) + 0.5) * double(src.cols()) / double(cols) - 0.5;
            fc = std::clamp(fc, 0.0, double(src.cols() - 1));
            Eigen::Index c0 = Eigen::Index(std::floor(fc));
            Eigen::Index c1 = std::min(c0 + 1, src.cols() - 1);
            double wc = fc - double(c0);
            out(r, c) = (1 - wr) * ((1 - wc) * src(r0, c0) + wc * src(r0, c1)) +
                        wr * ((1 - wc) * src(r1, c0) + wc * src(r1, c1));
        }
    }
    return out;
}

Pixel map_pixel(Pixel p, Eigen::Index src_rows, Eigen::Index src_cols,
                Eigen::Index dst_rows, Eigen::Index dst_cols) {
    auto scale = [](int v, Eigen::Index src_n, Eigen::Index dst_n) {
        Eigen::Index d = Eigen::Index((double(v) + 0.5) * double(dst_n) / double(src_n));
        return int(std::clamp<Eigen::Index>(d, 0, dst_n - 1));
    };
    return Pixel{scale(p.row, src_rows, dst_rows), scale(p.col, src_cols, dst_cols)};
}

// --- morphology --------------------------------------------------------------

MaskGrid erode3x3(const MaskGrid& m) {
    MaskGrid out = make_mask(m.rows(), m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (!m(r, c)) continue;
            bool keep = r > 0 && c > 0 && r + 1 < m.rows() && c + 1 < m.cols();
            for (Eigen::Index dr = -1; keep && dr <= 1; ++dr)
                for (Eigen::Index dc = -1; keep && dc <= 1; ++dc)
                    if (!m(r + dr, c + dc)) keep = false;
            out(r, c) = keep ? 1 : 0;
        }
    }
    return out;
}

MaskGrid dilate3x3(const MaskGrid& m) {
    MaskGrid out = make_mask(m.rows(), m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (!m(r, c)) continue;
            for (Eigen::Index dr = -1; dr <= 1; ++dr) {
                for (Eigen::Index dc = -1; dc <= 1; ++dc) {
                    Eigen::Index rr = r + dr, cc = c + dc;
                    if (rr >= 0 && cc >= 0 && rr < m.rows() && cc < m.cols()) out(rr, cc) = 1;
                }
            }
        }
    }
    return out;
}

int chebyshev_distance(const MaskGrid& a, const MaskGrid& b) {
    std::vector<Pixel> pa, pb;
    for (Eigen::Index r = 0; r < a.rows(); ++r)
        for (Eigen::Index c = 0; c < a.cols(); ++c)
            if (a(r, c)) pa.push_back({int(r), int(c)});
    for (Eigen::Index r = 0; r < b.rows(); ++r)
        for (Eigen::Index c = 0; c < b.cols(); ++c)
            if (b(r, c)) pb.push_back({int(r), int(c)});
    int best = int(a.rows() + a.cols());
    if (pa.empty() || pb.empty()) return best;
    for (const auto& p : pa)
        for (const auto& q : pb)
            best = std::min(best, std::max(std::abs(p.row - q.row), std::abs(p.col - q.col)));
    return best;
}

// --- components and geometry --------------------------------------------------

std::vector<MaskGrid> connected_components(const MaskGrid& m) {
    std::vector<MaskGrid> out;
    MaskGrid seen = make_mask(m.rows(), m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (!m(r, c) || seen(r, c)) continue;
            MaskGrid comp = make_mask(m.rows(), m.cols());
            std::deque<Pixel> queue{{int(r), int(c)}};
            seen(r, c) = 1;
            while (!queue.empty()) {
                Pixel p = queue.front();
                queue.pop_front();
                comp(p.row, p.col) = 1;
                const int dr[4] = {-1, 1, 0, 0};
                const int dc[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    int rr = p.row + dr[k], cc = p.col + dc[k];
                    if (rr < 0 || cc < 0 || rr >= m.rows() || cc >= m.cols()) continue;
                    if (!m(rr, cc) || seen(rr, cc)) continue;
                    seen(rr, cc) = 1;
                    queue.push_back({rr, cc});
                }
            }
            out.push_back(std::move(comp));
        }
    }
    return out;
}

MaskGrid component_at(const MaskGrid& m, Pixel p) {
    if (p.row < 0 || p.col < 0 || p.row >= m.rows() || p.col >= m.cols() || !m(p.row, p.col))
        return make_mask(m.rows(), m.cols());
    MaskGrid comp = make_mask(m.rows(), m.cols());
    MaskGrid seen = make_mask(m.rows(), m.cols());
    std::deque<Pixel> queue{p};
    seen(p.row, p.col) = 1;
    while (!queue.empty()) {
        Pixel q = queue.front();
        queue.pop_front();
        comp(q.row, q.col) = 1;
        const int dr[4] = {-1, 1, 0, 0};
        const int dc[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
            int rr = q.row + dr[k], cc = q.col + dc[k];
            if (rr < 0 || cc < 0 || rr >= m.rows() || cc >= m.cols()) continue;
            if (!m(rr, cc) || seen(rr, cc)) continue;
            seen(rr, cc) = 1;
            queue.push_back({rr, cc});
        }
    }
    return comp;
}

std::pair<double, double> mask_centroid(const MaskGrid& m) {
    double sr = 0, sc = 0;
    std::int64_t n = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (!m(r, c)) continue;
            sr += double(r) + 0.5;
            sc += double(c) + 0.5;
            ++n;
        }
    }
    if (n == 0) throw Error("centroid of empty mask");
    return {sr / double(n), sc / double(n)};
}

MaskGrid translate_mask_to(const MaskGrid& m, Pixel center) {
    int rmin = int(m.rows()), rmax = -1, cmin = int(m.cols()), cmax = -1;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (!m(r, c)) continue;
            rmin = std::min(rmin, int(r));
            rmax = std::max(rmax, int(r));
            cmin = std::min(cmin, int(c));
            cmax = std::max(cmax, int(c));
        }
    }
    MaskGrid out = make_mask(m.rows(), m.cols());
    if (rmax < 0) return out;
    int dr = center.row - (rmin + rmax) / 2;
    int dc = center.col - (cmin + cmax) / 2;
    for (int r = rmin; r <= rmax; ++r) {
        for (int c = cmin; c <= cmax; ++c) {
            if (!m(r, c)) continue;
            int rr = r + dr, cc = c + dc;
            if (rr >= 0 && cc >= 0 && rr < m.rows() && cc < m.cols()) out(rr, cc) = 1;
        }
    }
    return out;
}

// --- run-length encoding -------------------------------------------------------

std::vector<RleRun> rle_encode(const MaskGrid& m) {
    std::vector<RleRun> runs;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Eigen::Index c = 0;
        while (c < m.cols()) {
            if (!m(r, c)) {
                ++c;
                continue;
            }
            Eigen::Index start = c;
            while (c < m.cols() && m(r, c)) ++c;
            runs.push_back({int(r), int(start), int(c - start)});
        }
    }
    return runs;
}

MaskGrid rle_decode(const std::vector<RleRun>& runs, Eigen::Index rows, Eigen::Index cols) {
    MaskGrid m = make_mask(rows, cols);
    for (const auto& run : runs) {
        if (run.row < 0 || run.row >= rows || run.col < 0 || run.length < 0 ||
            run.col + run.length > cols)
            throw ValidationError("rle run out of bounds");
        for (int c = run.col; c < run.col + run.length; ++c) m(run.row, c) = 1;
    }
    return m;
}

}  // namespace instancegen
