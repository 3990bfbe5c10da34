#include "frdl/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace frdl {

namespace {

// Skips whitespace and '#' comment lines between PNM header tokens.
int next_header_int(std::istream& in, const std::filesystem::path& path) {
    int c = in.peek();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else {
            in.get();
        }
        c = in.peek();
    }
    int value = -1;
    in >> value;
    if (!in) throw DataError("malformed PNM header: " + path.string());
    return value;
}

}  // namespace

Image8 read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image: " + path.string());
    char p = 0, kind = 0;
    in.get(p);
    in.get(kind);
    if (p != 'P' || (kind != '5' && kind != '6'))
        throw DataError("unsupported image format (want binary PGM/PPM): " + path.string());
    const int channels = kind == '5' ? 1 : 3;
    const int cols = next_header_int(in, path);
    const int rows = next_header_int(in, path);
    const int maxval = next_header_int(in, path);
    if (cols < 1 || rows < 1) throw DataError("bad image dimensions: " + path.string());
    if (maxval != 255) throw DataError("unsupported maxval (want 255): " + path.string());
    in.get();  // single whitespace byte after maxval
    Image8 img(rows, cols, channels);
    in.read(reinterpret_cast<char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
    if (static_cast<std::size_t>(in.gcount()) != img.data.size())
        throw DataError("truncated image data: " + path.string());
    return img;
}

void write_pnm(const std::filesystem::path& path, const Image8& img) {
    if (img.channels != 1 && img.channels != 3)
        throw DataError("write_pnm supports 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write image: " + path.string());
    out << (img.channels == 1 ? "P5" : "P6") << "\n"
        << img.cols << " " << img.rows << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data.data()),
              static_cast<std::streamsize>(img.data.size()));
    if (!out) throw DataError("failed writing image: " + path.string());
}

Image8 to_gray(const Image8& img) {
    if (img.channels == 1) return img;
    Image8 out(img.rows, img.cols, 1);
    for (int r = 0; r < img.rows; ++r) {
        for (int c = 0; c < img.cols; ++c) {
            int sum = 0;
            for (int ch = 0; ch < img.channels; ++ch) sum += img.at(r, c, ch);
            // round-half-up of sum / channels
            out.at(r, c) = static_cast<std::uint8_t>((2 * sum + img.channels) / (2 * img.channels));
        }
    }
    return out;
}

Image8 resize_bilinear(const Image8& img, int out_rows, int out_cols) {
    Image8 out(out_rows, out_cols, img.channels);
    const double sy = static_cast<double>(img.rows) / out_rows;
    const double sx = static_cast<double>(img.cols) / out_cols;
    for (int r = 0; r < out_rows; ++r) {
        double fy = (r + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(img.rows - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.rows - 1);
        const double wy = fy - y0;
        for (int c = 0; c < out_cols; ++c) {
            double fx = (c + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(img.cols - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.cols - 1);
            const double wx = fx - x0;
            for (int ch = 0; ch < img.channels; ++ch) {
                const double top = (1.0 - wx) * img.at(y0, x0, ch) + wx * img.at(y0, x1, ch);
                const double bot = (1.0 - wx) * img.at(y1, x0, ch) + wx * img.at(y1, x1, ch);
                const double v = (1.0 - wy) * top + wy * bot;
                out.at(r, c, ch) = static_cast<std::uint8_t>(std::lround(v));
            }
        }
    }
    return out;
}

Image8 resize_nearest(const Image8& img, int out_rows, int out_cols) {
    Image8 out(out_rows, out_cols, img.channels);
    for (int r = 0; r < out_rows; ++r) {
        const int sr = std::min(static_cast<int>(static_cast<std::int64_t>(r) * img.rows / out_rows),
                                img.rows - 1);
        for (int c = 0; c < out_cols; ++c) {
            const int sc = std::min(static_cast<int>(static_cast<std::int64_t>(c) * img.cols / out_cols),
                                    img.cols - 1);
            for (int ch = 0; ch < img.channels; ++ch) out.at(r, c, ch) = img.at(sr, sc, ch);
        }
    }
    return out;
}

Image8 crop(const Image8& img, const BoundingBox& box) {
    if (box.x < 0 || box.y < 0 || box.w < 1 || box.h < 1 || box.x + box.w > img.cols ||
        box.y + box.h > img.rows)
        throw DataError("crop box outside image bounds");
    Image8 out(box.h, box.w, img.channels);
    for (int r = 0; r < box.h; ++r)
        for (int c = 0; c < box.w; ++c)
            for (int ch = 0; ch < img.channels; ++ch)
                out.at(r, c, ch) = img.at(box.y + r, box.x + c, ch);
    return out;
}

}  // namespace frdl
