#include "sag/grid.hpp"

#include <fstream>
#include <numeric>
#include <sstream>

namespace sag {

PatchGrid::PatchGrid(int rows_, int cols_, int patch_edge_)
    : rows(rows_), cols(cols_), patch_edge(patch_edge_) {
    if (rows <= 0 || cols <= 0 || patch_edge <= 0) {
        throw std::invalid_argument("PatchGrid: rows, cols and patch_edge must be positive");
    }
}

BinaryMask::BinaryMask(int height_, int width_, std::uint8_t fill)
    : height(height_), width(width_), data(static_cast<size_t>(height_) * width_, fill) {
    if (height <= 0 || width <= 0) {
        throw std::invalid_argument("BinaryMask: dimensions must be positive");
    }
    if (fill > 1) throw std::invalid_argument("BinaryMask: values must be 0 or 1");
}

long long BinaryMask::count_set() const {
    return std::accumulate(data.begin(), data.end(), 0LL);
}

GrayImage::GrayImage(int height_, int width_, int levels_, int fill)
    : height(height_), width(width_), levels(levels_),
      data(static_cast<size_t>(height_) * width_, fill) {
    if (height <= 0 || width <= 0 || levels <= 1) {
        throw std::invalid_argument("GrayImage: bad dimensions or levels");
    }
    if (fill < 0 || fill >= levels) throw std::invalid_argument("GrayImage: fill out of range");
}

PatchRect patch_bounds(const PatchGrid& grid, int i) {
    if (i < 0 || i >= grid.patch_count()) {
        throw std::out_of_range("patch_bounds: index " + std::to_string(i) +
                                " outside [0, " + std::to_string(grid.patch_count()) + ")");
    }
    const int r = i / grid.cols;
    const int c = i % grid.cols;
    const int e = grid.patch_edge;
    return PatchRect{r * e, c * e, (r + 1) * e, (c + 1) * e};
}

MaskAreaRatios patchify(const BinaryMask& mask, const PatchGrid& grid) {
    if (mask.height != grid.height() || mask.width != grid.width()) {
        std::ostringstream msg;
        msg << "patchify: mask is " << mask.height << "x" << mask.width
            << " but grid expects " << grid.height() << "x" << grid.width();
        throw ShapeError(msg.str());
    }
    const double area = static_cast<double>(grid.patch_edge) * grid.patch_edge;
    MaskAreaRatios out;
    out.values.resize(grid.patch_count());
    for (int i = 0; i < grid.patch_count(); ++i) {
        const PatchRect b = patch_bounds(grid, i);
        long long set = 0;
        for (int r = b.row0; r < b.row1; ++r) {
            for (int c = b.col0; c < b.col1; ++c) set += mask.at(r, c);
        }
        out.values[i] = static_cast<double>(set) / area;
    }
    return out;
}

namespace {

void write_pgm_impl(const std::string& path, int height, int width, int maxval,
                    const std::vector<int>& vals) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_pgm: cannot open " + path);
    f << "P2\n" << width << " " << height << "\n" << maxval << "\n";
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            f << vals[static_cast<size_t>(r) * width + c];
            f << (c + 1 == width ? '\n' : ' ');
        }
    }
    if (!f) throw std::runtime_error("write_pgm: write failed for " + path);
}

struct PgmData {
    int height, width, maxval;
    std::vector<int> vals;
};

PgmData read_pgm_impl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_pgm: cannot open " + path);
    std::string token;
    auto next = [&]() -> std::string {
        while (f >> token) {
            if (token[0] == '#') {
                std::string rest;
                std::getline(f, rest);
                continue;
            }
            return token;
        }
        throw std::runtime_error("read_pgm: truncated file " + path);
    };
    if (next() != "P2") throw std::runtime_error("read_pgm: expected P2 magic in " + path);
    PgmData d;
    d.width = std::stoi(next());
    d.height = std::stoi(next());
    d.maxval = std::stoi(next());
    d.vals.resize(static_cast<size_t>(d.width) * d.height);
    for (auto& v : d.vals) v = std::stoi(next());
    return d;
}

}  // namespace

void write_pgm(const std::string& path, const BinaryMask& mask) {
    std::vector<int> vals(mask.data.begin(), mask.data.end());
    write_pgm_impl(path, mask.height, mask.width, 1, vals);
}

void write_pgm(const std::string& path, const GrayImage& image) {
    write_pgm_impl(path, image.height, image.width, image.levels - 1, image.data);
}

BinaryMask read_mask_pgm(const std::string& path) {
    PgmData d = read_pgm_impl(path);
    if (d.maxval != 1) throw std::runtime_error("read_mask_pgm: expected maxval 1 in " + path);
    BinaryMask m(d.height, d.width);
    for (size_t i = 0; i < d.vals.size(); ++i) {
        if (d.vals[i] != 0 && d.vals[i] != 1) {
            throw std::runtime_error("read_mask_pgm: non-binary value in " + path);
        }
        m.data[i] = static_cast<std::uint8_t>(d.vals[i]);
    }
    return m;
}

GrayImage read_gray_pgm(const std::string& path) {
    PgmData d = read_pgm_impl(path);
    GrayImage img(d.height, d.width, d.maxval + 1);
    img.data = std::move(d.vals);
    return img;
}

}  // namespace sag
