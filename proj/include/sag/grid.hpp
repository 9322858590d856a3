#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sag {

// Layout of p non-overlapping patches over a raster. Patch index i runs
// row-major over (row, col).
struct PatchGrid {
    int rows = 0;
    int cols = 0;
    int patch_edge = 0;

    PatchGrid() = default;
    PatchGrid(int rows_, int cols_, int patch_edge_);

    int patch_count() const { return rows * cols; }
    int height() const { return rows * patch_edge; }
    int width() const { return cols * patch_edge; }

    bool operator==(const PatchGrid& o) const = default;
};

// Half-open pixel rectangle [row0,row1) x [col0,col1).
struct PatchRect {
    int row0 = 0;
    int col0 = 0;
    int row1 = 0;
    int col1 = 0;

    bool operator==(const PatchRect& o) const = default;
};

// Single-channel {0,1} raster.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;  // row-major, values 0 or 1

    BinaryMask() = default;
    BinaryMask(int height_, int width_, std::uint8_t fill = 0);

    std::uint8_t at(int r, int c) const { return data[static_cast<size_t>(r) * width + c]; }
    std::uint8_t& at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }

    long long count_set() const;
};

// Grayscale raster with values in [0, levels).
struct GrayImage {
    int height = 0;
    int width = 0;
    int levels = 256;
    std::vector<int> data;  // row-major

    GrayImage() = default;
    GrayImage(int height_, int width_, int levels_ = 256, int fill = 0);

    int at(int r, int c) const { return data[static_cast<size_t>(r) * width + c]; }
    int& at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }
};

// Per-patch fraction of set pixels, row-major patch order.
struct MaskAreaRatios {
    std::vector<double> values;
};

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

PatchRect patch_bounds(const PatchGrid& grid, int i);

MaskAreaRatios patchify(const BinaryMask& mask, const PatchGrid& grid);

// ASCII PGM (magic "P2"). Masks use maxval 1.
void write_pgm(const std::string& path, const BinaryMask& mask);
void write_pgm(const std::string& path, const GrayImage& image);
BinaryMask read_mask_pgm(const std::string& path);
GrayImage read_gray_pgm(const std::string& path);

}  // namespace sag
