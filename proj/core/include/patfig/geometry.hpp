#ifndef PATFIG_GEOMETRY_HPP
#define PATFIG_GEOMETRY_HPP

#include <cstddef>
#include <vector>

namespace patfig {

/// Axis-aligned box on the normalized 0-1000 layout grid.
/// (x0, y0) is the top-left corner, (x1, y1) the bottom-right.
struct BoundingBox {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    bool valid() const {
        return 0 <= x0 && x0 <= x1 && x1 <= 1000 && 0 <= y0 && y0 <= y1 && y1 <= 1000;
    }
    bool empty() const { return x0 == x1 || y0 == y1; }
    bool operator==(const BoundingBox&) const = default;
};

/// Non-overlapping p x p tiling of an H x W image. Patches are indexed
/// row-major: index = row * columns + column.
struct PatchGrid {
    int height = 0;
    int width = 0;
    int patch_size = 0;
    int rows = 0;
    int columns = 0;
    int patch_count = 0;  // M = H*W / p^2
};

/// Throws when p does not divide H or W; the message names the offending axis.
PatchGrid build_patch_grid(int height, int width, int patch_size);

/// Patch indices whose p x p pixel cell overlaps the box with positive area.
/// The box is rescaled from the 0-1000 grid to pixel space (x * W / 1000,
/// y * H / 1000); both rectangles are half-open, so touching edges do not
/// count and a degenerate box yields the empty set. Result is sorted.
std::vector<std::size_t> patches_for_box(const PatchGrid& grid, const BoundingBox& box);

}  // namespace patfig

#endif
