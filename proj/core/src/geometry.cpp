#include "patfig/geometry.hpp"

#include <cmath>
#include <string>

#include "patfig/util.hpp"

namespace patfig {

PatchGrid build_patch_grid(int height, int width, int patch_size) {
    if (patch_size <= 0) throw Error("patch size must be positive");
    if (height <= 0 || width <= 0) throw Error("image dimensions must be positive");
    if (height % patch_size != 0) {
        throw Error("patch size " + std::to_string(patch_size) +
                    " does not divide height " + std::to_string(height));
    }
    if (width % patch_size != 0) {
        throw Error("patch size " + std::to_string(patch_size) +
                    " does not divide width " + std::to_string(width));
    }
    PatchGrid grid;
    grid.height = height;
    grid.width = width;
    grid.patch_size = patch_size;
    grid.rows = height / patch_size;
    grid.columns = width / patch_size;
    grid.patch_count = grid.rows * grid.columns;
    return grid;
}

std::vector<std::size_t> patches_for_box(const PatchGrid& grid, const BoundingBox& box) {
    if (!box.valid()) throw Error("bounding box outside the 0-1000 grid");
    std::vector<std::size_t> out;
    if (box.empty()) return out;

    // Exact in double: coordinates <= 1000 and dimensions <= a few thousand.
    const double x0 = box.x0 * grid.width / 1000.0;
    const double x1 = box.x1 * grid.width / 1000.0;
    const double y0 = box.y0 * grid.height / 1000.0;
    const double y1 = box.y1 * grid.height / 1000.0;
    const double p = grid.patch_size;

    const int c0 = static_cast<int>(std::floor(x0 / p));
    const int r0 = static_cast<int>(std::floor(y0 / p));
    const int c1 = std::min(grid.columns - 1, static_cast<int>(std::ceil(x1 / p)) - 1);
    const int r1 = std::min(grid.rows - 1, static_cast<int>(std::ceil(y1 / p)) - 1);

    for (int r = r0; r <= r1; ++r) {
        const double cell_y0 = r * p;
        const double cell_y1 = cell_y0 + p;
        if (!(cell_y0 < y1 && y0 < cell_y1)) continue;
        for (int c = c0; c <= c1; ++c) {
            const double cell_x0 = c * p;
            const double cell_x1 = cell_x0 + p;
            if (cell_x0 < x1 && x0 < cell_x1) out.push_back(static_cast<std::size_t>(r) * grid.columns + c);
        }
    }
    return out;
}

}  // namespace patfig
