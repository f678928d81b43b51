#ifndef PATFIG_MASKING_HPP
#define PATFIG_MASKING_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "patfig/corpus.hpp"
#include "patfig/geometry.hpp"

namespace patfig {

/// Which patches count as candidates for image masking.
enum class PatchPool {
    ElementBearing,  // only patches overlapped by at least one element box
    All,             // every patch; the mask is still drawn from element-bearing ones
};

/// Deterministic masking decision for one figure: which text token positions
/// and which patch indices get hidden from the model. Reproducible from
/// (seed, inputs) alone; independent of worker count and figure order.
struct MaskPlan {
    std::string figure_id;
    std::uint64_t seed = 0;
    double token_mask_ratio = 0.0;
    double patch_mask_ratio = 0.0;
    std::vector<std::size_t> masked_token_positions;  // sorted, unique
    std::vector<std::size_t> masked_patch_indices;    // sorted, unique, row-major
};

/// Sorted union of patches overlapped by any element box on the figure's grid.
std::vector<std::size_t> eligible_patches(const PatchGrid& grid,
                                          const std::vector<ElementBox>& elements);

/// Draw masked token positions from [0, token_count). Count follows the
/// round-half-up rule with a minimum of one whenever token_count > 0 and
/// ratio > 0. Throws if ratio is outside [0, 1].
std::vector<std::size_t> plan_token_mask(std::size_t token_count, double ratio,
                                         std::uint64_t seed);

/// Draw round-half-up(ratio * |candidates|) masked patch indices from a
/// precomputed candidate set (sorted, unique). Empty candidates yield an
/// empty mask. Throws if ratio is outside [0, 1].
std::vector<std::size_t> plan_patch_mask(const std::vector<std::size_t>& candidates,
                                         double ratio, std::uint64_t seed);

/// Convenience form: candidates are the element-bearing patches. Under
/// PatchPool::All the budget is ratio * grid.patch_count, capped at the
/// candidate count; blank patches are never selected either way.
std::vector<std::size_t> plan_patch_mask(const PatchGrid& grid,
                                         const std::vector<ElementBox>& elements, double ratio,
                                         std::uint64_t seed,
                                         PatchPool pool = PatchPool::ElementBearing);

/// Full per-figure plan: token positions seeded from the figure's mixed seed,
/// patch indices from the same seed advanced by one draw, so the two samples
/// stay decoupled yet reproducible.
MaskPlan plan_figure_mask(const PatentFigure& figure, const PatchGrid& grid,
                          std::size_t token_count, double token_ratio, double patch_ratio,
                          std::uint64_t global_seed, PatchPool pool = PatchPool::ElementBearing);

/// Multi-hot element-category labels per patch: labels[i][c] is 1 when patch i
/// overlaps some element of category c. Dimensions patch_count x 5.
struct PatchLabelGrid {
    std::size_t patch_count = 0;
    std::vector<std::array<std::uint8_t, kElementCategoryCount>> labels;

    bool any(std::size_t patch) const;
};

PatchLabelGrid build_patch_labels(const PatchGrid& grid,
                                  const std::vector<ElementBox>& elements);

}  // namespace patfig

#endif
