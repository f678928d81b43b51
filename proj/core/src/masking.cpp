#include "patfig/masking.hpp"

#include <algorithm>

#include "patfig/util.hpp"

namespace patfig {

namespace {

void check_ratio(double ratio, const char* name) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) {
        throw Error(std::string(name) + " must lie in [0, 1]");
    }
}

/// Uniform k-subset of `candidates` via partial Fisher-Yates, returned sorted.
std::vector<std::size_t> sample_subset(std::vector<std::size_t> candidates, std::size_t k,
                                       SplitMix64& rng) {
    const std::size_t n = candidates.size();
    if (k > n) {
        k = n;
    }
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_below(n - i));
        std::swap(candidates[i], candidates[j]);
    }
    candidates.resize(k);
    std::sort(candidates.begin(), candidates.end());
    return candidates;
}

}  // namespace

std::vector<std::size_t> eligible_patches(const PatchGrid& grid,
                                          const std::vector<ElementBox>& elements) {
    std::vector<std::size_t> patches;
    for (const ElementBox& el : elements) {
        std::vector<std::size_t> covered = patches_for_box(grid, el.box);
        patches.insert(patches.end(), covered.begin(), covered.end());
    }
    std::sort(patches.begin(), patches.end());
    patches.erase(std::unique(patches.begin(), patches.end()), patches.end());
    return patches;
}

std::vector<std::size_t> plan_token_mask(std::size_t token_count, double ratio,
                                         std::uint64_t seed) {
    check_ratio(ratio, "token mask ratio");
    std::vector<std::size_t> candidates(token_count);
    for (std::size_t i = 0; i < token_count; ++i) {
        candidates[i] = i;
    }
    SplitMix64 rng(seed);
    return sample_subset(std::move(candidates), mask_count(token_count, ratio), rng);
}

std::vector<std::size_t> plan_patch_mask(const std::vector<std::size_t>& candidates,
                                         double ratio, std::uint64_t seed) {
    check_ratio(ratio, "patch mask ratio");
    SplitMix64 rng(seed);
    return sample_subset(candidates, mask_count(candidates.size(), ratio), rng);
}

std::vector<std::size_t> plan_patch_mask(const PatchGrid& grid,
                                         const std::vector<ElementBox>& elements, double ratio,
                                         std::uint64_t seed, PatchPool pool) {
    check_ratio(ratio, "patch mask ratio");
    std::vector<std::size_t> candidates = eligible_patches(grid, elements);
    if (candidates.empty()) {
        return {};
    }
    if (pool == PatchPool::ElementBearing) {
        SplitMix64 rng(seed);
        return sample_subset(std::move(candidates), mask_count(candidates.size(), ratio), rng);
    }
    const std::size_t k = std::min(mask_count(grid.patch_count, ratio), candidates.size());
    SplitMix64 rng(seed);
    return sample_subset(std::move(candidates), k, rng);
}

MaskPlan plan_figure_mask(const PatentFigure& figure, const PatchGrid& grid,
                          std::size_t token_count, double token_ratio, double patch_ratio,
                          std::uint64_t global_seed, PatchPool pool) {
    MaskPlan plan;
    plan.figure_id = figure.figure_id;
    plan.seed = mix_seed(global_seed, figure.figure_id);
    plan.token_mask_ratio = token_ratio;
    plan.patch_mask_ratio = patch_ratio;

    SplitMix64 seeder(plan.seed);
    const std::uint64_t token_seed = seeder.next();
    const std::uint64_t patch_seed = seeder.next();
    plan.masked_token_positions = plan_token_mask(token_count, token_ratio, token_seed);
    plan.masked_patch_indices =
        plan_patch_mask(grid, figure.element_boxes, patch_ratio, patch_seed, pool);
    return plan;
}

bool PatchLabelGrid::any(std::size_t patch) const {
    const auto& row = labels.at(patch);
    for (std::uint8_t bit : row) {
        if (bit != 0) {
            return true;
        }
    }
    return false;
}

PatchLabelGrid build_patch_labels(const PatchGrid& grid,
                                  const std::vector<ElementBox>& elements) {
    PatchLabelGrid out;
    out.patch_count = grid.patch_count;
    out.labels.assign(grid.patch_count, {});
    for (const ElementBox& el : elements) {
        const int category = static_cast<int>(el.category);
        for (std::size_t patch : patches_for_box(grid, el.box)) {
            out.labels[patch][category] = 1;
        }
    }
    return out;
}

}  // namespace patfig
