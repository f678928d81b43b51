#include <doctest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "patfig/corpus.hpp"
#include "patfig/masking.hpp"
#include "patfig/util.hpp"

using namespace patfig;

namespace {

std::vector<ElementBox> random_elements(SplitMix64& rng, std::size_t count) {
    std::vector<ElementBox> out;
    for (std::size_t i = 0; i < count; ++i) {
        ElementBox el;
        el.category = static_cast<ElementCategory>(rng.next_below(kElementCategoryCount));
        el.box.x0 = static_cast<int>(rng.next_below(900));
        el.box.y0 = static_cast<int>(rng.next_below(900));
        el.box.x1 = el.box.x0 + 1 + static_cast<int>(rng.next_below(100));
        el.box.y1 = el.box.y0 + 1 + static_cast<int>(rng.next_below(100));
        el.confidence = 0.5 + 0.5 * rng.next_double();
        out.push_back(el);
    }
    return out;
}

bool sorted_unique(const std::vector<std::size_t>& xs) {
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (xs[i - 1] >= xs[i]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("eligible patches are the union of per-element patch sets") {
    const PatchGrid grid = build_patch_grid(384, 384, 16);
    SplitMix64 rng(1212);
    for (int trial = 0; trial < 30; ++trial) {
        const std::vector<ElementBox> elements = random_elements(rng, 1 + rng.next_below(8));
        std::set<std::size_t> expected;
        for (const ElementBox& el : elements) {
            for (std::size_t idx : patches_for_box(grid, el.box)) {
                expected.insert(idx);
            }
        }
        const std::vector<std::size_t> got = eligible_patches(grid, elements);
        CHECK(sorted_unique(got));
        CHECK(got == std::vector<std::size_t>(expected.begin(), expected.end()));
    }
}

TEST_CASE("token masks have the documented size and range") {
    SplitMix64 rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = rng.next_below(500);
        const auto positions = plan_token_mask(n, 0.3, rng.next());
        CHECK(positions.size() == mask_count(n, 0.3));
        CHECK(sorted_unique(positions));
        for (std::size_t p : positions) {
            CHECK(p < n);
        }
    }
    CHECK(plan_token_mask(0, 0.3, 9).empty());
    CHECK(plan_token_mask(100, 0.0, 9).empty());
    CHECK_THROWS_AS(plan_token_mask(10, -0.1, 9), Error);
    CHECK_THROWS_AS(plan_token_mask(10, 1.5, 9), Error);
}

TEST_CASE("token masks are a pure function of count, ratio, and seed") {
    const auto a = plan_token_mask(200, 0.3, 42);
    const auto b = plan_token_mask(200, 0.3, 42);
    const auto c = plan_token_mask(200, 0.3, 43);
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("patch masks draw only from the candidate set") {
    SplitMix64 rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        std::set<std::size_t> candidate_set;
        const std::size_t n = rng.next_below(80);
        while (candidate_set.size() < n) {
            candidate_set.insert(rng.next_below(576));
        }
        const std::vector<std::size_t> candidates(candidate_set.begin(), candidate_set.end());
        const auto picked = plan_patch_mask(candidates, 0.4, rng.next());
        CHECK(picked.size() == mask_count(candidates.size(), 0.4));
        CHECK(sorted_unique(picked));
        for (std::size_t idx : picked) {
            CHECK(candidate_set.count(idx) == 1);
        }
    }
    CHECK(plan_patch_mask({}, 0.4, 5).empty());
}

TEST_CASE("the all-patch pool widens the budget but not the candidates") {
    const PatchGrid grid = build_patch_grid(384, 384, 16);
    SplitMix64 rng(99);
    // One small element: few eligible patches, so the all-pool budget caps.
    std::vector<ElementBox> elements = {{ElementCategory::Node, {0, 0, 50, 50}, 0.9}};
    const auto eligible = eligible_patches(grid, elements);
    REQUIRE(!eligible.empty());

    const auto narrow = plan_patch_mask(grid, elements, 0.4, 7, PatchPool::ElementBearing);
    CHECK(narrow.size() == mask_count(eligible.size(), 0.4));

    const auto wide = plan_patch_mask(grid, elements, 0.4, 7, PatchPool::All);
    // Budget 0.4 * 576 = 230 exceeds the candidate count, so every eligible
    // patch is selected and nothing outside the set ever is.
    CHECK(wide == eligible);
}

TEST_CASE("figure plans are reproducible and differ across figures") {
    const PatchGrid grid = build_patch_grid(384, 384, 16);
    SplitMix64 rng(2024);
    PatentFigure fig;
    fig.figure_id = "US1-FIG1";
    fig.element_boxes = random_elements(rng, 6);

    const MaskPlan plan1 = plan_figure_mask(fig, grid, 120, 0.3, 0.4, 5);
    const MaskPlan plan2 = plan_figure_mask(fig, grid, 120, 0.3, 0.4, 5);
    CHECK(plan1.masked_token_positions == plan2.masked_token_positions);
    CHECK(plan1.masked_patch_indices == plan2.masked_patch_indices);
    CHECK(plan1.seed == mix_seed(5, fig.figure_id));
    CHECK(plan1.figure_id == fig.figure_id);
    CHECK(plan1.token_mask_ratio == 0.3);
    CHECK(plan1.patch_mask_ratio == 0.4);
    CHECK(plan1.masked_token_positions.size() == mask_count(120, 0.3));
    const auto eligible = eligible_patches(grid, fig.element_boxes);
    CHECK(plan1.masked_patch_indices.size() == mask_count(eligible.size(), 0.4));

    PatentFigure other = fig;
    other.figure_id = "US1-FIG2";
    const MaskPlan plan3 = plan_figure_mask(other, grid, 120, 0.3, 0.4, 5);
    CHECK(plan3.seed != plan1.seed);
    CHECK(plan3.masked_token_positions != plan1.masked_token_positions);
}

TEST_CASE("masked patches are always element-bearing") {
    const PatchGrid grid = build_patch_grid(384, 384, 16);
    SplitMix64 rng(4096);
    for (int trial = 0; trial < 40; ++trial) {
        PatentFigure fig;
        fig.figure_id = "T" + std::to_string(trial);
        fig.element_boxes = random_elements(rng, 1 + rng.next_below(10));
        const auto eligible = eligible_patches(grid, fig.element_boxes);
        const std::set<std::size_t> eligible_set(eligible.begin(), eligible.end());
        for (PatchPool pool : {PatchPool::ElementBearing, PatchPool::All}) {
            const MaskPlan plan = plan_figure_mask(fig, grid, 80, 0.3, 0.4, trial, pool);
            for (std::size_t idx : plan.masked_patch_indices) {
                CHECK(eligible_set.count(idx) == 1);
            }
        }
    }
}

TEST_CASE("patch labels mark exactly the overlapped categories") {
    const PatchGrid grid = build_patch_grid(384, 384, 16);
    SplitMix64 rng(640);
    for (int trial = 0; trial < 30; ++trial) {
        const std::vector<ElementBox> elements = random_elements(rng, 1 + rng.next_below(8));
        const PatchLabelGrid labels = build_patch_labels(grid, elements);
        REQUIRE(labels.patch_count == static_cast<std::size_t>(grid.patch_count));
        REQUIRE(labels.labels.size() == labels.patch_count);

        std::vector<std::array<std::uint8_t, kElementCategoryCount>> expected(
            labels.patch_count, std::array<std::uint8_t, kElementCategoryCount>{});
        for (const ElementBox& el : elements) {
            const auto c = static_cast<std::size_t>(el.category);
            for (std::size_t idx : patches_for_box(grid, el.box)) {
                expected[idx][c] = 1;
            }
        }
        CHECK(labels.labels == expected);
        for (std::size_t i = 0; i < labels.patch_count; ++i) {
            const bool any_set = std::any_of(expected[i].begin(), expected[i].end(),
                                             [](std::uint8_t v) { return v != 0; });
            CHECK(labels.any(i) == any_set);
        }
    }
}
