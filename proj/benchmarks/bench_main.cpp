#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "patfig/geometry.hpp"
#include "patfig/losses.hpp"
#include "patfig/masking.hpp"
#include "patfig/metrics.hpp"
#include "patfig/tokenizer.hpp"
#include "patfig/util.hpp"

namespace {

using namespace patfig;

std::vector<BoundingBox> random_boxes(std::size_t count, std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<BoundingBox> boxes(count);
    for (BoundingBox& box : boxes) {
        box.x0 = static_cast<int>(rng.next_below(990));
        box.y0 = static_cast<int>(rng.next_below(990));
        box.x1 = box.x0 + 1 + static_cast<int>(rng.next_below(1000 - box.x0));
        box.y1 = box.y0 + 1 + static_cast<int>(rng.next_below(1000 - box.y0));
    }
    return boxes;
}

std::vector<ElementBox> random_elements(std::size_t count, std::uint64_t seed) {
    std::vector<ElementBox> elements(count);
    const std::vector<BoundingBox> boxes = random_boxes(count, seed);
    for (std::size_t i = 0; i < count; ++i) {
        elements[i].category = kAllElementCategories[i % kElementCategoryCount];
        elements[i].box = boxes[i];
    }
    return elements;
}

const std::string kCandidate =
    "FIG. 3 illustrates a block diagram of a memory controller coupled to a processor "
    "and a plurality of storage devices in accordance with one embodiment of the invention.";
const std::string kReference =
    "FIG. 3 shows a block diagram of the memory controller connected to the processor "
    "and several storage devices according to an embodiment of the present invention.";

void BM_PatchesForBox(benchmark::State& state) {
    const PatchGrid grid = build_patch_grid(384, 384, 16);
    const std::vector<BoundingBox> boxes = random_boxes(256, 11);
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(patches_for_box(grid, boxes[i++ % boxes.size()]));
    }
}
BENCHMARK(BM_PatchesForBox);

void BM_EligiblePatches(benchmark::State& state) {
    const PatchGrid grid = build_patch_grid(384, 384, 16);
    const std::vector<ElementBox> elements =
        random_elements(static_cast<std::size_t>(state.range(0)), 13);
    for (auto _ : state) {
        benchmark::DoNotOptimize(eligible_patches(grid, elements));
    }
}
BENCHMARK(BM_EligiblePatches)->Arg(4)->Arg(16)->Arg(64);

void BM_PlanFigureMask(benchmark::State& state) {
    const PatchGrid grid = build_patch_grid(384, 384, 16);
    PatentFigure figure;
    figure.figure_id = "bench-fig";
    figure.image_width = 384;
    figure.image_height = 384;
    figure.element_boxes = random_elements(12, 17);
    for (auto _ : state) {
        benchmark::DoNotOptimize(plan_figure_mask(figure, grid, 180, 0.30, 0.40, 7));
    }
}
BENCHMARK(BM_PlanFigureMask);

void BM_TokenizerEncode(benchmark::State& state) {
    const BpeTokenizer tokenizer = BpeTokenizer::from_file(PATFIG_CORE_DATA_DIR "/vocab.json");
    for (auto _ : state) {
        benchmark::DoNotOptimize(tokenizer.encode(kCandidate));
    }
}
BENCHMARK(BM_TokenizerEncode);

void BM_AvgBleu(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(avg_bleu(kCandidate, kReference));
    }
}
BENCHMARK(BM_AvgBleu);

void BM_RougeL(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(rouge_l(kCandidate, kReference));
    }
}
BENCHMARK(BM_RougeL);

void BM_Meteor(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(meteor(kCandidate, kReference));
    }
}
BENCHMARK(BM_Meteor);

void BM_MaskedNll(benchmark::State& state) {
    const std::size_t positions_n = 64;
    const std::size_t vocab = 656;
    SplitMix64 rng(19);
    std::vector<double> logits(positions_n * vocab);
    for (double& v : logits) v = rng.next_double() * 4.0 - 2.0;
    const CategoricalPredictions preds = softmax_rows(positions_n, vocab, logits);
    std::vector<std::size_t> positions;
    std::vector<std::size_t> targets;
    for (std::size_t i = 0; i < positions_n; i += 3) {
        positions.push_back(i);
        targets.push_back(rng.next_below(vocab));
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(masked_nll(preds, positions, targets));
    }
}
BENCHMARK(BM_MaskedNll);

}  // namespace

BENCHMARK_MAIN();
