#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pae/spectral.hpp"
#include "pae/tensor.hpp"

namespace pae {

// size×size window of centered-spectrum bins, anchored on the mask grid.
struct PlantedWindow {
    std::size_t row = 0, col = 0, size = 0;
};

// Frequency-planted classification task: every class carries a sinusoidal
// mixture confined to its own spectral window, on top of broadband noise, so
// shortcut discovery has an exact answer key.
struct PlantedTaskSpec {
    std::size_t img_h = 32, img_w = 32;
    std::size_t classes = 8;
    std::vector<PlantedWindow> windows;  // one per class
    std::size_t mask_w = 8, mask_r = 4;  // grid the windows were placed on
    double signal_amp = 0.25;            // per-sinusoid time-domain amplitude
    double noise_amp = 0.1;              // white-noise stddev
    std::size_t bins_per_sample = 3;
    std::size_t n_train = 256, n_val = 128, n_test = 128;
    std::uint64_t seed = 0;

    // Disjointness (including reflections), grid alignment, bounds.
    void validate() const;
};

struct Dataset {
    Tensor images;  // n×img_h×img_w, values in [−1, 1]
    std::vector<std::size_t> labels;

    std::size_t size() const { return labels.size(); }
    Tensor image(std::size_t idx) const;
};

struct GeneratedTask {
    PlantedTaskSpec spec;
    Dataset train, val, test;
};

// Greedy seeded placement of `count` windows on the (size-aligned) mask grid,
// pairwise disjoint including point reflections; skips windows covering DC.
std::vector<PlantedWindow> plant_windows(std::size_t img_h, std::size_t img_w, std::size_t count,
                                         std::size_t size, std::size_t r, std::uint64_t seed);

// Bit-deterministic per (spec, seed); samples are derived per-index so
// generation order never changes content.
GeneratedTask generate_dataset(const PlantedTaskSpec& spec);

// Fraction of the top-T ranked masks whose window intersects any planted
// window (masks are reflection-symmetric, so raw window cells suffice).
double shortcut_recovery_score(const std::vector<FrequencyMask>& masks,
                               const std::vector<std::size_t>& ranked_ids, std::size_t top_t,
                               const PlantedTaskSpec& spec);

// Dataset directory: {split}_images.paet + {split}_labels.csv + spec.json.
void save_task(const std::string& dir, const GeneratedTask& task);
GeneratedTask load_task(const std::string& dir);

}  // namespace pae
