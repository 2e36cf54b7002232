#include "pae/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "pae/error.hpp"
#include "pae/io.hpp"
#include "pae/rng.hpp"

namespace pae {

namespace {

using nlohmann::json;

std::vector<std::pair<std::size_t, std::size_t>> window_cells(const PlantedWindow& win) {
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (std::size_t i = win.row; i < win.row + win.size; ++i)
        for (std::size_t j = win.col; j < win.col + win.size; ++j) cells.emplace_back(i, j);
    return cells;
}

// occupancy of a window plus its point reflection
void mark_window(Tensor& grid, const PlantedWindow& win) {
    for (const auto& [i, j] : window_cells(win)) {
        grid(i, j) = 1.0;
        const auto [ri, rj] = reflect_bin(i, j, grid.rows(), grid.cols());
        grid(ri, rj) = 1.0;
    }
}

}  // namespace

void PlantedTaskSpec::validate() const {
    if (classes == 0) throw ConfigError("task spec: needs at least one class");
    if (windows.size() != classes)
        throw ConfigError("task spec: " + std::to_string(windows.size()) + " windows for " +
                          std::to_string(classes) + " classes");
    if (signal_amp <= 0.0 || noise_amp < 0.0)
        throw ConfigError("task spec: amplitudes out of range");
    if (bins_per_sample == 0) throw ConfigError("task spec: bins_per_sample must be positive");
    if (mask_r == 0 || mask_w == 0) throw ConfigError("task spec: mask grid (w, r) must be positive");

    Tensor seen({img_h, img_w});
    for (const PlantedWindow& win : windows) {
        if (win.size == 0 || win.size > mask_w)
            throw ConfigError("task spec: window size " + std::to_string(win.size) +
                              " off the mask grid (w=" + std::to_string(mask_w) + ")");
        if (win.row % mask_r != 0 || win.col % mask_r != 0)
            throw ConfigError("task spec: window origin (" + std::to_string(win.row) + "," +
                              std::to_string(win.col) + ") off the stride-" +
                              std::to_string(mask_r) + " grid");
        if (win.row + win.size > img_h || win.col + win.size > img_w)
            throw ConfigError("task spec: window exceeds the spectrum bounds");
        for (const auto& [i, j] : window_cells(win)) {
            const auto [ri, rj] = reflect_bin(i, j, img_h, img_w);
            if (seen(i, j) != 0.0 || seen(ri, rj) != 0.0)
                throw ConfigError("task spec: planted windows overlap (including reflections)");
        }
        mark_window(seen, win);
    }
}

Tensor Dataset::image(std::size_t idx) const {
    if (idx >= size()) throw ContractError("dataset: image index out of range");
    const std::size_t h = images.dims[1], w = images.dims[2];
    Tensor img({h, w});
    std::copy(images.data.begin() + idx * h * w, images.data.begin() + (idx + 1) * h * w,
              img.data.begin());
    return img;
}

std::vector<PlantedWindow> plant_windows(std::size_t img_h, std::size_t img_w, std::size_t count,
                                         std::size_t size, std::size_t r, std::uint64_t seed) {
    if (size == 0 || r == 0) throw ConfigError("plant_windows: size and stride must be positive");
    std::vector<PlantedWindow> candidates;
    for (std::size_t row = 0; row + size <= img_h; row += r)
        for (std::size_t col = 0; col + size <= img_w; col += r) {
            const bool covers_dc = row <= img_h / 2 && img_h / 2 < row + size &&
                                   col <= img_w / 2 && img_w / 2 < col + size;
            if (!covers_dc) candidates.push_back({row, col, size});
        }
    Rng rng = Rng::derive(seed, 0x9a7d);
    rng.shuffle(candidates.begin(), candidates.end());

    Tensor occupied({img_h, img_w});
    std::vector<PlantedWindow> placed;
    for (const PlantedWindow& win : candidates) {
        if (placed.size() == count) break;
        bool clear = true;
        for (const auto& [i, j] : window_cells(win)) {
            const auto [ri, rj] = reflect_bin(i, j, img_h, img_w);
            clear &= occupied(i, j) == 0.0 && occupied(ri, rj) == 0.0;
        }
        if (!clear) continue;
        mark_window(occupied, win);
        placed.push_back(win);
    }
    if (placed.size() < count)
        throw ConfigError("plant_windows: only " + std::to_string(placed.size()) + " of " +
                          std::to_string(count) + " disjoint windows fit the grid");
    return placed;
}

namespace {

// one bandlimited sample: random bins inside the class window, random phases,
// broadband noise, clipped to [−1, 1]
void synthesize_sample(const PlantedTaskSpec& spec, std::size_t label, Rng& rng, double* out) {
    const std::size_t h = spec.img_h, w = spec.img_w;
    // each conjugate pair is written exactly once: when both halves fall in
    // the window, only the lexicographically smaller cell stays selectable
    const PlantedWindow& win = spec.windows[label];
    auto in_window = [&](const std::pair<std::size_t, std::size_t>& c) {
        return c.first >= win.row && c.first < win.row + win.size && c.second >= win.col &&
               c.second < win.col + win.size;
    };
    std::vector<std::pair<std::size_t, std::size_t>> canonical;
    for (const auto& cell : window_cells(win)) {
        const auto refl = reflect_bin(cell.first, cell.second, h, w);
        if (!in_window(refl) || cell <= refl) canonical.push_back(cell);
    }
    if (canonical.empty()) throw ContractError("synthesize: window has no canonical bins");
    rng.shuffle(canonical.begin(), canonical.end());
    const std::size_t n_bins = std::min(spec.bins_per_sample, canonical.size());

    Spectrum s;
    s.h = h;
    s.w = w;
    s.data.assign(h * w, {0.0, 0.0});
    const double mag = spec.signal_amp * static_cast<double>(h * w) / 2.0;
    for (std::size_t b = 0; b < n_bins; ++b) {
        const auto [i, j] = canonical[b];
        const auto [ri, rj] = reflect_bin(i, j, h, w);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const std::complex<double> coeff = std::polar(mag, phase);
        if (ri == i && rj == j) {
            s.at(i, j) = coeff.real();  // self-conjugate bin must stay real
        } else {
            s.at(i, j) = coeff;
            s.at(ri, rj) = std::conj(coeff);
        }
    }
    const Tensor signal = ifft2(s);
    for (std::size_t p = 0; p < h * w; ++p)
        out[p] = std::clamp(signal.data[p] + spec.noise_amp * rng.gaussian(), -1.0, 1.0);
}

Dataset make_split(const PlantedTaskSpec& spec, std::size_t n, std::size_t index_base) {
    Dataset ds;
    ds.images = Tensor({n, spec.img_h, spec.img_w});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % spec.classes;
        Rng rng = Rng::derive(spec.seed, index_base + i);
        synthesize_sample(spec, label, rng, ds.images.data.data() + i * spec.img_h * spec.img_w);
        ds.labels.push_back(label);
    }
    return ds;
}

}  // namespace

GeneratedTask generate_dataset(const PlantedTaskSpec& spec) {
    spec.validate();
    GeneratedTask task;
    task.spec = spec;
    task.train = make_split(spec, spec.n_train, 0);
    task.val = make_split(spec, spec.n_val, spec.n_train);
    task.test = make_split(spec, spec.n_test, spec.n_train + spec.n_val);
    return task;
}

double shortcut_recovery_score(const std::vector<FrequencyMask>& masks,
                               const std::vector<std::size_t>& ranked_ids, std::size_t top_t,
                               const PlantedTaskSpec& spec) {
    if (top_t == 0 || top_t > ranked_ids.size())
        throw ConfigError("recovery score: top_t out of range");
    if (masks.empty() || masks[0].img_h != spec.img_h || masks[0].img_w != spec.img_w)
        throw ConfigError("recovery score: mask grid does not match the task spectrum");

    Tensor planted({spec.img_h, spec.img_w});
    for (const PlantedWindow& win : spec.windows)
        for (const auto& [i, j] : window_cells(win)) planted(i, j) = 1.0;

    std::size_t hits = 0;
    for (std::size_t k = 0; k < top_t; ++k) {
        if (ranked_ids[k] >= masks.size())
            throw ContractError("recovery score: ranked mask id out of range");
        const FrequencyMask& m = masks[ranked_ids[k]];
        bool overlap = false;
        for (std::size_t p = 0; p < planted.numel() && !overlap; ++p)
            overlap = m.grid.data[p] != 0.0 && planted.data[p] != 0.0;
        hits += overlap ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(top_t);
}

namespace {

void save_split(const std::string& dir, const std::string& name, const Dataset& ds) {
    io::write_tensor(dir + "/" + name + "_images.paet", ds.images);
    std::string csv = "index,label\n";
    for (std::size_t i = 0; i < ds.labels.size(); ++i)
        csv += std::to_string(i) + "," + std::to_string(ds.labels[i]) + "\n";
    io::write_text(dir + "/" + name + "_labels.csv", csv);
}

Dataset load_split(const std::string& dir, const std::string& name) {
    Dataset ds;
    ds.images = io::read_tensor(dir + "/" + name + "_images.paet");
    if (ds.images.rank() != 3)
        throw ConfigError("dataset: " + name + " images must be rank 3, got " +
                          ds.images.shape_str());
    std::istringstream in(io::read_text(dir + "/" + name + "_labels.csv"));
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw ConfigError("dataset: malformed label row '" + line + "'");
        ds.labels.push_back(std::stoull(line.substr(comma + 1)));
    }
    if (ds.labels.size() != ds.images.dims[0])
        throw ConfigError("dataset: " + name + " has " + std::to_string(ds.labels.size()) +
                          " labels for " + std::to_string(ds.images.dims[0]) + " images");
    return ds;
}

}  // namespace

void save_task(const std::string& dir, const GeneratedTask& task) {
    std::filesystem::create_directories(dir);
    json j;
    j["img_h"] = task.spec.img_h;
    j["img_w"] = task.spec.img_w;
    j["classes"] = task.spec.classes;
    j["mask_w"] = task.spec.mask_w;
    j["mask_r"] = task.spec.mask_r;
    j["signal_amp"] = task.spec.signal_amp;
    j["noise_amp"] = task.spec.noise_amp;
    j["bins_per_sample"] = task.spec.bins_per_sample;
    j["n_train"] = task.spec.n_train;
    j["n_val"] = task.spec.n_val;
    j["n_test"] = task.spec.n_test;
    j["seed"] = task.spec.seed;
    j["windows"] = json::array();
    for (const PlantedWindow& win : task.spec.windows)
        j["windows"].push_back({{"row", win.row}, {"col", win.col}, {"size", win.size}});
    io::write_text(dir + "/spec.json", j.dump(2) + "\n");
    save_split(dir, "train", task.train);
    save_split(dir, "val", task.val);
    save_split(dir, "test", task.test);
}

GeneratedTask load_task(const std::string& dir) {
    json j = json::parse(io::read_text(dir + "/spec.json"));
    GeneratedTask task;
    PlantedTaskSpec& spec = task.spec;
    spec.img_h = j.at("img_h").get<std::size_t>();
    spec.img_w = j.at("img_w").get<std::size_t>();
    spec.classes = j.at("classes").get<std::size_t>();
    spec.mask_w = j.at("mask_w").get<std::size_t>();
    spec.mask_r = j.at("mask_r").get<std::size_t>();
    spec.signal_amp = j.at("signal_amp").get<double>();
    spec.noise_amp = j.at("noise_amp").get<double>();
    spec.bins_per_sample = j.at("bins_per_sample").get<std::size_t>();
    spec.n_train = j.at("n_train").get<std::size_t>();
    spec.n_val = j.at("n_val").get<std::size_t>();
    spec.n_test = j.at("n_test").get<std::size_t>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    for (const json& w : j.at("windows"))
        spec.windows.push_back({w.at("row").get<std::size_t>(), w.at("col").get<std::size_t>(),
                                w.at("size").get<std::size_t>()});
    spec.validate();
    task.train = load_split(dir, "train");
    task.val = load_split(dir, "val");
    task.test = load_split(dir, "test");
    for (const Dataset* ds : {&task.train, &task.val, &task.test}) {
        if (ds->images.dims[1] != spec.img_h || ds->images.dims[2] != spec.img_w)
            throw ConfigError("dataset: image shape " + ds->images.shape_str() +
                              " does not match the spec");
        for (std::size_t lbl : ds->labels)
            if (lbl >= spec.classes) throw ConfigError("dataset: label out of range");
    }
    return task;
}

}  // namespace pae
