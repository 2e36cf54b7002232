#include "pae/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "pae/eig.hpp"
#include "pae/error.hpp"
#include "pae/io.hpp"

namespace pae {

namespace {

std::string fmt_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

// column-centered copy; throws when every column is constant
Tensor center_columns(const Tensor& x, const char* side) {
    const std::size_t n = x.rows(), p = x.cols();
    Tensor out = x;
    for (std::size_t j = 0; j < p; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) out(i, j) -= mean;
    }
    if (max_abs(out) == 0.0)
        throw DegenerateInputError(std::string(side) + " input has zero variance");
    return out;
}

std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;  // mean of 1-based positions
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spectral_radius(const Tensor& op) {
    if (op.rank() != 2 || op.rows() != op.cols())
        throw ShapeError("spectral radius needs a square matrix, got " + op.shape_str());
    double rho = 0.0;
    for (const auto& ev : eigenvalues(op)) rho = std::max(rho, std::abs(ev));
    return rho;
}

double linear_cka(const Tensor& x, const Tensor& y) {
    if (x.rank() != 2 || y.rank() != 2)
        throw ShapeError("cka inputs must be matrices, got " + x.shape_str() + " and " +
                         y.shape_str());
    if (x.rows() != y.rows())
        throw ShapeError("cka inputs need matching sample counts, got " + x.shape_str() + " and " +
                         y.shape_str());
    if (x.rows() < 2) throw ContractError("cka needs at least 2 samples");

    const Tensor xc = center_columns(x, "left");
    const Tensor yc = center_columns(y, "right");
    const auto fro = [](const Tensor& t) {
        double s = 0.0;
        for (double v : t.data) s += v * v;
        return std::sqrt(s);
    };
    const double cross = fro(matmul_tn(xc, yc));
    return (cross * cross) / (fro(matmul_tn(xc, xc)) * fro(matmul_tn(yc, yc)));
}

CkaMatrix prompt_cka_matrix(const std::vector<Tensor>& prompts) {
    const std::size_t l = prompts.size();
    if (l < 2) throw ContractError("cka matrix needs at least 2 layers");

    CkaMatrix m;
    m.values = Tensor({l, l});
    for (std::size_t i = 0; i < l; ++i) {
        for (std::size_t j = i; j < l; ++j) {
            double v = 0.0;
            try {
                v = linear_cka(prompts[i], prompts[j]);
            } catch (const DegenerateInputError& e) {
                throw DegenerateInputError("layer pair (" + std::to_string(i) + "," +
                                           std::to_string(j) + "): " + e.what());
            }
            m.values(i, j) = v;
            m.values(j, i) = v;
        }
    }
    return m;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("spearman inputs must have equal length");
    if (a.size() < 2) throw ContractError("spearman needs at least 2 pairs");
    const std::vector<double> ra = average_ranks(a), rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) throw DegenerateInputError("spearman input has constant ranks");
    return cov / std::sqrt(va * vb);
}

double cka_distance_trend(const CkaMatrix& m) {
    const std::size_t l = m.layers();
    if (l < 3) throw ContractError("distance trend needs at least 3 layers for distinct distances");
    std::vector<double> dist, sim;
    for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = i + 1; j < l; ++j) {
            dist.push_back(static_cast<double>(j - i));
            sim.push_back(m.values(i, j));
        }
    return spearman(dist, sim);
}

SpectrumReport spectrum_report(const Tensor& op, const std::string& tag) {
    SpectrumReport r;
    r.tag = tag;
    r.eigs = eigenvalues(op);
    for (const auto& ev : r.eigs) {
        const double a = std::abs(ev);
        r.radius = std::max(r.radius, a);
        r.mean_abs += a;
    }
    r.mean_abs /= static_cast<double>(r.eigs.size());
    return r;
}

std::vector<SpectrumReport> spectrum_reports(const KoopmanSystem& sys,
                                             const std::vector<Tensor>& layer_ops) {
    std::vector<SpectrumReport> out;
    if (layer_ops.empty()) {
        out.push_back(spectrum_report(sys.Kop, "global"));
    } else {
        for (std::size_t i = 0; i < layer_ops.size(); ++i)
            out.push_back(spectrum_report(layer_ops[i], "layer_" + std::to_string(i + 1)));
    }
    return out;
}

void write_spectrum_json(const std::string& path, const std::vector<SpectrumReport>& reports) {
    nlohmann::json j = nlohmann::json::array();
    for (const SpectrumReport& r : reports) {
        nlohmann::json e;
        e["tag"] = r.tag;
        e["spectral_radius"] = r.radius;
        e["mean_abs"] = r.mean_abs;
        nlohmann::json evs = nlohmann::json::array();
        for (const auto& ev : r.eigs) evs.push_back({ev.real(), ev.imag()});
        e["eigenvalues"] = evs;
        j.push_back(e);
    }
    io::write_text(path, j.dump(2) + "\n");
}

void write_cka_csv(const std::string& path, const CkaMatrix& m) {
    std::string out;
    const std::size_t l = m.layers();
    for (std::size_t i = 0; i < l; ++i) {
        for (std::size_t j = 0; j < l; ++j) {
            if (j) out += ",";
            out += fmt_double(m.values(i, j));
        }
        out += "\n";
    }
    io::write_text(path, out);
}

}  // namespace pae
