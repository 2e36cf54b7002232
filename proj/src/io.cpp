#include "pae/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace fs = std::filesystem;

namespace pae::io {

namespace {

constexpr char kMagic[4] = {'P', 'A', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::string& out, T v) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& in, std::size_t& off) {
    if (off + sizeof(T) > in.size()) throw ConfigError("tensor file truncated");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= T(static_cast<unsigned char>(in[off + i])) << (8 * i);
    off += sizeof(T);
    return v;
}

}  // namespace

void write_tensor(const std::string& path, const Tensor& t) {
    std::string buf;
    buf.reserve(16 + t.numel() * 8);
    buf.append(kMagic, 4);
    put_le<std::uint32_t>(buf, kVersion);
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.dims) put_le<std::uint64_t>(buf, d);
    for (double x : t.data) put_le<std::uint64_t>(buf, std::bit_cast<std::uint64_t>(x));
    write_text(path, buf);
}

Tensor read_tensor(const std::string& path) {
    const std::string buf = read_text(path);
    if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 4) != 0)
        throw ConfigError("not a PAET tensor file: " + path);
    std::size_t off = 4;
    const auto ver = get_le<std::uint32_t>(buf, off);
    if (ver != kVersion)
        throw ConfigError("unsupported tensor format version " + std::to_string(ver) + " in " +
                          path);
    const auto rank = get_le<std::uint32_t>(buf, off);
    if (rank < 1 || rank > 3)
        throw ConfigError("tensor rank " + std::to_string(rank) + " out of range in " + path);
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = static_cast<std::size_t>(get_le<std::uint64_t>(buf, off));
    Tensor t(dims);
    for (double& x : t.data) x = std::bit_cast<double>(get_le<std::uint64_t>(buf, off));
    if (off != buf.size()) throw ConfigError("trailing bytes in tensor file " + path);
    return t;
}

void save_mask(const std::string& path, const FrequencyMask& m) {
    write_tensor(path, m.grid);
    std::ostringstream meta;
    meta << "origin=(" << m.origin_row << "," << m.origin_col << ") w=" << m.w << "\n";
    write_text(path + ".meta", meta.str());
}

FrequencyMask load_mask(const std::string& path) {
    FrequencyMask m;
    m.grid = read_tensor(path);
    if (m.grid.rank() != 2) throw ConfigError("mask grid must be rank-2: " + path);
    m.img_h = m.grid.rows();
    m.img_w = m.grid.cols();
    const std::string meta = read_text(path + ".meta");
    unsigned long long row = 0, col = 0, w = 0;
    if (std::sscanf(meta.c_str(), "origin=(%llu,%llu) w=%llu", &row, &col, &w) != 3)
        throw ConfigError("malformed mask sidecar: " + path + ".meta");
    m.origin_row = row;
    m.origin_col = col;
    m.w = w;
    return m;
}

void write_text(const std::string& path, const std::string& content) {
    if (const auto parent = fs::path(path).parent_path(); !parent.empty())
        fs::create_directories(parent);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot open for writing: " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw ConfigError("short write: " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string sha256_bytes(const void* p, std::size_t n) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(p, n, md, &len, EVP_sha256(), nullptr) != 1)
        throw NumericError("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

std::string sha256_str(const std::string& s) { return sha256_bytes(s.data(), s.size()); }

std::string sha256_file(const std::string& path) { return sha256_str(read_text(path)); }

std::vector<std::string> list_files_recursive(const std::string& dir) {
    std::vector<std::string> out;
    if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir);
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir).string());
    std::sort(out.begin(), out.end());
    return out;
}

std::string dir_content_hash(const std::string& dir) {
    std::string acc;
    for (const std::string& rel : list_files_recursive(dir)) {
        if (fs::path(rel).filename() == "manifest.json") continue;
        std::string content = read_text((fs::path(dir) / rel).string());
        if (rel.size() > 5 && rel.substr(rel.size() - 5) == ".json") {
            auto j = nlohmann::json::parse(content, nullptr, false);
            if (!j.is_discarded() && j.is_object()) {
                j.erase("timings");
                content = j.dump(2);
            }
        }
        acc += rel;
        acc += ':';
        acc += sha256_str(content);
        acc += '\n';
    }
    return sha256_str(acc);
}

}  // namespace pae::io
