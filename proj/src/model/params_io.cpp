#include <bit>
#include <cstring>
#include <fstream>

#include "snn/core/error.hpp"
#include "snn/model/model.hpp"

namespace snn::model {

namespace {

static_assert(std::endian::native == std::endian::little, "parameter container assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
public:
    Reader(const std::filesystem::path& path) : path_(path), is_(path, std::ios::binary) {
        if (!is_) throw IoError("cannot open parameter file " + path.string());
    }

    template <class T>
    T get(const char* what) {
        T v{};
        read(&v, sizeof(T), what);
        return v;
    }

    void read(void* dst, std::size_t n, const char* what) {
        const auto offset = is_.tellg();
        if (!is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n))) {
            throw IoError(path_.string() + ": truncated at byte offset " + std::to_string(static_cast<long long>(offset)) +
                          " while reading " + what + " (" + std::to_string(n) + " bytes needed)");
        }
    }

    std::string string(std::size_t n, const char* what) {
        std::string s(n, '\0');
        read(s.data(), n, what);
        return s;
    }

    long long offset() { return static_cast<long long>(is_.tellg()); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ifstream is_;
};

std::string read_header(Reader& r) {
    if (r.string(4, "magic") != "SNNP") throw IoError(r.path().string() + ": not a parameter container (bad magic)");
    const auto version = r.get<std::uint32_t>("version");
    if (version != kParamsVersion) {
        throw IoError(r.path().string() + ": unsupported container version " + std::to_string(version));
    }
    const auto meta_len = r.get<std::uint64_t>("metadata length");
    if (meta_len > (1ULL << 30)) throw IoError(r.path().string() + ": implausible metadata length");
    return r.string(meta_len, "metadata");
}

std::string shape_str(const std::vector<std::uint64_t>& d) {
    std::string s = "[";
    for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "x" : "") + std::to_string(d[i]);
    return s + "]";
}

struct Slot {
    std::string name;
    std::uint8_t kind;
    std::vector<std::uint64_t> dims;
    std::span<double> data;
};

std::vector<Slot> slots(Model& model) {
    std::vector<Slot> out;
    for (auto& p : model.params().params) {
        std::vector<std::uint64_t> d(p.value.shape().dims().begin(), p.value.shape().dims().end());
        out.push_back({p.name, 0, std::move(d), p.value.mutable_data()});
    }
    for (auto& b : model.params().buffers) {
        out.push_back({b.name, 1, {b.data->size()}, std::span<double>(*b.data)});
    }
    return out;
}

}  // namespace

void save_params(Model& model, const std::filesystem::path& path, const std::string& metadata) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write("SNNP", 4);
    put<std::uint32_t>(os, kParamsVersion);
    put<std::uint64_t>(os, metadata.size());
    os.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
    const auto all = slots(model);
    put<std::uint64_t>(os, all.size());
    for (const Slot& s : all) {
        put<std::uint8_t>(os, s.kind);
        put<std::uint32_t>(os, static_cast<std::uint32_t>(s.name.size()));
        os.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(s.dims.size()));
        for (auto d : s.dims) put<std::uint64_t>(os, d);
        os.write(reinterpret_cast<const char*>(s.data.data()), static_cast<std::streamsize>(s.data.size() * sizeof(double)));
    }
    if (!os) throw IoError("write failed for " + path.string());
}

void load_params(Model& model, const std::filesystem::path& path) {
    Reader r(path);
    read_header(r);
    auto expected = slots(model);
    const auto count = r.get<std::uint64_t>("entry count");
    // Stage everything first so a bad file leaves the model untouched.
    std::vector<std::vector<double>> staged;
    for (std::uint64_t i = 0; i < count; ++i) {
        const long long at = r.offset();
        const auto kind = r.get<std::uint8_t>("entry kind");
        const auto name_len = r.get<std::uint32_t>("name length");
        if (name_len > 4096) throw IoError(path.string() + ": implausible name length at offset " + std::to_string(at));
        const std::string name = r.string(name_len, "name");
        const auto rank = r.get<std::uint32_t>("rank");
        if (rank > 8) throw IoError(path.string() + ": implausible rank for '" + name + "'");
        std::vector<std::uint64_t> dims(rank);
        std::uint64_t numel = 1;
        for (auto& d : dims) {
            d = r.get<std::uint64_t>("dims");
            numel *= d;
        }
        if (i >= expected.size()) {
            throw IoError(path.string() + ": unexpected extra entry '" + name + "'; model has " +
                          std::to_string(expected.size()) + " entries");
        }
        const Slot& want = expected[i];
        if (name != want.name || kind != want.kind) {
            throw IoError(path.string() + ": entry " + std::to_string(i) + " is '" + name + "', model expects '" +
                          want.name + "'");
        }
        if (dims != want.dims) {
            throw IoError(path.string() + ": '" + name + "' has shape " + shape_str(dims) + ", model expects " +
                          shape_str(want.dims));
        }
        std::vector<double> data(numel);
        r.read(data.data(), numel * sizeof(double), name.c_str());
        staged.push_back(std::move(data));
    }
    if (count != expected.size()) {
        throw IoError(path.string() + ": file has " + std::to_string(count) + " entries, model expects " +
                      std::to_string(expected.size()) + "; first missing is '" + expected[count].name + "'");
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
        std::memcpy(expected[i].data.data(), staged[i].data(), staged[i].size() * sizeof(double));
    }
}

std::string read_params_metadata(const std::filesystem::path& path) {
    Reader r(path);
    return read_header(r);
}

}  // namespace snn::model
