#include "egossl/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include "egossl/binio.hpp"

namespace egossl::io {

namespace {
constexpr char kMagic[4] = {'E', 'G', 'O', 'S'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const numerics::ParamStore& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
    os.write(kMagic, 4);
    put_u16(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(params.names().size()));
    for (const auto& name : params.names()) {
        const auto& t = params.tensor(name);
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        os.put(static_cast<char>(t.rank()));
        for (std::size_t d : t.shape) put_u32(os, static_cast<std::uint32_t>(d));
        for (double v : t.data) put_f32(os, static_cast<float>(v));
    }
    os.flush();
    if (!os) throw std::runtime_error("checkpoint write failed: " + path.string());
}

numerics::ParamStore load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != std::string(kMagic, 4)) {
        throw std::runtime_error("invalid checkpoint: bad magic");
    }
    if (get_u16(is) != kVersion) {
        throw std::runtime_error("invalid checkpoint: unsupported version");
    }
    const std::uint32_t count = get_u32(is);
    numerics::ParamStore store;
    for (std::uint32_t e = 0; e < count && is; ++e) {
        const std::uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const int rank = is.get();
        if (rank < 0) break;
        numerics::Shape shape(static_cast<std::size_t>(rank));
        for (auto& d : shape) d = get_u32(is);
        if (!is) break;
        numerics::Tensor t(shape);
        for (auto& v : t.data) v = static_cast<double>(get_f32(is));
        if (!is) break;
        store.create(name, std::move(t));
    }
    if (!is || store.names().size() != count) {
        throw std::runtime_error("invalid checkpoint: truncated");
    }
    return store;
}

}  // namespace egossl::io
