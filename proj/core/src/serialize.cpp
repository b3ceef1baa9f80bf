#include "equipose/serialize.hpp"

#include <fstream>

namespace equipose {

uint64_t hash_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (is) {
        is.read(buf, sizeof(buf));
        auto got = static_cast<size_t>(is.gcount());
        h = fnv1a({reinterpret_cast<const uint8_t*>(buf), got}, h);
    }
    return h;
}

}  // namespace equipose
