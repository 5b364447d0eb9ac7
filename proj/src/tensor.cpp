#include "cimsim/tensor.hpp"

#include "cimsim/error.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

namespace cimsim {
namespace {

static_assert(std::endian::native == std::endian::little, "NPY I/O assumes a little-endian host");

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;

std::string shape_tuple(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << shape[i];
        if (shape.size() == 1 || i + 1 < shape.size()) os << ',';
        if (i + 1 < shape.size()) os << ' ';
    }
    os << ')';
    return os.str();
}

template <class T>
std::string encode(const BasicTensor<T>& t, const char* descr) {
    if (shape_product(t.shape) != t.data.size())
        throw ShapeError("tensor shape does not match payload length");
    std::string header = std::string("{'descr': '") + descr + "', 'fortran_order': False, 'shape': " +
                         shape_tuple(t.shape) + ", }";
    // magic(6) + version(2) + header_len(2) + header + '\n' must be a multiple of 64
    const std::size_t unpadded = kMagicLen + 2 + 2 + header.size() + 1;
    header.append((64 - unpadded % 64) % 64, ' ');
    header.push_back('\n');

    std::string out(kMagic, kMagicLen);
    out.push_back('\x01');
    out.push_back('\x00');
    const auto len = static_cast<std::uint16_t>(header.size());
    out.push_back(static_cast<char>(len & 0xff));
    out.push_back(static_cast<char>(len >> 8));
    out += header;
    const auto* bytes = reinterpret_cast<const char*>(t.data.data());
    out.append(bytes, t.data.size() * sizeof(T));
    return out;
}

struct Header {
    std::string descr;
    bool fortran = false;
    std::vector<std::size_t> shape;
    std::size_t payload_offset = 0;
};

Header parse_header(const std::string& bytes) {
    if (bytes.size() < 10 || bytes.compare(0, kMagicLen, kMagic, kMagicLen) != 0)
        throw FormatError("npy: magic mismatch");
    const auto major = static_cast<unsigned char>(bytes[6]);
    std::size_t header_len = 0;
    std::size_t offset = 0;
    if (major == 1) {
        header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8);
        offset = 10;
    } else {
        throw FormatError("npy: unsupported format version " + std::to_string(major));
    }
    if (bytes.size() < offset + header_len) throw FormatError("npy: truncated header");
    const std::string dict = bytes.substr(offset, header_len);

    Header h;
    h.payload_offset = offset + header_len;
    std::smatch m;
    if (!std::regex_search(dict, m, std::regex(R"('descr'\s*:\s*'([^']*)')")))
        throw FormatError("npy: header has no descr");
    h.descr = m[1];
    if (!std::regex_search(dict, m, std::regex(R"('fortran_order'\s*:\s*(True|False))")))
        throw FormatError("npy: header has no fortran_order");
    h.fortran = m[1] == "True";
    if (!std::regex_search(dict, m, std::regex(R"('shape'\s*:\s*\(([^)]*)\))")))
        throw FormatError("npy: header has no shape");
    const std::string dims = m[1];
    std::regex num(R"(\d+)");
    for (auto it = std::sregex_iterator(dims.begin(), dims.end(), num); it != std::sregex_iterator(); ++it)
        h.shape.push_back(std::stoull(it->str()));
    return h;
}

template <class T>
BasicTensor<T> decode(const std::string& bytes, const char* expected) {
    const Header h = parse_header(bytes);
    if (h.fortran) throw FormatError("npy: unsupported order (fortran_order=True)");
    if (h.descr != expected) throw FormatError("npy: unsupported dtype '" + h.descr + "'");
    BasicTensor<T> t;
    t.shape = h.shape;
    const std::size_t n = shape_product(t.shape);
    if (bytes.size() < h.payload_offset + n * sizeof(T)) throw FormatError("npy: truncated payload");
    t.data.resize(n);
    std::memcpy(t.data.data(), bytes.data() + h.payload_offset, n * sizeof(T));
    return t;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void dump(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

std::string encode_npy(const Tensor& t) {
    for (float v : t.data)
        if (!std::isfinite(v)) throw DomainError("tensor contains non-finite values");
    return encode(t, "<f4");
}

std::string encode_npy(const IntTensor& t) { return encode(t, "<i4"); }

void write_npy(const std::filesystem::path& path, const Tensor& t) { dump(path, encode_npy(t)); }
void write_npy(const std::filesystem::path& path, const IntTensor& t) { dump(path, encode_npy(t)); }

NpyDtype npy_dtype(const std::filesystem::path& path) {
    const Header h = parse_header(slurp(path));
    if (h.descr == "<f4") return NpyDtype::Float32;
    if (h.descr == "<i4") return NpyDtype::Int32;
    throw FormatError("npy: unsupported dtype '" + h.descr + "'");
}

Tensor decode_npy_float(const std::string& bytes) {
    Tensor t = decode<float>(bytes, "<f4");
    for (float v : t.data)
        if (!std::isfinite(v)) throw FormatError("npy: non-finite value in payload");
    return t;
}

IntTensor decode_npy_int(const std::string& bytes) { return decode<std::int32_t>(bytes, "<i4"); }

Tensor read_tensor(const std::filesystem::path& path) { return decode_npy_float(slurp(path)); }
IntTensor read_int_tensor(const std::filesystem::path& path) { return decode_npy_int(slurp(path)); }

}  // namespace cimsim
