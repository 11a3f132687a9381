#include "transavs/tavs_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace transavs {

static_assert(std::endian::native == std::endian::little, "TAVS1 payload assumes a little-endian host");

namespace {

constexpr std::string_view kMagic = "TAVS1\n";

class Reader {
  public:
    explicit Reader(const std::string& s) : s_(s) {}

    bool done() const { return pos_ >= s_.size(); }

    std::string line() {
        auto end = s_.find('\n', pos_);
        if (end == std::string::npos) throw IoError("TAVS1: truncated header");
        std::string out = s_.substr(pos_, end - pos_);
        pos_ = end + 1;
        return out;
    }

    std::string keyed(std::string_view key) {
        std::string l = line();
        if (l.rfind(std::string(key), 0) != 0) throw IoError("TAVS1: expected '" + std::string(key) + "', got '" + l + "'");
        return l.size() > key.size() ? l.substr(key.size() + 1) : std::string{};
    }

    void payload(double* out, std::size_t n) {
        const std::size_t bytes = n * sizeof(double);
        if (pos_ + bytes > s_.size()) throw IoError("TAVS1: truncated payload");
        std::memcpy(out, s_.data() + pos_, bytes);
        pos_ += bytes;
    }

    std::size_t pos_ = 0;

  private:
    const std::string& s_;
};

}  // namespace

std::string encode_tavs(const std::vector<NamedTensor>& tensors) {
    std::string out(kMagic);
    for (const auto& [name, t] : tensors) {
        if (name.empty() || name.find_first_of(" \n") != std::string::npos)
            throw IoError("TAVS1: invalid tensor name '" + name + "'");
        out += "name " + name + "\n";
        out += "dtype f64\n";
        out += "ndim " + std::to_string(t.ndim()) + "\n";
        out += "dims";
        for (auto d : t.shape()) out += " " + std::to_string(d);
        out += "\n\n";
        const auto data = t.data();
        const auto off = out.size();
        out.resize(off + data.size() * sizeof(double));
        std::memcpy(out.data() + off, data.data(), data.size() * sizeof(double));
    }
    return out;
}

std::vector<NamedTensor> decode_tavs(const std::string& bytes) {
    if (bytes.compare(0, kMagic.size(), kMagic) != 0) throw IoError("TAVS1: bad magic");
    Reader r(bytes);
    r.pos_ = kMagic.size();
    std::vector<NamedTensor> out;
    while (!r.done()) {
        NamedTensor nt;
        nt.name = r.keyed("name");
        if (r.keyed("dtype") != "f64") throw IoError("TAVS1: only dtype f64 is supported");
        const auto ndim = std::stoul(r.keyed("ndim"));
        std::istringstream dims(r.keyed("dims"));
        Shape shape;
        std::size_t d = 0;
        while (dims >> d) shape.push_back(d);
        if (shape.size() != ndim) throw IoError("TAVS1: ndim/dims disagree for '" + nt.name + "'");
        if (!r.line().empty()) throw IoError("TAVS1: missing blank line after header of '" + nt.name + "'");
        std::vector<double> data(shape_numel(shape));
        r.payload(data.data(), data.size());
        nt.tensor = Tensor(std::move(shape), std::move(data));
        out.push_back(std::move(nt));
    }
    return out;
}

void write_tavs(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
    const std::string bytes = encode_tavs(tensors);
    // Write-then-rename so an interrupted write never leaves a torn file.
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open for writing: " + tmp.string());
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

std::vector<NamedTensor> read_tavs(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    try {
        return decode_tavs(ss.str());
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

const Tensor* try_find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
    for (const auto& nt : tensors)
        if (nt.name == name) return &nt.tensor;
    return nullptr;
}

const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
    if (const auto* t = try_find_tensor(tensors, name)) return *t;
    throw IoError("TAVS1: missing tensor '" + name + "'");
}

}  // namespace transavs
