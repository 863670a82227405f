#include "leviathan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "leviathan/errors.hpp"

namespace leviathan {

namespace {

constexpr char magic[4] = {'L', 'V', 'C', 'K'};
constexpr std::uint16_t version = 1;
constexpr std::uint8_t dtype_f64 = 1;

class Writer {
public:
    std::vector<std::uint8_t> bytes;

    template <typename T>
    void le(T value)
    {
        for (std::size_t i = 0; i < sizeof(T); ++i)
            bytes.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
    }

    void raw(const void* data, std::size_t n)
    {
        auto p = static_cast<const std::uint8_t*>(data);
        bytes.insert(bytes.end(), p, p + n);
    }
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_{bytes} {}

    template <typename T>
    T le()
    {
        need(sizeof(T));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }

    std::span<const std::uint8_t> take(std::uint64_t n)
    {
        need(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::uint64_t n) const
    {
        if (n > bytes_.size() - pos_)
            throw FormatError("checkpoint is truncated");
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const
{
    for (const auto& [n, t] : tensors)
        if (n == name)
            return t;
    throw FormatError("checkpoint has no tensor named '" + name + "'");
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt)
{
    Writer w;
    w.raw(magic, 4);
    w.le<std::uint16_t>(version);
    const std::string meta = canonical_json(ckpt.metadata);
    w.le<std::uint64_t>(meta.size());
    w.raw(meta.data(), meta.size());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        w.le<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
        w.raw(name.data(), name.size());
        w.le<std::uint8_t>(dtype_f64);
        w.le<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
        for (auto e : t.shape())
            w.le<std::uint64_t>(e);
        for (double x : t.data())
            w.le<std::uint64_t>(std::bit_cast<std::uint64_t>(x));
    }
    return std::move(w.bytes);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes)
{
    Reader r(bytes);
    const auto head = r.take(4);
    if (std::memcmp(head.data(), magic, 4) != 0)
        throw FormatError("not a checkpoint (bad magic)");
    const auto v = r.le<std::uint16_t>();
    if (v != version)
        throw FormatError("unsupported checkpoint version " + std::to_string(v));
    Checkpoint ckpt;
    const auto meta_len = r.le<std::uint64_t>();
    const auto meta = r.take(meta_len);
    try {
        ckpt.metadata = Json::parse(meta.begin(), meta.end());
    } catch (const Json::exception& e) {
        throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
    }
    const auto count = r.le<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = r.le<std::uint32_t>();
        const auto name_bytes = r.take(name_len);
        std::string name(name_bytes.begin(), name_bytes.end());
        if (r.le<std::uint8_t>() != dtype_f64)
            throw FormatError("checkpoint tensor '" + name + "' has an unsupported dtype");
        const auto rank = r.le<std::uint8_t>();
        if (rank == 0)
            throw FormatError("checkpoint tensor '" + name + "' has rank 0");
        Shape shape(rank);
        std::uint64_t numel = 1;
        for (auto& e : shape) {
            e = r.le<std::uint64_t>();
            if (e == 0 || numel > (UINT64_MAX / 8) / e)
                throw FormatError("checkpoint tensor '" + name + "' has an invalid shape");
            numel *= e;
        }
        const auto payload = r.take(numel * 8);
        std::vector<double> data(numel);
        for (std::size_t j = 0; j < numel; ++j) {
            std::uint64_t bitsv = 0;
            for (int b = 0; b < 8; ++b)
                bitsv |= static_cast<std::uint64_t>(payload[8 * j + b]) << (8 * b);
            data[j] = std::bit_cast<double>(bitsv);
        }
        ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    if (!r.at_end())
        throw FormatError("checkpoint has trailing bytes");
    return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    const auto bytes = encode_checkpoint(ckpt);
    // Write then rename so a crash never leaves a half-written checkpoint.
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error("cannot write checkpoint " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out)
            throw Error("failed writing checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FormatError("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace leviathan
