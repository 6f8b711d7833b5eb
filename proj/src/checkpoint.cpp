#include "autoselect/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "autoselect/errors.hpp"

namespace autoselect {

namespace {

constexpr char kMagic[4] = {'A', 'T', 'S', 'C'};

void put_u64(std::ostream& os, uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(buf, 8);
}

void put_u32(std::ostream& os, uint32_t v) {
    char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(buf, 4);
}

void put_u16(std::ostream& os, uint16_t v) {
    char buf[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    os.write(buf, 2);
}

uint64_t get_u64(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
    return v;
}

uint32_t get_u32(std::istream& is) {
    unsigned char buf[4];
    is.read(reinterpret_cast<char*>(buf), 4);
    return static_cast<uint32_t>(buf[0]) | (static_cast<uint32_t>(buf[1]) << 8) |
           (static_cast<uint32_t>(buf[2]) << 16) | (static_cast<uint32_t>(buf[3]) << 24);
}

uint16_t get_u16(std::istream& is) {
    unsigned char buf[2];
    is.read(reinterpret_cast<char*>(buf), 2);
    return static_cast<uint16_t>(buf[0] | (buf[1] << 8));
}

} // namespace

void Checkpoint::add(std::string name, Tensor t) {
    blocks.emplace_back(std::move(name), std::move(t));
}

const Tensor& Checkpoint::get(const std::string& name) const {
    for (const auto& [n, t] : blocks)
        if (n == name) return t;
    throw ConfigError("checkpoint: missing block '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& [n, t] : blocks)
        if (n == name) return true;
    return false;
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("checkpoint: cannot open for write: " + path);
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, static_cast<uint32_t>(blocks.size()));
    for (const auto& [name, t] : blocks) {
        put_u16(os, static_cast<uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<uint32_t>(t.rank()));
        for (Index e : t.shape()) put_u64(os, static_cast<uint64_t>(e));
        for (Index i = 0; i < t.size(); ++i)
            put_u64(os, std::bit_cast<uint64_t>(t[i]));
    }
    if (!os) throw ConfigError("checkpoint: write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("checkpoint: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw ConfigError("checkpoint: bad magic in " + path);
    const uint32_t version = get_u32(is);
    if (version != kVersion)
        throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
    const uint32_t count = get_u32(is);
    Checkpoint ck;
    for (uint32_t k = 0; k < count; ++k) {
        const uint16_t name_len = get_u16(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const uint32_t rank = get_u32(is);
        std::vector<Index> shape(rank);
        for (auto& e : shape) e = static_cast<Index>(get_u64(is));
        Eigen::ArrayXd data(shape_product(shape));
        for (Index i = 0; i < data.size(); ++i)
            data[i] = std::bit_cast<double>(get_u64(is));
        if (!is) throw ConfigError("checkpoint: truncated file " + path);
        ck.add(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return ck;
}

Checkpoint checkpoint_of(const ModelParams& model, const Vector& lambda_logits) {
    Checkpoint ck;
    ck.add("enc.wx", Tensor::from_matrix(model.enc.cell.wx));
    ck.add("enc.wh", Tensor::from_matrix(model.enc.cell.wh));
    ck.add("enc.b", Tensor::from_vector(model.enc.cell.b));
    ck.add("dec.wx", Tensor::from_matrix(model.dec.cell.wx));
    ck.add("dec.wh", Tensor::from_matrix(model.dec.cell.wh));
    ck.add("dec.b", Tensor::from_vector(model.dec.cell.b));
    ck.add("dec.wout", Tensor::from_matrix(model.dec.w_out));
    ck.add("dec.bout", Tensor::from_vector(model.dec.b_out));
    ck.add("cls.w", Tensor::from_vector(model.cls.w));
    ck.add("cls.b", Tensor::scalar(model.cls.b));
    if (lambda_logits.size() > 0)
        ck.add("lambda.logits", Tensor::from_vector(lambda_logits));
    return ck;
}

ModelParams model_from_checkpoint(const Checkpoint& ck) {
    ModelParams m;
    m.enc.cell.wx = ck.get("enc.wx").to_matrix();
    m.enc.cell.wh = ck.get("enc.wh").to_matrix();
    m.enc.cell.b = ck.get("enc.b").to_vector();
    m.dec.cell.wx = ck.get("dec.wx").to_matrix();
    m.dec.cell.wh = ck.get("dec.wh").to_matrix();
    m.dec.cell.b = ck.get("dec.b").to_vector();
    m.dec.w_out = ck.get("dec.wout").to_matrix();
    m.dec.b_out = ck.get("dec.bout").to_vector();
    m.cls.w = ck.get("cls.w").to_vector();
    m.cls.b = ck.get("cls.b")[0];
    return m;
}

} // namespace autoselect
