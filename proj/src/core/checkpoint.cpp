#include "checkpoint.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>

namespace ipa {

namespace {

constexpr char kMagic[4] = {'T', 'D', 'C', '1'};
constexpr uint32_t kVersion = 1;
constexpr uint32_t kMaxRank = 8;
constexpr uint64_t kMaxElements = 1ull << 31;

class Writer {
public:
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            bytes.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
        }
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            bytes.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
        }
    }
    void u8(uint8_t v) { bytes.push_back(v); }
    void raw(const void* p, size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        bytes.insert(bytes.end(), c, c + n);
    }
    std::vector<unsigned char> bytes;
};

class Reader {
public:
    Reader(const unsigned char* data, size_t size) : data_(data), size_(size) {}

    uint32_t u32() {
        check(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<uint32_t>(data_[pos_ + i]) << (8 * i);
        }
        pos_ += 4;
        return v;
    }
    uint64_t u64() {
        check(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<uint64_t>(data_[pos_ + i]) << (8 * i);
        }
        pos_ += 8;
        return v;
    }
    uint8_t u8() {
        check(1);
        return data_[pos_++];
    }
    const unsigned char* raw(size_t n) {
        check(n);
        const unsigned char* p = data_ + pos_;
        pos_ += n;
        return p;
    }
    size_t pos() const { return pos_; }
    size_t remaining() const { return size_ - pos_; }

private:
    void check(size_t n) const {
        require(pos_ + n <= size_, ErrCode::TruncatedFile,
                "container ends early at byte " + std::to_string(pos_));
    }
    const unsigned char* data_;
    size_t size_;
    size_t pos_ = 0;
};

uint32_t crc_of(const unsigned char* data, size_t n) {
    return static_cast<uint32_t>(crc32(0L, data, static_cast<uInt>(n)));
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    Writer w;
    w.raw(kMagic, 4);
    w.u32(kVersion);
    w.u64(ckpt.metadata.size());
    w.raw(ckpt.metadata.data(), ckpt.metadata.size());
    w.u64(ckpt.records.size());
    w.u32(crc_of(w.bytes.data(), w.bytes.size()));

    for (const CheckpointRecord& rec : ckpt.records) {
        const size_t rec_start = w.bytes.size();
        w.u32(static_cast<uint32_t>(rec.name.size()));
        w.raw(rec.name.data(), rec.name.size());
        w.u8(0);  // dtype f32
        w.u32(static_cast<uint32_t>(rec.dims.size()));
        for (int64_t d : rec.dims) {
            w.u64(static_cast<uint64_t>(d));
        }
        w.raw(rec.data.data(), rec.data.size() * sizeof(float));
        w.u32(crc_of(w.bytes.data() + rec_start, w.bytes.size() - rec_start));
    }

    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        require(os.good(), ErrCode::IoError, "cannot open " + tmp + " for writing");
        os.write(reinterpret_cast<const char*>(w.bytes.data()),
                 static_cast<std::streamsize>(w.bytes.size()));
        require(os.good(), ErrCode::IoError, "short write to " + tmp);
    }
    require(std::rename(tmp.c_str(), path.c_str()) == 0, ErrCode::IoError,
            "cannot move " + tmp + " into place");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    require(is.good(), ErrCode::IoError, "cannot open " + path);
    const std::streamsize size = is.tellg();
    is.seekg(0);
    std::vector<unsigned char> bytes(static_cast<size_t>(size));
    is.read(reinterpret_cast<char*>(bytes.data()), size);
    require(is.good(), ErrCode::IoError, "cannot read " + path);

    Reader r(bytes.data(), bytes.size());
    const unsigned char* magic = r.raw(4);
    require(std::memcmp(magic, kMagic, 4) == 0, ErrCode::BadMagic,
            path + " is not a TDC1 container");
    const uint32_t version = r.u32();
    require(version == kVersion, ErrCode::VersionUnsupported,
            "container version " + std::to_string(version) + " unsupported");
    const uint64_t meta_len = r.u64();
    require(meta_len <= r.remaining(), ErrCode::TruncatedFile, "metadata length exceeds file");
    Checkpoint ckpt;
    const unsigned char* meta = r.raw(meta_len);
    ckpt.metadata.assign(reinterpret_cast<const char*>(meta), meta_len);
    const uint64_t record_count = r.u64();
    const uint32_t header_crc = r.u32();
    require(crc_of(bytes.data(), r.pos() - 4) == header_crc, ErrCode::TruncatedFile,
            "container header CRC mismatch");

    for (uint64_t i = 0; i < record_count; ++i) {
        const size_t rec_start = r.pos();
        CheckpointRecord rec;
        const uint32_t name_len = r.u32();
        require(name_len <= r.remaining(), ErrCode::TruncatedFile, "record name exceeds file");
        const unsigned char* name = r.raw(name_len);
        rec.name.assign(reinterpret_cast<const char*>(name), name_len);
        const uint8_t dtype = r.u8();
        require(dtype == 0, ErrCode::ShapeTableMismatch, "unknown dtype code in " + rec.name);
        const uint32_t rank = r.u32();
        require(rank <= kMaxRank, ErrCode::ShapeTableMismatch,
                "rank " + std::to_string(rank) + " too large in " + rec.name);
        uint64_t count = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            const uint64_t dim = r.u64();
            require(dim >= 1 && dim <= kMaxElements, ErrCode::ShapeTableMismatch,
                    "bad extent in " + rec.name);
            count *= dim;
            require(count <= kMaxElements, ErrCode::ShapeTableMismatch,
                    "record too large in " + rec.name);
            rec.dims.push_back(static_cast<int64_t>(dim));
        }
        const unsigned char* payload = r.raw(count * sizeof(float));
        const uint32_t rec_crc = r.u32();
        require(crc_of(bytes.data() + rec_start, r.pos() - 4 - rec_start) == rec_crc,
                ErrCode::TruncatedFile, "record CRC mismatch in " + rec.name);
        rec.data.resize(count);
        std::memcpy(rec.data.data(), payload, count * sizeof(float));
        ckpt.records.push_back(std::move(rec));
    }
    require(r.remaining() == 0, ErrCode::TruncatedFile,
            std::to_string(r.remaining()) + " trailing bytes after last record");
    return ckpt;
}

Checkpoint store_to_checkpoint(const ParamStore& store, std::string metadata) {
    Checkpoint ckpt;
    ckpt.metadata = std::move(metadata);
    for (const auto& [name, tensor] : store.entries()) {
        ckpt.records.push_back(CheckpointRecord{name, tensor.shape(), tensor.values()});
    }
    return ckpt;
}

ParamStore checkpoint_to_store(const Checkpoint& ckpt, bool trainable) {
    ParamStore store;
    for (const CheckpointRecord& rec : ckpt.records) {
        store.add(rec.name, Tensor::from_data(rec.dims, rec.data), trainable);
    }
    return store;
}

std::string sha256_hex(const std::vector<unsigned char>& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_hex(const std::string& bytes) {
    return sha256_hex(std::vector<unsigned char>(bytes.begin(), bytes.end()));
}

std::string file_sha256(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), ErrCode::IoError, "cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
    return sha256_hex(bytes);
}

}  // namespace ipa
