#include <algorithm>
#include <bit>
#include <cstring>
#include <limits>
#include <set>
#include <string>

#include <zlib.h>

#include "gcmr/data_io.hpp"
#include "gcmr/error.hpp"

namespace gcmr {

namespace {

constexpr char kMagic[4] = {'G', 'C', 'M', 'R'};
constexpr std::uint8_t kKindDataset = 1;
constexpr std::uint8_t kKindCheckpoint = 2;
constexpr std::size_t kHeaderSize = 8;
constexpr std::size_t kCrcSize = 4;

std::uint32_t crc32_of(std::string_view bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
        crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(n));
        pos += n;
    }
    return static_cast<std::uint32_t>(crc);
}

class Writer {
public:
    Writer(std::uint8_t kind, int precision) : precision_(precision) {
        buf_.append(kMagic, 4);
        u16(kFormatVersion);
        u8(kind);
        u8(static_cast<std::uint8_t>(precision));
    }

    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u16(std::uint16_t v) { le(v, 2); }
    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void i32(std::int32_t v) { le(static_cast<std::uint32_t>(v), 4); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }

    void real(double v) {
        if (precision_ == 8) {
            f64(v);
        } else {
            le(std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
        }
    }

    void count(std::size_t n) {
        if (n > std::numeric_limits<std::uint32_t>::max()) throw InvalidArgument("dimension too large to serialize");
        u32(static_cast<std::uint32_t>(n));
    }

    void vector(std::span<const double> v) {
        count(v.size());
        for (double x : v) real(x);
    }

    void matrix(const Matrix& m) {
        count(m.rows());
        count(m.cols());
        for (double x : m.values()) real(x);
    }

    std::string finish() {
        const std::uint32_t crc = crc32_of(buf_);
        u32(crc);
        return std::move(buf_);
    }

private:
    void le(std::uint64_t v, int bytes) {
        for (int i = 0; i < bytes; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }

    std::string buf_;
    int precision_;
};

class Reader {
public:
    Reader(std::string_view bytes, std::uint8_t expected_kind) : bytes_(bytes) {
        if (bytes_.size() < 4) throw FormatError(FormatErrorKind::truncated, bytes_.size(), "file shorter than magic");
        if (std::memcmp(bytes_.data(), kMagic, 4) != 0) {
            throw FormatError(FormatErrorKind::bad_magic, 0, "expected \"GCMR\"");
        }
        pos_ = 4;
        limit_ = bytes_.size() >= kHeaderSize + kCrcSize ? bytes_.size() - kCrcSize : bytes_.size();
        const std::uint16_t version = u16();
        if (version != kFormatVersion) {
            throw FormatError(FormatErrorKind::version_mismatch, 4,
                              "file version " + std::to_string(version) + ", reader supports " +
                                  std::to_string(kFormatVersion));
        }
        const std::uint8_t kind = u8();
        if (kind != expected_kind) {
            throw FormatError(FormatErrorKind::malformed, 6,
                              kind == kKindDataset      ? "file holds a dataset, not a checkpoint"
                              : kind == kKindCheckpoint ? "file holds a checkpoint, not a dataset"
                                                        : "unknown content kind " + std::to_string(kind));
        }
        precision_ = u8();
        if (precision_ != 4 && precision_ != 8) {
            throw FormatError(FormatErrorKind::malformed, 7, "float width must be 4 or 8");
        }
        if (bytes_.size() < kHeaderSize + kCrcSize) {
            throw FormatError(FormatErrorKind::truncated, bytes_.size(), "file ends before checksum");
        }
    }

    std::uint64_t offset() const { return pos_; }
    std::size_t remaining() const { return limit_ - pos_; }

    std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    std::int32_t i32() { return static_cast<std::int32_t>(static_cast<std::uint32_t>(le(4))); }
    double f64() { return std::bit_cast<double>(le(8)); }

    double real() {
        if (precision_ == 8) return f64();
        return static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(le(4))));
    }

    // Rejects counts whose payload cannot fit in the remaining bytes before anything is allocated.
    void need_values(std::uint64_t count, std::uint64_t width) {
        if (width != 0 && count > remaining() / width) {
            throw FormatError(FormatErrorKind::truncated, pos_,
                              "payload of " + std::to_string(count) + " values exceeds the remaining " +
                                  std::to_string(remaining()) + " bytes");
        }
    }

    Vector vector() {
        const std::uint32_t n = u32();
        need_values(n, static_cast<std::uint64_t>(precision_));
        Vector v(n);
        for (double& x : v) x = real();
        return v;
    }

    Matrix matrix() {
        const std::uint32_t rows = u32();
        const std::uint32_t cols = u32();
        const std::uint64_t n = static_cast<std::uint64_t>(rows) * cols;
        need_values(n, static_cast<std::uint64_t>(precision_));
        std::vector<double> data(n);
        for (double& x : data) x = real();
        return Matrix(rows, cols, std::move(data));
    }

    void finish() {
        if (pos_ != limit_) {
            throw FormatError(FormatErrorKind::malformed, pos_,
                              std::to_string(limit_ - pos_) + " unexpected bytes before the checksum");
        }
        const std::uint32_t stored = static_cast<std::uint32_t>(read_le_at(limit_, 4));
        const std::uint32_t actual = crc32_of(bytes_.substr(0, limit_));
        if (stored != actual) throw FormatError(FormatErrorKind::checksum_mismatch, limit_, "CRC32 does not match");
    }

    [[noreturn]] void mismatch(std::uint64_t at, const std::string& what) const {
        throw FormatError(FormatErrorKind::dimension_mismatch, at, what);
    }

private:
    std::uint64_t le(int n) {
        if (limit_ - pos_ < static_cast<std::size_t>(n)) {
            throw FormatError(FormatErrorKind::truncated, pos_,
                              "needed " + std::to_string(n) + " more bytes, file body ends at " + std::to_string(limit_));
        }
        const std::uint64_t v = read_le_at(pos_, n);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::uint64_t read_le_at(std::size_t at, int n) const {
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[at + i])) << (8 * i);
        return v;
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
    std::size_t limit_ = 0;
    int precision_ = 8;
};

void write_classifier(Writer& w, const ClassifierParams& p) {
    w.matrix(p.w1);
    w.vector(p.b1);
    w.matrix(p.w2);
    w.vector(p.b2);
    w.f64(p.dropout_rate);
}

ClassifierParams read_classifier(Reader& r) {
    const std::uint64_t at = r.offset();
    ClassifierParams p;
    p.w1 = r.matrix();
    p.b1 = r.vector();
    p.w2 = r.matrix();
    p.b2 = r.vector();
    p.dropout_rate = r.f64();
    if (p.b1.size() != p.w1.cols() || p.w2.rows() != p.w1.cols() || p.b2.size() != p.w2.cols()) {
        r.mismatch(at, "classifier layer shapes are inconsistent");
    }
    if (!(p.dropout_rate >= 0.0 && p.dropout_rate < 1.0)) {
        throw FormatError(FormatErrorKind::malformed, r.offset() - 8, "dropout rate outside [0, 1)");
    }
    return p;
}

template <class Enum>
Enum read_enum(Reader& r, std::uint8_t max_value, const char* what) {
    const std::uint64_t at = r.offset();
    const std::uint8_t v = r.u8();
    if (v > max_value) throw FormatError(FormatErrorKind::malformed, at, std::string("invalid ") + what);
    return static_cast<Enum>(v);
}

std::vector<int> read_ints(Reader& r) {
    const std::uint32_t n = r.u32();
    r.need_values(n, 4);
    std::vector<int> v(n);
    for (int& x : v) x = r.i32();
    return v;
}

void write_ints(Writer& w, const std::vector<int>& v) {
    w.count(v.size());
    for (int x : v) w.i32(x);
}

}  // namespace

std::string encode_dataset(const Dataset& data, int precision) {
    if (precision != 4 && precision != 8) throw InvalidArgument("precision must be 4 or 8 bytes");
    Writer w(kKindDataset, precision);
    w.count(data.group_size);
    w.count(data.raw_dim);
    std::set<int> classes;
    for (const auto& ex : data.examples) classes.insert(ex.label);
    w.count(classes.size());
    for (int c : classes) w.i32(c);
    w.u64(data.examples.size());
    for (const auto& ex : data.examples) {
        if (ex.tokens.rows() != data.group_size || ex.tokens.cols() != data.raw_dim) {
            throw DimensionMismatch("dataset example shape differs from the declared group shape");
        }
        w.i32(ex.label);
        w.u64(ex.id);
        for (double v : ex.tokens.values()) w.real(v);
    }
    return w.finish();
}

Dataset decode_dataset(std::string_view bytes) {
    Reader r(bytes, kKindDataset);
    Dataset data;
    data.group_size = r.u32();
    data.raw_dim = r.u32();
    const std::vector<int> class_table = read_ints(r);
    const std::set<int> classes(class_table.begin(), class_table.end());
    const std::uint64_t count_at = r.offset();
    const std::uint64_t n = r.u64();
    const std::uint64_t values = static_cast<std::uint64_t>(data.group_size) * data.raw_dim;
    // Each example carries a 12-byte label/id header; guard the count before reserving.
    if (n > r.remaining() / 12) {
        throw FormatError(FormatErrorKind::truncated, count_at, "example count exceeds file size");
    }
    data.examples.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        const std::uint64_t at = r.offset();
        RawExample ex;
        ex.label = r.i32();
        if (!classes.contains(ex.label)) {
            throw FormatError(FormatErrorKind::malformed, at, "label " + std::to_string(ex.label) + " missing from class table");
        }
        ex.id = r.u64();
        r.need_values(values, 1);
        std::vector<double> payload(values);
        for (double& v : payload) v = r.real();
        ex.tokens = Matrix(data.group_size, data.raw_dim, std::move(payload));
        data.examples.push_back(std::move(ex));
    }
    r.finish();
    return data;
}

std::string encode_checkpoint(const SessionState& s) {
    Writer w(kKindCheckpoint, 8);
    w.i32(s.session);
    w.matrix(s.encoder.weight);
    w.vector(s.encoder.bias);
    w.u8(static_cast<std::uint8_t>(s.encoder.activation));
    w.u8(static_cast<std::uint8_t>(s.encoder.norm));
    w.u8(s.encoder.frozen ? 1 : 0);
    w.matrix(s.decoder.weight);
    w.vector(s.decoder.bias);
    w.vector(s.decoder.mask_token);
    write_classifier(w, s.classifier);
    w.matrix(s.memory.rows);
    write_ints(w, s.memory.class_ids);
    write_ints(w, s.memory.session_of);
    write_classifier(w, s.weight_memory.classifier_snapshot);
    w.matrix(s.weight_memory.projected_means);
    w.i32(s.weight_memory.session);
    return w.finish();
}

SessionState decode_checkpoint(std::string_view bytes) {
    Reader r(bytes, kKindCheckpoint);
    SessionState s;
    s.session = r.i32();
    const std::uint64_t enc_at = r.offset();
    s.encoder.weight = r.matrix();
    s.encoder.bias = r.vector();
    if (s.encoder.bias.size() != s.encoder.weight.cols()) r.mismatch(enc_at, "encoder bias width");
    s.encoder.activation = read_enum<Activation>(r, 1, "activation");
    s.encoder.norm = read_enum<NormKind>(r, 1, "normalization");
    s.encoder.frozen = read_enum<std::uint8_t>(r, 1, "frozen flag") != 0;
    const std::uint64_t dec_at = r.offset();
    s.decoder.weight = r.matrix();
    s.decoder.bias = r.vector();
    s.decoder.mask_token = r.vector();
    const std::size_t d = s.encoder.weight.cols();
    if (s.decoder.weight.rows() != d || s.decoder.weight.cols() != d || s.decoder.bias.size() != d ||
        s.decoder.mask_token.size() != d) {
        r.mismatch(dec_at, "decoder width differs from encoder feature width");
    }
    const std::uint64_t cls_at = r.offset();
    s.classifier = read_classifier(r);
    if (s.classifier.input_dim() != d) r.mismatch(cls_at, "classifier input width differs from encoder");
    const std::uint64_t mem_at = r.offset();
    s.memory.rows = r.matrix();
    s.memory.class_ids = read_ints(r);
    s.memory.session_of = read_ints(r);
    if (s.memory.class_ids.size() != s.memory.rows.rows() || s.memory.session_of.size() != s.memory.rows.rows() ||
        (s.memory.rows.rows() > 0 && s.memory.rows.cols() != d)) {
        r.mismatch(mem_at, "representation memory shape is inconsistent");
    }
    const std::uint64_t wm_at = r.offset();
    s.weight_memory.classifier_snapshot = read_classifier(r);
    s.weight_memory.projected_means = r.matrix();
    s.weight_memory.session = r.i32();
    if (s.weight_memory.projected_means.rows() != s.memory.rows.rows() ||
        (s.weight_memory.projected_means.rows() > 0 &&
         s.weight_memory.projected_means.cols() != s.weight_memory.classifier_snapshot.hidden_dim())) {
        r.mismatch(wm_at, "weight memory shape is inconsistent");
    }
    r.finish();
    return s;
}

}  // namespace gcmr
