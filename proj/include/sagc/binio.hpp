#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Little-endian binary encoding helpers shared by the checkpoint and
// embedding-store formats, plus CRC-32 (IEEE, zlib-compatible) and
// atomic whole-file writes.

namespace sagc {

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);

class ByteWriter {
public:
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f64(double v);
    void bytes(const void* p, std::size_t n);
    void str(const std::string& s); // u64 length prefix + raw bytes

    const std::vector<std::uint8_t>& buffer() const { return buf_; }
    // Appends the CRC-32 of everything written so far, then writes the
    // whole buffer to path via a temp file + rename.
    void finish_to_file(const std::string& path);

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    // Loads the file; throws IntegrityError if shorter than 4 bytes or if
    // the trailing CRC-32 does not match the preceding content.
    static ByteReader checked_file(const std::string& path);

    explicit ByteReader(std::vector<std::uint8_t> buf)
        : buf_(std::move(buf)), end_(buf_.size()) {}

    std::uint32_t u32();
    std::uint64_t u64();
    double f64();
    void bytes(void* p, std::size_t n);
    std::string str();
    std::size_t remaining() const { return end_ - pos_; }

private:
    void need(std::size_t n);
    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
    std::size_t end_ = 0;
};

// Writes content to path atomically (temp file in the same directory,
// then rename). No partial file is left on error.
void atomic_write_file(const std::string& path, const std::string& content);

} // namespace sagc
