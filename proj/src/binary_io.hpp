// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

// Little-endian binary helpers shared by the file formats.

#ifndef ADSBL_BINARY_IO_HPP
#define ADSBL_BINARY_IO_HPP

#include "adsbl/config.hpp"

#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>

namespace adsbl::detail {

class BinaryWriter {
public:
    explicit BinaryWriter(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
        if (!out_) throw IoError("cannot open for writing: " + path.string());
    }

    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
    }
    void put_bytes(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }
    void put_complex(cdouble z) {
        put(z.real());
        put(z.imag());
    }
    void finish() {
        out_.flush();
        if (!out_) throw IoError("write failed: " + path_.string());
    }

private:
    std::ofstream out_;
    std::filesystem::path path_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw IoError("cannot open for reading: " + path.string());
    }

    template <typename T>
    T get() {
        static_assert(std::is_trivially_copyable_v<T>);
        T value{};
        in_.read(reinterpret_cast<char*>(&value), sizeof(T));
        if (in_.gcount() != static_cast<std::streamsize>(sizeof(T)))
            throw IoError("truncated file: " + path_.string());
        return value;
    }
    cdouble get_complex() {
        double re = get<double>();
        double im = get<double>();
        return {re, im};
    }
    void expect_bytes(const char* data, std::size_t n, const char* what) {
        std::string buf(n, '\0');
        in_.read(buf.data(), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n) || std::memcmp(buf.data(), data, n) != 0)
            throw IoError(std::string("bad ") + what + " in " + path_.string());
    }
    bool at_end() {
        return in_.peek() == std::char_traits<char>::eof();
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::ifstream in_;
    std::filesystem::path path_;
};

void write_config(BinaryWriter& w, const SystemConfig& cfg);
SystemConfig read_config(BinaryReader& r);

}  // namespace adsbl::detail

#endif
